//! Derivative-free minimization by linear approximation (COBYLA), restricted
//! to unconstrained problems.
//!
//! The method keeps `n + 1` interpolation points, fits the linear model through
//! them, and steps to the model minimizer on a trust region of radius `ρ`.
//! Poorly shaped simplices are repaired with geometry steps before `ρ` is
//! reduced. The radius shrinks from `rho_begin` to `rho_end`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CobylaConfig {
    pub rho_begin: f64,
    pub rho_end: f64,
    pub max_evaluations: usize,
}

impl Default for CobylaConfig {
    fn default() -> Self {
        Self {
            rho_begin: 0.5,
            rho_end: 1e-4,
            max_evaluations: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Trust radius reached `rho_end`.
    RhoEnd,
    MaxEvaluations,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::RhoEnd => "rho_end",
            Termination::MaxEvaluations => "max_evaluations",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CobylaResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub termination: Termination,
}

// Simplex acceptability thresholds, relative to ρ.
const SIGMA_MIN: f64 = 0.25;
const ETA_MAX: f64 = 2.1;
const GEOMETRY_STEP: f64 = 0.5;
const EDGE_LIMIT: f64 = 1.1;

struct Simplex {
    /// Best point.
    pivot: Vec<f64>,
    f_pivot: f64,
    /// Row `i` is vertex `i` minus the pivot.
    disp: DMatrix<f64>,
    values: Vec<f64>,
}

impl Simplex {
    fn inverse(&self) -> Option<DMatrix<f64>> {
        self.disp.clone().try_inverse()
    }

    /// Replaces vertex `j` by `pivot + step` and re-pivots if it is better.
    fn replace(&mut self, j: usize, step: &DVector<f64>, value: f64) {
        let n = self.pivot.len();
        if value < self.f_pivot {
            for i in 0..n {
                if i != j {
                    for k in 0..n {
                        self.disp[(i, k)] -= step[k];
                    }
                }
            }
            for k in 0..n {
                self.disp[(j, k)] = -step[k];
                self.pivot[k] += step[k];
            }
            self.values[j] = self.f_pivot;
            self.f_pivot = value;
        } else {
            for k in 0..n {
                self.disp[(j, k)] = step[k];
            }
            self.values[j] = value;
        }
    }
}

/// Minimizes `objective` from `x0`, returning the best point seen.
pub fn cobyla_minimize<F>(mut objective: F, x0: &[f64], config: &CobylaConfig) -> Result<CobylaResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let n = x0.len();
    if n == 0 {
        return Err(Error::InvalidArgument("cobyla needs at least one variable".into()));
    }
    if !(config.rho_begin > 0.0 && config.rho_end > 0.0 && config.rho_end <= config.rho_begin) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < rho_end <= rho_begin, got {} and {}",
            config.rho_end, config.rho_begin
        )));
    }
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64], evaluations: &mut usize| -> Result<f64> {
        *evaluations += 1;
        let v = objective(x)?;
        if !v.is_finite() {
            return Err(Error::NonFiniteObjective {
                value: v,
                evaluation: *evaluations,
            });
        }
        Ok(v)
    };
    let done = |s: &Simplex, evaluations: usize, termination| CobylaResult {
        x: s.pivot.clone(),
        value: s.f_pivot,
        evaluations,
        termination,
    };

    let mut rho = config.rho_begin;
    let f0 = eval(x0, &mut evaluations)?;
    let mut simplex = Simplex {
        pivot: x0.to_vec(),
        f_pivot: f0,
        disp: DMatrix::zeros(n, n),
        values: vec![0.0; n],
    };
    for j in 0..n {
        if evaluations >= config.max_evaluations {
            return Ok(done(&simplex, evaluations, Termination::MaxEvaluations));
        }
        let mut x = simplex.pivot.clone();
        x[j] += rho;
        let v = eval(&x, &mut evaluations)?;
        let mut step = DVector::zeros(n);
        step[j] = rho;
        simplex.replace(j, &step, v);
    }

    let mut reduce_pending = false;
    loop {
        let Some(inv) = simplex.inverse() else {
            return Err(Error::LinearSolve("degenerate simplex".into()));
        };
        // Vertex distances from the pivot and heights above opposite faces.
        let eta: Vec<f64> = (0..n).map(|i| simplex.disp.row(i).norm()).collect();
        let sigma: Vec<f64> = (0..n).map(|i| 1.0 / inv.column(i).norm()).collect();
        let too_far = (0..n)
            .filter(|&i| eta[i] > ETA_MAX * rho)
            .max_by(|&a, &b| eta[a].total_cmp(&eta[b]));
        let too_flat = (0..n)
            .filter(|&i| sigma[i] < SIGMA_MIN * rho)
            .min_by(|&a, &b| sigma[a].total_cmp(&sigma[b]));

        let diffs = DVector::from_iterator(n, simplex.values.iter().map(|v| v - simplex.f_pivot));
        let grad = &inv * &diffs;

        if let Some(j) = too_far.or(too_flat) {
            if evaluations >= config.max_evaluations {
                return Ok(done(&simplex, evaluations, Termination::MaxEvaluations));
            }
            // Move vertex j perpendicular to the opposite face.
            let dir = inv.column(j).into_owned();
            let mut step = dir.scale(GEOMETRY_STEP * rho / dir.norm());
            if grad.dot(&step) > 0.0 {
                step = -step;
            }
            let x: Vec<f64> = simplex.pivot.iter().zip(step.iter()).map(|(p, d)| p + d).collect();
            let v = eval(&x, &mut evaluations)?;
            simplex.replace(j, &step, v);
            continue;
        }

        let gnorm = grad.norm();
        if reduce_pending || gnorm == 0.0 {
            if rho <= config.rho_end {
                return Ok(done(&simplex, evaluations, Termination::RhoEnd));
            }
            rho *= 0.5;
            if rho <= 1.5 * config.rho_end {
                rho = config.rho_end;
            }
            reduce_pending = false;
            continue;
        }

        if evaluations >= config.max_evaluations {
            return Ok(done(&simplex, evaluations, Termination::MaxEvaluations));
        }
        let step = grad.scale(-rho / gnorm);
        let x: Vec<f64> = simplex.pivot.iter().zip(step.iter()).map(|(p, d)| p + d).collect();
        let v = eval(&x, &mut evaluations)?;
        let predicted = rho * gnorm;
        let actual = simplex.f_pivot - v;

        // Choose the vertex whose replacement keeps the simplex best shaped,
        // preferring to drop distant vertices.
        let weights = inv.transpose() * &step;
        let mut drop = None;
        let mut best = if actual > 0.0 { 0.0 } else { 1.0 };
        let mut sigbar = vec![0.0; n];
        for j in 0..n {
            let w = weights[j].abs();
            sigbar[j] = w * sigma[j];
            if w > best {
                best = w;
                drop = Some(j);
            }
        }
        let mut edge = EDGE_LIMIT * rho;
        for j in 0..n {
            if sigbar[j] >= SIGMA_MIN * rho || sigbar[j] >= sigma[j] {
                let dist = if actual > 0.0 {
                    (0..n)
                        .map(|k| (step[k] - simplex.disp[(j, k)]).powi(2))
                        .sum::<f64>()
                        .sqrt()
                } else {
                    eta[j]
                };
                if dist > edge {
                    edge = dist;
                    drop = Some(j);
                }
            }
        }
        if let Some(j) = drop {
            simplex.replace(j, &step, v);
        }
        if drop.is_none() || actual < 0.1 * predicted {
            reduce_pending = true;
        }
    }
}
