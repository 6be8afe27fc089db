//! Sample-based objectives: CVaR, the inverse filter and F-VQE gradients.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ising::IsingHamiltonian;
use crate::sim::{stream_rng, HardwareEfficientAnsatz, StateVector};

/// CVaR quantile `α ∈ (0, 1]` held as an exact decimal fraction so that
/// `⌈αK⌉` never suffers from binary rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quantile {
    numer: u64,
    denom: u64,
}

impl Quantile {
    pub const ONE: Quantile = Quantile { numer: 1, denom: 1 };

    pub fn value(self) -> f64 {
        self.numer as f64 / self.denom as f64
    }

    /// Number of lowest samples kept out of `k`: `⌈αk⌉`, at least one.
    pub fn count(self, k: usize) -> usize {
        let n = (self.numer as u128 * k as u128).div_ceil(self.denom as u128);
        (n as usize).max(1)
    }

    /// Uses the shortest decimal representation of `alpha`.
    pub fn from_f64(alpha: f64) -> Result<Self> {
        format!("{alpha}").parse()
    }
}

impl FromStr for Quantile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("alpha `{s}` must be a decimal in (0, 1]"));
        let s = s.trim();
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if int.is_empty() && frac.is_empty()
            || !int.chars().all(|c| c.is_ascii_digit())
            || !frac.chars().all(|c| c.is_ascii_digit())
            || frac.len() > 18
        {
            return Err(bad());
        }
        let denom = 10u64.pow(frac.len() as u32);
        let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        let frac_v: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        let numer = int
            .checked_mul(denom)
            .and_then(|v| v.checked_add(frac_v))
            .ok_or_else(bad)?;
        if numer == 0 || numer > denom {
            return Err(bad());
        }
        let g = gcd(numer, denom);
        Ok(Quantile {
            numer: numer / g,
            denom: denom / g,
        })
    }
}

impl fmt::Display for Quantile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Mean of the lowest `⌈αK⌉` energies.
pub fn cvar(energies: &[f64], alpha: Quantile) -> Result<f64> {
    if energies.is_empty() {
        return Err(Error::InvalidArgument("empty energy sample".into()));
    }
    let keep = alpha.count(energies.len());
    if keep >= energies.len() {
        return Ok(energies.iter().sum::<f64>() / energies.len() as f64);
    }
    let mut sorted = energies.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[..keep].iter().sum::<f64>() / keep as f64)
}

pub fn vqe_objective(energies: &[f64], alpha: Quantile) -> Result<f64> {
    cvar(energies, alpha)
}

pub fn qaoa_objective(energies: &[f64], alpha: Quantile) -> Result<f64> {
    cvar(energies, alpha)
}

/// Half the sample mean.
pub fn varqite_objective(energies: &[f64]) -> Result<f64> {
    Ok(0.5 * cvar(energies, Quantile::ONE)?)
}

/// Inverse filter `f(E; τ) = (E + shift)^(-τ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub tau: f64,
    pub shift: f64,
}

impl FilterConfig {
    pub fn new(tau: f64, shift: f64) -> Self {
        Self { tau, shift }
    }

    pub fn apply(&self, energy: f64) -> Result<f64> {
        let base = energy + self.shift;
        if base.is_nan() || base <= 0.0 {
            return Err(Error::NonPositiveEnergy(base));
        }
        Ok(base.powf(-self.tau))
    }
}

pub fn apply_filter(energy: f64, config: &FilterConfig) -> Result<f64> {
    config.apply(energy)
}

/// Shift mapping a lower bound `lb` of the spectrum to 1: `1 - lb`.
pub fn positivity_shift(lower_bound: f64) -> f64 {
    1.0 - lower_bound
}

/// `h0 - Σ|h_n| - Σ|J_nm|`, a lower bound on every eigenvalue.
pub fn coefficient_lower_bound(h: &IsingHamiltonian) -> f64 {
    h.h0 - h.linear.iter().map(|v| v.abs()).sum::<f64>()
        - h.quadratic.values().map(|v| v.abs()).sum::<f64>()
}

/// Sample estimates of `<F>` and `<F²>`.
pub fn filtered_moments(energies: &[f64], config: &FilterConfig) -> Result<(f64, f64)> {
    if energies.is_empty() {
        return Err(Error::InvalidArgument("empty energy sample".into()));
    }
    let filtered = energies
        .iter()
        .map(|&e| config.apply(e))
        .collect::<Result<Vec<f64>>>()?;
    let squared: Vec<f64> = filtered.iter().map(|f| f * f).collect();
    Ok((
        cvar(&filtered, Quantile::ONE)?,
        cvar(&squared, Quantile::ONE)?,
    ))
}

/// A probability distribution over energy levels, either exact (Born
/// probabilities) or empirical (shot frequencies).
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyDistribution {
    levels: Vec<(f64, f64)>,
}

impl EnergyDistribution {
    fn from_pairs(mut pairs: Vec<(f64, f64)>) -> Self {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut levels: Vec<(f64, f64)> = Vec::new();
        for (e, w) in pairs {
            match levels.last_mut() {
                Some(last) if last.0 == e => last.1 += w,
                _ => levels.push((e, w)),
            }
        }
        Self { levels }
    }

    pub fn exact(state: &StateVector, diagonal: &[f64]) -> Self {
        Self::from_pairs(
            state
                .amplitudes()
                .iter()
                .zip(diagonal)
                .map(|(a, &e)| (e, a.norm_sqr()))
                .collect(),
        )
    }

    pub fn empirical(energies: &[f64]) -> Self {
        let w = 1.0 / energies.len() as f64;
        Self::from_pairs(energies.iter().map(|&e| (e, w)).collect())
    }

    pub fn mean(&self) -> f64 {
        self.levels.iter().map(|(e, w)| e * w).sum()
    }

    /// Mean over the lowest `mass` of probability (exact CVaR).
    pub fn lower_tail_mean(&self, mass: f64) -> f64 {
        let mut left = mass;
        let mut acc = 0.0;
        for &(e, w) in &self.levels {
            let take = w.min(left);
            acc += take * e;
            left -= take;
            if left <= 0.0 {
                break;
            }
        }
        acc / (mass - left.max(0.0))
    }

    pub fn moments(&self, config: &FilterConfig) -> Result<(f64, f64)> {
        let mut first = 0.0;
        let mut second = 0.0;
        for &(e, w) in &self.levels {
            if w == 0.0 {
                continue;
            }
            let f = config.apply(e)?;
            first += w * f;
            second += w * f * f;
        }
        Ok((first, second))
    }
}

/// `<F>`, `<F²>` with respect to the exact Born distribution.
pub fn filtered_moments_exact(
    state: &StateVector,
    diagonal: &[f64],
    config: &FilterConfig,
) -> Result<(f64, f64)> {
    EnergyDistribution::exact(state, diagonal).moments(config)
}

/// `½‖ψ - Fψ_prev/√<F²>‖² = 1 - Re<ψ|F|ψ_prev>/√<F²>_prev`.
pub fn fvqe_objective_exact(
    state_now: &StateVector,
    state_prev: &StateVector,
    diagonal: &[f64],
    config: &FilterConfig,
) -> Result<f64> {
    if state_now.num_qubits() != state_prev.num_qubits() {
        return Err(Error::LengthMismatch {
            expected: state_prev.num_qubits(),
            actual: state_now.num_qubits(),
        });
    }
    let mut second = 0.0;
    let mut overlap = 0.0;
    for ((a, b), &e) in state_now
        .amplitudes()
        .iter()
        .zip(state_prev.amplitudes())
        .zip(diagonal)
    {
        let f = config.apply(e)?;
        second += b.norm_sqr() * f * f;
        overlap += (a.conj() * b).re * f;
    }
    if second <= 0.0 {
        return Err(Error::ZeroSecondMoment);
    }
    Ok(1.0 - overlap / second.sqrt())
}

/// How expectation values are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    /// Exact Born probabilities.
    Exact,
    /// `shots` samples per circuit, drawn from sub-streams of `seed`
    /// starting at `stream`.
    Sampled { shots: usize, seed: u64, stream: u64 },
}

impl Estimator {
    /// Distribution of the given state; sampled mode uses sub-stream `offset`.
    pub fn distribution(
        &self,
        state: &StateVector,
        diagonal: &[f64],
        offset: u64,
    ) -> EnergyDistribution {
        match *self {
            Estimator::Exact => EnergyDistribution::exact(state, diagonal),
            Estimator::Sampled {
                shots,
                seed,
                stream,
            } => {
                let mut rng = stream_rng(seed, stream + offset);
                let energies: Vec<f64> = state
                    .sample(shots, &mut rng)
                    .into_iter()
                    .map(|z| diagonal[z as usize])
                    .collect();
                EnergyDistribution::empirical(&energies)
            }
        }
    }

    /// Number of sub-streams consumed by one [`ShiftedEvaluations`] collection.
    pub fn streams_per_gradient(num_params: usize) -> u64 {
        2 * num_params as u64 + 1
    }
}

/// Energy distributions at `θ` and at `θ ± (π/2)e_j` for every `j`, reused
/// across filter strengths.
#[derive(Debug, Clone)]
pub struct ShiftedEvaluations {
    pub center: EnergyDistribution,
    pub plus: Vec<EnergyDistribution>,
    pub minus: Vec<EnergyDistribution>,
}

impl ShiftedEvaluations {
    /// Prepares the `2·dim(θ) + 1` circuits. Sub-stream `0` is the centre,
    /// `2j + 1` and `2j + 2` the shifted points of parameter `j`.
    pub fn collect(
        ansatz: &HardwareEfficientAnsatz,
        theta: &[f64],
        diagonal: &[f64],
        estimator: &Estimator,
    ) -> Result<Self> {
        let center = estimator.distribution(&ansatz.prepare(theta)?, diagonal, 0);
        let shifted = (0..ansatz.num_params())
            .into_par_iter()
            .map(|j| {
                let mut t = theta.to_vec();
                t[j] = theta[j] + FRAC_PI_2;
                let plus = ansatz.prepare(&t)?;
                t[j] = theta[j] - FRAC_PI_2;
                let minus = ansatz.prepare(&t)?;
                let j64 = j as u64;
                Ok((
                    estimator.distribution(&plus, diagonal, 2 * j64 + 1),
                    estimator.distribution(&minus, diagonal, 2 * j64 + 2),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let (plus, minus) = shifted.into_iter().unzip();
        Ok(Self {
            center,
            plus,
            minus,
        })
    }

    /// `g_j = -(<F>(θ+π/2 e_j) - <F>(θ-π/2 e_j)) / (4√<F²>(θ))`.
    pub fn fvqe_gradient(&self, config: &FilterConfig) -> Result<Vec<f64>> {
        let (_, second) = self.center.moments(config)?;
        if second <= 0.0 {
            return Err(Error::ZeroSecondMoment);
        }
        let norm = 4.0 * second.sqrt();
        self.plus
            .iter()
            .zip(&self.minus)
            .map(|(p, m)| Ok(-(p.moments(config)?.0 - m.moments(config)?.0) / norm))
            .collect()
    }

    /// Parameter-shift gradient of the mean energy.
    pub fn energy_gradient(&self) -> Vec<f64> {
        self.plus
            .iter()
            .zip(&self.minus)
            .map(|(p, m)| (p.mean() - m.mean()) / 2.0)
            .collect()
    }
}

pub fn fvqe_gradient(
    ansatz: &HardwareEfficientAnsatz,
    theta: &[f64],
    diagonal: &[f64],
    config: &FilterConfig,
    estimator: &Estimator,
) -> Result<Vec<f64>> {
    ShiftedEvaluations::collect(ansatz, theta, diagonal, estimator)?.fvqe_gradient(config)
}

pub fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Linear grid `step, 2·step, ..., max` of filter strengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauGrid {
    pub step: f64,
    pub max: f64,
}

impl Default for TauGrid {
    fn default() -> Self {
        Self {
            step: 0.1,
            max: 10.0,
        }
    }
}

impl TauGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.step.is_nan() || self.step <= 0.0 || self.max.is_nan() || self.max < self.step {
            return Vec::new();
        }
        let n = (self.max / self.step + 1e-9).floor() as usize;
        (1..=n)
            .map(|k| (k as f64 * self.step * 1e12).round() / 1e12)
            .collect()
    }
}

/// Outcome of [`adapt_tau`].
#[derive(Debug, Clone, PartialEq)]
pub struct TauChoice {
    pub tau: f64,
    pub gradient: Vec<f64>,
}

/// Largest grid value whose gradient ∞-norm stays within `target`; the
/// smallest grid value when every candidate exceeds it.
pub fn adapt_tau(
    evaluations: &ShiftedEvaluations,
    shift: f64,
    grid: &[f64],
    target: f64,
) -> Result<TauChoice> {
    let smallest = *grid
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty tau grid".into()))?;
    for &tau in grid.iter().rev() {
        let gradient = evaluations.fvqe_gradient(&FilterConfig::new(tau, shift))?;
        if max_norm(&gradient) <= target {
            return Ok(TauChoice { tau, gradient });
        }
    }
    Ok(TauChoice {
        tau: smallest,
        gradient: evaluations.fvqe_gradient(&FilterConfig::new(smallest, shift))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qubo::QuadraticForm;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn q(s: &str) -> Quantile {
        s.parse().unwrap()
    }

    fn random_hamiltonian(n: usize, seed: u64) -> IsingHamiltonian {
        let mut rng = stream_rng(seed, 7);
        let mut f = QuadraticForm::new(n);
        for i in 0..n {
            f.add_linear(i, rng.random_range(-3.0..3.0));
            for j in i + 1..n {
                f.add_quadratic(i, j, rng.random_range(-2.0..2.0));
            }
        }
        IsingHamiltonian::from_qubo(&f)
    }

    #[test]
    fn quantile_parsing() {
        assert_eq!(q("0.5").count(1000), 500);
        assert_eq!(q("0.5").count(3), 2);
        assert_eq!(q("1").count(7), 7);
        assert_eq!(q(".2").count(1000), 200);
        assert_eq!(q("0.001").count(10), 1);
        assert_eq!(Quantile::from_f64(0.2).unwrap(), q("0.2"));
        for bad in ["0", "1.5", "-0.5", "abc", "", "."] {
            assert!(bad.parse::<Quantile>().is_err(), "{bad}");
        }
    }

    #[test]
    fn cvar_examples() {
        assert_eq!(cvar(&[1.0, 2.0, 3.0, 4.0], Quantile::ONE).unwrap(), 2.5);
        assert_eq!(cvar(&[4.0, 2.0, 3.0, 1.0], q("0.5")).unwrap(), 1.5);
        assert_eq!(cvar(&[2.0, 4.0, 6.0], q("0.5")).unwrap(), 3.0);
        assert_eq!(cvar(&[7.0], q("0.2")).unwrap(), 7.0);
        assert_eq!(vqe_objective(&[3.0; 5], q("0.3")).unwrap(), 3.0);
        assert_eq!(qaoa_objective(&[5.0, 1.0], q("0.5")).unwrap(), 1.0);
        assert!(cvar(&[], Quantile::ONE).is_err());
    }

    #[test]
    fn varqite_objective_is_half_mean() {
        assert_eq!(varqite_objective(&[2.0, 4.0]).unwrap(), 1.5);
        assert_eq!(varqite_objective(&[0.0]).unwrap(), 0.0);
        assert!(varqite_objective(&[]).is_err());
    }

    #[test]
    fn filter_values() {
        assert_eq!(apply_filter(0.0, &FilterConfig::new(3.7, 1.0)).unwrap(), 1.0);
        assert_eq!(apply_filter(3.0, &FilterConfig::new(0.5, 1.0)).unwrap(), 0.5);
        assert!(matches!(
            apply_filter(-1.0, &FilterConfig::new(1.0, 1.0)),
            Err(Error::NonPositiveEnergy(_))
        ));
        let (f1, f2) = filtered_moments(&[0.0, 0.0], &FilterConfig::new(2.0, 1.0)).unwrap();
        assert_eq!((f1, f2), (1.0, 1.0));
        let (f1, f2) = filtered_moments(&[0.0, 3.0], &FilterConfig::new(0.5, 1.0)).unwrap();
        assert_abs_diff_eq!(f1, 0.75);
        assert_abs_diff_eq!(f2, 0.625);
    }

    #[test]
    fn sampled_moments_converge_to_exact() {
        let h = random_hamiltonian(4, 1);
        let diag = h.diagonal().unwrap();
        let a = HardwareEfficientAnsatz::new(4, 1);
        let theta: Vec<f64> = (0..a.num_params()).map(|k| 0.3 * k as f64 - 1.0).collect();
        let state = a.prepare(&theta).unwrap();
        let shift = positivity_shift(coefficient_lower_bound(&h));
        let cfg = FilterConfig::new(1.3, shift);
        let exact = filtered_moments_exact(&state, &diag, &cfg).unwrap();
        let sampled = Estimator::Sampled {
            shots: 400_000,
            seed: 3,
            stream: 0,
        }
        .distribution(&state, &diag, 0)
        .moments(&cfg)
        .unwrap();
        assert!((exact.0 - sampled.0).abs() < 5e-3 * exact.0);
        assert!((exact.1 - sampled.1).abs() < 5e-3 * exact.1);
    }

    #[test]
    fn objective_zero_at_filtered_state() {
        let h = random_hamiltonian(3, 2);
        let diag = h.diagonal().unwrap();
        let cfg = FilterConfig::new(0.8, positivity_shift(coefficient_lower_bound(&h)));
        let prev = HardwareEfficientAnsatz::new(3, 1)
            .prepare(&[0.1, 0.5, -0.3, 1.0, 0.2, 0.7])
            .unwrap();
        let second: f64 = prev
            .amplitudes()
            .iter()
            .zip(&diag)
            .map(|(a, &e)| a.norm_sqr() * cfg.apply(e).unwrap().powi(2))
            .sum();
        let target: Vec<_> = prev
            .amplitudes()
            .iter()
            .zip(&diag)
            .map(|(a, &e)| a * cfg.apply(e).unwrap() / second.sqrt())
            .collect();
        let target = StateVector::from_amplitudes(target).unwrap();
        assert_abs_diff_eq!(
            fvqe_objective_exact(&target, &prev, &diag, &cfg).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        // τ = 0 makes F the identity, so θ = θ_prev gives zero.
        let identity = FilterConfig::new(0.0, cfg.shift);
        assert_abs_diff_eq!(
            fvqe_objective_exact(&prev, &prev, &diag, &identity).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        // orthogonal basis states
        let zero = StateVector::zero(3).unwrap();
        let mut one = StateVector::zero(3).unwrap();
        one.apply_ry(0, std::f64::consts::PI);
        assert_abs_diff_eq!(
            fvqe_objective_exact(&one, &zero, &diag, &cfg).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn identity_filter_has_zero_gradient() {
        let h = random_hamiltonian(3, 4);
        let diag = h.diagonal().unwrap();
        let a = HardwareEfficientAnsatz::new(3, 1);
        let theta = vec![0.4; a.num_params()];
        let g = fvqe_gradient(&a, &theta, &diag, &FilterConfig::new(0.0, 1e3), &Estimator::Exact)
            .unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn exact_gradient_matches_finite_differences() {
        for seed in 0..5 {
            let h = random_hamiltonian(4, 10 + seed);
            let diag = h.diagonal().unwrap();
            let a = HardwareEfficientAnsatz::new(4, 1);
            let mut rng = stream_rng(seed, 1);
            let theta: Vec<f64> = (0..a.num_params()).map(|_| rng.random_range(-3.0..3.0)).collect();
            let cfg = FilterConfig::new(1.7, positivity_shift(coefficient_lower_bound(&h)));
            let g = fvqe_gradient(&a, &theta, &diag, &cfg, &Estimator::Exact).unwrap();
            let prev = a.prepare(&theta).unwrap();
            let obj = |t: &[f64]| {
                fvqe_objective_exact(&a.prepare(t).unwrap(), &prev, &diag, &cfg).unwrap()
            };
            for j in 0..theta.len() {
                let mut p = theta.clone();
                let mut m = theta.clone();
                p[j] += 1e-5;
                m[j] -= 1e-5;
                let fd = (obj(&p) - obj(&m)) / 2e-5;
                assert!((g[j] - fd).abs() <= 1e-5 * fd.abs().max(1e-3), "{} vs {fd}", g[j]);
            }
        }
    }

    #[test]
    fn sampled_gradient_converges() {
        let h = random_hamiltonian(3, 5);
        let diag = h.diagonal().unwrap();
        let a = HardwareEfficientAnsatz::new(3, 1);
        let theta = vec![0.3, -0.2, 1.1, 0.5, 0.9, -0.7];
        let cfg = FilterConfig::new(1.0, positivity_shift(coefficient_lower_bound(&h)));
        let exact = fvqe_gradient(&a, &theta, &diag, &cfg, &Estimator::Exact).unwrap();
        let err = |shots| {
            let g = fvqe_gradient(
                &a,
                &theta,
                &diag,
                &cfg,
                &Estimator::Sampled { shots, seed: 8, stream: 0 },
            )
            .unwrap();
            max_norm(&g.iter().zip(&exact).map(|(x, y)| x - y).collect::<Vec<_>>())
        };
        let coarse = err(1_000);
        let fine = err(400_000);
        assert!(fine < coarse);
        assert!(fine < 2e-3 * max_norm(&exact).max(1e-2) * 10.0);
    }

    #[test]
    fn tau_grid_and_adaptation() {
        let grid = TauGrid::default().values();
        assert_eq!(grid.len(), 100);
        assert_abs_diff_eq!(grid[99], 10.0, epsilon = 1e-12);
        assert!(TauGrid { step: 0.0, max: 1.0 }.values().is_empty());

        // θ = 0 prepares |0..0>, a basis state: every shifted pair is symmetric.
        let h = random_hamiltonian(3, 6);
        let diag = h.diagonal().unwrap();
        let a = HardwareEfficientAnsatz::new(3, 1);
        let ev = ShiftedEvaluations::collect(&a, &[0.0; 6], &diag, &Estimator::Exact).unwrap();
        let shift = positivity_shift(coefficient_lower_bound(&h));
        let choice = adapt_tau(&ev, shift, &grid, 0.1).unwrap();
        assert!(max_norm(&choice.gradient) < 1e-12);
        assert_abs_diff_eq!(choice.tau, 10.0, epsilon = 1e-12);

        let theta = vec![0.7, -0.4, 1.2, 0.1, 0.5, -0.9];
        let ev = ShiftedEvaluations::collect(&a, &theta, &diag, &Estimator::Exact).unwrap();
        let inf = adapt_tau(&ev, shift, &grid, f64::INFINITY).unwrap();
        assert_abs_diff_eq!(inf.tau, 10.0, epsilon = 1e-12);
        assert!(adapt_tau(&ev, shift, &[], 0.1).is_err());

        // direct scan oracle
        let target = 0.05;
        let norms: Vec<f64> = grid
            .iter()
            .map(|&t| max_norm(&ev.fvqe_gradient(&FilterConfig::new(t, shift)).unwrap()))
            .collect();
        let expected = grid
            .iter()
            .zip(&norms)
            .filter(|(_, &n)| n <= target)
            .map(|(&t, _)| t)
            .next_back()
            .unwrap_or(grid[0]);
        assert_eq!(adapt_tau(&ev, shift, &grid, target).unwrap().tau, expected);
    }

    proptest! {
        #[test]
        fn cvar_properties(
            sample in prop::collection::vec(-50.0f64..50.0, 1..60),
            c in 0.1f64..10.0,
        ) {
            let mean = sample.iter().sum::<f64>() / sample.len() as f64;
            prop_assert_eq!(cvar(&sample, Quantile::ONE).unwrap(), mean);
            let mut prev = f64::NEG_INFINITY;
            for k in 1..=20 {
                let alpha = Quantile::from_f64(k as f64 / 20.0).unwrap();
                let v = cvar(&sample, alpha).unwrap();
                prop_assert!(v >= prev - 1e-12);
                prev = v;
                let scaled: Vec<f64> = sample.iter().map(|x| c * x).collect();
                prop_assert!((cvar(&scaled, alpha).unwrap() - c * v).abs() < 1e-9 * (1.0 + v.abs() * c));
                let mut rev = sample.clone();
                rev.reverse();
                prop_assert!((cvar(&rev, alpha).unwrap() - v).abs() <= 1e-12 * (1.0 + v.abs()));
            }
        }

        #[test]
        fn filter_strictly_decreasing(a in 0.0f64..100.0, b in 0.0f64..100.0, tau in 0.01f64..10.0) {
            prop_assume!(a != b);
            let cfg = FilterConfig::new(tau, 1.0);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let (flo, fhi) = (cfg.apply(lo).unwrap(), cfg.apply(hi).unwrap());
            prop_assert!(flo > fhi || (flo == fhi && flo == 0.0));
        }

        #[test]
        fn moments_satisfy_jensen(sample in prop::collection::vec(0.0f64..20.0, 1..50), tau in 0.0f64..5.0) {
            let (f1, f2) = filtered_moments(&sample, &FilterConfig::new(tau, 1.0)).unwrap();
            prop_assert!(f2 >= f1 * f1 - 1e-12);
        }
    }
}
