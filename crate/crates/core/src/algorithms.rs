//! The four variational drivers and their shared bookkeeping.
//!
//! Iteration accounting: for the COBYLA drivers (VQE, QAOA) one iteration is
//! one objective evaluation; for VarQITE and F-VQE one iteration is one
//! parameter update. Every record also carries the cumulative number of
//! prepared circuits.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::cobyla::{cobyla_minimize, CobylaConfig};
use crate::error::{Error, Result};
use crate::ising::{IsingHamiltonian, Rescale, SpectrumExtrema};
use crate::objectives::{
    self, adapt_tau, max_norm, positivity_shift, EnergyDistribution, Estimator, Quantile,
    ShiftedEvaluations, TauGrid,
};
use crate::sim::{
    prepare_qaoa_state_from_diagonal, stream_rng, Entangler, HardwareEfficientAnsatz, QaoaParams,
    StateVector,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Vqe,
    Qaoa,
    VarQite,
    FVqe,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Vqe,
        Algorithm::Qaoa,
        Algorithm::VarQite,
        Algorithm::FVqe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Vqe => "vqe",
            Algorithm::Qaoa => "qaoa",
            Algorithm::VarQite => "varqite",
            Algorithm::FVqe => "fvqe",
        }
    }

    /// What one trace iteration counts.
    pub fn iteration_unit(self) -> &'static str {
        match self {
            Algorithm::Vqe | Algorithm::Qaoa => "objective-evaluation",
            Algorithm::VarQite | Algorithm::FVqe => "parameter-update",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown algorithm `{s}` (expected vqe, qaoa, varqite or fvqe)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EstimatorMode {
    Exact,
    #[default]
    Sampled,
}

impl EstimatorMode {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorMode::Exact => "exact",
            EstimatorMode::Sampled => "sampled",
        }
    }
}

impl FromStr for EstimatorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(EstimatorMode::Exact),
            "sampled" => Ok(EstimatorMode::Sampled),
            other => Err(Error::InvalidArgument(format!(
                "unknown mode `{other}` (expected exact or sampled)"
            ))),
        }
    }
}

/// How `(A + λI)⁻¹` is applied in VarQITE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearSolver {
    /// Solve `(A + λI) x = b`.
    Tikhonov,
    /// Pseudo-inverse of `A` dropping singular values below `cutoff`.
    Pseudoinverse { cutoff: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    /// Ansatz repetitions `p`.
    pub layers: usize,
    pub shots: usize,
    pub alpha: Quantile,
    pub seed: u64,
    pub max_iterations: usize,
    /// F-VQE learning rate `η`.
    pub learning_rate: f64,
    /// VarQITE imaginary time step `δτ`.
    pub time_step: f64,
    /// VarQITE Tikhonov weight `λ`.
    pub regularization: f64,
    pub solver: LinearSolver,
    /// F-VQE gradient-norm target `g_c`.
    pub gradient_target: f64,
    pub tau_grid: TauGrid,
    pub mode: EstimatorMode,
    pub entangler: Entangler,
    pub rho_begin: f64,
    pub rho_end: f64,
    pub rescale: Rescale,
    /// Fill `wall_ms` in records. Off by default so traces are reproducible.
    pub record_wall_time: bool,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            layers: 2,
            shots: 1000,
            alpha: Quantile::from_f64(0.5).expect("valid quantile"),
            seed: 0,
            max_iterations: 100,
            learning_rate: 1.0,
            time_step: 0.01,
            regularization: 1e-4,
            solver: LinearSolver::Tikhonov,
            gradient_target: 0.1,
            tau_grid: TauGrid::default(),
            mode: EstimatorMode::Sampled,
            entangler: Entangler::Brickwork,
            rho_begin: 0.5,
            rho_end: 1e-4,
            rescale: Rescale::MinMax,
            record_wall_time: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if self.shots == 0 {
            return bad("shots must be positive");
        }
        if self.max_iterations == 0 {
            return bad("iterations must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("eta must be positive");
        }
        if !(self.time_step > 0.0 && self.time_step.is_finite()) {
            return bad("dtau must be positive");
        }
        if !(self.regularization >= 0.0 && self.regularization.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if self.gradient_target.is_nan() || self.gradient_target <= 0.0 {
            return bad("gc must be positive");
        }
        if self.tau_grid.values().is_empty() {
            return bad("tau grid is empty");
        }
        if !(self.rho_begin > 0.0 && self.rho_end > 0.0 && self.rho_end <= self.rho_begin) {
            return bad("need 0 < rho_end <= rho_begin");
        }
        if self.algorithm == Algorithm::Qaoa && self.layers == 0 {
            return bad("qaoa needs at least one layer");
        }
        Ok(())
    }

    fn estimator(&self, stream: u64) -> Estimator {
        match self.mode {
            EstimatorMode::Exact => Estimator::Exact,
            EstimatorMode::Sampled => Estimator::Sampled {
                shots: self.shots,
                seed: self.seed,
                stream,
            },
        }
    }

    fn ansatz(&self, num_qubits: usize) -> HardwareEfficientAnsatz {
        HardwareEfficientAnsatz::new(num_qubits, self.layers).with_entangler(self.entangler)
    }

    /// Stable `key=value` summary used in trace headers.
    pub fn describe(&self) -> String {
        let solver = match self.solver {
            LinearSolver::Tikhonov => "tikhonov".to_string(),
            LinearSolver::Pseudoinverse { cutoff } => format!("pinv:{cutoff:?}"),
        };
        format!(
            "algorithm={} layers={} shots={} alpha={} seed={} iterations={} eta={:?} dtau={:?} \
             lambda={:?} solver={} gc={:?} tau_step={:?} tau_max={:?} mode={} entangler={} \
             rho_begin={:?} rho_end={:?} rescale={}",
            self.algorithm,
            self.layers,
            self.shots,
            self.alpha,
            self.seed,
            self.max_iterations,
            self.learning_rate,
            self.time_step,
            self.regularization,
            solver,
            self.gradient_target,
            self.tau_grid.step,
            self.tau_grid.max,
            self.mode.name(),
            match self.entangler {
                Entangler::Brickwork => "brickwork",
                Entangler::Chain => "chain",
            },
            self.rho_begin,
            self.rho_end,
            self.rescale.name(),
        )
    }
}

/// A diagonal Hamiltonian with everything the drivers need precomputed.
#[derive(Debug, Clone)]
pub struct Problem {
    pub hamiltonian: IsingHamiltonian,
    pub diagonal: Vec<f64>,
    pub extrema: SpectrumExtrema,
    /// Lower bound on the spectrum used for the filter positivity shift.
    pub lower_bound: f64,
    pub fingerprint: String,
}

impl Problem {
    /// Uses the coefficient-sum lower bound for the filter shift.
    pub fn new(hamiltonian: IsingHamiltonian) -> Result<Self> {
        let lb = objectives::coefficient_lower_bound(&hamiltonian);
        Self::with_lower_bound(hamiltonian, lb)
    }

    pub fn with_lower_bound(hamiltonian: IsingHamiltonian, lower_bound: f64) -> Result<Self> {
        let diagonal = hamiltonian.diagonal()?;
        let extrema = hamiltonian.spectrum_extrema()?;
        if lower_bound > extrema.e_min {
            return Err(Error::InvalidArgument(format!(
                "lower bound {lower_bound} exceeds minimum energy {}",
                extrema.e_min
            )));
        }
        let fingerprint = hex::encode(Sha256::digest(hamiltonian.to_text().as_bytes()));
        Ok(Self {
            hamiltonian,
            diagonal,
            extrema,
            lower_bound,
            fingerprint,
        })
    }

    pub fn with_fingerprint(mut self, fingerprint: String) -> Self {
        self.fingerprint = fingerprint;
        self
    }

    pub fn num_qubits(&self) -> usize {
        self.hamiltonian.num_qubits()
    }

    pub fn filter_shift(&self) -> f64 {
        positivity_shift(self.lower_bound)
    }
}

/// Exact `(ε_ψ, P_gs)` of a state.
pub fn compute_metrics(
    state: &StateVector,
    diagonal: &[f64],
    extrema: &SpectrumExtrema,
    rescale: Rescale,
) -> Result<(f64, f64)> {
    let mean = state.expectation(diagonal)?;
    let eps = rescale.apply(mean, extrema)?.clamp(0.0, 1.0);
    let pgs = state.overlap_with(&extrema.ground_set).clamp(0.0, 1.0);
    Ok((eps, pgs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Cumulative prepared circuits.
    pub evaluations: usize,
    pub objective: f64,
    pub epsilon: f64,
    pub pgs: f64,
    pub mean_energy_sampled: Option<f64>,
    pub tau: Option<f64>,
    pub grad_norm: Option<f64>,
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub config: RunConfig,
    pub fingerprint: String,
    pub records: Vec<IterationRecord>,
    pub final_params: Vec<f64>,
    pub final_epsilon: f64,
    pub final_pgs: f64,
    /// Why the run stopped.
    pub termination: String,
}

impl Trace {
    fn new(config: &RunConfig, problem: &Problem) -> Self {
        Self {
            config: config.clone(),
            fingerprint: problem.fingerprint.clone(),
            records: Vec::new(),
            final_params: Vec::new(),
            final_epsilon: f64::NAN,
            final_pgs: f64::NAN,
            termination: String::new(),
        }
    }

    pub fn evaluations(&self) -> usize {
        self.records.last().map_or(0, |r| r.evaluations)
    }
}

/// Dispatches on `config.algorithm`.
pub fn run(problem: &Problem, config: &RunConfig) -> Result<Trace> {
    let (trace, outcome) = run_partial(problem, config);
    outcome.map(|()| trace)
}

/// Like [`run`], but hands back the records collected before a failure.
pub fn run_partial(problem: &Problem, config: &RunConfig) -> (Trace, Result<()>) {
    let mut trace = Trace::new(config, problem);
    let outcome = config.validate().and_then(|()| match config.algorithm {
        Algorithm::Vqe => vqe_into(problem, config, &mut trace),
        Algorithm::Qaoa => qaoa_into(problem, config, &mut trace),
        Algorithm::VarQite => {
            let ansatz = config.ansatz(problem.num_qubits());
            let mut theta = ansatz.plus_state_params();
            varqite_into(problem, config, &ansatz, &mut theta, &mut trace)
        }
        Algorithm::FVqe => {
            let ansatz = config.ansatz(problem.num_qubits());
            let mut theta = ansatz.plus_state_params();
            fvqe_into(problem, config, &ansatz, &mut theta, &mut trace)
        }
    });
    (trace, outcome)
}

fn traced<F>(problem: &Problem, config: &RunConfig, body: F) -> Result<Trace>
where
    F: FnOnce(&mut Trace) -> Result<()>,
{
    let mut trace = Trace::new(config, problem);
    body(&mut trace)?;
    Ok(trace)
}

/// Exact CVaR of a distribution: mean over its lowest `α` probability mass.
fn exact_cvar(dist: &EnergyDistribution, alpha: Quantile) -> f64 {
    dist.lower_tail_mean(alpha.value())
}

struct Clock(Option<Instant>);

impl Clock {
    fn start(enabled: bool) -> Self {
        Clock(enabled.then(Instant::now))
    }

    fn elapsed_ms(&self) -> Option<f64> {
        self.0.map(|t| t.elapsed().as_secs_f64() * 1e3)
    }
}

/// Evaluates the CVaR objective of one prepared state as a COBYLA callback.
fn cvar_evaluation(
    state: &StateVector,
    problem: &Problem,
    config: &RunConfig,
    evaluation: usize,
) -> Result<(f64, Option<f64>)> {
    match config.mode {
        EstimatorMode::Exact => {
            let dist = EnergyDistribution::exact(state, &problem.diagonal);
            Ok((exact_cvar(&dist, config.alpha), None))
        }
        EstimatorMode::Sampled => {
            let mut rng = stream_rng(config.seed, evaluation as u64);
            let energies: Vec<f64> = state
                .sample(config.shots, &mut rng)
                .into_iter()
                .map(|z| problem.diagonal[z as usize])
                .collect();
            let objective = objectives::cvar(&energies, config.alpha)?;
            let mean = objectives::cvar(&energies, Quantile::ONE)?;
            Ok((objective, Some(mean)))
        }
    }
}

fn run_cobyla_driver<P>(
    problem: &Problem,
    config: &RunConfig,
    x0: Vec<f64>,
    prepare: P,
    trace: &mut Trace,
) -> Result<()>
where
    P: Fn(&[f64]) -> Result<StateVector>,
{
    let clock = Clock::start(config.record_wall_time);
    let cobyla = CobylaConfig {
        rho_begin: config.rho_begin,
        rho_end: config.rho_end,
        max_evaluations: config.max_iterations,
    };
    let records = &mut trace.records;
    let result = cobyla_minimize(
        |x| {
            let evaluation = records.len();
            let state = prepare(x)?;
            let (objective, sampled) = cvar_evaluation(&state, problem, config, evaluation)?;
            let (epsilon, pgs) =
                compute_metrics(&state, &problem.diagonal, &problem.extrema, config.rescale)?;
            records.push(IterationRecord {
                iteration: evaluation,
                evaluations: evaluation + 1,
                objective,
                epsilon,
                pgs,
                mean_energy_sampled: sampled,
                tau: None,
                grad_norm: None,
                wall_ms: clock.elapsed_ms(),
            });
            Ok(objective)
        },
        &x0,
        &cobyla,
    );
    let result = result?;
    let state = prepare(&result.x)?;
    let (epsilon, pgs) =
        compute_metrics(&state, &problem.diagonal, &problem.extrema, config.rescale)?;
    trace.final_params = result.x;
    trace.final_epsilon = epsilon;
    trace.final_pgs = pgs;
    trace.termination = result.termination.name().to_string();
    Ok(())
}

/// CVaR-VQE with COBYLA from the `|+>^N` initialization.
pub fn run_vqe(problem: &Problem, config: &RunConfig) -> Result<Trace> {
    traced(problem, config, |trace| vqe_into(problem, config, trace))
}

fn vqe_into(problem: &Problem, config: &RunConfig, trace: &mut Trace) -> Result<()> {
    let ansatz = config.ansatz(problem.num_qubits());
    let x0 = ansatz.plus_state_params();
    run_cobyla_driver(problem, config, x0, |x| ansatz.prepare(x), trace)
}

/// Stream reserved for drawing QAOA initial angles.
const QAOA_INIT_STREAM: u64 = u64::MAX;

/// CVaR-QAOA with COBYLA from angles drawn uniformly in `[0, π]`.
pub fn run_qaoa(problem: &Problem, config: &RunConfig) -> Result<Trace> {
    traced(problem, config, |trace| qaoa_into(problem, config, trace))
}

fn qaoa_into(problem: &Problem, config: &RunConfig, trace: &mut Trace) -> Result<()> {
    let mut rng = stream_rng(config.seed, QAOA_INIT_STREAM);
    let x0: Vec<f64> = (0..2 * config.layers)
        .map(|_| rng.random_range(0.0..=PI))
        .collect();
    qaoa_from_into(problem, config, &QaoaParams::from_flat(&x0)?, trace)
}

/// QAOA from explicit initial angles.
pub fn run_qaoa_from(problem: &Problem, config: &RunConfig, init: &QaoaParams) -> Result<Trace> {
    traced(problem, config, |trace| {
        qaoa_from_into(problem, config, init, trace)
    })
}

fn qaoa_from_into(
    problem: &Problem,
    config: &RunConfig,
    init: &QaoaParams,
    trace: &mut Trace,
) -> Result<()> {
    run_cobyla_driver(
        problem,
        config,
        init.to_flat(),
        |x| prepare_qaoa_state_from_diagonal(&problem.diagonal, &QaoaParams::from_flat(x)?),
        trace,
    )
}

/// Streams per update step; sub-streams for shifted circuits and Hadamard
/// tests are allocated inside this block.
const STEP_STREAMS: u64 = 1 << 32;
const HADAMARD_STREAMS: u64 = 1 << 31;

/// `A_ij = Re<∂_iψ|∂_jψ>`, exactly or from emulated Hadamard tests.
pub fn mclachlan_matrix(
    ansatz: &HardwareEfficientAnsatz,
    theta: &[f64],
    estimator: &Estimator,
) -> Result<DMatrix<f64>> {
    let n = ansatz.num_params();
    let derivs = (0..n)
        .into_par_iter()
        .map(|j| ansatz.derivative_state(theta, j))
        .collect::<Result<Vec<_>>>()?;
    let mut a = DMatrix::zeros(n, n);
    let mut pair = 0u64;
    for i in 0..n {
        a[(i, i)] = 0.25;
        for j in i + 1..n {
            let exact = derivs[i].inner(&derivs[j]).re;
            let value = match *estimator {
                Estimator::Exact => exact,
                Estimator::Sampled {
                    shots,
                    seed,
                    stream,
                } => {
                    // The ancilla reads 0 with probability (1 + 4A_ij)/2.
                    let p0 = ((1.0 + 4.0 * exact) / 2.0).clamp(0.0, 1.0);
                    let mut rng = stream_rng(seed, stream + HADAMARD_STREAMS + pair);
                    let zeros = (0..shots).filter(|_| rng.random::<f64>() < p0).count();
                    (2.0 * zeros as f64 / shots as f64 - 1.0) / 4.0
                }
            };
            a[(i, j)] = value;
            a[(j, i)] = value;
            pair += 1;
        }
    }
    Ok(a)
}

fn solve_update(a: &DMatrix<f64>, rhs: &DVector<f64>, config: &RunConfig) -> Result<DVector<f64>> {
    match config.solver {
        LinearSolver::Tikhonov => {
            let n = a.nrows();
            let reg = a + DMatrix::identity(n, n) * config.regularization;
            if let Some(ch) = reg.clone().cholesky() {
                return Ok(ch.solve(rhs));
            }
            reg.lu()
                .solve(rhs)
                .ok_or_else(|| Error::LinearSolve("singular regularized matrix".into()))
        }
        LinearSolver::Pseudoinverse { cutoff } => a
            .clone()
            .svd(true, true)
            .solve(rhs, cutoff)
            .map_err(|e| Error::LinearSolve(e.to_string())),
    }
}

/// VarQITE with explicit Euler steps of the McLachlan equations.
pub fn run_varqite(problem: &Problem, config: &RunConfig) -> Result<Trace> {
    let ansatz = config.ansatz(problem.num_qubits());
    run_varqite_from(problem, config, &ansatz, &mut ansatz.plus_state_params())
}

pub fn run_varqite_from(
    problem: &Problem,
    config: &RunConfig,
    ansatz: &HardwareEfficientAnsatz,
    theta: &mut [f64],
) -> Result<Trace> {
    traced(problem, config, |trace| {
        varqite_into(problem, config, ansatz, theta, trace)
    })
}

fn varqite_into(
    problem: &Problem,
    config: &RunConfig,
    ansatz: &HardwareEfficientAnsatz,
    theta: &mut [f64],
    trace: &mut Trace,
) -> Result<()> {
    let clock = Clock::start(config.record_wall_time);
    let p = ansatz.num_params();
    let per_step = Estimator::streams_per_gradient(p) as usize + p * p.saturating_sub(1) / 2;
    let mut evaluations = 0;
    for n in 0..config.max_iterations {
        let estimator = config.estimator(n as u64 * STEP_STREAMS);
        let evals = ShiftedEvaluations::collect(ansatz, theta, &problem.diagonal, &estimator)?;
        let grad: Vec<f64> = evals.energy_gradient().iter().map(|g| 0.5 * g).collect();
        let a = mclachlan_matrix(ansatz, theta, &estimator)?;
        let step = match solve_update(&a, &DVector::from_vec(grad.clone()), config) {
            Ok(s) => s,
            Err(e) => {
                trace.termination = format!("linear solve failed: {e}");
                break;
            }
        };
        evaluations += per_step;
        let state = ansatz.prepare(theta)?;
        let (epsilon, pgs) =
            compute_metrics(&state, &problem.diagonal, &problem.extrema, config.rescale)?;
        let mean = evals.center.mean();
        trace.records.push(IterationRecord {
            iteration: n,
            evaluations,
            objective: 0.5 * mean,
            epsilon,
            pgs,
            mean_energy_sampled: (config.mode == EstimatorMode::Sampled).then_some(mean),
            tau: None,
            grad_norm: Some(max_norm(&grad)),
            wall_ms: clock.elapsed_ms(),
        });
        for (t, s) in theta.iter_mut().zip(step.iter()) {
            *t -= config.time_step * s;
        }
    }
    finish_gradient_trace(trace, problem, config, ansatz, theta)
}

fn finish_gradient_trace(
    trace: &mut Trace,
    problem: &Problem,
    config: &RunConfig,
    ansatz: &HardwareEfficientAnsatz,
    theta: &[f64],
) -> Result<()> {
    let state = ansatz.prepare(theta)?;
    let (epsilon, pgs) =
        compute_metrics(&state, &problem.diagonal, &problem.extrema, config.rescale)?;
    trace.final_params = theta.to_vec();
    trace.final_epsilon = epsilon;
    trace.final_pgs = pgs;
    if trace.termination.is_empty() {
        trace.termination = "max_iterations".into();
    }
    Ok(())
}

/// F-VQE with the inverse filter and per-step τ adaptation.
pub fn run_fvqe(problem: &Problem, config: &RunConfig) -> Result<Trace> {
    let ansatz = config.ansatz(problem.num_qubits());
    run_fvqe_from(problem, config, &ansatz, &mut ansatz.plus_state_params())
}

pub fn run_fvqe_from(
    problem: &Problem,
    config: &RunConfig,
    ansatz: &HardwareEfficientAnsatz,
    theta: &mut [f64],
) -> Result<Trace> {
    traced(problem, config, |trace| {
        fvqe_into(problem, config, ansatz, theta, trace)
    })
}

fn fvqe_into(
    problem: &Problem,
    config: &RunConfig,
    ansatz: &HardwareEfficientAnsatz,
    theta: &mut [f64],
    trace: &mut Trace,
) -> Result<()> {
    let clock = Clock::start(config.record_wall_time);
    let grid = config.tau_grid.values();
    let shift = problem.filter_shift();
    let per_step = Estimator::streams_per_gradient(ansatz.num_params()) as usize;
    for n in 0..config.max_iterations {
        let estimator = config.estimator(n as u64 * STEP_STREAMS);
        let evals = ShiftedEvaluations::collect(ansatz, theta, &problem.diagonal, &estimator)?;
        let choice = adapt_tau(&evals, shift, &grid, config.gradient_target)?;
        let state = ansatz.prepare(theta)?;
        let (epsilon, pgs) =
            compute_metrics(&state, &problem.diagonal, &problem.extrema, config.rescale)?;
        let mean = evals.center.mean();
        trace.records.push(IterationRecord {
            iteration: n,
            evaluations: (n + 1) * per_step,
            objective: mean,
            epsilon,
            pgs,
            mean_energy_sampled: (config.mode == EstimatorMode::Sampled).then_some(mean),
            tau: Some(choice.tau),
            grad_norm: Some(max_norm(&choice.gradient)),
            wall_ms: clock.elapsed_ms(),
        });
        for (t, g) in theta.iter_mut().zip(&choice.gradient) {
            *t -= config.learning_rate * g;
        }
    }
    finish_gradient_trace(trace, problem, config, ansatz, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{fvqe_objective_exact, FilterConfig};
    use crate::qubo::QuadraticForm;
    use approx::assert_abs_diff_eq;

    fn single_bit() -> Problem {
        let mut q = QuadraticForm::new(1);
        q.add_linear(0, 1.0);
        Problem::new(IsingHamiltonian::from_qubo(&q)).unwrap()
    }

    fn random_problem(n: usize, salt: u64) -> IsingHamiltonian {
        let mut rng = stream_rng(salt, 7);
        let mut h = IsingHamiltonian::new(n);
        h.h0 = rng.random_range(-1.0..1.0);
        for q in 0..n {
            h.linear[q] = rng.random_range(-1.0..1.0);
            for r in q + 1..n {
                h.add_pair(q, r, rng.random_range(-1.0..1.0));
            }
        }
        h
    }

    fn exact(algorithm: Algorithm) -> RunConfig {
        RunConfig {
            mode: EstimatorMode::Exact,
            ..RunConfig::new(algorithm)
        }
    }

    #[test]
    fn metrics_of_special_states() {
        let problem = Problem::new(random_problem(5, 3)).unwrap();
        let ext = &problem.extrema;
        assert_eq!(ext.ground_set.len(), 1);
        let ground = basis_state(5, ext.ground_set[0]);
        let (e, p) = compute_metrics(&ground, &problem.diagonal, ext, Rescale::MinMax).unwrap();
        assert_abs_diff_eq!(e, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p, 1.0, epsilon = 1e-12);

        let uniform = StateVector::uniform(5).unwrap();
        let (_, p) = compute_metrics(&uniform, &problem.diagonal, ext, Rescale::MinMax).unwrap();
        assert_abs_diff_eq!(p, 1.0 / 32.0, epsilon = 1e-12);

        let top = problem
            .diagonal
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        let state = basis_state(5, top as u64);
        let (e, p) = compute_metrics(&state, &problem.diagonal, ext, Rescale::MinMax).unwrap();
        assert_abs_diff_eq!(e, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p, 0.0, epsilon = 1e-12);
    }

    fn basis_state(n: usize, z: u64) -> StateVector {
        let mut amps = vec![num_complex::Complex64::new(0.0, 0.0); 1 << n];
        amps[z as usize] = num_complex::Complex64::new(1.0, 0.0);
        StateVector::from_amplitudes(amps).unwrap()
    }

    #[test]
    fn vqe_single_qubit_reaches_ground_state() {
        let config = RunConfig {
            alpha: Quantile::ONE,
            max_iterations: 50,
            ..exact(Algorithm::Vqe)
        };
        let trace = run(&single_bit(), &config).unwrap();
        assert!(trace.records.len() <= 50);
        assert!(trace.final_pgs >= 0.99, "pgs {}", trace.final_pgs);
    }

    #[test]
    fn vqe_single_qubit_sampled_reaches_ground_state() {
        let config = RunConfig {
            alpha: Quantile::ONE,
            max_iterations: 50,
            seed: 11,
            ..RunConfig::new(Algorithm::Vqe)
        };
        let trace = run(&single_bit(), &config).unwrap();
        assert!(trace.final_pgs >= 0.99, "pgs {}", trace.final_pgs);
        assert!(trace.records.iter().all(|r| r.mean_energy_sampled.is_some()));
    }

    fn two_bit_product() -> Problem {
        let mut q = QuadraticForm::new(2);
        q.add_quadratic(0, 1, 1.0);
        Problem::new(IsingHamiltonian::from_qubo(&q)).unwrap()
    }

    #[test]
    fn qaoa_improves_on_uniform_state() {
        let problem = two_bit_product();
        let config = RunConfig {
            alpha: Quantile::ONE,
            layers: 1,
            max_iterations: 60,
            ..exact(Algorithm::Qaoa)
        };
        let trace = run(&problem, &config).unwrap();
        let best = trace
            .records
            .iter()
            .map(|r| r.objective)
            .fold(f64::INFINITY, f64::min);
        assert!(best < 0.25 - 1e-3, "best {best}");
        let state = prepare_qaoa_state_from_diagonal(
            &problem.diagonal,
            &QaoaParams::from_flat(&trace.final_params).unwrap(),
        )
        .unwrap();
        assert!(state.expectation(&problem.diagonal).unwrap() < 0.25);
    }

    #[test]
    fn qaoa_from_zero_angles_starts_at_uniform_cvar() {
        let problem = Problem::new(random_problem(4, 9)).unwrap();
        let config = RunConfig {
            layers: 2,
            max_iterations: 5,
            seed: 4,
            ..RunConfig::new(Algorithm::Qaoa)
        };
        let zero = QaoaParams::from_flat(&[0.0; 4]).unwrap();
        let trace = run_qaoa_from(&problem, &config, &zero).unwrap();
        let uniform = StateVector::uniform(4).unwrap();
        let mut rng = stream_rng(4, 0);
        let energies: Vec<f64> = uniform
            .sample(config.shots, &mut rng)
            .into_iter()
            .map(|z| problem.diagonal[z as usize])
            .collect();
        let expected = objectives::cvar(&energies, config.alpha).unwrap();
        assert_eq!(trace.records[0].objective, expected);
    }

    #[test]
    fn qaoa_initial_angles_depend_on_seed() {
        let problem = two_bit_product();
        let base = RunConfig {
            max_iterations: 3,
            ..exact(Algorithm::Qaoa)
        };
        let a = run(&problem, &RunConfig { seed: 1, ..base.clone() }).unwrap();
        let b = run(&problem, &RunConfig { seed: 2, ..base }).unwrap();
        assert_ne!(a.records[0].epsilon, b.records[0].epsilon);
    }

    #[test]
    fn mclachlan_matrix_properties() {
        let ansatz = HardwareEfficientAnsatz::new(3, 2);
        let mut rng = stream_rng(5, 1);
        let theta: Vec<f64> = (0..ansatz.num_params())
            .map(|_| rng.random_range(-PI..PI))
            .collect();
        let a = mclachlan_matrix(&ansatz, &theta, &Estimator::Exact).unwrap();
        let h = 1e-5;
        let fd = |j: usize| {
            let mut p = theta.clone();
            p[j] += h;
            let plus = ansatz.prepare(&p).unwrap();
            p[j] -= 2.0 * h;
            let minus = ansatz.prepare(&p).unwrap();
            plus.amplitudes()
                .iter()
                .zip(minus.amplitudes())
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect::<Vec<_>>()
        };
        let derivs: Vec<_> = (0..ansatz.num_params()).map(fd).collect();
        for i in 0..ansatz.num_params() {
            assert_eq!(a[(i, i)], 0.25);
            for j in 0..ansatz.num_params() {
                assert_abs_diff_eq!(a[(i, j)], a[(j, i)], epsilon = 1e-12);
                let overlap: f64 = derivs[i]
                    .iter()
                    .zip(&derivs[j])
                    .map(|(x, y)| (x.conj() * y).re)
                    .sum();
                assert_abs_diff_eq!(a[(i, j)], overlap, epsilon = 1e-6);
            }
        }
        let sampled = Estimator::Sampled {
            shots: 20000,
            seed: 3,
            stream: 0,
        };
        let s = mclachlan_matrix(&ansatz, &theta, &sampled).unwrap();
        for i in 0..ansatz.num_params() {
            for j in 0..ansatz.num_params() {
                assert_eq!(s[(i, j)], s[(j, i)]);
                assert_abs_diff_eq!(s[(i, j)], a[(i, j)], epsilon = 0.02);
            }
        }
    }

    #[test]
    fn large_regularization_gives_scaled_gradient_direction() {
        let ansatz = HardwareEfficientAnsatz::new(2, 1);
        let theta = [0.3, -0.7, 1.1, 0.4];
        let a = mclachlan_matrix(&ansatz, &theta, &Estimator::Exact).unwrap();
        let rhs = DVector::from_vec(vec![0.2, -0.1, 0.05, 0.3]);
        let lambda = 1e8;
        let config = RunConfig {
            regularization: lambda,
            ..RunConfig::new(Algorithm::VarQite)
        };
        let x = solve_update(&a, &rhs, &config).unwrap();
        for (xi, bi) in x.iter().zip(rhs.iter()) {
            assert_abs_diff_eq!(xi * lambda, *bi, epsilon = 1e-7);
        }
        let pinv = RunConfig {
            solver: LinearSolver::Pseudoinverse { cutoff: 1e-10 },
            ..config
        };
        assert!(solve_update(&a, &rhs, &pinv).is_ok());
    }

    #[test]
    fn varqite_single_qubit_follows_imaginary_time_flow() {
        let config = RunConfig {
            max_iterations: 200,
            time_step: 0.01,
            layers: 0,
            ..exact(Algorithm::VarQite)
        };
        let problem = single_bit();
        let trace = run(&problem, &config).unwrap();
        let ansatz = config.ansatz(1);
        let means: Vec<f64> = trace
            .records
            .iter()
            .map(|r| 2.0 * r.objective)
            .collect();
        assert!(means.windows(2).all(|w| w[1] < w[0]));
        let last = ansatz
            .prepare(&trace.final_params)
            .unwrap()
            .expectation(&problem.diagonal)
            .unwrap();
        // <x> under e^{-Hτ}|+> is e^{-2τ}/(1+e^{-2τ}).
        let tau: f64 = 2.0;
        let flow = (-2.0 * tau).exp() / (1.0 + (-2.0 * tau).exp());
        assert_abs_diff_eq!(last, flow, epsilon = 1e-3);

        let longer = run(
            &problem,
            &RunConfig {
                max_iterations: 400,
                ..config
            },
        )
        .unwrap();
        let last = ansatz
            .prepare(&longer.final_params)
            .unwrap()
            .expectation(&problem.diagonal)
            .unwrap();
        assert!(last < 1e-3, "{last}");
    }

    #[test]
    fn fvqe_single_qubit_reaches_ground_state() {
        let config = RunConfig {
            max_iterations: 30,
            ..exact(Algorithm::FVqe)
        };
        let trace = run(&single_bit(), &config).unwrap();
        assert!(trace.final_pgs >= 0.99, "pgs {}", trace.final_pgs);
        assert!(trace.records.iter().all(|r| r.tau.is_some()));
    }

    #[test]
    fn fvqe_zero_gradient_leaves_parameters() {
        let problem = single_bit();
        let config = RunConfig {
            max_iterations: 4,
            ..exact(Algorithm::FVqe)
        };
        let ansatz = config.ansatz(1);
        let mut theta = vec![0.0; ansatz.num_params()];
        let trace = run_fvqe_from(&problem, &config, &ansatz, &mut theta).unwrap();
        assert_eq!(trace.records.len(), 4);
        assert!(theta.iter().all(|&t| t == 0.0));
        assert!(trace.records.iter().all(|r| r.grad_norm == Some(0.0)));
    }

    fn assert_same_trajectory(a: &Trace, b: &Trace) {
        assert_eq!(a.records.len(), b.records.len());
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_abs_diff_eq!(x.epsilon, y.epsilon, epsilon = 1e-9);
            assert_abs_diff_eq!(x.pgs, y.pgs, epsilon = 1e-9);
            assert_eq!(x.tau, y.tau);
        }
        for (x, y) in a.final_params.iter().zip(&b.final_params) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-9);
        }
    }

    #[test]
    fn gradient_methods_ignore_constant_offset() {
        let h = random_problem(3, 21);
        let mut shifted = h.clone();
        shifted.h0 += 7.25;
        let a = Problem::new(h).unwrap();
        let b = Problem::new(shifted).unwrap();
        for algorithm in [Algorithm::FVqe, Algorithm::VarQite] {
            let config = RunConfig {
                max_iterations: 10,
                ..exact(algorithm)
            };
            let ta = run(&a, &config).unwrap();
            let tb = run(&b, &config).unwrap();
            assert_same_trajectory(&ta, &tb);
            let pa: Vec<f64> = ta.final_params.clone();
            let pb: Vec<f64> = tb.final_params.clone();
            for (x, y) in pa.iter().zip(&pb) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let problem = Problem::new(random_problem(4, 2)).unwrap();
        for algorithm in Algorithm::ALL {
            let config = RunConfig {
                max_iterations: 6,
                seed: 13,
                ..RunConfig::new(algorithm)
            };
            let a = run(&problem, &config).unwrap();
            let b = run(&problem, &config).unwrap();
            assert_eq!(a, b, "{algorithm}");
            assert!(a
                .records
                .iter()
                .all(|r| (0.0..=1.0).contains(&r.epsilon) && (0.0..=1.0).contains(&r.pgs)));
            assert!(a.records.windows(2).all(|w| w[1].iteration == w[0].iteration + 1));
        }
    }

    #[test]
    fn sampled_runs_depend_on_seed() {
        let problem = Problem::new(random_problem(4, 2)).unwrap();
        let base = RunConfig {
            max_iterations: 3,
            ..RunConfig::new(Algorithm::FVqe)
        };
        let a = run(&problem, &RunConfig { seed: 1, ..base.clone() }).unwrap();
        let b = run(&problem, &RunConfig { seed: 2, ..base }).unwrap();
        assert_ne!(a.final_params, b.final_params);
    }

    #[test]
    fn small_varqite_steps_do_not_increase_energy() {
        for salt in 0..4 {
            let problem = Problem::new(random_problem(3, 100 + salt)).unwrap();
            let config = RunConfig {
                max_iterations: 20,
                time_step: 1e-3,
                ..exact(Algorithm::VarQite)
            };
            let trace = run(&problem, &config).unwrap();
            for w in trace.records.windows(2) {
                assert!(w[1].objective <= w[0].objective + 1e-12);
            }
        }
    }

    #[test]
    fn small_fvqe_steps_do_not_increase_objective() {
        for salt in 0..4 {
            let problem = Problem::new(random_problem(3, 200 + salt)).unwrap();
            let config = RunConfig {
                max_iterations: 1,
                learning_rate: 1e-3,
                ..exact(Algorithm::FVqe)
            };
            let ansatz = config.ansatz(3);
            let mut rng = stream_rng(salt, 3);
            let start: Vec<f64> = (0..ansatz.num_params())
                .map(|_| rng.random_range(-PI..PI))
                .collect();
            let mut theta = start.clone();
            let trace = run_fvqe_from(&problem, &config, &ansatz, &mut theta).unwrap();
            let cfg = FilterConfig::new(trace.records[0].tau.unwrap(), problem.filter_shift());
            let prev = ansatz.prepare(&start).unwrap();
            let next = ansatz.prepare(&theta).unwrap();
            let before = fvqe_objective_exact(&prev, &prev, &problem.diagonal, &cfg).unwrap();
            let after = fvqe_objective_exact(&next, &prev, &problem.diagonal, &cfg).unwrap();
            assert!(after <= before + 1e-12, "{before} -> {after}");
        }
    }

    #[test]
    fn config_validation() {
        let mut c = RunConfig::new(Algorithm::FVqe);
        assert!(c.validate().is_ok());
        c.shots = 0;
        assert!(c.validate().is_err());
        let c = RunConfig {
            rho_end: 1.0,
            rho_begin: 0.5,
            ..RunConfig::new(Algorithm::Vqe)
        };
        assert!(c.validate().is_err());
        assert_eq!("varqite".parse::<Algorithm>().unwrap(), Algorithm::VarQite);
        assert!("sgd".parse::<Algorithm>().is_err());
    }

    #[test]
    fn exact_cvar_matches_lowest_mass() {
        let dist = EnergyDistribution::empirical(&[1.0, 2.0, 3.0, 4.0]);
        assert_abs_diff_eq!(exact_cvar(&dist, Quantile::from_f64(0.5).unwrap()), 1.5);
        assert_abs_diff_eq!(exact_cvar(&dist, Quantile::from_f64(0.375).unwrap()), 4.0 / 3.0);
        assert_abs_diff_eq!(exact_cvar(&dist, Quantile::ONE), 2.5);
    }
}
