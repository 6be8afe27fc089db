//! Experiment commands behind the `jspvqa` binary: instance reports, exact
//! solutions, single runs and seed sweeps.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::algorithms::{run_partial, Algorithm, Problem, RunConfig, Trace};
use crate::enumerate::{format_bits, DEFAULT_ENUMERATION_LIMIT};
use crate::error::Error;
use crate::instance::PreparedInstance;
use crate::ising::IsingHamiltonian;
use crate::jsp::{
    count_variables, decode_schedule, evaluate_schedule_cost, format_schedule, worst_case_idle,
    ScheduleCost,
};
use crate::objectives::Quantile;
use crate::trace::{to_csv, to_truncated_csv};

/// Which exit status a failure maps to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Config,
    Instance,
    Runtime,
}

impl FailureKind {
    pub fn exit_code(self) -> i32 {
        match self {
            FailureKind::Config => 2,
            FailureKind::Instance => 3,
            FailureKind::Runtime => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub kind: FailureKind,
    pub message: String,
    /// Trace CSV collected before a runtime failure, when not already written
    /// to a file.
    pub partial: Option<String>,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self::new(FailureKind::Config, message)
    }

    pub fn instance(message: impl Into<String>) -> Self {
        Self::new(FailureKind::Instance, message)
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self::new(FailureKind::Runtime, message)
    }

    fn new(kind: FailureKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
            partial: None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

pub type Outcome<T> = std::result::Result<T, Failure>;

/// Named Table-2 style configurations.
pub const PRESETS: [(&str, &str); 10] = [
    ("paper-5q-vqe", "VQE, p=2, K=1000, alpha=0.5"),
    ("paper-5q-vqe-alpha02", "VQE, p=2, K=1000, alpha=0.2"),
    ("paper-5q-qaoa", "QAOA, p=2, K=1000, alpha=0.5"),
    ("paper-5q-qaoa-alpha02", "QAOA, p=2, K=1000, alpha=0.2"),
    ("paper-5q-varqite", "VarQITE, p=2, K=1000"),
    ("paper-5q-fvqe", "F-VQE, p=2, K=1000"),
    ("paper-10q-fvqe", "F-VQE, p=1, K=500"),
    ("paper-12q-fvqe", "F-VQE, p=1, K=550"),
    ("paper-16q-fvqe", "F-VQE, p=1, K=650"),
    ("paper-23q-fvqe", "F-VQE, p=1, K=450"),
];

pub fn preset(name: &str) -> Outcome<RunConfig> {
    let with = |algorithm, layers, shots, alpha: f64| RunConfig {
        layers,
        shots,
        alpha: Quantile::from_f64(alpha).expect("valid preset quantile"),
        ..RunConfig::new(algorithm)
    };
    Ok(match name {
        "paper-5q-vqe" => with(Algorithm::Vqe, 2, 1000, 0.5),
        "paper-5q-vqe-alpha02" => with(Algorithm::Vqe, 2, 1000, 0.2),
        "paper-5q-qaoa" => with(Algorithm::Qaoa, 2, 1000, 0.5),
        "paper-5q-qaoa-alpha02" => with(Algorithm::Qaoa, 2, 1000, 0.2),
        "paper-5q-varqite" => with(Algorithm::VarQite, 2, 1000, 0.5),
        "paper-5q-fvqe" => with(Algorithm::FVqe, 2, 1000, 0.5),
        "paper-10q-fvqe" => with(Algorithm::FVqe, 1, 500, 0.5),
        "paper-12q-fvqe" => with(Algorithm::FVqe, 1, 550, 0.5),
        "paper-16q-fvqe" => with(Algorithm::FVqe, 1, 650, 0.5),
        "paper-23q-fvqe" => with(Algorithm::FVqe, 1, 450, 0.5),
        other => {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            return Err(Failure::config(format!(
                "unknown preset `{other}` (available: {})",
                names.join(", ")
            )));
        }
    })
}

/// Where the problem comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    /// A JSON job-shop instance file.
    Instance(PathBuf),
    /// An Ising Hamiltonian in the text format of [`IsingHamiltonian::to_text`].
    Hamiltonian(PathBuf),
}

fn instance_failure(path: &Path, err: Error) -> Failure {
    Failure::instance(format!("{}: {err}", path.display()))
}

pub fn load_instance(path: &Path) -> Outcome<PreparedInstance> {
    PreparedInstance::load(path).map_err(|e| instance_failure(path, e))
}

/// A loaded problem plus the instance it came from, if any.
pub struct Loaded {
    pub problem: Problem,
    pub instance: Option<PreparedInstance>,
}

fn too_many(err: Error, path: &Path) -> Failure {
    match err {
        Error::TooManyVariables { qubits, limit } => Failure::instance(format!(
            "{}: {qubits} free variables exceed the enumeration limit of {limit}; \
             add fixing directives (`fix`, or `reference` with `free`) to the instance \
             file to pin variables",
            path.display()
        )),
        other => instance_failure(path, other),
    }
}

pub fn load(source: &Source) -> Outcome<Loaded> {
    match source {
        Source::Instance(path) => {
            let prepared = load_instance(path)?;
            let problem = prepared.problem().map_err(|e| too_many(e, path))?;
            Ok(Loaded {
                problem,
                instance: Some(prepared),
            })
        }
        Source::Hamiltonian(path) => {
            let text = fs::read_to_string(path).map_err(|e| instance_failure(path, e.into()))?;
            let h = IsingHamiltonian::from_text(&text).map_err(|e| instance_failure(path, e))?;
            let problem = Problem::new(h)
                .map_err(|e| too_many(e, path))?
                .with_fingerprint(hex::encode(Sha256::digest(text.as_bytes())));
            Ok(Loaded {
                problem,
                instance: None,
            })
        }
    }
}

/// Sizes, penalty weight and the worst-case variable bound of an instance.
pub fn info_report(prepared: &PreparedInstance) -> String {
    let inst = prepared.instance();
    let mut out = String::new();
    if let Some(name) = &prepared.file.name {
        let _ = writeln!(out, "instance: {name}");
    }
    if let Some(desc) = &prepared.file.description {
        let _ = writeln!(out, "description: {desc}");
    }
    let idle: Vec<String> = inst.idle.iter().map(|e| e.to_string()).collect();
    let _ = writeln!(out, "jobs J: {}", inst.num_jobs);
    let _ = writeln!(out, "machines M: {}", inst.num_machines);
    let _ = writeln!(out, "idle e: {}", idle.join(" "));
    let (nx, ny, n) = prepared.map.counts();
    let _ = writeln!(out, "before fixing: N_x={nx} N_y={ny} N={n}");
    let (fx, fy, f) = prepared.free_map.counts();
    let _ = writeln!(out, "after fixing: N_x={fx} N_y={fy} N={f}");
    let mode = if inst.penalty.is_some() { "explicit" } else { "auto" };
    let _ = writeln!(out, "penalty weight: {} ({mode})", inst.penalty_weight());
    let worst = worst_case_idle(inst.num_jobs, inst.num_machines);
    let (wx, wy, w) = count_variables(inst.num_jobs, &worst);
    let worst: Vec<String> = worst.iter().map(|e| e.to_string()).collect();
    let _ = writeln!(
        out,
        "worst-case bound (e = {}): N_x={wx} N_y={wy} N={w}",
        worst.join(" ")
    );
    out
}

pub fn cmd_info(path: &Path) -> Outcome<String> {
    Ok(info_report(&load_instance(path)?))
}

/// Exact extrema and decoded minimizers.
pub struct ExactReport {
    pub text: String,
    /// Free-variable legend followed by one bitstring per minimizer.
    pub ground_set_file: String,
}

pub fn cmd_solve_exact(source: &Source, limit: Option<usize>) -> Outcome<ExactReport> {
    let limit = limit.unwrap_or(DEFAULT_ENUMERATION_LIMIT);
    let path = match source {
        Source::Instance(p) | Source::Hamiltonian(p) => p.as_path(),
    };
    let (h, prepared) = match source {
        Source::Instance(p) => {
            let prepared = load_instance(p)?;
            (prepared.hamiltonian(), Some(prepared))
        }
        Source::Hamiltonian(p) => {
            let text = fs::read_to_string(p).map_err(|e| instance_failure(p, e.into()))?;
            let h = IsingHamiltonian::from_text(&text).map_err(|e| instance_failure(p, e))?;
            (h, None)
        }
    };
    let n = h.num_qubits();
    let ext = h
        .spectrum_extrema_with_limit(limit)
        .map_err(|e| too_many(e, path))?;
    let mut text = String::new();
    let _ = writeln!(text, "free variables: {n}");
    let _ = writeln!(text, "E_min: {}", ext.e_min);
    let _ = writeln!(text, "E_max: {}", ext.e_max);
    let _ = writeln!(text, "ground-set size: {}", ext.ground_set.len());
    let mut file = String::new();
    if let Some(p) = &prepared {
        let names: Vec<String> = p.free_map.vars().iter().map(|v| v.to_string()).collect();
        let _ = writeln!(file, "# {}", names.join(" "));
    }
    for (k, &z) in ext.ground_set.iter().enumerate() {
        let bits = format_bits(z, n);
        let _ = writeln!(file, "{bits}");
        let _ = writeln!(text, "minimizer {}: {bits}", k + 1);
        if let Some(p) = &prepared {
            let full = p.expand_index(z).map_err(|e| Failure::runtime(e.to_string()))?;
            let verdict = match evaluate_schedule_cost(p.instance(), &p.map, &full)
                .map_err(|e| Failure::runtime(e.to_string()))?
            {
                ScheduleCost::Feasible(c) => format!("feasible, cost {c}"),
                ScheduleCost::Infeasible(family) => format!("infeasible ({family})"),
            };
            let _ = writeln!(text, "  schedule: {verdict}");
            let table = decode_schedule(p.instance(), &p.map, &full)
                .map_err(|e| Failure::runtime(e.to_string()))?;
            for line in format_schedule(&table).lines() {
                let _ = writeln!(text, "  {line}");
            }
        }
    }
    Ok(ExactReport {
        text,
        ground_set_file: file,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub source: Source,
    pub config: RunConfig,
    /// CSV file for `run`, output directory for `sweep`.
    pub out: Option<PathBuf>,
    pub seeds: Vec<u64>,
    /// Parallel seed limit for sweeps; `None` uses all cores.
    pub workers: Option<usize>,
}

pub fn summary_line(trace: &Trace) -> String {
    format!(
        "final epsilon={:.6} pgs={:.6} iterations={} evaluations={} termination={}",
        trace.final_epsilon,
        trace.final_pgs,
        trace.records.len(),
        trace.evaluations(),
        trace.termination
    )
}

pub struct RunReport {
    pub trace: Trace,
    pub csv: String,
    pub summary: String,
}

fn write_file(path: &Path, text: &str) -> Outcome<()> {
    fs::write(path, text)
        .map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))
}

fn execute(problem: &Problem, config: &RunConfig) -> Outcome<(Trace, String)> {
    let (trace, outcome) = run_partial(problem, config);
    match outcome {
        Ok(()) => {
            let csv = to_csv(&trace);
            Ok((trace, csv))
        }
        Err(e) => {
            let partial = to_truncated_csv(&trace, &e.to_string());
            Err(Failure {
                kind: FailureKind::Runtime,
                message: format!("{} run failed: {e}", config.algorithm),
                partial: Some(partial),
            })
        }
    }
}

/// Runs one configuration; with `spec.out` set the CSV is also written there,
/// including the truncated trace of a failed run.
pub fn cmd_run(spec: &ExperimentSpec) -> Outcome<RunReport> {
    spec.config
        .validate()
        .map_err(|e| Failure::config(e.to_string()))?;
    let loaded = load(&spec.source)?;
    match execute(&loaded.problem, &spec.config) {
        Ok((trace, csv)) => {
            if let Some(out) = &spec.out {
                write_file(out, &csv)?;
            }
            let summary = summary_line(&trace);
            Ok(RunReport {
                trace,
                csv,
                summary,
            })
        }
        Err(mut failure) => {
            if let (Some(out), Some(partial)) = (&spec.out, &failure.partial) {
                write_file(out, partial)?;
                failure.partial = None;
            }
            Err(failure)
        }
    }
}

pub const SUCCESS_PGS: f64 = 0.75;

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub iteration: usize,
    pub seeds: usize,
    pub epsilon_mean: f64,
    pub epsilon_std: f64,
    pub pgs_mean: f64,
    pub pgs_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let dev: f64 = values.iter().map(|v| v - mean).sum();
    let sq: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let var = (sq / n - (dev / n).powi(2)).max(0.0);
    (mean, var.sqrt())
}

/// Per-iteration mean and population standard deviation across traces;
/// traces that stopped early drop out of later iterations.
pub fn aggregate(traces: &[&Trace]) -> Vec<AggregateRow> {
    let longest = traces.iter().map(|t| t.records.len()).max().unwrap_or(0);
    (0..longest)
        .map(|i| {
            let present: Vec<_> = traces.iter().filter_map(|t| t.records.get(i)).collect();
            let eps: Vec<f64> = present.iter().map(|r| r.epsilon).collect();
            let pgs: Vec<f64> = present.iter().map(|r| r.pgs).collect();
            let (epsilon_mean, epsilon_std) = mean_std(&eps);
            let (pgs_mean, pgs_std) = mean_std(&pgs);
            AggregateRow {
                iteration: i,
                seeds: present.len(),
                epsilon_mean,
                epsilon_std,
                pgs_mean,
                pgs_std,
            }
        })
        .collect()
}

pub struct SweepReport {
    /// Per seed: the trace or the failure message.
    pub results: Vec<(u64, Outcome<Trace>)>,
    pub aggregate: Vec<AggregateRow>,
    pub aggregate_csv: String,
    pub summary: String,
}

impl SweepReport {
    /// `(seeds with final P_gs ≥ 0.75, completed seeds)`.
    pub fn successes(&self) -> (usize, usize) {
        let done: Vec<&Trace> = self
            .results
            .iter()
            .filter_map(|(_, r)| r.as_ref().ok())
            .collect();
        let hits = done.iter().filter(|t| t.final_pgs >= SUCCESS_PGS).count();
        (hits, done.len())
    }
}

pub fn seed_file_name(seed: u64) -> String {
    format!("seed-{seed}.csv")
}

pub const AGGREGATE_FILE: &str = "aggregate.csv";

/// Runs every seed (in parallel) and writes `seed-<S>.csv` files plus
/// `aggregate.csv` into `spec.out`.
pub fn cmd_sweep(spec: &ExperimentSpec) -> Outcome<SweepReport> {
    spec.config
        .validate()
        .map_err(|e| Failure::config(e.to_string()))?;
    if spec.seeds.is_empty() {
        return Err(Failure::config("sweep needs at least one seed (--seeds)"));
    }
    let dir = spec
        .out
        .as_ref()
        .ok_or_else(|| Failure::config("sweep needs an output directory (--out)"))?;
    if spec.workers == Some(0) {
        return Err(Failure::config("workers must be positive"));
    }
    let loaded = load(&spec.source)?;
    fs::create_dir_all(dir)
        .map_err(|e| Failure::runtime(format!("cannot create {}: {e}", dir.display())))?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = spec.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Failure::runtime(format!("thread pool: {e}")))?;
    let results: Vec<(u64, Outcome<Trace>)> = pool.install(|| {
        spec.seeds
            .par_iter()
            .map(|&seed| {
                let config = RunConfig {
                    seed,
                    ..spec.config.clone()
                };
                let path = dir.join(seed_file_name(seed));
                let outcome = match execute(&loaded.problem, &config) {
                    Ok((trace, csv)) => write_file(&path, &csv).map(|()| trace),
                    Err(failure) => {
                        let written = failure
                            .partial
                            .as_deref()
                            .map_or(Ok(()), |p| write_file(&path, p));
                        Err(written.err().unwrap_or(failure))
                    }
                };
                (seed, outcome)
            })
            .collect()
    });
    let done: Vec<&Trace> = results.iter().filter_map(|(_, r)| r.as_ref().ok()).collect();
    let rows = aggregate(&done);
    let hits = done.iter().filter(|t| t.final_pgs >= SUCCESS_PGS).count();

    let mut csv = String::new();
    let _ = writeln!(csv, "# jspvqa-aggregate v1");
    let _ = writeln!(csv, "# algorithm: {}", spec.config.algorithm);
    let _ = writeln!(csv, "# fingerprint: {}", loaded.problem.fingerprint);
    let _ = writeln!(csv, "# config: {}", spec.config.describe());
    let seeds: Vec<String> = spec.seeds.iter().map(|s| s.to_string()).collect();
    let _ = writeln!(csv, "# seeds: {}", seeds.join(" "));
    for (seed, r) in &results {
        if let Err(f) = r {
            let _ = writeln!(csv, "# failed: seed {seed}: {}", f.message.replace('\n', " "));
        }
    }
    let _ = writeln!(csv, "# std: population");
    let _ = writeln!(csv, "iteration,seeds,epsilon_mean,epsilon_std,pgs_mean,pgs_std");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{:?},{:?},{:?},{:?}",
            r.iteration, r.seeds, r.epsilon_mean, r.epsilon_std, r.pgs_mean, r.pgs_std
        );
    }
    let _ = writeln!(
        csv,
        "# final_pgs_at_least_{SUCCESS_PGS}: {hits}/{}",
        done.len()
    );
    write_file(&dir.join(AGGREGATE_FILE), &csv)?;

    let summary = format!(
        "seeds completed {}/{}; final P_gs >= {SUCCESS_PGS}: {hits}/{} ({:.2})",
        done.len(),
        spec.seeds.len(),
        done.len(),
        if done.is_empty() {
            0.0
        } else {
            hits as f64 / done.len() as f64
        }
    );
    if done.is_empty() {
        return Err(Failure::runtime(format!("all seeds failed; {summary}")));
    }
    Ok(SweepReport {
        results,
        aggregate: rows,
        aggregate_csv: csv,
        summary,
    })
}
