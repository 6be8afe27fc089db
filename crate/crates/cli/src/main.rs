use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jsp_vqa::algorithms::{Algorithm, EstimatorMode, LinearSolver, RunConfig};
use jsp_vqa::experiment::{
    cmd_info, cmd_run, cmd_solve_exact, cmd_sweep, preset, ExperimentSpec, Failure, Outcome,
    Source,
};
use jsp_vqa::objectives::Quantile;
use jsp_vqa::sim::Entangler;
use jsp_vqa::Rescale;

/// Job-shop scheduling with simulated variational quantum algorithms.
#[derive(Parser)]
#[command(name = "jspvqa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report variable counts and the penalty weight of an instance.
    Info {
        #[arg(long)]
        instance: PathBuf,
    },
    /// Enumerate the reduced problem and decode its minimizers.
    SolveExact {
        #[command(flatten)]
        source: SourceArgs,
        /// Maximum number of free variables to enumerate.
        #[arg(long)]
        limit: Option<usize>,
        /// Write the ground set (one bitstring per line) to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one algorithm and write a CSV trace.
    Run {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// CSV output file; the trace goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one configuration over several seeds and aggregate the traces.
    Sweep {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        /// Output directory for per-seed traces and aggregate.csv.
        #[arg(long)]
        out: PathBuf,
        /// Maximum number of seeds run concurrently.
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct SourceArgs {
    /// JSON instance file.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Ising Hamiltonian text file.
    #[arg(long)]
    hamiltonian: Option<PathBuf>,
}

impl SourceArgs {
    fn source(&self) -> Source {
        match (&self.instance, &self.hamiltonian) {
            (Some(p), _) => Source::Instance(p.clone()),
            (None, Some(p)) => Source::Hamiltonian(p.clone()),
            (None, None) => unreachable!("clap enforces one source"),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Start from a named configuration; explicit flags override it.
    #[arg(long)]
    preset: Option<String>,
    /// vqe, qaoa, varqite or fvqe.
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    shots: Option<usize>,
    /// CVaR quantile in (0, 1].
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    iterations: Option<usize>,
    /// F-VQE learning rate.
    #[arg(long)]
    eta: Option<f64>,
    /// VarQITE imaginary time step.
    #[arg(long)]
    dtau: Option<f64>,
    /// VarQITE Tikhonov regularization.
    #[arg(long)]
    lambda: Option<f64>,
    /// VarQITE: use a pseudo-inverse with this singular-value cutoff.
    #[arg(long)]
    pinv_cutoff: Option<f64>,
    /// F-VQE gradient-norm target for choosing tau.
    #[arg(long)]
    gc: Option<f64>,
    #[arg(long)]
    tau_step: Option<f64>,
    #[arg(long)]
    tau_max: Option<f64>,
    /// exact or sampled.
    #[arg(long)]
    mode: Option<String>,
    /// minmax or max.
    #[arg(long)]
    rescale: Option<String>,
    /// brickwork or chain.
    #[arg(long)]
    entangler: Option<String>,
    #[arg(long)]
    rho_begin: Option<f64>,
    #[arg(long)]
    rho_end: Option<f64>,
    /// Record wall-clock time per iteration (traces are then not reproducible).
    #[arg(long)]
    timing: bool,
}

fn parsed<T: std::str::FromStr>(value: &Option<String>, flag: &str) -> Outcome<Option<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .as_deref()
        .map(|v| {
            v.parse()
                .map_err(|e| Failure::config(format!("--{flag}: {e}")))
        })
        .transpose()
}

impl RunArgs {
    fn config(&self) -> Outcome<RunConfig> {
        let algorithm: Option<Algorithm> = parsed(&self.algorithm, "algorithm")?;
        let mut c = match (&self.preset, algorithm) {
            (Some(name), _) => preset(name)?,
            (None, Some(a)) => RunConfig::new(a),
            (None, None) => {
                return Err(Failure::config("either --algorithm or --preset is required"))
            }
        };
        if let Some(a) = algorithm {
            c.algorithm = a;
        }
        if let Some(v) = self.layers {
            c.layers = v;
        }
        if let Some(v) = self.shots {
            c.shots = v;
        }
        if let Some(v) = parsed::<Quantile>(&self.alpha, "alpha")? {
            c.alpha = v;
        }
        if let Some(v) = self.iterations {
            c.max_iterations = v;
        }
        if let Some(v) = self.eta {
            c.learning_rate = v;
        }
        if let Some(v) = self.dtau {
            c.time_step = v;
        }
        if let Some(v) = self.lambda {
            c.regularization = v;
        }
        if let Some(cutoff) = self.pinv_cutoff {
            c.solver = LinearSolver::Pseudoinverse { cutoff };
        }
        if let Some(v) = self.gc {
            c.gradient_target = v;
        }
        if let Some(v) = self.tau_step {
            c.tau_grid.step = v;
        }
        if let Some(v) = self.tau_max {
            c.tau_grid.max = v;
        }
        if let Some(v) = parsed::<EstimatorMode>(&self.mode, "mode")? {
            c.mode = v;
        }
        if let Some(v) = parsed::<Rescale>(&self.rescale, "rescale")? {
            c.rescale = v;
        }
        if let Some(v) = parsed::<Entangler>(&self.entangler, "entangler")? {
            c.entangler = v;
        }
        if let Some(v) = self.rho_begin {
            c.rho_begin = v;
        }
        if let Some(v) = self.rho_end {
            c.rho_end = v;
        }
        c.record_wall_time = self.timing;
        c.validate().map_err(|e| Failure::config(e.to_string()))?;
        Ok(c)
    }
}

fn write_out(path: &PathBuf, text: &str) -> Outcome<()> {
    std::fs::write(path, text)
        .map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))
}

fn dispatch(command: Command) -> Outcome<()> {
    match command {
        Command::Info { instance } => {
            print!("{}", cmd_info(&instance)?);
        }
        Command::SolveExact { source, limit, out } => {
            let report = cmd_solve_exact(&source.source(), limit)?;
            print!("{}", report.text);
            if let Some(path) = out {
                write_out(&path, &report.ground_set_file)?;
            }
        }
        Command::Run {
            source,
            run,
            seed,
            out,
        } => {
            let mut config = run.config()?;
            if let Some(s) = seed {
                config.seed = s;
            }
            let to_stdout = out.is_none();
            let spec = ExperimentSpec {
                source: source.source(),
                config,
                out,
                seeds: vec![],
                workers: None,
            };
            match cmd_run(&spec) {
                Ok(report) if to_stdout => {
                    print!("{}", report.csv);
                    eprintln!("{}", report.summary);
                }
                Ok(report) => println!("{}", report.summary),
                Err(failure) => {
                    if let Some(partial) = &failure.partial {
                        print!("{partial}");
                    }
                    return Err(failure);
                }
            }
        }
        Command::Sweep {
            source,
            run,
            seeds,
            out,
            workers,
        } => {
            let spec = ExperimentSpec {
                source: source.source(),
                config: run.config()?,
                out: Some(out),
                seeds,
                workers,
            };
            let report = cmd_sweep(&spec)?;
            for (seed, result) in &report.results {
                match result {
                    Ok(trace) => println!(
                        "seed {seed}: {}",
                        jsp_vqa::experiment::summary_line(trace)
                    ),
                    Err(f) => println!("seed {seed}: failed: {f}"),
                }
            }
            println!("{}", report.summary);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code() as u8)
        }
    }
}
