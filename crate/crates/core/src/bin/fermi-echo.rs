//! `fermi-echo`: decoherence factor tables, non-Markovianity reports and
//! parameter sweeps for an impurity qubit in a trapped Fermi gas.
//!
//! Exit codes: 0 success, 1 invalid input, 2 failure during the computation.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fermi_echo::config::{available_workers, read_document, ConfigDocument, ConfigError, RunDocument, SweepDocument};
use fermi_echo::sweep::{run_point, sweep, Axis, Method, RunError, RunRecord, SweepError};
use fermi_echo::table::{write_echo_table, write_summary, TableError};
use serde_json::json;

#[derive(Parser)]
#[command(name = "fermi-echo", version, about = "Impurity dephasing in a trapped Fermi gas")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the ν(t) / volume table of one run as CSV.
    Echo(RunArgs),
    /// Print the non-Markovianity report of one run as JSON.
    Measure(RunArgs),
    /// Scan alpha, beta or omega and write N_V per point as CSV.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration; explicit flags take precedence over its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Total number of fermions N_F.
    #[arg(long)]
    nf: Option<usize>,
    /// Inverse temperature.
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    /// Dimensionless coupling V0^2 / (omega eps_F).
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    /// Trap frequency.
    #[arg(long, allow_negative_numbers = true)]
    omega: Option<f64>,
    /// Spin degeneracy.
    #[arg(long)]
    gs: Option<usize>,
    /// Number of single-particle modes kept.
    #[arg(long)]
    cutoff: Option<usize>,
    /// Time horizon.
    #[arg(long, allow_negative_numbers = true)]
    tmax: Option<f64>,
    /// Number of time samples.
    #[arg(long)]
    steps: Option<usize>,
    /// exact or cumulant.
    #[arg(long)]
    method: Option<Method>,
    /// Worker threads.
    #[arg(long, env = "FERMI_ECHO_JOBS")]
    jobs: Option<usize>,
    /// Output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Swept parameter: alpha, beta or omega.
    #[arg(long)]
    axis: Option<Axis>,
    /// Comma-separated, strictly increasing axis values.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    values: Option<Vec<f64>>,
}

enum Failure {
    Invalid(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::Invalid(e.to_string()),
            _ => Failure::Invalid(format!("invalid configuration: {e}")),
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        if e.is_validation() {
            Failure::Invalid(format!("invalid configuration: {e}"))
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<TableError> for Failure {
    fn from(e: TableError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl RunArgs {
    fn apply(&self, doc: &mut RunDocument) {
        let gas = &mut doc.gas;
        gas.n_fermions = self.nf.or(gas.n_fermions);
        gas.beta = self.beta.or(gas.beta);
        gas.omega = self.omega.or(gas.omega);
        gas.spin_degeneracy = self.gs.or(gas.spin_degeneracy);
        gas.cutoff = self.cutoff.or(gas.cutoff);
        doc.alpha = self.alpha.or(doc.alpha);
        doc.method = self.method.or(doc.method);
        doc.grid.t_max = self.tmax.or(doc.grid.t_max);
        doc.grid.n_steps = self.steps.or(doc.grid.n_steps);
    }

    fn run_document(&self) -> Result<(RunDocument, Option<usize>), Failure> {
        let mut doc = match &self.config {
            None => RunDocument::default(),
            Some(path) => match read_document(path)? {
                ConfigDocument::Run(doc) => doc,
                ConfigDocument::Sweep(_) => {
                    return Err(Failure::Invalid(format!("{} describes a sweep", path.display())));
                }
            },
        };
        self.apply(&mut doc);
        Ok((doc, self.jobs))
    }

    fn output(&self) -> Result<Box<dyn Write>, Failure> {
        match &self.out {
            None => Ok(Box::new(std::io::stdout().lock())),
            Some(path) => std::fs::File::create(path)
                .map(|f| Box::new(std::io::BufWriter::new(f)) as Box<dyn Write>)
                .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display()))),
        }
    }
}

fn in_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    Ok(pool.install(f))
}

fn single_run(args: &RunArgs) -> Result<RunRecord, Failure> {
    let (doc, jobs) = args.run_document()?;
    let spec = doc.resolve().map_err(ConfigError::from)?;
    let jobs = jobs.unwrap_or_else(available_workers);
    if jobs == 0 {
        return Err(Failure::Invalid("--jobs must be at least 1".into()));
    }
    Ok(in_pool(jobs, || run_point(&spec))??)
}

fn report_json(record: &RunRecord) -> serde_json::Value {
    let report = &record.report;
    json!({
        "method": record.spec.method.as_str(),
        "n_fermions": record.spec.gas.n_fermions,
        "spin_degeneracy": record.spec.gas.spin_degeneracy,
        "beta": record.spec.gas.beta,
        "omega": record.spec.gas.omega,
        "cutoff": record.spec.gas.cutoff,
        "alpha": record.spec.alpha,
        "v0": record.v0,
        "mu": record.mu,
        "t_max": record.spec.grid.t_max,
        "n_steps": record.spec.grid.n_steps,
        "n_v": report.n_v,
        "n_plus_final": report.n_plus.last(),
        "n_minus_final": report.n_minus.last(),
        "ratio_final": report.final_ratio(),
        "expansion_intervals": report.expansion_intervals,
        "wall_time_s": record.wall_time,
    })
}

fn run_sweep(args: &SweepArgs) -> Result<bool, Failure> {
    let mut doc = match &args.run.config {
        None => SweepDocument::default(),
        Some(path) => match read_document(path)? {
            ConfigDocument::Sweep(doc) => doc,
            ConfigDocument::Run(base) => SweepDocument {
                base,
                ..Default::default()
            },
        },
    };
    args.run.apply(&mut doc.base);
    doc.axis = args.axis.or(doc.axis);
    doc.values = args.values.clone().or(doc.values);
    doc.parallelism = args.run.jobs.or(doc.parallelism);
    let spec = doc.resolve(available_workers()).map_err(ConfigError::from)?;

    let points = sweep(&spec).map_err(|e| match e {
        SweepError::Spec(e) => Failure::Invalid(format!("invalid configuration: {e}")),
        SweepError::Pool(e) => Failure::Runtime(e.to_string()),
    })?;
    let mut all_ok = true;
    for p in &points {
        if let Err(e) = &p.outcome {
            eprintln!("fermi-echo: {} = {}: {e}", spec.axis.as_str(), p.axis_value);
            all_ok = false;
        }
    }
    if points.iter().any(|p| p.outcome.is_ok()) {
        write_summary(&points, args.run.output()?)?;
    }
    Ok(all_ok)
}

fn execute(cli: Cli) -> Result<bool, Failure> {
    match cli.command {
        Command::Echo(args) => {
            let record = single_run(&args)?;
            write_echo_table(&record, args.output()?)?;
            Ok(true)
        }
        Command::Measure(args) => {
            let record = single_run(&args)?;
            let mut out = args.output()?;
            let text = serde_json::to_string_pretty(&report_json(&record)).expect("report serializes");
            writeln!(out, "{text}").map_err(|e| Failure::Runtime(e.to_string()))?;
            Ok(true)
        }
        Command::Sweep(args) => run_sweep(&args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(Failure::Invalid(msg)) => {
            eprintln!("fermi-echo: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("fermi-echo: {msg}");
            ExitCode::from(2)
        }
    }
}
