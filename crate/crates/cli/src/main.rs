//! `mfg`: validate, solve, verify, simulate and report on mean-field game
//! instances with boundary influx.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod manifest;

#[derive(Parser, Debug)]
#[command(
    name = "mfg",
    version,
    about = "Variational mean-field game solver with certificates"
)]
struct Cli {
    /// Print only a machine-readable JSON summary on stdout.
    #[arg(long, global = true)]
    json_summary: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
pub struct SpecSource {
    /// Instance file in TOML format.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Name of a shipped instance.
    #[arg(long)]
    pub builtin: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check an instance against the standing assumptions.
    Validate {
        #[command(flatten)]
        source: SpecSource,
        /// Write the resolved instance as TOML.
        #[arg(long)]
        emit: Option<PathBuf>,
    },
    /// Solve an instance and write snapshots and the certificate.
    Solve(SolveArgs),
    /// Check the weak-solution properties of a solve directory.
    Verify {
        #[arg(long = "in")]
        input: PathBuf,
        /// Report path; defaults to `verify.txt` in the solve directory.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Density threshold of the support masks.
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Transport sampled agents along the solved velocity field.
    Simulate(SimulateArgs),
    /// Tabulate a convex conjugate.
    #[command(allow_negative_numbers = true)]
    ConjugateTable {
        #[arg(long, value_enum)]
        phi: Phi,
        /// Exponent of the power family.
        #[arg(long, default_value_t = 2.0)]
        r: f64,
        /// Single evaluation point; prints the value alone.
        #[arg(long)]
        at: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        from: f64,
        #[arg(long, default_value_t = 4.0)]
        to: f64,
        #[arg(long, default_value_t = 41)]
        points: usize,
    },
    /// Aggregate certificate, verification and simulation into one document.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub source: SpecSource,
    /// Output directory; defaults to `$MFG_OUT_ROOT/<name>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Continue from the checkpoint file.
    #[arg(long, requires = "checkpoint")]
    pub resume: bool,
    #[arg(long, default_value_t = 1000)]
    pub checkpoint_every: usize,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Start from a random iterate with this seed.
    #[arg(long)]
    pub random_init: Option<u64>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub solve_dir: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    pub agents: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; defaults to the solve directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Velocity::Flux)]
    pub velocity: Velocity,
    /// Integration substeps per time step.
    #[arg(long, default_value_t = 4)]
    pub substeps: usize,
    /// Agents written to the trajectory CSV.
    #[arg(long, default_value_t = 20)]
    pub trajectories: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Velocity {
    Flux,
    Gradient,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phi {
    Counterexample,
    Quadratic,
    Power,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let json = cli.json_summary;
    let result = match cli.command {
        Command::Validate { source, emit } => commands::validate(&source, emit.as_deref(), json),
        Command::Solve(a) => commands::solve(&a, json),
        Command::Verify {
            input,
            report,
            delta,
        } => commands::verify(&input, report.as_deref(), delta, json),
        Command::Simulate(a) => commands::simulate(&a, json),
        Command::ConjugateTable {
            phi,
            r,
            at,
            from,
            to,
            points,
        } => commands::conjugate_table(phi, r, at, (from, to, points), json),
        Command::Report { input, out } => commands::report(&input, out.as_deref(), json),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = commands::classify(&e);
            let detail = format!("{e:#}").replace('\n', " ");
            eprintln!("error: kind={kind} detail={detail}");
            ExitCode::from(code)
        }
    }
}
