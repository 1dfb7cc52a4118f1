use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod error;

use commands::Method;
use error::Failure;

/// Synthesize, certify, and simulate first-order optimization algorithms.
#[derive(Parser, Debug)]
#[command(name = "fomsynth", version)]
struct Cli {
    /// Seed for random problem instances.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for JSON and CSV artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Parameters as inline JSON or a file path; flags override its fields.
    #[arg(long, global = true)]
    config: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form algorithm for a (mu, ell) budget.
    Synth(SynthArgs),
    /// Gain-margin feasibility and optimal controller for an unstable pole.
    Margin(MarginArgs),
    /// Lift a periodic schedule to an LTI transfer matrix.
    Lift(LiftArgs),
    /// Circle-criterion rate certificate for an algorithm spec.
    Certify(CertifyArgs),
    /// Simulate an algorithm on a generated problem.
    Run(RunArgs),
    /// Figure-reproduction sweeps.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Subcommand, Debug)]
enum BenchCommand {
    /// Gradient evaluations of the implicit proximal method over its feedthrough.
    Fig4(Fig4Args),
    /// Proximal gradient on an l1-regularized problem against its rate envelope.
    Fig5(Fig5Args),
}

#[derive(Args, Debug, serde::Serialize)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    method: Option<Method>,
    #[arg(long)]
    mu: Option<f64>,
    /// Omit for the unbounded budget.
    #[arg(long)]
    ell: Option<f64>,
    /// Target rate for the implicit designs.
    #[arg(long)]
    rho: Option<f64>,
}

#[derive(Args, Debug, serde::Serialize)]
pub struct MarginArgs {
    /// Real part of the unstable pole.
    #[arg(long, allow_negative_numbers = true)]
    pole: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pole_im: Option<f64>,
    /// Requested k2/k1 for the interval [1/sqrt(r), sqrt(r)].
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long)]
    k2: Option<f64>,
    /// Gain samples for the stability check.
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Args, Debug, serde::Serialize)]
pub struct LiftArgs {
    /// Schedule as inline JSON or a file path.
    #[arg(long)]
    #[serde(skip)]
    schedule: Option<String>,
    /// Shorthand for a gradient schedule, e.g. `--steps 0.1,0.2,0.3`.
    #[arg(long, value_delimiter = ',', conflicts_with = "schedule")]
    #[serde(skip)]
    steps: Option<Vec<f64>>,
}

#[derive(Args, Debug, serde::Serialize)]
pub struct CertifyArgs {
    /// Algorithm spec JSON (as written by `synth`), inline or a file path.
    #[arg(long)]
    #[serde(skip)]
    spec: Option<String>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    ell: Option<f64>,
}

#[derive(Args, Debug, serde::Serialize)]
pub struct RunArgs {
    /// Problem JSON, inline or a file path.
    #[arg(long)]
    #[serde(skip)]
    problem: Option<String>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Keep every k-th step in the trace CSV.
    #[arg(long)]
    every: Option<usize>,
}

#[derive(Args, Debug, serde::Serialize)]
pub struct Fig4Args {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    ell: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Grid size including alpha = 0.
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    alpha_min: Option<f64>,
    #[arg(long)]
    alpha_max: Option<f64>,
    /// Explicit alpha values; replaces the log grid.
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
}

#[derive(Args, Debug, serde::Serialize)]
pub struct Fig5Args {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    ell: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    every: Option<usize>,
}

pub struct Global {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub config: Option<String>,
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let g = Global {
        seed: cli.seed,
        out: cli.out,
        config: cli.config,
    };
    match cli.command {
        Command::Synth(a) => commands::synth(&g, a),
        Command::Margin(a) => commands::margin(&g, a),
        Command::Lift(a) => commands::lift(&g, a),
        Command::Certify(a) => commands::certify(&g, a),
        Command::Run(a) => commands::run(&g, a),
        Command::Bench(BenchCommand::Fig4(a)) => commands::fig4(&g, a),
        Command::Bench(BenchCommand::Fig5(a)) => commands::fig5(&g, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            let fail = Failure::invalid(msg.trim_end());
            eprintln!("{}", fail.to_json());
            return ExitCode::from(fail.exit_code() as u8);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(fail) => {
            eprintln!("{}", fail.to_json());
            ExitCode::from(fail.exit_code() as u8)
        }
    }
}
