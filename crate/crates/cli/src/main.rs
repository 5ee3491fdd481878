use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use netid_cli::commands::{run, MuOverride, RunOverrides};
use netid_cli::config::{load_config, ConfigError, RunConfig};
use netid_core::subspace::OrderPolicy;

/// Identify hidden network topology from input/output trajectories.
#[derive(Parser)]
#[command(name = "netid", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for artifacts and the report.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed recorded in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Model order: a number or "auto" (largest singular-value gap).
    #[arg(long)]
    order: Option<String>,
    /// Sparsity weight: a number or "sweep".
    #[arg(long)]
    mu: Option<String>,
    /// Run the one-shot estimator in transformed coordinates (T = I).
    #[arg(long = "assume-T-identity", default_value_t = false)]
    assume_t_identity: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a (possibly synthetic two-graph) system to a trajectory CSV.
    Simulate(CommonArgs),
    /// Run the subspace identification pipeline on a trajectory CSV.
    Identify(CommonArgs),
    /// Recover a graph from identified matrices (known mapping / sparsest).
    Recover(CommonArgs),
    /// One-shot state-graph estimation from the observability basis.
    Oneshot(CommonArgs),
    /// The bundled synthetic experiment: simulate, identify, recover both graphs.
    #[command(name = "reproduce-synthetic")]
    ReproduceSynthetic(CommonArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Identify(_) => "identify",
            Command::Recover(_) => "recover",
            Command::Oneshot(_) => "oneshot",
            Command::ReproduceSynthetic(_) => "reproduce-synthetic",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Simulate(a)
            | Command::Identify(a)
            | Command::Recover(a)
            | Command::Oneshot(a)
            | Command::ReproduceSynthetic(a) => a,
        }
    }
}

fn parse_order(text: &str) -> Result<OrderPolicy, String> {
    if text == "auto" {
        return Ok(OrderPolicy::LargestGap);
    }
    text.parse::<usize>()
        .map(|order| OrderPolicy::Fixed { order })
        .map_err(|_| format!("--order must be a positive integer or \"auto\", got {text:?}"))
}

fn parse_mu(text: &str) -> Result<MuOverride, String> {
    if text == "sweep" {
        return Ok(MuOverride::Sweep);
    }
    text.parse::<f64>()
        .map(MuOverride::Value)
        .map_err(|_| format!("--mu must be a number or \"sweep\", got {text:?}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = cli.command;
    let args = command.args();

    let config: RunConfig = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if config.command_name() != command.name() {
        eprintln!(
            "error: {}",
            ConfigError::Invalid(format!(
                "config declares command {:?} but the {} subcommand was invoked",
                config.command_name(),
                command.name()
            ))
        );
        return ExitCode::from(2);
    }

    let order = match args.order.as_deref().map(parse_order).transpose() {
        Ok(o) => o,
        Err(msg) => {
            eprintln!("error: config invalid: {msg}");
            return ExitCode::from(2);
        }
    };
    let mu = match args.mu.as_deref().map(parse_mu).transpose() {
        Ok(m) => m,
        Err(msg) => {
            eprintln!("error: config invalid: {msg}");
            return ExitCode::from(2);
        }
    };
    let overrides = RunOverrides {
        seed: args.seed,
        order,
        mu,
        assume_t_identity: args.assume_t_identity,
    };

    match run(config, &overrides, &args.out) {
        Ok(report) => {
            println!(
                "{}: ok ({} artifacts in {})",
                report.command,
                report.artifacts.len(),
                args.out.display()
            );
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
