use std::path::PathBuf;

use clap::{Parser, Subcommand};
use feedopt_cli::commands::{self, Context};
use feedopt_cli::scenario::Scenario;
use feedopt_cli::CliError;

#[derive(Parser)]
#[command(name = "feedopt", version, about = "Output-feedback steady-state optimization of nonlinear plants")]
struct Cli {
    /// Scenario file or built-in name (lq, example5, pendulum-quadratic, pendulum-logistic).
    #[arg(long, global = true)]
    scenario: Option<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides both polynomial degrees of the manifold fit.
    #[arg(long, global = true)]
    degree: Option<usize>,
    #[arg(long, global = true)]
    horizon: Option<f64>,
    #[arg(long, global = true)]
    step: Option<f64>,
    /// Accept a controller bundle made from a different scenario.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stabilizability, detectability and the spectral inclusion.
    Check,
    /// Linear regulator equations at the linearization.
    SolveLinear,
    /// Polynomial fit of the steady-state maps.
    FitManifold,
    /// Build the controller named in the scenario.
    Synthesize,
    /// Simulate the closed loop with a controller bundle.
    Simulate {
        /// Defaults to <out>/controller.txt.
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
    /// Internal-model controller against gradient flows with fixed gains.
    CompareBaseline {
        #[arg(long, value_delimiter = ',')]
        eta: Vec<f64>,
    },
    /// Synthesize and simulate a built-in scenario into <out>/<name>.
    Bench { name: String },
}

fn run(cli: Cli) -> Result<String, CliError> {
    let load = |name: &str| -> Result<Scenario, CliError> {
        Scenario::load(name)?.with_overrides(cli.seed, cli.degree, cli.horizon, cli.step)
    };
    if let Command::Bench { name } = &cli.command {
        let ctx = Context::new(load(name)?, &cli.out.join(name), cli.force)?;
        return commands::bench(&ctx);
    }
    let name = cli.scenario.as_deref().ok_or_else(|| CliError::Invalid("--scenario is required".into()))?;
    let ctx = Context::new(load(name)?, &cli.out, cli.force)?;
    match &cli.command {
        Command::Check => commands::check(&ctx),
        Command::SolveLinear => commands::solve_linear(&ctx),
        Command::FitManifold => commands::fit_manifold_cmd(&ctx),
        Command::Synthesize => commands::synthesize(&ctx),
        Command::Simulate { bundle } => commands::simulate(&ctx, bundle.as_deref()),
        Command::CompareBaseline { eta } => commands::compare_baseline(&ctx, eta),
        Command::Bench { .. } => unreachable!(),
    }
}

fn main() {
    match run(Cli::parse()) {
        Ok(text) => print!("{text}"),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
