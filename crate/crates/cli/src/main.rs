use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dtanet_cli::commands::{self, parse_grid, CliError, CliResult, Manifest};
use dtanet_cli::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "dtanet", version, about = "Treatment-effect experiments with DTANet")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat JSON config; keys are TrainConfig/SynthConfig field names.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Dataset CSV; omitted means a synthetic draw from the config.
    #[arg(long, global = true)]
    data: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true, default_value_t = commands::DEFAULT_TRIALS)]
    trials: usize,

    /// Noise correlation for the sensitivity sweep (repeatable).
    #[arg(long, global = true, allow_negative_numbers = true)]
    rho: Vec<f64>,

    /// Comma-separated covariate names dropped together (repeatable).
    #[arg(long, global = true)]
    exclude: Vec<String>,

    /// λ grid as `l1,l1,...:l2,l2,...`.
    #[arg(long, global = true)]
    grid: Option<String>,

    /// Checkpoint to evaluate instead of training.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset and its arm summary.
    Generate,
    /// Train and write a checkpoint plus the loss trace.
    Train,
    /// Metrics for DTANet and the OLS baselines on validation and test rows.
    Evaluate,
    /// Train every (λ₁, λ₂) cell and select by validation outcome loss.
    Gridsearch,
    /// Effect distributions with covariates excluded.
    Explain,
    /// Effect estimates across noise correlations.
    Sensitivity,
}

fn manifest(cli: &Cli) -> CliResult<Manifest> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| CliError { context: format!("reading {}", path.display()), source: e })?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config = config.with_seed(seed);
    }
    let mut m = Manifest::new(config, cli.out.clone());
    m.data = cli.data.clone();
    m.checkpoint = cli.checkpoint.clone();
    m.trials = cli.trials;
    m.rhos = cli.rho.clone();
    m.exclude = cli
        .exclude
        .iter()
        .map(|set| set.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
        .collect();
    m.grid = cli.grid.as_deref().map(parse_grid).transpose()?;
    if m.trials == 0 {
        return Err(CliError::usage("--trials must be at least 1"));
    }
    Ok(m)
}

fn run(cli: &Cli) -> CliResult<()> {
    let m = manifest(cli)?;
    let print = |paths: &[PathBuf]| paths.iter().for_each(|p| println!("{}", p.display()));
    match cli.command {
        Command::Generate => print(&commands::cmd_generate(&m)?),
        Command::Train => print(&commands::cmd_train(&m)?),
        Command::Evaluate => print(&commands::cmd_evaluate(&m)?.1),
        Command::Gridsearch => {
            let g = commands::cmd_gridsearch(&m)?;
            match g.best_cell() {
                Some(c) => println!("best lambda1={} lambda2={}", c.lambda1, c.lambda2),
                None => println!("no grid cell trained successfully"),
            }
        }
        Command::Explain => {
            commands::cmd_explain(&m)?;
        }
        Command::Sensitivity => {
            commands::cmd_sensitivity(&m)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) { 0 } else { 1 };
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
