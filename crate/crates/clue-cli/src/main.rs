use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use clue_cli::commands;
use clue_cli::config::ExperimentConfig;

/// Generate and analyze diverse, radius-constrained counterfactual latent
/// uncertainty explanations.
#[derive(Parser)]
#[command(name = "clue", version, about)]
struct Cli {
    /// Flat key-value configuration file; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Latent search radius δ (single-cell commands).
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// Loss variant: uncertainty or distance.
    #[arg(long, global = true)]
    loss: Option<String>,
    /// Initialization scheme: s1..s5.
    #[arg(long, global = true)]
    scheme: Option<String>,
    /// Number of explanations per input.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Master seed for every derived random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = automatic).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the VAE and MC-dropout classifier; write checkpoints.
    Train,
    /// Explain one uncertain input and render its gallery.
    Explain {
        /// Rank among the most uncertain test inputs.
        #[arg(long, default_value_t = 0)]
        rank: usize,
        /// Explicit test-set index (overrides --rank).
        #[arg(long)]
        input_index: Option<usize>,
    },
    /// Run the full delta x loss x scheme grid and emit figure data.
    Grid,
    /// Normalized-distance translation robustness curves.
    Robustness {
        /// Test-set index of the digit to shift.
        #[arg(long, default_value_t = 0)]
        input_index: usize,
    },
    /// Check every emitted CSV for internal consistency.
    Validate,
}

fn build_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = cli.delta {
        cfg.set("delta", &v.to_string())?;
    }
    if let Some(v) = &cli.loss {
        cfg.set("loss", v)?;
    }
    if let Some(v) = &cli.scheme {
        cfg.set("scheme", v)?;
    }
    if let Some(v) = cli.n {
        cfg.set("n", &v.to_string())?;
    }
    if let Some(v) = cli.seed {
        cfg.set("seed", &v.to_string())?;
    }
    if let Some(v) = &cli.out {
        cfg.out = v.clone();
    }
    if let Some(v) = cli.workers {
        cfg.set("workers", &v.to_string())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let cfg = match build_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("configuration error: {e:#}");
            return ExitCode::from(1);
        }
    };

    if cfg.workers > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()
        {
            eprintln!("configuration error: {e}");
            return ExitCode::from(1);
        }
    }

    let outcome = match &cli.command {
        Command::Train => commands::train::run(&cfg).map(|()| true),
        Command::Explain { rank, input_index } => commands::explain::run(
            &cfg,
            &commands::explain::ExplainArgs {
                rank: *rank,
                input_index: *input_index,
            },
        )
        .map(|()| true),
        Command::Grid => {
            let stack = match clue_cli::stack::load_stack(&cfg) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    return ExitCode::from(2);
                }
            };
            commands::grid::run(&cfg, &stack).map(|outcome| outcome.failed_cells.is_empty())
        }
        Command::Robustness { input_index } => commands::robustness::run(
            &cfg,
            &commands::robustness::RobustnessArgs {
                input_index: *input_index,
            },
        )
        .map(|()| true),
        Command::Validate => commands::validate::run(&cfg),
    };

    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        // A completed run that failed its checks (validation, failed cells).
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
