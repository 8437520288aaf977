use std::process::ExitCode;

use clap::{Parser, Subcommand};
use curbscape::config::Overrides;
use curbscape::pipeline::{Pipeline, Stage};

/// Curb-ramp panorama labeling: select panoramas near known ramps, crop,
/// localize, aggregate, split and evaluate.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate a synthetic world with rendered panoramas and ground truth.
    Synth,
    /// Parse and normalize the ramp table and panorama catalog.
    Ingest,
    /// Select positive and null panoramas and the candidate ramps.
    Select,
    /// Render one crop per candidate ramp.
    Crops,
    /// Run the localizer on every crop.
    Localize,
    /// Project detections onto panoramas and merge duplicates.
    Aggregate,
    /// Assign spatially separated train/val/test splits.
    Split,
    /// Per-city and per-split dataset statistics.
    Stats,
    /// Compare predicted labels with ground truth.
    Eval,
    /// Run every stage in order.
    Pipeline,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = match cli.overrides.resolve() {
        Ok(c) => c,
        Err(e) => {
            log::error!("config: {e}");
            return ExitCode::from(2);
        }
    };
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return ExitCode::SUCCESS;
    }
    let result = Pipeline::new(cfg).and_then(|p| match cli.command {
        Command::Synth => p.run(Stage::Synth),
        Command::Ingest => p.run(Stage::Ingest),
        Command::Select => p.run(Stage::Select),
        Command::Crops => p.run(Stage::Crops),
        Command::Localize => p.run(Stage::Localize),
        Command::Aggregate => p.run(Stage::Aggregate),
        Command::Split => p.run(Stage::Split),
        Command::Stats => p.run(Stage::Stats),
        Command::Eval => p.run(Stage::Eval),
        Command::Pipeline => p.run_all(),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(1)
        }
    }
}
