use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::RunSpec;

#[derive(Debug, Parser)]
#[command(name = "sardespeckle", version, about = "Edge-preserving CNN despeckling of single-look SAR intensity images")]
pub struct Cli {
    /// Base directory for relative paths in the config [env: SARDESPECKLE_DATA_ROOT]
    #[arg(long, global = true, value_name = "DIR")]
    pub data_root: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a speckled patch dataset and a held-out test set
    Simulate(SimulateArgs),
    /// Train a despeckling network on a simulated dataset
    Train(TrainArgs),
    /// Filter images with trained weights
    Despeckle(DespeckleArgs),
    /// Score filtered images against clean references
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML config (a previous run's manifest.toml also works)
    #[arg(long, short, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Output directory, overriding the config
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,

    /// Speckle seed
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,

    /// Initialization and shuffling seed
    #[arg(long)]
    pub seed: Option<u64>,

    /// Train the comparison model without the edge term (lambda_edge = 0)
    #[arg(long)]
    pub baseline: bool,

    /// Dataset directory produced by `simulate`
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DespeckleArgs {
    #[command(flatten)]
    pub common: Common,

    /// Weight file produced by `train`
    #[arg(long, value_name = "FILE")]
    pub weights: Option<PathBuf>,

    /// Input image or directory; repeatable, replaces the configured inputs
    #[arg(long = "input", value_name = "PATH")]
    pub inputs: Vec<PathBuf>,

    /// Also write ratio images (noisy / filtered)
    #[arg(long)]
    pub ratio: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,

    /// Labelled directory of filtered images, as LABEL=DIR; repeatable,
    /// replaces the configured runs
    #[arg(long = "run", value_name = "LABEL=DIR", value_parser = parse_run)]
    pub runs: Vec<RunSpec>,

    /// Directory of clean reference images
    #[arg(long, value_name = "DIR")]
    pub reference: Option<PathBuf>,

    /// Directory of unfiltered observations
    #[arg(long, value_name = "DIR")]
    pub noisy: Option<PathBuf>,
}

fn parse_run(s: &str) -> Result<RunSpec, String> {
    let (label, dir) = s.split_once('=').ok_or_else(|| format!("expected LABEL=DIR, got {s:?}"))?;
    Ok(RunSpec {
        label: label.to_string(),
        filtered: PathBuf::from(dir),
    })
}
