//! Command-line pipeline around the `sardespeckle` library: simulate a
//! speckled dataset, train the proposed or baseline network, despeckle
//! images and evaluate them. Every command writes a manifest that can be
//! passed back as `--config` to repeat the run.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::path::{Path, PathBuf};

use cli::{Cli, Command, Common};
use config::{Config, DATA_ROOT_ENV};
use error::CliResult;

fn load(common: &Common) -> CliResult<Config> {
    match &common.config {
        Some(path) => Config::load(path),
        None => Ok(Config::default()),
    }
}

/// Paths given on the command line are relative to the working directory,
/// not to the data root.
fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

/// Resolve the configuration for `cli`, applying flag overrides.
pub fn resolve(cli: &Cli) -> CliResult<Config> {
    let common = match &cli.command {
        Command::Simulate(a) => &a.common,
        Command::Train(a) => &a.common,
        Command::Despeckle(a) => &a.common,
        Command::Evaluate(a) => &a.common,
    };
    let mut config = load(common)?;
    let env_root = std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from);
    config.resolve_root(cli.data_root.clone(), env_root);
    let out = common.out.as_deref().map(absolute);
    match &cli.command {
        Command::Simulate(a) => {
            let s = &mut config.simulate;
            if let Some(seed) = a.seed {
                s.seed = seed;
            }
            if let Some(out) = out {
                s.out = out;
            }
        }
        Command::Train(a) => {
            let t = &mut config.train;
            if let Some(seed) = a.seed {
                t.schedule.seed = seed;
            }
            if a.baseline {
                t.baseline = true;
            }
            if let Some(d) = &a.dataset {
                t.dataset = absolute(d);
            }
            if let Some(out) = out {
                t.out = out;
            }
        }
        Command::Despeckle(a) => {
            let d = &mut config.despeckle;
            if let Some(w) = &a.weights {
                d.weights = absolute(w);
            }
            if !a.inputs.is_empty() {
                d.inputs = a.inputs.iter().map(|p| absolute(p)).collect();
            }
            if a.ratio {
                d.ratio = true;
            }
            if let Some(out) = out {
                d.out = out;
            }
        }
        Command::Evaluate(a) => {
            let e = &mut config.evaluate;
            if !a.runs.is_empty() {
                e.runs = a
                    .runs
                    .iter()
                    .map(|r| config::RunSpec {
                        label: r.label.clone(),
                        filtered: absolute(&r.filtered),
                    })
                    .collect();
            }
            if let Some(r) = &a.reference {
                e.reference = absolute(r);
            }
            if let Some(n) = &a.noisy {
                e.noisy = Some(absolute(n));
            }
            if let Some(out) = out {
                e.out = out;
            }
        }
    }
    Ok(config)
}

/// Run the selected command; returns the summary for stdout.
pub fn run(cli: &Cli) -> CliResult<String> {
    let config = resolve(cli)?;
    match &cli.command {
        Command::Simulate(_) => commands::simulate(&config),
        Command::Train(_) => commands::train(&config),
        Command::Despeckle(_) => commands::despeckle(&config),
        Command::Evaluate(_) => commands::evaluate(&config),
    }
}
