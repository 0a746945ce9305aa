//! Run configuration.
//!
//! One TOML file with a section per command. Every field has a default, so
//! an empty file is valid; unknown keys are rejected. Relative paths are
//! resolved against the data root.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sardespeckle::losses::LossWeights;
use sardespeckle::metrics::{EvalConfig, HomogeneityConfig};
use sardespeckle::net::{ArchSpec, Schedule};
use sardespeckle::speckle_sim::SpeckleConfig;

use crate::error::{CliError, CliResult};

/// Environment variable naming the default data root.
pub const DATA_ROOT_ENV: &str = "SARDESPECKLE_DATA_ROOT";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Base directory for relative paths.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_root: Option<PathBuf>,
    pub simulate: SimulateConfig,
    pub train: TrainConfig,
    pub despeckle: DespeckleConfig,
    pub evaluate: EvaluateConfig,
    /// Provenance written by a previous run; ignored on input so a manifest
    /// can be fed back as a config.
    #[serde(skip_serializing)]
    pub run: Option<toml::Table>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticCorpus {
    pub count: usize,
    pub size: usize,
    /// Extra scenes kept out of training and validation for evaluation.
    pub test_count: usize,
    pub seed: u64,
}

impl Default for SyntheticCorpus {
    fn default() -> Self {
        Self {
            count: 40,
            size: 96,
            test_count: 8,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub out: PathBuf,
    /// Clean image files or directories. Empty means the synthetic corpus.
    pub sources: Vec<PathBuf>,
    /// Clean images reserved for evaluation when `sources` is used.
    pub held_out: Vec<PathBuf>,
    pub synthetic: SyntheticCorpus,
    pub patch_size: usize,
    pub train_count: usize,
    pub val_count: usize,
    pub looks: f64,
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            out: "dataset".into(),
            sources: Vec::new(),
            held_out: Vec::new(),
            synthetic: SyntheticCorpus::default(),
            patch_size: 64,
            train_count: 30000,
            val_count: 7000,
            looks: 1.0,
            seed: 0,
        }
    }
}

impl SimulateConfig {
    pub fn speckle(&self) -> CliResult<SpeckleConfig> {
        SpeckleConfig::new(self.looks, self.seed).map_err(CliError::config_from_core)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.speckle()?;
        if self.patch_size == 0 {
            return Err(CliError::config("simulate.patch_size must be positive"));
        }
        if self.train_count == 0 {
            return Err(CliError::config("simulate.train_count must be positive"));
        }
        if self.sources.is_empty() && self.synthetic.count == 0 {
            return Err(CliError::config("simulate.synthetic.count must be positive when no sources are given"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub dataset: PathBuf,
    pub out: PathBuf,
    /// Drop the edge term (lambda_edge = 0) for the comparison model.
    pub baseline: bool,
    pub arch: ArchSpec,
    pub loss: LossWeights,
    pub schedule: Schedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dataset: "dataset".into(),
            out: "model".into(),
            baseline: false,
            arch: ArchSpec::default(),
            loss: LossWeights::default(),
            schedule: Schedule::default(),
        }
    }
}

impl TrainConfig {
    /// Loss weights after applying `baseline`.
    pub fn effective_loss(&self) -> LossWeights {
        if self.baseline {
            self.loss.without_edge()
        } else {
            self.loss
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.arch.validate().map_err(CliError::config_from_core)?;
        self.loss.validate().map_err(CliError::config_from_core)?;
        self.schedule.validate().map_err(CliError::config_from_core)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DespeckleConfig {
    pub weights: PathBuf,
    /// Image files or directories of images.
    pub inputs: Vec<PathBuf>,
    pub out: PathBuf,
    /// Also write the ratio image `Y / max(X, ratio_epsilon)` per input.
    pub ratio: bool,
    pub ratio_epsilon: f64,
}

impl Default for DespeckleConfig {
    fn default() -> Self {
        Self {
            weights: "model/weights.kldn".into(),
            inputs: vec!["dataset/test/noisy".into()],
            out: "filtered".into(),
            ratio: false,
            ratio_epsilon: 1e-3,
        }
    }
}

impl DespeckleConfig {
    pub fn validate(&self) -> CliResult<()> {
        if !(self.ratio_epsilon > 0.0 && self.ratio_epsilon.is_finite()) {
            return Err(CliError::config("despeckle.ratio_epsilon must be positive"));
        }
        if self.inputs.is_empty() {
            return Err(CliError::config("despeckle.inputs is empty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub label: String,
    pub filtered: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    pub reference: PathBuf,
    /// Unfiltered observations; when present the input is scored as its own
    /// row and ratio statistics are reported.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noisy: Option<PathBuf>,
    pub runs: Vec<RunSpec>,
    pub out: PathBuf,
    pub metrics: EvalConfig,
    pub homogeneity: HomogeneityConfig,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            reference: "dataset/test/clean".into(),
            noisy: None,
            runs: vec![RunSpec {
                label: "filtered".into(),
                filtered: "filtered".into(),
            }],
            out: "report".into(),
            metrics: EvalConfig::default(),
            homogeneity: HomogeneityConfig::default(),
        }
    }
}

impl EvaluateConfig {
    pub fn validate(&self) -> CliResult<()> {
        self.metrics.validate().map_err(CliError::config_from_core)?;
        if self.runs.is_empty() {
            return Err(CliError::config("evaluate.runs is empty"));
        }
        let mut labels: Vec<&str> = self.runs.iter().map(|r| r.label.as_str()).collect();
        labels.sort_unstable();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(CliError::config(format!("duplicate run label {:?}", w[0])));
        }
        if let Some(bad) = labels.iter().find(|l| !valid_label(l)) {
            return Err(CliError::config(format!(
                "run label {bad:?} must be nonempty and use only letters, digits, '-' and '_'"
            )));
        }
        if self.noisy.is_some() && labels.contains(&INPUT_LABEL) {
            return Err(CliError::config(format!("run label {INPUT_LABEL:?} is reserved for the noisy input")));
        }
        Ok(())
    }
}

/// Label of the unfiltered input row in evaluation reports.
pub const INPUT_LABEL: &str = "input";

fn valid_label(label: &str) -> bool {
    !label.is_empty() && label.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl Config {
    pub fn parse(text: &str, origin: &Path) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::config(format!("{}: {}", origin.display(), e)))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    /// Data root by precedence: flag, config file, environment, current
    /// directory.
    pub fn resolve_root(&mut self, flag: Option<PathBuf>, env: Option<PathBuf>) {
        let root = flag
            .or_else(|| self.data_root.take())
            .or(env)
            .unwrap_or_else(|| PathBuf::from("."));
        self.data_root = Some(root);
    }

    pub fn root(&self) -> &Path {
        self.data_root.as_deref().unwrap_or(Path::new("."))
    }

    pub fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root().join(p)
        }
    }
}
