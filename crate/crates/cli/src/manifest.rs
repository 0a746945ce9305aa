//! Run manifests: the resolved configuration plus a `[run]` table with
//! provenance. A manifest is itself a valid config, so any run can be
//! repeated with `--config <out>/manifest.toml`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub tool_version: String,
    /// Content hash over the command, input checksums and output checksums.
    pub run_id: String,
    /// Input path to sha256.
    pub inputs: BTreeMap<String, String>,
    /// Output path (relative to the output directory) to sha256.
    pub outputs: BTreeMap<String, String>,
    /// Run ids of the manifests found next to the inputs, by role.
    pub upstream: BTreeMap<String, String>,
    /// Files written but excluded from checksums (they hold timings).
    pub logs: Vec<String>,
    /// Inputs that could not be processed, with the reason.
    pub failures: BTreeMap<String, String>,
}

impl RunRecord {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            ..Self::default()
        }
    }

    pub fn add_input(&mut self, path: &Path) -> CliResult<()> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, out_dir: &Path, path: &Path) -> CliResult<()> {
        let key = path.strip_prefix(out_dir).unwrap_or(path);
        self.outputs.insert(key.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    fn compute_id(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.command.as_bytes());
        h.update(b"\n");
        for sum in self.inputs.values() {
            h.update(sum.as_bytes());
            h.update(b"\n");
        }
        for (name, sum) in &self.outputs {
            h.update(format!("{name} {sum}\n").as_bytes());
        }
        hex::encode(h.finalize())[..16].to_string()
    }
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Fill in the run id and write `<dir>/manifest.toml`.
pub fn write_manifest(dir: &Path, config: &Config, mut record: RunRecord) -> CliResult<RunRecord> {
    record.run_id = record.compute_id();
    let mut table = toml::Table::try_from(config).map_err(|e| CliError::config(format!("manifest encoding: {e}")))?;
    let run = toml::Table::try_from(&record).map_err(|e| CliError::config(format!("manifest encoding: {e}")))?;
    table.insert("run".into(), toml::Value::Table(run));
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, table.to_string()).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(record)
}

/// Run id recorded in `<dir>/manifest.toml`, if there is one.
pub fn upstream_run_id(dir: &Path) -> Option<String> {
    let text = std::fs::read_to_string(dir.join(MANIFEST_FILE)).ok()?;
    let table: toml::Table = text.parse().ok()?;
    table.get("run")?.get("run_id")?.as_str().map(str::to_string)
}

pub fn read_run_record(dir: &Path) -> CliResult<RunRecord> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let run = table
        .get("run")
        .cloned()
        .ok_or_else(|| CliError::data(format!("{}: no [run] table", path.display())))?;
    run.try_into().map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}
