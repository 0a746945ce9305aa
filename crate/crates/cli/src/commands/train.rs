use std::fs::File;
use std::io::{BufWriter, Write};

use serde::Serialize;

use sardespeckle::io::{read_dataset, tensor_file_name, DATASET_MANIFEST};
use sardespeckle::net::{save_params, train_with, EpochRecord, TermLosses};
use sardespeckle::speckle_sim::Split;

use super::create_dir;
use super::simulate::display;
use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::manifest::{upstream_run_id, write_manifest, RunRecord};

pub const WEIGHTS_FILE: &str = "weights.kldn";
pub const LOG_FILE: &str = "train_log.jsonl";

/// First line of the training log: validation terms before any update.
#[derive(Serialize)]
struct InitialRecord<'a> {
    epoch: usize,
    val: &'a Option<TermLosses>,
}

fn write_line(log: &mut impl Write, value: &impl Serialize, path: &std::path::Path) -> CliResult<()> {
    let line = serde_json::to_string(value).map_err(|e| CliError::data(e.to_string()))?;
    writeln!(log, "{line}")
        .and_then(|_| log.flush())
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

pub fn train(config: &Config) -> CliResult<String> {
    let cfg = &config.train;
    cfg.validate()?;
    let weights = cfg.effective_loss();
    let dataset_dir = config.path(&cfg.dataset);
    let out = config.path(&cfg.out);

    let mut record = RunRecord::new("train");
    record.add_input(&dataset_dir.join(DATASET_MANIFEST))?;
    for split in [Split::Train, Split::Val] {
        for role in ['X', 'Y'] {
            record.add_input(&dataset_dir.join(tensor_file_name(split, role)))?;
        }
    }
    if let Some(id) = upstream_run_id(&dataset_dir) {
        record.upstream.insert("dataset".into(), id);
    }
    let dataset = read_dataset(&dataset_dir).map_err(CliError::from_core)?;

    create_dir(&out)?;
    let log_path = out.join(LOG_FILE);
    let file = File::create(&log_path).map_err(|e| CliError::data(format!("{}: {e}", log_path.display())))?;
    let mut log = BufWriter::new(file);
    let mut log_error: Option<CliError> = None;
    let mut on_epoch = |r: &EpochRecord| {
        let val = r.val.map(|v| format!(" val {:.5} (mse {:.5} kl {:.5} edge {:.5})", v.total, v.mse, v.kl, v.edge));
        eprintln!(
            "epoch {:>3}  train {:.5}{}  {:.1}s",
            r.epoch,
            r.train.total,
            val.unwrap_or_default(),
            r.wall_clock_s
        );
        if log_error.is_none() {
            log_error = write_line(&mut log, r, &log_path).err();
        }
    };
    let (params, train_log) =
        train_with(&dataset, &cfg.arch, &weights, &cfg.schedule, &mut on_epoch).map_err(CliError::from_core)?;
    if let Some(err) = log_error {
        return Err(err);
    }
    drop(log);

    // The initial validation terms are only known after training, so the
    // log is rewritten with them in front.
    let body = std::fs::read_to_string(&log_path).map_err(|e| CliError::data(format!("{}: {e}", log_path.display())))?;
    let mut head = Vec::new();
    write_line(
        &mut head,
        &InitialRecord {
            epoch: 0,
            val: &train_log.initial_val,
        },
        &log_path,
    )?;
    let mut text = String::from_utf8(head).expect("json is utf-8");
    text.push_str(&body);
    std::fs::write(&log_path, text).map_err(|e| CliError::data(format!("{}: {e}", log_path.display())))?;

    let weights_path = out.join(WEIGHTS_FILE);
    save_params(&params, &weights_path).map_err(CliError::from_core)?;
    record.add_output(&out, &weights_path)?;
    record.logs.push(LOG_FILE.into());
    // The snapshot records the weights actually used, so a baseline
    // manifest shows lambda_edge = 0.
    let mut snapshot = config.clone();
    snapshot.train.loss = weights;
    let record = write_manifest(&out, &snapshot, record)?;

    let summary = match (train_log.initial_val, train_log.epochs.last().and_then(|e| e.val)) {
        (Some(first), Some(last)) => format!(
            ", validation total {:.5} -> {:.5} (mse {:.5} -> {:.5})",
            first.total, last.total, first.mse, last.mse
        ),
        _ => String::new(),
    };
    Ok(format!(
        "train: {} epochs, {} parameters, lambda_kl {} lambda_edge {}{summary}, run {} -> {}",
        train_log.epochs.len(),
        params.parameter_count(),
        weights.lambda_kl,
        weights.lambda_edge,
        record.run_id,
        display(&out)
    ))
}
