use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sardespeckle::io::read_image;
use sardespeckle::metrics::{evaluate_set, ratio_statistics, EvalReport, RatioStats};
use sardespeckle::ImageGray;

use super::simulate::display;
use super::{create_dir, images_by_stem};
use crate::config::{Config, INPUT_LABEL};
use crate::error::{CliError, CliResult};
use crate::manifest::{read_run_record, write_manifest, RunRecord};

pub const SUMMARY_TXT: &str = "summary.txt";
pub const SUMMARY_CSV: &str = "summary.csv";

struct Scored {
    label: String,
    report: EvalReport,
    ratio: Option<RatioStats>,
    run_id: String,
}

fn load_all(files: &BTreeMap<String, PathBuf>, record: &mut RunRecord) -> CliResult<BTreeMap<String, ImageGray>> {
    files
        .iter()
        .map(|(stem, path)| {
            record.add_input(path)?;
            let img = read_image(path).map_err(|e| CliError::from_core(e).with_context(path))?;
            Ok((stem.clone(), img))
        })
        .collect()
}

fn check_stems(label: &str, found: &BTreeMap<String, PathBuf>, reference: &BTreeMap<String, PathBuf>) -> CliResult<()> {
    let missing: Vec<&str> = reference.keys().filter(|k| !found.contains_key(*k)).map(String::as_str).collect();
    let extra: Vec<&str> = found.keys().filter(|k| !reference.contains_key(*k)).map(String::as_str).collect();
    if missing.is_empty() && extra.is_empty() {
        return Ok(());
    }
    Err(CliError::data(format!(
        "unmatched stems for {label:?}: missing [{}], without reference [{}]",
        missing.join(", "),
        extra.join(", ")
    )))
}

fn score(
    label: &str,
    images: &BTreeMap<String, ImageGray>,
    reference: &BTreeMap<String, ImageGray>,
    noisy: Option<&BTreeMap<String, ImageGray>>,
    config: &Config,
) -> CliResult<(EvalReport, Option<RatioStats>)> {
    let cfg = &config.evaluate;
    let pairs: Vec<(&str, &ImageGray, &ImageGray)> = reference
        .iter()
        .map(|(stem, x)| (stem.as_str(), &images[stem], x))
        .collect();
    let report = evaluate_set(&pairs, &cfg.metrics).map_err(|e| CliError::from_core(e).prefixed(label))?;
    let ratio = match noisy {
        Some(noisy) if label != INPUT_LABEL => {
            let triples: Vec<_> = reference.iter().map(|(stem, x)| (&noisy[stem], &images[stem], x)).collect();
            match ratio_statistics(&triples, &cfg.homogeneity) {
                Ok(stats) => Some(stats),
                // Too small or too textured to have flat regions.
                Err(sardespeckle::Error::Domain(_)) => None,
                Err(e) => return Err(CliError::from_core(e).prefixed(label)),
            }
        }
        _ => None,
    };
    Ok((report, ratio))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

fn summary_table(rows: &[Scored]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12} {:>8} {:>9} {:>12} {:>10} {:>10} {:>10}  run",
        "label", "SSIM", "SNR(dB)", "MSE", "EdgeErr", "RatioMean", "RatioVar"
    );
    for r in rows {
        let a = &r.report.aggregate;
        let _ = writeln!(
            s,
            "{:<12} {:>8.4} {:>9.3} {:>12.4} {:>10.6} {:>10} {:>10}  {}",
            r.label,
            a.ssim,
            a.snr,
            a.mse,
            a.edge_err,
            fmt_opt(r.ratio.map(|q| q.mean)),
            fmt_opt(r.ratio.map(|q| q.variance)),
            r.run_id
        );
    }
    s
}

fn summary_csv(rows: &[Scored]) -> String {
    let mut s = String::from("label,ssim,snr,mse,edge_err,ratio_mean,ratio_var,ratio_count,run_id\n");
    for r in rows {
        let a = &r.report.aggregate;
        let (m, v, n) = match r.ratio {
            Some(q) => (q.mean.to_string(), q.variance.to_string(), q.count.to_string()),
            None => Default::default(),
        };
        let _ = writeln!(s, "{},{},{},{},{},{m},{v},{n},{}", r.label, a.ssim, a.snr, a.mse, a.edge_err, r.run_id);
    }
    s
}

fn write_text(path: &Path, text: &str, out: &Path, record: &mut RunRecord) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    record.add_output(out, path)
}

/// Score each labelled run (and the noisy input, if configured) against the
/// references, matching files by stem.
pub fn evaluate(config: &Config) -> CliResult<String> {
    let cfg = &config.evaluate;
    cfg.validate()?;
    let out = config.path(&cfg.out);
    let mut record = RunRecord::new("evaluate");

    let reference_files = images_by_stem(&[config.path(&cfg.reference)])?;
    if reference_files.is_empty() {
        return Err(CliError::data(format!("no reference images in {}", display(&config.path(&cfg.reference)))));
    }
    let mut sets: Vec<(String, BTreeMap<String, PathBuf>, String)> = Vec::new();
    if let Some(noisy) = &cfg.noisy {
        let dir = config.path(noisy);
        sets.push((INPUT_LABEL.into(), images_by_stem(&[dir])?, String::new()));
    }
    for run in &cfg.runs {
        let dir = config.path(&run.filtered);
        let files = images_by_stem(std::slice::from_ref(&dir))?;
        let id = read_run_record(&dir).map(|r| r.run_id).unwrap_or_default();
        if !id.is_empty() {
            record.upstream.insert(run.label.clone(), id.clone());
        }
        sets.push((run.label.clone(), files, id));
    }
    for (label, files, _) in &sets {
        check_stems(label, files, &reference_files)?;
    }

    let reference = load_all(&reference_files, &mut record)?;
    for (stem, x) in &reference {
        x.ensure_at_least(cfg.metrics.ssim_window)
            .map_err(|e| CliError::from_core(e).prefixed(stem))?;
    }
    let noisy = match &cfg.noisy {
        Some(_) => Some(load_all(&sets[0].1, &mut record)?),
        None => None,
    };
    let mut rows = Vec::new();
    for (label, files, run_id) in &sets {
        let images = if label == INPUT_LABEL && noisy.is_some() {
            noisy.clone().expect("checked")
        } else {
            load_all(files, &mut record)?
        };
        let (report, ratio) = score(label, &images, &reference, noisy.as_ref(), config)?;
        rows.push(Scored {
            label: label.clone(),
            report,
            ratio,
            run_id: run_id.clone(),
        });
    }

    create_dir(&out)?;
    for r in &rows {
        let csv = r.report.to_csv().map_err(CliError::from_core)?;
        write_text(&out.join(format!("{}.csv", r.label)), &csv, &out, &mut record)?;
        write_text(&out.join(format!("{}.txt", r.label)), &r.report.to_table(), &out, &mut record)?;
    }
    let table = summary_table(&rows);
    write_text(&out.join(SUMMARY_TXT), &table, &out, &mut record)?;
    write_text(&out.join(SUMMARY_CSV), &summary_csv(&rows), &out, &mut record)?;
    let record = write_manifest(&out, config, record)?;
    Ok(format!("{table}evaluate: {} images, run {} -> {}", reference.len(), record.run_id, display(&out)))
}
