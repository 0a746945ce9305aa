use std::path::{Path, PathBuf};

use sardespeckle::io::{read_image, write_image};
use sardespeckle::losses::estimated_noise;
use sardespeckle::net::{despeckle as filter, load_params, NetworkParams};

use super::simulate::display;
use super::{create_dir, images_by_stem};
use crate::config::Config;
use crate::error::{CliError, CliResult, ErrorKind};
use crate::manifest::{upstream_run_id, write_manifest, RunRecord};

pub const RATIO_DIR: &str = "ratio";

fn process(
    params: &NetworkParams,
    input: &Path,
    out: &Path,
    ratio_epsilon: Option<f64>,
) -> CliResult<Vec<PathBuf>> {
    let noisy = read_image(input)?;
    let filtered = filter(params, &noisy)?;
    let name = input.file_name().expect("expanded inputs are files");
    let target = out.join(name);
    write_image(&target, &filtered)?;
    let mut written = vec![target];
    if let Some(eps) = ratio_epsilon {
        let ratio = estimated_noise(&noisy, &filtered, eps)?;
        let path = out.join(RATIO_DIR).join(format!("{}.f32", super::stem(input)));
        write_image(&path, &ratio)?;
        written.push(path);
    }
    Ok(written)
}

/// Filter every input image. A failing file is reported and skipped; the
/// command still fails at the end if any file did.
pub fn despeckle(config: &Config) -> CliResult<String> {
    let cfg = &config.despeckle;
    cfg.validate()?;
    let weights_path = config.path(&cfg.weights);
    let out = config.path(&cfg.out);
    let inputs: Vec<PathBuf> = cfg.inputs.iter().map(|p| config.path(p)).collect();

    let mut record = RunRecord::new("despeckle");
    record.add_input(&weights_path)?;
    if let Some(id) = weights_path.parent().and_then(upstream_run_id) {
        record.upstream.insert("weights".into(), id);
    }
    let params = load_params(&weights_path)?;
    let files = images_by_stem(&inputs)?;
    if files.is_empty() {
        return Err(CliError::data("no input images found"));
    }
    create_dir(&out)?;
    if cfg.ratio {
        create_dir(&out.join(RATIO_DIR))?;
    }

    let mut worst: Option<ErrorKind> = None;
    let mut done = 0;
    for path in files.values() {
        record.add_input(path)?;
        match process(&params, path, &out, cfg.ratio.then_some(cfg.ratio_epsilon)) {
            Ok(written) => {
                for w in &written {
                    record.add_output(&out, w)?;
                }
                done += 1;
            }
            Err(err) => {
                let err = CliError::new(err.kind, format!("{}: {}", path.display(), err.message));
                eprintln!("{}", err.line());
                record.failures.insert(path.display().to_string(), err.message.clone());
                worst = Some(match worst {
                    Some(ErrorKind::Numerical) => ErrorKind::Numerical,
                    _ => err.kind,
                });
            }
        }
    }
    let record = write_manifest(&out, config, record)?;
    if let Some(kind) = worst {
        return Err(CliError::new(
            kind,
            format!("{} of {} inputs failed (see {})", files.len() - done, files.len(), display(&out)),
        ));
    }
    Ok(format!("despeckle: {done} images, run {} -> {}", record.run_id, display(&out)))
}
