use std::path::{Path, PathBuf};

use sardespeckle::corpus::generate_corpus;
use sardespeckle::io::{read_image, tensor_file_name, write_dataset, write_image, DATASET_MANIFEST};
use sardespeckle::speckle_sim::{build_dataset, simulate_observation, NamedImage, Split, GENERATOR_NAME};

use super::{create_dir, images_by_stem};
use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::manifest::{write_manifest, RunRecord};

/// Clean and noisy subdirectories of the held-out test set.
pub const TEST_CLEAN: &str = "test/clean";
pub const TEST_NOISY: &str = "test/noisy";

fn load_named(paths: &[PathBuf], record: &mut RunRecord) -> CliResult<Vec<NamedImage>> {
    images_by_stem(paths)?
        .into_iter()
        .map(|(id, path)| {
            record.add_input(&path)?;
            let image = read_image(&path).map_err(CliError::from_core)?;
            Ok(NamedImage::new(id, image))
        })
        .collect()
}

/// Build the patch dataset and the held-out test images.
pub fn simulate(config: &Config) -> CliResult<String> {
    let cfg = &config.simulate;
    cfg.validate()?;
    let speckle = cfg.speckle()?;
    let out = config.path(&cfg.out);
    let mut record = RunRecord::new("simulate");

    let (sources, held_out) = if cfg.sources.is_empty() {
        let syn = &cfg.synthetic;
        let mut all = generate_corpus(syn.count + syn.test_count, syn.size, syn.seed);
        let held_out = all.split_off(syn.count);
        (all, held_out)
    } else {
        let resolve = |ps: &[PathBuf]| ps.iter().map(|p| config.path(p)).collect::<Vec<_>>();
        let sources = load_named(&resolve(&cfg.sources), &mut record)?;
        let held_out = load_named(&resolve(&cfg.held_out), &mut record)?;
        if let Some(dup) = held_out.iter().find(|h| sources.iter().any(|s| s.id == h.id)) {
            return Err(CliError::data(format!("{:?} is both a source and held out", dup.id)));
        }
        (sources, held_out)
    };

    let ds = build_dataset(&sources, cfg.patch_size, cfg.train_count, cfg.val_count, &speckle)
        .map_err(CliError::from_core)?;
    create_dir(&out)?;
    write_dataset(&ds, &out).map_err(CliError::from_core)?;
    let mut written: Vec<PathBuf> = vec![out.join(DATASET_MANIFEST)];
    for split in [Split::Train, Split::Val] {
        for role in ['X', 'Y'] {
            written.push(out.join(tensor_file_name(split, role)));
        }
    }

    let (clean_dir, noisy_dir) = (out.join(TEST_CLEAN), out.join(TEST_NOISY));
    if !held_out.is_empty() {
        create_dir(&clean_dir)?;
        create_dir(&noisy_dir)?;
    }
    for (index, item) in held_out.iter().enumerate() {
        let (noisy, _) = simulate_observation(&item.image, index as u64, &speckle).map_err(CliError::from_core)?;
        let clean_path = clean_dir.join(format!("{}.f32", item.id));
        let noisy_path = noisy_dir.join(format!("{}.f32", item.id));
        write_image(&clean_path, &item.image).map_err(CliError::from_core)?;
        write_image(&noisy_path, &noisy).map_err(CliError::from_core)?;
        written.push(clean_path);
        written.push(noisy_path);
    }

    for path in &written {
        record.add_output(&out, path)?;
    }
    let record = write_manifest(&out, config, record)?;
    Ok(format!(
        "simulate: {} train / {} val patches of {p}x{p} from {} sources ({} train, {} val), {} held-out images, generator {GENERATOR_NAME}, run {} -> {}",
        ds.train.len(),
        ds.val.len(),
        sources.len(),
        ds.train_sources.len(),
        ds.val_sources.len(),
        held_out.len(),
        record.run_id,
        display(&out),
        p = cfg.patch_size,
    ))
}

pub(crate) fn display(p: &Path) -> String {
    p.display().to_string()
}
