mod despeckle;
mod evaluate;
mod simulate;
mod train;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub use despeckle::despeckle;
pub use evaluate::evaluate;
pub use simulate::simulate;
pub use train::train;

use crate::error::{CliError, CliResult};

pub const IMAGE_EXTENSIONS: [&str; 3] = ["f32", "pgm", "png"];

fn has_image_extension(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

pub(crate) fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Expand files and directories (non-recursive, image extensions only) into
/// a sorted file list.
pub(crate) fn expand_images(paths: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let entries = std::fs::read_dir(p).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
            let mut found: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && has_image_extension(f))
                .collect();
            found.sort();
            files.extend(found);
        } else if p.is_file() {
            files.push(p.clone());
        } else {
            return Err(CliError::data(format!("{}: no such file or directory", p.display())));
        }
    }
    Ok(files)
}

/// Images keyed by file stem; two files with one stem are an error.
pub(crate) fn images_by_stem(paths: &[PathBuf]) -> CliResult<BTreeMap<String, PathBuf>> {
    let mut map = BTreeMap::new();
    for f in expand_images(paths)? {
        let key = stem(&f);
        if let Some(prev) = map.insert(key.clone(), f.clone()) {
            return Err(CliError::data(format!(
                "stem {key:?} appears twice: {} and {}",
                prev.display(),
                f.display()
            )));
        }
    }
    Ok(map)
}

pub(crate) fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))
}
