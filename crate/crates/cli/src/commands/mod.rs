//! One module per subcommand plus shared plumbing.

pub mod build;
pub mod eval;
pub mod features;
pub mod fuse;
pub mod report;
pub mod svm;
pub mod synth;
pub mod train;

use std::path::Path;

use hdrsource::pipeline::DatasetManifest;

use crate::exit::{data, CliError};

/// Loads the manifest of a dataset directory produced by `build`.
pub fn load_manifest(data_dir: &Path) -> Result<DatasetManifest, CliError> {
    Ok(DatasetManifest::load(&data_dir.join("manifest.tsv"))?)
}

/// Writes a text artifact under `out_dir`, creating the directory.
pub fn write_artifact(out_dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| data(format!("creating {}: {e}", out_dir.display())))?;
    let path = out_dir.join(name);
    std::fs::write(&path, content).map_err(|e| data(format!("writing {}: {e}", path.display())))
}

/// Sorted list of files in `dir` with one of the given extensions.
pub fn list_files(dir: &Path, extensions: &[&str]) -> Result<Vec<std::path::PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| data(format!("reading directory {}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| data(format!("reading directory {}: {e}", dir.display())))?
            .path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if path.is_file() && ext.as_deref().is_some_and(|e| extensions.contains(&e)) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}
