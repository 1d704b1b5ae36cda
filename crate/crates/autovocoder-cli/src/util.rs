//! Shared plumbing for the command implementations.

use std::path::{Path, PathBuf};

use autovocoder::{Error, Result};

/// Seed precedence: the explicit flag wins, then the `AV_SEED` environment
/// variable; `None` means the caller's default applies.
pub fn resolve_seed(flag: Option<u64>) -> Result<Option<u64>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("AV_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::invalid(format!("AV_SEED must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

/// Expand `path` into a sorted list of WAV files: either the file itself or
/// every `*.wav` directly inside the directory.
pub fn wav_inputs(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    if !path.is_dir() {
        return Err(Error::invalid(format!(
            "{} is neither a file nor a directory",
            path.display()
        )));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().map(|x| x.eq_ignore_ascii_case("wav")).unwrap_or(false) && p.is_file()
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::invalid(format!("no .wav files under {}", path.display())));
    }
    Ok(files)
}

/// The file name of `path` as UTF-8 text, for report rows.
pub fn file_label(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| {
        path.to_string_lossy().into_owned()
    })
}
