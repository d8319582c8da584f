//! File output helpers: atomic writes, pretty JSON, and CSV emission.
//!
//! Atomic means write-to-temp-then-rename within the destination directory,
//! so a failed command never leaves a partial output file behind.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{numerical, usage, CliError};

/// Reads and parses a JSON file, reporting the path in any error.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = fs::read(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Pretty-printed JSON with a trailing newline.
pub fn pretty_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| numerical(format!("could not serialize output: {e}")))
}

/// Writes `bytes` to `path` atomically: the content lands in a uniquely
/// named temporary file in the same directory and is renamed into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let name = path
        .file_name()
        .ok_or_else(|| usage(format!("{}: not a file path", path.display())))?
        .to_string_lossy()
        .into_owned();
    let dir: PathBuf = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
    let tmp = dir.join(format!(
        ".{name}.{}.{}.tmp",
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    fs::write(&tmp, bytes).map_err(|e| usage(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        usage(format!("{}: {e}", path.display()))
    })
}

/// Serializes rows to an RFC 4180 CSV file (header row, CRLF line endings,
/// UTF-8) and writes it atomically. Callers skip the call entirely when
/// there are no rows, so every emitted file has a header and data.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    for row in rows {
        wtr.serialize(row)
            .map_err(|e| numerical(format!("could not serialize CSV row: {e}")))?;
    }
    let bytes = wtr
        .into_inner()
        .map_err(|e| numerical(format!("could not finish CSV output: {e}")))?;
    atomic_write(path, &bytes)
}
