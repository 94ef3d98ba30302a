//! Atomic file output and metadata sidecars.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

/// Write `bytes` to a temporary sibling and rename it over `path`.
///
/// A missing parent directory is an error; nothing is created.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if !dir.is_dir() {
        return Err(Error::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist")));
    }
    let file = path.file_name().ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", file.to_string_lossy()));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// `data.csv` -> `data.csv.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| Error::Data(format!("cannot encode json: {e}")))?;
    v.push(b'\n');
    Ok(v)
}

/// Write `bytes` and then the JSON sidecar `meta` next to it.
pub fn write_with_sidecar<T: Serialize>(path: &Path, bytes: &[u8], meta: &T) -> Result<()> {
    let side = to_json(meta)?;
    write_atomic(path, bytes)?;
    write_atomic(&sidecar_path(path), &side)
}

pub fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Buffer rows through a csv writer.
pub fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Error::Data(format!("csv buffer: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_directory_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("absent").join("x.csv");
        assert!(matches!(write_atomic(&target, b"a"), Err(Error::Io { .. })));
        assert!(!dir.path().join("absent").exists());
    }

    #[test]
    fn sidecar_sits_next_to_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_with_sidecar(&p, b"a,b\n", &serde_json::json!({"seed": 3})).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"a,b\n");
        let meta: serde_json::Value = read_json(&sidecar_path(&p)).unwrap();
        assert_eq!(meta["seed"], 3);
        let leftovers = std::fs::read_dir(dir.path()).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".tmp")).count();
        assert_eq!(leftovers, 0);
    }
}
