use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Result, SdsError};

/// Write `bytes` to `path` via a temp file in the same directory and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| SdsError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| SdsError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| SdsError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| SdsError::io(path, e))?;
    tmp.persist(path).map_err(|e| SdsError::io(path, e.error))?;
    Ok(())
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| SdsError::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| SdsError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}
