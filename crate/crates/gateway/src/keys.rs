//! Key files: the secret key as 64 hex characters, the public key likewise,
//! each followed by a newline.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use ledgergate_core::crypto::{KeyPair, PublicKey};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KeyFileError {
    #[error("IO_FAILURE: {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("BAD_KEY: {path}: {detail}")]
    Parse { path: PathBuf, detail: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> KeyFileError + '_ {
    move |source| KeyFileError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_secret(path: &Path) -> Result<KeyPair, KeyFileError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let bytes = hex::decode(text.trim()).map_err(|e| KeyFileError::Parse {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    KeyPair::from_secret_slice(&bytes).map_err(|e| KeyFileError::Parse {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

pub fn read_public(path: &Path) -> Result<PublicKey, KeyFileError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.trim().parse().map_err(|e: ledgergate_core::crypto::KeyError| KeyFileError::Parse {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

/// Write `<stem>.key` (owner-only permissions) and `<stem>.pub`. Returns the
/// two paths.
pub fn write_pair(stem: &Path, key: &KeyPair) -> Result<(PathBuf, PathBuf), KeyFileError> {
    let secret = stem.with_extension("key");
    let public = stem.with_extension("pub");
    if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    write_private(&secret, format!("{}\n", hex::encode(key.secret_bytes())).as_bytes())?;
    fs::write(&public, format!("{}\n", key.public().to_hex())).map_err(io_err(&public))?;
    Ok((secret, public))
}

#[cfg(unix)]
fn write_private(path: &Path, bytes: &[u8]) -> Result<(), KeyFileError> {
    use std::io::Write;
    use std::os::unix::fs::OpenOptionsExt;
    let mut f = fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .mode(0o600)
        .open(path)
        .map_err(io_err(path))?;
    f.write_all(bytes).map_err(io_err(path))
}

#[cfg(not(unix))]
fn write_private(path: &Path, bytes: &[u8]) -> Result<(), KeyFileError> {
    fs::write(path, bytes).map_err(io_err(path))
}
