//! SHA-256 digests used for fixture keys, config fingerprints, and manifests.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    to_hex(&hasher.finalize())
}

/// Digest of a prompt together with its stop list. Any change to the rendered
/// prompt bytes or the stop sequences produces a different key, so fixture
/// lookups fail loudly on template drift.
pub fn prompt_digest(prompt: &str, stop: &[String]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(prompt.as_bytes());
    for s in stop {
        hasher.update([0x1f]);
        hasher.update(s.as_bytes());
    }
    to_hex(&hasher.finalize())
}

pub fn sha256_file_hex(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn to_hex(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
