//! Reading market instances from JSON documents.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::system::{validate_system, MarketSystem, ValidationError};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{origin}: line {line}, column {column}: {message}")]
pub struct ParseError {
    pub origin: String,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

/// A validated system together with the digest of the bytes it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSystem {
    pub system: MarketSystem,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn parse_system(text: &str, origin: &str) -> Result<MarketSystem, LoadError> {
    let system: MarketSystem = serde_json::from_str(text).map_err(|e| ParseError {
        origin: origin.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Ok(validate_system(system)?)
}

pub fn load_system_with_hash(path: &Path) -> Result<LoadedSystem, LoadError> {
    let bytes = std::fs::read(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let text = String::from_utf8_lossy(&bytes);
    let system = parse_system(&text, &path.display().to_string())?;
    Ok(LoadedSystem {
        system,
        sha256: sha256_hex(&bytes),
    })
}

pub fn load_system(path: &Path) -> Result<MarketSystem, LoadError> {
    load_system_with_hash(path).map(|l| l.system)
}
