//! Storage for MEDIA item assets. Items only ever hold the returned
//! reference string.

use std::path::{Path, PathBuf};

use ring::digest;

use crate::error::{Error, Result};

pub trait BlobStore: Send + Sync {
    /// Stores `bytes` and returns a reference of the form `blob:<sha256>`.
    fn put(&self, bytes: &[u8]) -> Result<String>;
    fn get(&self, reference: &str) -> Result<Vec<u8>>;
    fn exists(&self, reference: &str) -> bool;
}

/// Content-addressed files under a root directory.
#[derive(Debug, Clone)]
pub struct FsBlobStore {
    root: PathBuf,
}

impl FsBlobStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path_for(&self, reference: &str) -> Option<PathBuf> {
        let hex = reference.strip_prefix("blob:")?;
        if hex.len() != 64 || !hex.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase()) {
            return None;
        }
        Some(self.root.join(&hex[..2]).join(hex))
    }
}

impl BlobStore for FsBlobStore {
    fn put(&self, bytes: &[u8]) -> Result<String> {
        let hash = digest::digest(&digest::SHA256, bytes);
        let hex: String = hash.as_ref().iter().map(|b| format!("{b:02x}")).collect();
        let reference = format!("blob:{hex}");
        let path = self.path_for(&reference).expect("well-formed reference");
        if !path.exists() {
            let dir = path.parent().expect("sharded path");
            std::fs::create_dir_all(dir).map_err(|e| Error::Storage(e.to_string()))?;
            let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::Storage(e.to_string()))?;
            std::fs::write(tmp.path(), bytes).map_err(|e| Error::Storage(e.to_string()))?;
            tmp.persist(&path).map_err(|e| Error::Storage(e.error.to_string()))?;
        }
        Ok(reference)
    }

    fn get(&self, reference: &str) -> Result<Vec<u8>> {
        let path = self
            .path_for(reference)
            .ok_or_else(|| Error::InvalidItem(format!("bad media reference `{reference}`")))?;
        std::fs::read(&path).map_err(|_| Error::InvalidItem(format!("unknown media asset `{reference}`")))
    }

    fn exists(&self, reference: &str) -> bool {
        self.path_for(reference).is_some_and(|p| p.is_file())
    }
}
