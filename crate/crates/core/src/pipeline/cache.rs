//! Content-addressed store for stage intermediates.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::config::sha256_hex;
use crate::Result;

/// Files are named by the SHA-256 of the stage name, the input hash and the
/// stage parameters, so a changed input or parameter never hits.
#[derive(Debug)]
pub struct Cache {
    dir: Option<PathBuf>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl Cache {
    pub fn disabled() -> Self {
        Self {
            dir: None,
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        }
    }

    pub fn at(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: Some(dir.to_path_buf()),
            ..Self::disabled()
        })
    }

    pub fn key(stage: &str, input_hash: &str, params: &impl Serialize) -> String {
        let params = serde_json::to_string(params).expect("stage parameters serialize");
        sha256_hex(format!("{stage}\n{input_hash}\n{params}").as_bytes())
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    fn path(&self, stage: &str, key: &str, ext: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{stage}-{}.{ext}", &key[..16])))
    }

    /// Return the cached bytes for `key`, or compute, store and return them.
    /// `decode` failing on a cached file counts as a miss.
    pub fn bytes<T>(
        &self,
        stage: &str,
        key: &str,
        compute: impl FnOnce() -> Result<T>,
        encode: impl FnOnce(&T, &str) -> Vec<u8>,
        decode: impl FnOnce(&[u8], &str) -> Result<T>,
    ) -> Result<T> {
        let Some(path) = self.path(stage, key, "bin") else {
            return compute();
        };
        if let Ok(buf) = std::fs::read(&path) {
            match decode(&buf, key) {
                Ok(v) => {
                    self.hits.fetch_add(1, Ordering::Relaxed);
                    log::debug!("cache hit {}", path.display());
                    return Ok(v);
                }
                Err(e) => log::warn!("ignoring unreadable cache file {}: {e}", path.display()),
            }
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let v = compute()?;
        write_atomic(&path, &encode(&v, key))?;
        Ok(v)
    }

    /// JSON-serialized variant of [`Cache::bytes`].
    pub fn json<T: Serialize + DeserializeOwned>(
        &self,
        stage: &str,
        key: &str,
        compute: impl FnOnce() -> Result<T>,
    ) -> Result<T> {
        self.bytes(
            stage,
            key,
            compute,
            |v, k| {
                serde_json::to_vec(&(k, v)).expect("cached value serializes")
            },
            |buf, k| {
                let (stored, v): (String, T) = serde_json::from_slice(buf)?;
                if stored != k {
                    return Err(crate::Error::Format(format!("cache key mismatch: {stored}")));
                }
                Ok(v)
            },
        )
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
