//! On-disk cache of per-context score columns.
//!
//! One file per context, keyed by (data fingerprint, context bitmask, seed).
//! Entries hold the unified train/test columns so reruns skip refitting.
//! Values are stored as little-endian `f64`, which round-trips `f32` and
//! `f64` exactly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::DetectorConfig;
use crate::error::Result;
use crate::model::Dataset;
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"WCC1";

#[derive(Debug, Clone, PartialEq)]
pub struct CachedColumns<T> {
    pub train: Vec<T>,
    pub test: Option<Vec<T>>,
}

#[derive(Debug, Clone)]
pub struct ModelCache {
    root: PathBuf,
}

/// SHA-256 over shape, features and labels.
pub fn dataset_fingerprint<T: Scalar>(data: &Dataset<T>) -> String {
    let mut h = Sha256::new();
    feed(&mut h, data);
    hex::encode(h.finalize())
}

fn feed<T: Scalar>(h: &mut Sha256, data: &Dataset<T>) {
    h.update((data.n() as u64).to_le_bytes());
    h.update((data.d() as u64).to_le_bytes());
    for v in data.features().iter() {
        h.update(v.as_f64().to_le_bytes());
    }
    if let Some(l) = data.labels() {
        h.update(l);
    }
}

pub(crate) fn run_key<T: Scalar>(
    train: &Dataset<T>,
    test: Option<&Dataset<T>>,
    config: &DetectorConfig,
) -> String {
    let mut h = Sha256::new();
    h.update(std::any::type_name::<T>().as_bytes());
    feed(&mut h, train);
    if let Some(t) = test {
        h.update(b"test");
        feed(&mut h, t);
    }
    let unseeded = config.with_seed(0);
    h.update(serde_json::to_vec(&unseeded).expect("config serializes"));
    hex::encode(&h.finalize()[..16])
}

impl ModelCache {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, key: &str, seed: u64, mask: u64) -> PathBuf {
        self.root.join(key).join(seed.to_string()).join(format!("{mask:x}.bin"))
    }

    pub fn load<T: Scalar>(&self, key: &str, seed: u64, mask: u64) -> Result<Option<CachedColumns<T>>> {
        let path = self.path(key, seed, mask);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        Ok(decode(&bytes))
    }

    pub fn store<T: Scalar>(&self, key: &str, seed: u64, mask: u64, columns: &CachedColumns<T>) -> Result<()> {
        let path = self.path(key, seed, mask);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&encode(columns))?;
        f.sync_all()?;
        fs::rename(tmp, path)?;
        Ok(())
    }
}

fn encode<T: Scalar>(c: &CachedColumns<T>) -> Vec<u8> {
    let test_len = c.test.as_ref().map_or(u64::MAX, |t| t.len() as u64);
    let mut out = Vec::with_capacity(20 + 8 * (c.train.len() + c.test.as_ref().map_or(0, Vec::len)));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(c.train.len() as u64).to_le_bytes());
    out.extend_from_slice(&test_len.to_le_bytes());
    for v in c.train.iter().chain(c.test.iter().flatten()) {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    out
}

fn decode<T: Scalar>(bytes: &[u8]) -> Option<CachedColumns<T>> {
    if bytes.len() < 20 || &bytes[..4] != MAGIC {
        return None;
    }
    let read_u64 = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    let train_len = read_u64(4) as usize;
    let test_len = read_u64(12);
    let test_len = (test_len != u64::MAX).then_some(test_len as usize);
    let total = train_len + test_len.unwrap_or(0);
    if bytes.len() != 20 + 8 * total {
        return None;
    }
    let values: Vec<T> = bytes[20..]
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
        .collect();
    let (train, rest) = values.split_at(train_len);
    Some(CachedColumns {
        train: train.to_vec(),
        test: test_len.map(|_| rest.to_vec()),
    })
}
