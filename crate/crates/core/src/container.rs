//! A small self-describing file format for feature stores and checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"ASAC"            magic
//! u32                format version (1)
//! u64                header length in bytes
//! [u8; header_len]   JSON header: {"kind", "meta", "tensors": [{"name", "shape", "offset"}]}
//! f64 * N            tensor data, concatenated in header order
//! ```
//!
//! `offset` counts f64 elements from the start of the data section.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{AsaError, Result};

pub const MAGIC: &[u8; 4] = b"ASAC";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Container {
    /// Free-form label checked on load ("features", "checkpoint").
    pub kind: String,
    pub meta: serde_json::Value,
    pub tensors: BTreeMap<String, ArrayD<f64>>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

impl Container {
    pub fn new(kind: &str, meta: serde_json::Value) -> Self {
        Container {
            kind: kind.to_string(),
            meta,
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: ArrayD<f64>) {
        self.tensors.insert(name.into(), t);
    }

    pub fn insert2(&mut self, name: impl Into<String>, t: &Array2<f64>) {
        self.insert(name, t.clone().into_dyn());
    }

    pub fn insert_vec(&mut self, name: impl Into<String>, v: &[f64]) {
        self.insert(
            name,
            ArrayD::from_shape_vec(IxDyn(&[v.len()]), v.to_vec()).unwrap(),
        );
    }

    pub fn get(&self, name: &str) -> Result<&ArrayD<f64>> {
        self.tensors
            .get(name)
            .ok_or_else(|| AsaError::Format(format!("missing tensor {name:?}")))
    }

    pub fn get2(&self, name: &str) -> Result<Array2<f64>> {
        self.get(name)?
            .clone()
            .into_dimensionality()
            .map_err(|_| AsaError::Format(format!("tensor {name:?} is not 2-D")))
    }

    pub fn get_vec(&self, name: &str) -> Result<Vec<f64>> {
        let t = self.get(name)?;
        if t.ndim() != 1 {
            return Err(AsaError::Format(format!("tensor {name:?} is not 1-D")));
        }
        Ok(t.iter().copied().collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut offset = 0;
        for (name, t) in &self.tensors {
            entries.push(TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                offset,
            });
            offset += t.len();
        }
        let header = serde_json::to_vec(&Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            tensors: entries,
        })
        .expect("header serializes");
        let mut out = Vec::with_capacity(16 + header.len() + offset * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for t in self.tensors.values() {
            for v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| AsaError::Format(m.to_string());
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(bad("not an ASAC container"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(AsaError::Format(format!(
                "unsupported container version {version}"
            )));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let data_start = 16usize
            .checked_add(hlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[16..data_start])?;
        let data = &bytes[data_start..];
        if !data.len().is_multiple_of(8) {
            return Err(bad("data section is not a whole number of f64 values"));
        }
        let mut tensors = BTreeMap::new();
        for e in header.tensors {
            let n: usize = e.shape.iter().product();
            let lo = e.offset * 8;
            let hi = lo + n * 8;
            if hi > data.len() {
                return Err(AsaError::Format(format!(
                    "tensor {:?} runs past the data",
                    e.name
                )));
            }
            let vals: Vec<f64> = data[lo..hi]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let t = ArrayD::from_shape_vec(IxDyn(&e.shape), vals)
                .map_err(|err| AsaError::Format(err.to_string()))?;
            tensors.insert(e.name, t);
        }
        Ok(Container {
            kind: header.kind,
            meta: header.meta,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| AsaError::io(dir, e))?;
        }
        let tmp = path.with_extension("tmp");
        let mut f = std::fs::File::create(&tmp).map_err(|e| AsaError::io(&tmp, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| AsaError::io(&tmp, e))?;
        drop(f);
        std::fs::rename(&tmp, path).map_err(|e| AsaError::io(path, e))
    }

    pub fn load(path: &Path, kind: &str) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| AsaError::io(path, e))?;
        let c = Self::from_bytes(&bytes)?;
        if c.kind != kind {
            return Err(AsaError::Format(format!(
                "{} holds a {:?} container, expected {kind:?}",
                path.display(),
                c.kind
            )));
        }
        Ok(c)
    }
}
