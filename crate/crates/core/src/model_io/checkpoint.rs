//! `DCKP` checkpoint files.
//!
//! ```text
//! 0..4    magic "DCKP"
//! 4..8    version, u32 LE (= 1)
//! 8..16   header length L, u64 LE
//! 16..    L bytes of JSON header
//! ...     payload: per tensor, LE f32 row-major at its 64-byte aligned offset
//! ```
//!
//! The checksum is FNV-1a 64 over the payload bytes (padding included), so
//! the header can be rewritten without invalidating it.

use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{fnv1a64, Matrix};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DCKP";
pub const CHECKPOINT_VERSION: u32 = 1;
pub(crate) const ALIGN: usize = 64;

/// A named parameter: a 2-D matrix, or a 1-D vector stored as `len × 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub data: Matrix,
    pub is_vector: bool,
}

impl Tensor {
    pub fn matrix(data: Matrix) -> Self {
        Tensor { data, is_vector: false }
    }

    pub fn vector(values: Vec<f32>) -> Result<Self> {
        let n = values.len();
        Ok(Tensor {
            data: Matrix::new(n, 1, values)?,
            is_vector: true,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.shape()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    tensors: IndexMap<String, Tensor>,
    checksum: u64,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
    len_bytes: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    vec: bool,
}

#[derive(Serialize, Deserialize)]
struct Header {
    tensors: Vec<TensorEntry>,
    checksum: String,
}

pub(crate) fn align_up(n: usize) -> usize {
    n.div_ceil(ALIGN) * ALIGN
}

impl ModelCheckpoint {
    pub fn new(tensors: IndexMap<String, Tensor>) -> Self {
        let checksum = fnv1a64(&Self::layout(&tensors).1);
        ModelCheckpoint { tensors, checksum }
    }

    /// Builds from `(name, tensor)` pairs, rejecting duplicate names.
    pub fn from_tensors(pairs: impl IntoIterator<Item = (String, Tensor)>) -> Result<Self> {
        let mut map = IndexMap::new();
        for (name, t) in pairs {
            if map.contains_key(&name) {
                return Err(Error::InvalidArgument(format!("duplicate tensor name '{name}'")));
            }
            map.insert(name, t);
        }
        Ok(Self::new(map))
    }

    pub fn tensors(&self) -> &IndexMap<String, Tensor> {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn checksum(&self) -> u64 {
        self.checksum
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    fn layout(tensors: &IndexMap<String, Tensor>) -> (Vec<TensorEntry>, Vec<u8>) {
        let mut entries = Vec::with_capacity(tensors.len());
        let mut payload = Vec::new();
        for (name, t) in tensors {
            let offset = align_up(payload.len());
            payload.resize(offset, 0);
            for v in t.data.data() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
            let (rows, cols) = t.shape();
            entries.push(TensorEntry {
                name: name.clone(),
                rows,
                cols,
                offset,
                len_bytes: rows * cols * 4,
                vec: t.is_vector,
            });
        }
        (entries, payload)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (entries, payload) = Self::layout(&self.tensors);
        let header = Header {
            tensors: entries,
            checksum: self.checksum.to_string(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + json.len() + payload.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (json, payload) = split_container(bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
        let header: Header = serde_json::from_slice(json).map_err(|e| Error::MalformedHeader(e.to_string()))?;
        let expected: u64 = header
            .checksum
            .parse()
            .map_err(|_| Error::MalformedHeader(format!("checksum '{}' is not a u64", header.checksum)))?;

        let needed = header.tensors.iter().map(|e| e.offset + e.len_bytes).max().unwrap_or(0);
        if payload.len() < needed {
            return Err(Error::Truncated {
                needed: bytes.len() - payload.len() + needed,
                available: bytes.len(),
            });
        }
        let actual = fnv1a64(payload);
        if actual != expected {
            return Err(Error::PayloadChecksum { expected, actual });
        }

        let mut tensors = IndexMap::with_capacity(header.tensors.len());
        for e in header.tensors {
            if e.len_bytes != e.rows * e.cols * 4 || e.offset % ALIGN != 0 {
                return Err(Error::MalformedHeader(format!("bad extent for tensor '{}'", e.name)));
            }
            if e.vec && e.cols != 1 {
                return Err(Error::MalformedHeader(format!(
                    "vector '{}' must have cols = 1",
                    e.name
                )));
            }
            let values = read_f32s(&payload[e.offset..e.offset + e.len_bytes]);
            let data = Matrix::new(e.rows, e.cols, values)
                .map_err(|err| Error::Corrupt(format!("tensor '{}': {err}", e.name)))?;
            if tensors
                .insert(e.name.clone(), Tensor { data, is_vector: e.vec })
                .is_some()
            {
                return Err(Error::MalformedHeader(format!("duplicate tensor name '{}'", e.name)));
            }
        }
        let ckpt = ModelCheckpoint::new(tensors);
        if ckpt.checksum != expected {
            // payload had bytes outside the canonical layout
            return Err(Error::Corrupt("payload is not in canonical layout".into()));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

pub(crate) fn read_f32s(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

/// Validates magic/version/header length; returns `(header_json, payload)`.
pub(crate) fn split_container<'a>(bytes: &'a [u8], magic: &[u8; 4], version: u32) -> Result<(&'a [u8], &'a [u8])> {
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            needed: 16,
            available: bytes.len(),
        });
    }
    if &bytes[0..4] != magic {
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(&bytes[0..4]).into_owned(),
        });
    }
    if bytes.len() < 16 {
        return Err(Error::Truncated {
            needed: 16,
            available: bytes.len(),
        });
    }
    let found = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if found != version {
        return Err(Error::BadVersion {
            expected: version,
            found,
        });
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let header_end = usize::try_from(header_len)
        .ok()
        .and_then(|l| l.checked_add(16))
        .ok_or_else(|| Error::MalformedHeader("header length overflows".into()))?;
    if bytes.len() < header_end {
        return Err(Error::Truncated {
            needed: header_end,
            available: bytes.len(),
        });
    }
    Ok((&bytes[16..header_end], &bytes[header_end..]))
}
