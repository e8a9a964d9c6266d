//! `HOPW` policy weights container.
//!
//! ```text
//! "HOPW" | version: u32 LE | manifest_len: u32 LE | manifest (UTF-8 JSON) | data
//! ```
//!
//! `data` is the concatenation of all tensors as little-endian `f32`,
//! row-major. Each manifest entry gives the tensor's byte offset into
//! `data`; `data_sha256` is the hex SHA-256 of `data`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::PolicyError;

pub const MAGIC: &[u8; 4] = b"HOPW";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    /// Byte offset into the data section.
    pub offset: usize,
}

impl TensorEntry {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tensors: Vec<TensorEntry>,
    /// Hidden-layer activation per network (`encoder`, `decoder`, `actor`).
    pub activations: BTreeMap<String, String>,
    pub layout: String,
    /// Number of past observations fed to the encoder.
    pub history: usize,
    pub obs_dim: usize,
    /// Blocks concatenated into the actor input, in order.
    pub actor_inputs: Vec<String>,
    pub data_sha256: String,
}

/// A tensor as stored in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }
}

/// Decoded weights file. Tensors keep the manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightsFile {
    pub tensors: Vec<(String, Tensor)>,
    pub activations: BTreeMap<String, String>,
    pub history: usize,
    pub obs_dim: usize,
    pub actor_inputs: Vec<String>,
}

fn format_err(msg: impl Into<String>) -> PolicyError {
    PolicyError::Format(msg.into())
}

impl WeightsFile {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut data = Vec::new();
        let mut entries = Vec::with_capacity(self.tensors.len());
        for (name, t) in &self.tensors {
            entries.push(TensorEntry {
                name: name.clone(),
                shape: t.shape.clone(),
                dtype: "float32".into(),
                offset: data.len(),
            });
            for v in &t.data {
                data.extend_from_slice(&v.to_le_bytes());
            }
        }
        let manifest = Manifest {
            tensors: entries,
            activations: self.activations.clone(),
            layout: "row-major".into(),
            history: self.history,
            obs_dim: self.obs_dim,
            actor_inputs: self.actor_inputs.clone(),
            data_sha256: hex::encode(Sha256::digest(&data)),
        };
        let json = serde_json::to_vec(&manifest).expect("manifest serializes");
        let mut out = Vec::with_capacity(12 + json.len() + data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&data);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PolicyError> {
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(format_err("missing HOPW header"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(format_err(format!("unsupported version {version}")));
        }
        let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let json = bytes
            .get(12..12 + len)
            .ok_or_else(|| format_err("manifest runs past end of file"))?;
        let manifest: Manifest = serde_json::from_slice(json).map_err(|e| format_err(format!("bad manifest: {e}")))?;
        let data = &bytes[12 + len..];
        let found = hex::encode(Sha256::digest(data));
        if !found.eq_ignore_ascii_case(&manifest.data_sha256) {
            return Err(PolicyError::Checksum {
                expected: manifest.data_sha256,
                found,
            });
        }
        if manifest.layout != "row-major" {
            return Err(format_err(format!("unsupported layout `{}`", manifest.layout)));
        }
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for e in &manifest.tensors {
            if e.dtype != "float32" {
                return Err(format_err(format!("tensor `{}` has dtype `{}`", e.name, e.dtype)));
            }
            let end = e
                .numel()
                .checked_mul(4)
                .and_then(|n| n.checked_add(e.offset))
                .filter(|&end| end <= data.len())
                .ok_or_else(|| format_err(format!("tensor `{}` runs past end of data", e.name)))?;
            let values = data[e.offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push((
                e.name.clone(),
                Tensor {
                    shape: e.shape.clone(),
                    data: values,
                },
            ));
        }
        Ok(WeightsFile {
            tensors,
            activations: manifest.activations,
            history: manifest.history,
            obs_dim: manifest.obs_dim,
            actor_inputs: manifest.actor_inputs,
        })
    }

    pub fn read(path: &Path) -> Result<Self, PolicyError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), PolicyError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> WeightsFile {
        WeightsFile {
            tensors: vec![
                (
                    "a.weight".into(),
                    Tensor {
                        shape: vec![2, 3],
                        data: vec![1.0, -2.0, 3.5, 0.0, 1e-7, -0.25],
                    },
                ),
                ("a.bias".into(), Tensor::zeros(&[2])),
            ],
            activations: BTreeMap::from([("actor".into(), "elu".into())]),
            history: 5,
            obs_dim: 17,
            actor_inputs: vec!["obs".into()],
        }
    }

    #[test]
    fn bytes_roundtrip() {
        let w = sample();
        let bytes = w.to_bytes();
        assert_eq!(&bytes[..4], b"HOPW");
        assert_eq!(WeightsFile::from_bytes(&bytes).unwrap(), w);
        assert_eq!(bytes, WeightsFile::from_bytes(&bytes).unwrap().to_bytes());
    }

    #[test]
    fn corrupted_data_fails_checksum() {
        let mut bytes = sample().to_bytes();
        let n = bytes.len();
        bytes[n - 1] ^= 0x01;
        assert!(matches!(
            WeightsFile::from_bytes(&bytes),
            Err(PolicyError::Checksum { .. })
        ));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let bytes = sample().to_bytes();
        assert!(WeightsFile::from_bytes(&bytes[..10]).is_err());
        assert!(WeightsFile::from_bytes(b"NOPE\x01\0\0\0\0\0\0\0").is_err());
    }
}
