//! Versioned container for named flat `f64` arrays.
//!
//! Layout: the 8-byte magic `MEDOECKP`, a little-endian `u32` format
//! version, a little-endian `u64` manifest length, the JSON manifest, then
//! each array's data as little-endian `f64` in manifest order.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{Approximator, Mlp, Tabular};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MEDOECKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    kind: String,
    #[serde(default)]
    metadata: Map<String, Value>,
    arrays: Vec<ArrayEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub metadata: Map<String, Value>,
    pub arrays: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            metadata: Map::new(),
            arrays: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.metadata.insert(key.to_string(), value.into());
        self
    }

    pub fn push_array(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.arrays.push(NamedArray {
            name: name.to_string(),
            shape,
            data,
        });
    }

    pub fn array(&self, name: &str) -> Option<&NamedArray> {
        self.arrays.iter().find(|a| a.name == name)
    }

    pub fn meta_u64(&self, key: &str) -> Option<u64> {
        self.metadata.get(key).and_then(Value::as_u64)
    }

    pub fn meta_f64(&self, key: &str) -> Option<f64> {
        self.metadata.get(key).and_then(Value::as_f64)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = Manifest {
            version: FORMAT_VERSION,
            kind: self.kind.clone(),
            metadata: self.metadata.clone(),
            arrays: self
                .arrays
                .iter()
                .map(|a| ArrayEntry {
                    name: a.name.clone(),
                    shape: a.shape.clone(),
                })
                .collect(),
        };
        let manifest = serde_json::to_vec(&manifest).expect("manifest serializes");
        let data_len: usize = self.arrays.iter().map(|a| a.data.len() * 8).sum();
        let mut out = Vec::with_capacity(20 + manifest.len() + data_len);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        for a in &self.arrays {
            for v in &a.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err("not a checkpoint (bad magic)".into());
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(format!("unsupported checkpoint version {version}"));
        }
        let manifest_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = &bytes[20..];
        if body.len() < manifest_len {
            return Err("truncated manifest".into());
        }
        let manifest: Manifest =
            serde_json::from_slice(&body[..manifest_len]).map_err(|e| format!("bad manifest: {e}"))?;
        let mut data = &body[manifest_len..];
        let mut arrays = Vec::with_capacity(manifest.arrays.len());
        for entry in manifest.arrays {
            let len: usize = entry.shape.iter().product();
            if data.len() < len * 8 {
                return Err(format!("truncated data for array {}", entry.name));
            }
            let values = data[..len * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            data = &data[len * 8..];
            arrays.push(NamedArray {
                name: entry.name,
                shape: entry.shape,
                data: values,
            });
        }
        if !data.is_empty() {
            return Err("trailing bytes after last array".into());
        }
        Ok(Self {
            kind: manifest.kind,
            metadata: manifest.metadata,
            arrays,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|msg| Error::Checkpoint {
            path: path.to_path_buf(),
            msg,
        })
    }

    /// Store an approximator's parameters under the array name `params`.
    pub fn from_approximator(kind: &str, net: &Approximator) -> Self {
        let mut ckpt = Checkpoint::new(kind).with_meta("approximator", net.kind());
        match net {
            Approximator::Tabular(t) => {
                ckpt.push_array("params", vec![t.num_states(), t.outputs()], t.params().to_vec());
            }
            Approximator::Mlp(m) => {
                ckpt = ckpt.with_meta("sizes", m.sizes().to_vec());
                ckpt.push_array("params", vec![m.params().len()], m.params().to_vec());
            }
        }
        ckpt
    }

    pub fn to_approximator(&self) -> std::result::Result<Approximator, String> {
        let params = self.array("params").ok_or("missing `params` array")?;
        match self.metadata.get("approximator").and_then(Value::as_str) {
            Some("tabular") => {
                let [states, outputs] = params.shape[..] else {
                    return Err("tabular params must be 2-d".into());
                };
                Tabular::from_parts(states, outputs, params.data.clone())
                    .map(Approximator::Tabular)
                    .ok_or_else(|| "tabular shape mismatch".into())
            }
            Some("mlp") => {
                let sizes: Vec<usize> = self
                    .metadata
                    .get("sizes")
                    .and_then(|v| serde_json::from_value(v.clone()).ok())
                    .ok_or("mlp checkpoint without `sizes`")?;
                Mlp::from_parts(sizes, params.data.clone())
                    .map(Approximator::Mlp)
                    .ok_or_else(|| "mlp parameter count mismatch".into())
            }
            other => Err(format!("unknown approximator kind {other:?}")),
        }
    }
}
