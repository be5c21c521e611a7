//! Tensor container files, run manifests and content hashes.
//!
//! Container layout (all integers little-endian):
//!
//! ```text
//! bytes 0..8        u64  header length N
//! bytes 8..8+N      UTF-8 JSON header
//! bytes 8+N..       raw tensor data, each tensor at its recorded offset
//! ```
//!
//! The header is `{"tensors": [{"name", "dtype", "shape", "offset"}]}` where
//! `dtype` is `"f32"` or `"f64"` and `offset` counts bytes from the start of
//! the data section. Tensors are stored row-major.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::views::CameraConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
}

impl DType {
    fn width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ContainerHeader {
    pub tensors: Vec<TensorEntry>,
}

/// Serializes named tensors into container bytes.
pub fn encode_tensors(tensors: &[(&str, &Tensor)], dtype: DType) -> Result<Vec<u8>> {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut body = Vec::new();
    for (name, t) in tensors {
        entries.push(TensorEntry { name: name.to_string(), dtype, shape: t.shape().to_vec(), offset: body.len() });
        for v in t.data() {
            match dtype {
                DType::F32 => body.extend_from_slice(&(*v as f32).to_le_bytes()),
                DType::F64 => body.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }
    let header = serde_json::to_vec(&ContainerHeader { tensors: entries })?;
    let mut out = Vec::with_capacity(8 + header.len() + body.len());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&body);
    Ok(out)
}

/// Parses container bytes into named tensors, in file order.
pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let bad = |m: String| Error::Verification(format!("tensor container: {m}"));
    if bytes.len() < 8 {
        return Err(bad("shorter than its length prefix".into()));
    }
    let n = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    let body_start = 8usize.checked_add(n).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("header overruns file".into()))?;
    let header: ContainerHeader = serde_json::from_slice(&bytes[8..body_start])?;
    let body = &bytes[body_start..];
    let mut out = Vec::with_capacity(header.tensors.len());
    for e in header.tensors {
        let count: usize = e.shape.iter().product();
        let w = e.dtype.width();
        let end = count.checked_mul(w).and_then(|b| b.checked_add(e.offset));
        let Some(end) = end.filter(|&end| end <= body.len()) else {
            return Err(bad(format!("tensor {:?} overruns the data section", e.name)));
        };
        let raw = &body[e.offset..end];
        let data: Vec<f64> = match e.dtype {
            DType::F32 => raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
            DType::F64 => raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
        };
        out.push((e.name, Tensor::from_vec(&e.shape, data)?));
    }
    Ok(out)
}

pub fn write_tensors(path: &Path, tensors: &[(&str, &Tensor)], dtype: DType) -> Result<()> {
    std::fs::write(path, encode_tensors(tensors, dtype)?)?;
    Ok(())
}

pub fn read_tensors(path: &Path) -> Result<Vec<(String, Tensor)>> {
    decode_tensors(&std::fs::read(path)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the configuration's JSON form.
pub fn config_hash(cfg: &CameraConfig) -> String {
    sha256_hex(&serde_json::to_vec(&cfg.to_file()).expect("config serializes"))
}

/// Record of one command invocation, written next to its outputs. The
/// timestamp lives in a separate file so the manifest itself is reproducible.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub version: String,
    /// Output file name → sha256 of its contents.
    pub outputs: Vec<(String, String)>,
    pub hashes: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(command: &str, args: &[String]) -> Self {
        RunManifest {
            command: command.into(),
            args: args.to_vec(),
            version: env!("CARGO_PKG_VERSION").into(),
            outputs: Vec::new(),
            hashes: Vec::new(),
        }
    }

    pub fn record_output(&mut self, path: &Path) -> Result<()> {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        self.outputs.push((name, sha256_hex(&std::fs::read(path)?)));
        Ok(())
    }

    /// Writes `<dir>/<stem>.manifest.json` and `<dir>/<stem>.timestamp`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.manifest.json")), serde_json::to_string_pretty(self)? + "\n")?;
        let now = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        std::fs::write(dir.join(format!("{stem}.timestamp")), format!("{now}\n"))?;
        Ok(())
    }
}
