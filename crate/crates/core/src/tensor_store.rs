//! On-disk interchange format for tensor bundles.
//!
//! A bundle is a directory holding `manifest.json` and one headerless payload
//! file per tensor. Payloads are raw little-endian `f32` in row-major order, so
//! a tensor of shape `[a, b]` occupies exactly `a * b * 4` bytes.
//!
//! ```text
//! bundle/
//!   manifest.json
//!   cls_global.bin
//!   cls_tile.bin
//!   ...
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Component, Path};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// Tensor payloads keyed by tensor name.
pub type TensorMap = BTreeMap<String, Vec<f32>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DType {
    #[serde(rename = "f32")]
    F32,
}

impl DType {
    pub fn size_of(self) -> usize {
        match self {
            DType::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layout {
    #[serde(rename = "row-major")]
    RowMajor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ByteOrder {
    #[serde(rename = "LE")]
    LittleEndian,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub file: String,
    pub layout: Layout,
    pub byte_order: ByteOrder,
}

impl TensorEntry {
    /// An `f32` entry stored in `<name>.bin`.
    pub fn f32(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let name = name.into();
        TensorEntry {
            file: format!("{name}.bin"),
            name,
            dtype: DType::F32,
            shape,
            layout: Layout::RowMajor,
            byte_order: ByteOrder::LittleEndian,
        }
    }

    pub fn num_elements(&self) -> Result<usize> {
        element_count(&self.name, &self.shape)
    }

    pub fn byte_len(&self) -> Result<u64> {
        let n = self.num_elements()?;
        n.checked_mul(self.dtype.size_of())
            .map(|b| b as u64)
            .ok_or_else(|| Error::InvalidShape {
                name: self.name.clone(),
                shape: self.shape.clone(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorManifest {
    pub version: u32,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl Default for TensorManifest {
    fn default() -> Self {
        TensorManifest {
            version: MANIFEST_VERSION,
            tensors: Vec::new(),
            metadata: BTreeMap::new(),
        }
    }
}

impl TensorManifest {
    pub fn entry(&self, name: &str) -> Option<&TensorEntry> {
        self.tensors.iter().find(|e| e.name == name)
    }

    /// Checks every structural rule a manifest must satisfy before any payload
    /// is touched.
    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::UnsupportedVersion(self.version));
        }
        let mut names = HashSet::new();
        let mut files = HashSet::new();
        for entry in &self.tensors {
            if !is_identifier(&entry.name) {
                return Err(Error::Manifest(format!(
                    "invalid tensor name `{}`",
                    entry.name
                )));
            }
            if !names.insert(entry.name.as_str()) {
                return Err(Error::DuplicateTensor(entry.name.clone()));
            }
            entry.byte_len()?;
            if !is_relative_file(&entry.file) {
                return Err(Error::Manifest(format!(
                    "tensor `{}` has invalid file path `{}`",
                    entry.name, entry.file
                )));
            }
            if !files.insert(entry.file.as_str()) {
                return Err(Error::Manifest(format!(
                    "file `{}` referenced by more than one tensor",
                    entry.file
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Manifest(e.to_string()))
    }

    /// Parses and validates a manifest. Unknown dtypes are reported as such
    /// rather than as generic parse failures.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawManifest =
            serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        let manifest = raw.into_manifest()?;
        manifest.validate()?;
        Ok(manifest)
    }
}

#[derive(Deserialize)]
struct RawManifest {
    version: u32,
    tensors: Vec<RawEntry>,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct RawEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    file: String,
    layout: String,
    byte_order: String,
}

impl RawManifest {
    fn into_manifest(self) -> Result<TensorManifest> {
        let tensors = self
            .tensors
            .into_iter()
            .map(|raw| {
                let dtype = match raw.dtype.as_str() {
                    "f32" => DType::F32,
                    _ => {
                        return Err(Error::UnknownDtype {
                            name: raw.name,
                            dtype: raw.dtype,
                        })
                    }
                };
                if raw.layout != "row-major" {
                    return Err(Error::Manifest(format!(
                        "tensor `{}` has unsupported layout `{}`",
                        raw.name, raw.layout
                    )));
                }
                if raw.byte_order != "LE" {
                    return Err(Error::Manifest(format!(
                        "tensor `{}` has unsupported byte order `{}`",
                        raw.name, raw.byte_order
                    )));
                }
                Ok(TensorEntry {
                    name: raw.name,
                    dtype,
                    shape: raw.shape,
                    file: raw.file,
                    layout: Layout::RowMajor,
                    byte_order: ByteOrder::LittleEndian,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TensorManifest {
            version: self.version,
            tensors,
            metadata: self.metadata,
        })
    }
}

fn element_count(name: &str, shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::InvalidShape {
            name: name.to_string(),
            shape: shape.to_vec(),
        });
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::InvalidShape {
            name: name.to_string(),
            shape: shape.to_vec(),
        })
}

fn is_identifier(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

fn is_relative_file(file: &str) -> bool {
    let path = Path::new(file);
    !file.is_empty() && path.components().all(|c| matches!(c, Component::Normal(_)))
}

fn check_finite(name: &str, data: &[f32]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            name: name.to_string(),
            index,
        }),
        None => Ok(()),
    }
}

/// Writes `manifest.json` and one payload file per manifest entry into `dir`.
pub fn write_bundle(manifest: &TensorManifest, tensors: &TensorMap, dir: &Path) -> Result<()> {
    manifest.validate()?;
    for name in tensors.keys() {
        if manifest.entry(name).is_none() {
            return Err(Error::Manifest(format!(
                "tensor `{name}` is not declared in the manifest"
            )));
        }
    }
    for entry in &manifest.tensors {
        let data = tensors
            .get(&entry.name)
            .ok_or_else(|| Error::MissingTensor(entry.name.clone()))?;
        let expected = entry.num_elements()?;
        if data.len() != expected {
            return Err(Error::ElementCount {
                name: entry.name.clone(),
                expected,
                actual: data.len(),
            });
        }
        check_finite(&entry.name, data)?;
    }

    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for entry in &manifest.tensors {
        let data = &tensors[&entry.name];
        let mut bytes = Vec::with_capacity(data.len() * 4);
        for v in data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let path = dir.join(&entry.file);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest.to_json()? + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(())
}

/// Reads a bundle written by [`write_bundle`] (or any conforming exporter).
pub fn read_bundle(dir: &Path) -> Result<(TensorManifest, TensorMap)> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest = TensorManifest::from_json(&text)?;

    let mut tensors = TensorMap::new();
    for entry in &manifest.tensors {
        let path = dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let expected = entry.byte_len()?;
        if bytes.len() as u64 != expected {
            return Err(Error::ByteLength {
                name: entry.name.clone(),
                expected,
                actual: bytes.len() as u64,
            });
        }
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        check_finite(&entry.name, &data)?;
        tensors.insert(entry.name.clone(), data);
    }
    Ok((manifest, tensors))
}
