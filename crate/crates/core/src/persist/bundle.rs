//! Named f64 arrays in one little-endian payload, indexed by a TOML manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const DTYPE: &str = "f64le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryIndex {
    pub name: String,
    /// Start within the payload, in elements.
    pub offset: usize,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub crc32: u32,
}

impl EntryIndex {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub kind: String,
    pub config_hash: String,
    pub created_by: String,
    pub payload: String,
    pub payload_len: usize,
    #[serde(default)]
    pub meta: toml::Table,
    #[serde(default)]
    pub entries: Vec<EntryIndex>,
}

/// In-memory form of a manifest plus payload.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Bundle {
    pub kind: String,
    pub config_hash: String,
    pub meta: toml::Table,
    pub arrays: Vec<(String, Vec<usize>, Vec<f64>)>,
}

impl Bundle {
    pub fn new(kind: &str, config_hash: &str) -> Self {
        Self {
            kind: kind.into(),
            config_hash: config_hash.into(),
            ..Self::default()
        }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Result<()> {
        let name = name.into();
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::ShapeMismatch {
                entry: name,
                detail: format!("shape {shape:?} vs {} values", data.len()),
            });
        }
        self.arrays.push((name, shape, data));
        Ok(())
    }

    pub fn push_vec(&mut self, name: impl Into<String>, data: Vec<f64>) -> Result<()> {
        let n = data.len();
        self.push(name, vec![n], data)
    }

    pub fn set_meta<T: Serialize>(&mut self, key: &str, value: T) -> Result<()> {
        let v = toml::Value::try_from(value)
            .map_err(|e| Error::InvalidArgument(format!("metadata `{key}`: {e}")))?;
        self.meta.insert(key.into(), v);
        Ok(())
    }

    pub fn meta<T: for<'de> Deserialize<'de>>(&self, key: &str) -> Result<T> {
        let v = self
            .meta
            .get(key)
            .ok_or_else(|| Error::ShapeMismatch {
                entry: key.into(),
                detail: "missing metadata".into(),
            })?
            .clone();
        v.try_into().map_err(|e: toml::de::Error| Error::ShapeMismatch {
            entry: key.into(),
            detail: e.to_string(),
        })
    }

    pub fn array(&self, name: &str) -> Result<&[f64]> {
        self.arrays
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, _, d)| d.as_slice())
            .ok_or_else(|| Error::ShapeMismatch {
                entry: name.into(),
                detail: "entry not present".into(),
            })
    }

    /// Array `name` with its length checked against `len`.
    pub fn array_len(&self, name: &str, len: usize) -> Result<&[f64]> {
        let a = self.array(name)?;
        if a.len() != len {
            return Err(Error::ShapeMismatch {
                entry: name.into(),
                detail: format!("expected {len} values, found {}", a.len()),
            });
        }
        Ok(a)
    }
}

/// `<dir>/<name>.manifest` and `<dir>/<name>.bin`.
pub fn bundle_paths(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{name}.manifest")), dir.join(format!("{name}.bin")))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn checksum(bytes: &[u8]) -> u32 {
    crc32fast::hash(bytes)
}

/// Write the bundle under `dir` (created if needed); returns the manifest path.
pub fn write_bundle(dir: &Path, name: &str, bundle: &Bundle) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (man_path, bin_path) = bundle_paths(dir, name);
    let mut payload = Vec::new();
    let mut entries = Vec::with_capacity(bundle.arrays.len());
    let mut offset = 0;
    for (n, shape, data) in &bundle.arrays {
        let start = payload.len();
        for v in data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        entries.push(EntryIndex {
            name: n.clone(),
            offset,
            shape: shape.clone(),
            dtype: DTYPE.into(),
            crc32: checksum(&payload[start..]),
        });
        offset += data.len();
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        kind: bundle.kind.clone(),
        config_hash: bundle.config_hash.clone(),
        created_by: concat!("moment-closure ", env!("CARGO_PKG_VERSION")).into(),
        payload: format!("{name}.bin"),
        payload_len: offset,
        meta: bundle.meta.clone(),
        entries,
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Malformed {
        path: man_path.clone(),
        detail: e.to_string(),
    })?;
    write_atomic(&bin_path, &payload)?;
    write_atomic(&man_path, text.as_bytes())?;
    Ok(man_path)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    // version first, so newer layouts fail with a version error
    let probe: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Malformed {
        path: path.into(),
        detail: e.to_string(),
    })?;
    let found = probe
        .get("format_version")
        .and_then(|v| v.as_integer())
        .ok_or_else(|| Error::Malformed {
            path: path.into(),
            detail: "missing format_version".into(),
        })?;
    if found != FORMAT_VERSION as i64 {
        return Err(Error::VersionMismatch {
            found: u32::try_from(found).unwrap_or(u32::MAX),
            expected: FORMAT_VERSION,
        });
    }
    toml::from_str(&text).map_err(|e| Error::Malformed {
        path: path.into(),
        detail: e.to_string(),
    })
}

/// Read and fully validate a bundle; `kind` must match when given.
pub fn read_bundle(dir: &Path, name: &str, kind: Option<&str>) -> Result<Bundle> {
    let (man_path, bin_path) = bundle_paths(dir, name);
    let m = read_manifest(&man_path)?;
    if let Some(k) = kind {
        if m.kind != k {
            return Err(Error::SpecMismatch(format!("{} holds `{}`, expected `{k}`", man_path.display(), m.kind)));
        }
    }
    let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let mut arrays = Vec::with_capacity(m.entries.len());
    let mut expected_offset = 0;
    for e in &m.entries {
        if e.dtype != DTYPE {
            return Err(Error::ShapeMismatch {
                entry: e.name.clone(),
                detail: format!("unsupported dtype `{}`", e.dtype),
            });
        }
        if e.offset != expected_offset {
            return Err(Error::ShapeMismatch {
                entry: e.name.clone(),
                detail: format!("offset {} where {} was expected", e.offset, expected_offset),
            });
        }
        let (start, end) = (e.offset * 8, (e.offset + e.len()) * 8);
        if end > bytes.len() || checksum(&bytes[start..end]) != e.crc32 {
            return Err(Error::Checksum(e.name.clone()));
        }
        let data = bytes[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        arrays.push((e.name.clone(), e.shape.clone(), data));
        expected_offset += e.len();
    }
    if expected_offset != m.payload_len || bytes.len() != m.payload_len * 8 {
        return Err(Error::ShapeMismatch {
            entry: m.payload.clone(),
            detail: format!("payload holds {} bytes, manifest declares {} values", bytes.len(), m.payload_len),
        });
    }
    Ok(Bundle {
        kind: m.kind,
        config_hash: m.config_hash,
        meta: m.meta,
        arrays,
    })
}
