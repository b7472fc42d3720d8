//! Named-tensor checkpoints and the `GMRG1` binary container.
//!
//! Layout of a checkpoint file:
//!
//! ```text
//! b"GMRG1" | u64 LE header length L | L bytes of JSON header | packed LE f32 data
//! ```
//!
//! The header is `{"metadata":{..},"tensors":[{"dtype":"f32","name":..,"nbytes":..,"offset":..,"shape":[..]},..]}`
//! with keys sorted and tensors listed by name. Offsets are relative to the
//! first byte after the header. There is no padding between tensors.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: &[u8; 5] = b"GMRG1";
pub const FORMAT_VERSION: &str = "GMRG1";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: bad magic bytes (expected GMRG1)")]
    BadMagic { path: PathBuf },
    #[error("{path}: corrupt header: {reason}")]
    CorruptHeader { path: PathBuf, reason: String },
    #[error("{path}: truncated data: {reason}")]
    TruncatedData { path: PathBuf, reason: String },
    #[error("{path}: non-finite value in tensor `{name}` at element {index}")]
    NonFiniteValue {
        path: PathBuf,
        name: String,
        index: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown tensor name `{0}`")]
    UnknownName(String),
    #[error("invalid tensor `{name}`: {reason}")]
    InvalidTensor { name: String, reason: String },
}

/// A dense row-major f32 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, StoreError> {
        if numel(&shape) != data.len() {
            return Err(StoreError::InvalidTensor {
                name: String::new(),
                reason: format!(
                    "shape {:?} needs {} values, got {}",
                    shape,
                    numel(&shape),
                    data.len()
                ),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn scalar(value: f32) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    /// One-dimensional tensor over `data`.
    pub fn vector(data: Vec<f32>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = numel(&shape);
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dtype(&self) -> &'static str {
        "f32"
    }

    /// Same shape, new values. Panics if the length differs.
    pub fn with_data(&self, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), self.data.len(), "tensor length mismatch");
        Self {
            shape: self.shape.clone(),
            data,
        }
    }

    /// Bitwise equality (distinguishes -0.0 from 0.0 and compares NaN payloads).
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Ordered name → tensor map with optional string metadata.
///
/// Iteration is always lexicographic by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorMap {
    entries: BTreeMap<String, Tensor>,
    metadata: BTreeMap<String, String>,
}

impl TensorMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<(), StoreError> {
        let name = name.into();
        if name.is_empty() {
            return Err(StoreError::InvalidTensor {
                name,
                reason: "empty tensor name".into(),
            });
        }
        self.entries.insert(name, tensor);
        Ok(())
    }

    /// Builder-style insert for fixtures; panics on an empty name.
    pub fn with(mut self, name: &str, tensor: Tensor) -> Self {
        self.insert(name, tensor).expect("valid tensor name");
        self
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.entries.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn name_set(&self) -> BTreeSet<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_params(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn metadata_mut(&mut self) -> &mut BTreeMap<String, String> {
        &mut self.metadata
    }

    pub fn bit_eq(&self, other: &TensorMap) -> bool {
        self.metadata == other.metadata
            && self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((na, ta), (nb, tb))| na == nb && ta.bit_eq(tb))
    }

    /// Largest absolute elementwise difference over shared names; `None` if
    /// the maps are not name/shape aligned.
    pub fn max_abs_diff(&self, other: &TensorMap) -> Option<f64> {
        if self.name_set() != other.name_set() {
            return None;
        }
        let mut worst = 0.0f64;
        for (name, a) in &self.entries {
            let b = &other.entries[name];
            if a.shape != b.shape {
                return None;
            }
            for (x, y) in a.data.iter().zip(&b.data) {
                worst = worst.max((f64::from(*x) - f64::from(*y)).abs());
            }
        }
        Some(worst)
    }

    /// Concatenate all tensors (canonical order) into one f64 buffer.
    pub fn flatten(&self) -> Vec<f64> {
        self.entries
            .values()
            .flat_map(|t| t.data.iter().map(|&v| f64::from(v)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MismatchKind {
    Missing,
    Shape,
    Dtype,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub name: String,
    pub kind: MismatchKind,
    pub details: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompatReport {
    pub compatible: bool,
    pub mismatches: Vec<Mismatch>,
}

/// Check that every map has the same names, shapes and dtypes.
///
/// Findings are reported per name against the union of all names, so the
/// verdict does not depend on argument order.
pub fn validate_compat(maps: &[&TensorMap]) -> CompatReport {
    let mut all: BTreeSet<&String> = BTreeSet::new();
    for m in maps {
        all.extend(m.names());
    }
    let mut mismatches = Vec::new();
    for name in all {
        let present: Vec<(usize, &Tensor)> = maps
            .iter()
            .enumerate()
            .filter_map(|(i, m)| m.get(name).map(|t| (i, t)))
            .collect();
        if present.len() != maps.len() {
            let missing: Vec<usize> = (0..maps.len())
                .filter(|i| !present.iter().any(|(j, _)| j == i))
                .collect();
            mismatches.push(Mismatch {
                name: name.clone(),
                kind: MismatchKind::Missing,
                details: format!("absent from maps {missing:?}"),
            });
            continue;
        }
        let shapes: BTreeSet<&[usize]> = present.iter().map(|(_, t)| t.shape()).collect();
        if shapes.len() > 1 {
            mismatches.push(Mismatch {
                name: name.clone(),
                kind: MismatchKind::Shape,
                details: format!("shapes {shapes:?}"),
            });
        }
        let dtypes: BTreeSet<&str> = present.iter().map(|(_, t)| t.dtype()).collect();
        if dtypes.len() > 1 {
            mismatches.push(Mismatch {
                name: name.clone(),
                kind: MismatchKind::Dtype,
                details: format!("dtypes {dtypes:?}"),
            });
        }
    }
    CompatReport {
        compatible: mismatches.is_empty(),
        mismatches,
    }
}

pub fn subset<'a, I>(map: &TensorMap, names: I) -> Result<TensorMap, StoreError>
where
    I: IntoIterator<Item = &'a String>,
{
    let mut out = TensorMap {
        entries: BTreeMap::new(),
        metadata: map.metadata.clone(),
    };
    for name in names {
        let t = map
            .get(name)
            .ok_or_else(|| StoreError::UnknownName(name.clone()))?;
        out.entries.insert(name.clone(), t.clone());
    }
    Ok(out)
}

// Field order is alphabetical so serde_json emits sorted keys.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderEntry {
    dtype: String,
    name: String,
    nbytes: u64,
    offset: u64,
    shape: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    #[serde(default)]
    metadata: BTreeMap<String, String>,
    tensors: Vec<HeaderEntry>,
}

/// Serialize a map to container bytes. Pure function of the map.
pub fn encode(map: &TensorMap) -> Vec<u8> {
    let mut tensors = Vec::with_capacity(map.len());
    let mut offset = 0u64;
    for (name, t) in map.iter() {
        let nbytes = (t.len() * 4) as u64;
        tensors.push(HeaderEntry {
            dtype: "f32".into(),
            name: name.clone(),
            nbytes,
            offset,
            shape: t.shape().iter().map(|&d| d as u64).collect(),
        });
        offset += nbytes;
    }
    let header = serde_json::to_vec(&Header {
        metadata: map.metadata.clone(),
        tensors,
    })
    .expect("header serialization is infallible");

    let mut out = Vec::with_capacity(MAGIC.len() + 8 + header.len() + offset as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, t) in map.iter() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    pub allow_nonfinite: bool,
}

/// Parse container bytes. `path` is only used for error messages.
pub fn decode(bytes: &[u8], path: &Path, opts: LoadOptions) -> Result<TensorMap, StoreError> {
    let corrupt = |reason: String| StoreError::CorruptHeader {
        path: path.to_path_buf(),
        reason,
    };
    let truncated = |reason: String| StoreError::TruncatedData {
        path: path.to_path_buf(),
        reason,
    };

    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(StoreError::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let rest = &bytes[MAGIC.len()..];
    if rest.len() < 8 {
        return Err(truncated("missing header length".into()));
    }
    let header_len = u64::from_le_bytes(rest[..8].try_into().expect("8 bytes"));
    let rest = &rest[8..];
    if header_len > rest.len() as u64 {
        return Err(truncated(format!(
            "header length {header_len} exceeds remaining {} bytes",
            rest.len()
        )));
    }
    let (header_bytes, data) = rest.split_at(header_len as usize);
    let header: Header =
        serde_json::from_slice(header_bytes).map_err(|e| corrupt(format!("json: {e}")))?;

    // Validate extents before touching data.
    let mut extents: Vec<(u64, u64, usize)> = Vec::with_capacity(header.tensors.len());
    for (i, entry) in header.tensors.iter().enumerate() {
        if entry.name.is_empty() {
            return Err(corrupt("empty tensor name".into()));
        }
        if entry.dtype != "f32" {
            return Err(corrupt(format!(
                "tensor `{}` has unsupported dtype `{}`",
                entry.name, entry.dtype
            )));
        }
        let count = entry
            .shape
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| corrupt(format!("tensor `{}` shape overflows", entry.name)))?;
        if count.checked_mul(4) != Some(entry.nbytes) {
            return Err(corrupt(format!(
                "tensor `{}` declares {} bytes for shape {:?}",
                entry.name, entry.nbytes, entry.shape
            )));
        }
        let end = entry
            .offset
            .checked_add(entry.nbytes)
            .ok_or_else(|| corrupt(format!("tensor `{}` offset overflows", entry.name)))?;
        extents.push((entry.offset, end, i));
    }
    extents.sort_unstable();
    for pair in extents.windows(2) {
        if pair[1].0 < pair[0].1 {
            let a = &header.tensors[pair[0].2].name;
            let b = &header.tensors[pair[1].2].name;
            return Err(corrupt(format!("tensors `{a}` and `{b}` overlap")));
        }
    }
    let needed = extents.iter().map(|e| e.1).max().unwrap_or(0);
    if needed > data.len() as u64 {
        return Err(truncated(format!(
            "header declares {needed} data bytes, file holds {}",
            data.len()
        )));
    }
    if needed < data.len() as u64 {
        return Err(corrupt(format!(
            "{} trailing bytes after tensor data",
            data.len() as u64 - needed
        )));
    }

    let mut map = TensorMap {
        entries: BTreeMap::new(),
        metadata: header.metadata,
    };
    for entry in header.tensors {
        let start = entry.offset as usize;
        let raw = &data[start..start + entry.nbytes as usize];
        let values: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if !opts.allow_nonfinite {
            if let Some(index) = values.iter().position(|v| !v.is_finite()) {
                return Err(StoreError::NonFiniteValue {
                    path: path.to_path_buf(),
                    name: entry.name,
                    index,
                });
            }
        }
        let shape = entry.shape.iter().map(|&d| d as usize).collect();
        if map
            .entries
            .insert(entry.name.clone(), Tensor { shape, data: values })
            .is_some()
        {
            return Err(corrupt(format!("duplicate tensor name `{}`", entry.name)));
        }
    }
    Ok(map)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TensorMap, StoreError> {
    load_checkpoint_with(path, LoadOptions::default())
}

pub fn load_checkpoint_with(
    path: impl AsRef<Path>,
    opts: LoadOptions,
) -> Result<TensorMap, StoreError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes, path, opts)
}

pub fn save_checkpoint(map: &TensorMap, path: impl AsRef<Path>) -> Result<(), StoreError> {
    let path = path.as_ref();
    fs::write(path, encode(map)).map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three() -> TensorMap {
        TensorMap::new()
            .with("b", Tensor::vector(vec![1.0, 2.0]))
            .with("a", Tensor::new(vec![2, 2], vec![0.5, -0.5, 3.0, 4.0]).unwrap())
            .with("c", Tensor::scalar(7.0))
    }

    #[test]
    fn iteration_is_lexicographic() {
        let names: Vec<_> = three().names().cloned().collect();
        assert_eq!(names, ["a", "b", "c"]);
    }

    #[test]
    fn scalar_one_encodes_as_ieee_bytes() {
        let map = TensorMap::new().with("x", Tensor::scalar(1.0));
        let bytes = encode(&map);
        assert_eq!(&bytes[bytes.len() - 4..], &[0x00, 0x00, 0x80, 0x3F]);
        let header_len = u64::from_le_bytes(bytes[5..13].try_into().unwrap()) as usize;
        assert_eq!(bytes.len(), 5 + 8 + header_len + 4);
    }

    #[test]
    fn empty_map_is_valid() {
        let bytes = encode(&TensorMap::new());
        let header_len = u64::from_le_bytes(bytes[5..13].try_into().unwrap()) as usize;
        assert_eq!(&bytes[13..13 + header_len], br#"{"metadata":{},"tensors":[]}"#);
        let back = decode(&bytes, Path::new("mem"), LoadOptions::default()).unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn encode_is_deterministic() {
        assert_eq!(encode(&three()), encode(&three()));
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = encode(&three());
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(
            decode(&bytes, Path::new("f"), LoadOptions::default()),
            Err(StoreError::BadMagic { .. })
        ));
    }

    #[test]
    fn sliced_file_is_truncated() {
        let bytes = encode(&three());
        for cut in [bytes.len() - 1, bytes.len() - 4, 20] {
            let err = decode(&bytes[..cut], Path::new("f"), LoadOptions::default()).unwrap_err();
            assert!(matches!(err, StoreError::TruncatedData { .. }), "cut {cut}: {err}");
        }
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = encode(&three());
        bytes.push(0);
        assert!(matches!(
            decode(&bytes, Path::new("f"), LoadOptions::default()),
            Err(StoreError::CorruptHeader { .. })
        ));
    }

    #[test]
    fn overlapping_offsets_rejected() {
        let header = br#"{"metadata":{},"tensors":[{"dtype":"f32","name":"a","nbytes":8,"offset":0,"shape":[2]},{"dtype":"f32","name":"b","nbytes":8,"offset":4,"shape":[2]}]}"#;
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
        bytes.extend_from_slice(header);
        bytes.extend_from_slice(&[0u8; 12]);
        let err = decode(&bytes, Path::new("f"), LoadOptions::default()).unwrap_err();
        assert!(matches!(err, StoreError::CorruptHeader { .. }), "{err}");
    }

    #[test]
    fn nonfinite_rejected_unless_allowed() {
        let map = TensorMap::new().with("x", Tensor::vector(vec![1.0, f32::NAN]));
        let bytes = encode(&map);
        assert!(matches!(
            decode(&bytes, Path::new("f"), LoadOptions::default()),
            Err(StoreError::NonFiniteValue { index: 1, .. })
        ));
        let back = decode(&bytes, Path::new("f"), LoadOptions { allow_nonfinite: true }).unwrap();
        assert!(back.bit_eq(&map));
    }

    #[test]
    fn compat_reports_shape_and_missing() {
        let m = three();
        assert!(validate_compat(&[&m, &m]).compatible);

        let mut other = three();
        other.insert("b", Tensor::vector(vec![1.0, 2.0, 3.0])).unwrap();
        let report = validate_compat(&[&m, &other]);
        assert_eq!(report.mismatches.len(), 1);
        assert_eq!(report.mismatches[0].name, "b");
        assert_eq!(report.mismatches[0].kind, MismatchKind::Shape);

        let short = subset(&m, &["a".to_string(), "b".to_string()]).unwrap();
        let report = validate_compat(&[&m, &short]);
        assert_eq!(report.mismatches.len(), 1);
        assert_eq!(report.mismatches[0].kind, MismatchKind::Missing);
        assert_eq!(report.mismatches[0].name, "c");
    }

    #[test]
    fn subset_cases() {
        let m = three();
        assert!(subset(&m, &m.name_set()).unwrap().bit_eq(&m));
        assert!(subset(&m, &BTreeSet::new()).unwrap().is_empty());
        let a = subset(&m, &["a".to_string()]).unwrap();
        assert_eq!(a.len(), 1);
        assert!(a.contains("a"));
        assert!(matches!(
            subset(&m, &["zz".to_string()]),
            Err(StoreError::UnknownName(_))
        ));
    }
}
