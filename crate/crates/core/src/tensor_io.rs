//! On-disk interchange for activation dumps.
//!
//! Tensors are NPY v1.0 files (little-endian `<f4` or `<f8`, C order). A run is
//! described by a single `manifest.json` whose tensor paths are relative to the
//! manifest's own directory. Every tensor is rasterized to an `n × d` sample
//! matrix by flattening all trailing dimensions in C order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const HEADER_ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    Float32,
    Float64,
}

impl Dtype {
    fn descr(self) -> &'static str {
        match self {
            Dtype::Float32 => "<f4",
            Dtype::Float64 => "<f8",
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::Float32 => 4,
            Dtype::Float64 => 8,
        }
    }
}

/// A decoded NPY tensor. Payloads are always held as `f64`; `dtype` records
/// the on-disk width so that writing back reproduces the original bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl TensorFile {
    pub fn new(dtype: Dtype, shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let count: usize = shape.iter().product();
        if count != data.len() {
            return Err(Error::invalid(
                "shape",
                format!("shape {shape:?} holds {count} elements, got {}", data.len()),
            ));
        }
        Ok(Self { dtype, shape, data })
    }

    /// Wraps a sample matrix as a 2-D tensor.
    pub fn from_matrix(dtype: Dtype, m: &DMatrix<f64>) -> Self {
        let (n, d) = m.shape();
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            data.extend(m.row(i).iter());
        }
        Self {
            dtype,
            shape: vec![n, d],
            data,
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        decode(path, &bytes)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&self.encode())
            .map_err(|e| Error::io(path, e))
    }

    /// Serializes to NPY v1.0 bytes.
    pub fn encode(&self) -> Vec<u8> {
        let shape = match self.shape.len() {
            1 => format!("({},)", self.shape[0]),
            _ => format!(
                "({})",
                self.shape
                    .iter()
                    .map(usize::to_string)
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        };
        let mut header = format!(
            "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
            self.dtype.descr(),
            shape
        );
        // magic (6) + version (2) + header length (2) + header + '\n'
        let unpadded = 10 + header.len() + 1;
        let pad = (HEADER_ALIGN - unpadded % HEADER_ALIGN) % HEADER_ALIGN;
        header.extend(std::iter::repeat_n(' ', pad));
        header.push('\n');

        let mut out = Vec::with_capacity(10 + header.len() + self.data.len() * self.dtype.size());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&[1, 0]);
        out.extend_from_slice(&(header.len() as u16).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        match self.dtype {
            Dtype::Float32 => {
                for &v in &self.data {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
            Dtype::Float64 => {
                for &v in &self.data {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    /// Flattens trailing dimensions in C order into an `n × d` matrix.
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        let Some((&n, rest)) = self.shape.split_first() else {
            return Err(Error::invalid(
                "shape",
                "zero-dimensional tensor has no sample axis",
            ));
        };
        let d: usize = rest.iter().product();
        Ok(DMatrix::from_row_slice(n, d, &self.data))
    }
}

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::MalformedNpy {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn decode(path: &Path, bytes: &[u8]) -> Result<TensorFile> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(malformed(path, "missing NPY magic"));
    }
    let (header_len, header_start) = match bytes[6] {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 if bytes.len() >= 12 => (
            u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
            12,
        ),
        v => return Err(malformed(path, format!("unsupported format version {v}"))),
    };
    let payload_start = header_start + header_len;
    if bytes.len() < payload_start {
        return Err(malformed(path, "truncated header"));
    }
    let header = std::str::from_utf8(&bytes[header_start..payload_start])
        .map_err(|_| malformed(path, "header is not valid text"))?;

    let descr = dict_value(header, "descr").ok_or_else(|| malformed(path, "missing 'descr'"))?;
    let descr = descr.trim_matches(|c| c == '\'' || c == '"').to_string();
    let dtype = match descr.as_str() {
        "<f4" => Dtype::Float32,
        "<f8" => Dtype::Float64,
        _ => {
            return Err(Error::UnsupportedDtype {
                path: path.to_path_buf(),
                descr,
            })
        }
    };
    match dict_value(header, "fortran_order").map(str::trim) {
        Some("False") => {}
        Some("True") => return Err(malformed(path, "fortran_order=True is not supported")),
        _ => return Err(malformed(path, "missing or invalid 'fortran_order'")),
    }
    let shape_text =
        dict_value(header, "shape").ok_or_else(|| malformed(path, "missing 'shape'"))?;
    let shape = parse_shape(shape_text).ok_or_else(|| malformed(path, "invalid 'shape'"))?;

    let count: usize = shape.iter().product();
    let payload = &bytes[payload_start..];
    if payload.len() != count * dtype.size() {
        return Err(malformed(
            path,
            format!(
                "shape {shape:?} needs {} payload bytes, found {}",
                count * dtype.size(),
                payload.len()
            ),
        ));
    }

    let data: Vec<f64> = match dtype {
        Dtype::Float32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        Dtype::Float64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect(),
    };
    if let Some(index) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            path: path.to_path_buf(),
            index,
        });
    }
    Ok(TensorFile { dtype, shape, data })
}

/// Returns the raw text of `key`'s value in a Python dict literal.
fn dict_value<'a>(header: &'a str, key: &str) -> Option<&'a str> {
    let quoted = [format!("'{key}'"), format!("\"{key}\"")];
    let start = quoted
        .iter()
        .find_map(|k| header.find(k.as_str()).map(|i| i + k.len()))?;
    let rest = header[start..].trim_start().strip_prefix(':')?.trim_start();
    let end = if rest.starts_with('(') {
        rest.find(')')? + 1
    } else if rest.starts_with('\'') || rest.starts_with('"') {
        let q = rest.as_bytes()[0] as char;
        rest[1..].find(q)? + 2
    } else {
        rest.find([',', '}'])?
    };
    Some(&rest[..end])
}

fn parse_shape(text: &str) -> Option<Vec<usize>> {
    let inner = text.trim().strip_prefix('(')?.strip_suffix(')')?;
    inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.trim_end_matches('L').parse().ok())
        .collect()
}

/// Reads an NPY file as an `n × d` sample matrix.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    TensorFile::read(path)?.to_matrix()
}

/// Writes a sample matrix as a 2-D NPY file.
pub fn write_tensor(path: impl AsRef<Path>, m: &DMatrix<f64>, dtype: Dtype) -> Result<()> {
    TensorFile::from_matrix(dtype, m).write(path)
}

// ---------------------------------------------------------------------------
// Run manifest

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Fc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub name: String,
    pub kind: LayerKind,
    /// One file per feature map for conv layers, exactly one file for fc.
    pub tensors: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEntry {
    pub name: String,
    pub tensor: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchEntry {
    #[serde(default)]
    pub batch: usize,
    pub input: PathBuf,
    pub labels: PathBuf,
    pub layers: Vec<LayerEntry>,
    /// Error signals, output layer first.
    #[serde(default)]
    pub errors: Vec<ErrorEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochEntry {
    pub epoch: usize,
    pub batches: Vec<BatchEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub batch_size: usize,
    pub epochs: Vec<EpochEntry>,
    /// Directory that tensor paths are resolved against.
    #[serde(skip)]
    pub root: PathBuf,
}

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: RunManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        manifest.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Structural checks that do not touch the referenced tensors.
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Manifest("batch_size must be positive".into()));
        }
        for epoch in &self.epochs {
            for batch in &epoch.batches {
                for layer in &batch.layers {
                    match (layer.kind, layer.tensors.len()) {
                        (LayerKind::Fc, 1) => {}
                        (LayerKind::Fc, k) => {
                            return Err(Error::Manifest(format!(
                                "fc layer {:?} in epoch {} must reference exactly one tensor, found {k}",
                                layer.name, epoch.epoch
                            )))
                        }
                        (LayerKind::Conv, 0) => {
                            return Err(Error::Manifest(format!(
                                "conv layer {:?} in epoch {} references no feature maps",
                                layer.name, epoch.epoch
                            )))
                        }
                        (LayerKind::Conv, _) => {}
                    }
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    pub fn batch_entry(&self, epoch: usize, batch: usize) -> Result<&BatchEntry> {
        let e = self.epochs.get(epoch).ok_or_else(|| {
            Error::IndexOutOfRange(format!(
                "epoch index {epoch} (manifest has {})",
                self.epochs.len()
            ))
        })?;
        e.batches.get(batch).ok_or_else(|| {
            Error::IndexOutOfRange(format!(
                "batch index {batch} in epoch index {epoch} (epoch has {})",
                e.batches.len()
            ))
        })
    }

    fn read_checked(&self, rel: &Path) -> Result<DMatrix<f64>> {
        let path = self.resolve(rel);
        let m = read_tensor(&path)?;
        if m.nrows() != self.batch_size {
            return Err(Error::BatchSizeMismatch {
                path,
                expected: self.batch_size,
                found: m.nrows(),
            });
        }
        Ok(m)
    }
}

/// One mini-batch's rasterized representation of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSnapshot {
    pub name: String,
    pub kind: LayerKind,
    /// `C` matrices for conv layers (filter order), one for fc.
    pub matrices: Vec<DMatrix<f64>>,
}

impl LayerSnapshot {
    pub fn single(name: impl Into<String>, m: DMatrix<f64>) -> Self {
        Self {
            name: name.into(),
            kind: LayerKind::Fc,
            matrices: vec![m],
        }
    }

    pub fn n(&self) -> usize {
        self.matrices.first().map_or(0, DMatrix::nrows)
    }
}

#[derive(Debug, Clone)]
pub struct BatchData {
    pub input: LayerSnapshot,
    pub labels: LayerSnapshot,
    pub layers: Vec<LayerSnapshot>,
    /// Output side first.
    pub errors: Vec<LayerSnapshot>,
}

/// Loads every tensor of one (epoch, batch) pair, indexed by position.
pub fn load_batch(manifest: &RunManifest, epoch: usize, batch: usize) -> Result<BatchData> {
    let entry = manifest.batch_entry(epoch, batch)?;
    let input = LayerSnapshot::single("input", manifest.read_checked(&entry.input)?);
    let labels = LayerSnapshot::single("labels", manifest.read_checked(&entry.labels)?);

    let mut layers = Vec::with_capacity(entry.layers.len());
    for layer in &entry.layers {
        let matrices = layer
            .tensors
            .iter()
            .map(|t| manifest.read_checked(t))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = matrices.first() {
            if let Some(bad) = matrices.iter().position(|m| m.ncols() != first.ncols()) {
                return Err(Error::Manifest(format!(
                    "feature map {bad} of layer {:?} has d = {}, expected {}",
                    layer.name,
                    matrices[bad].ncols(),
                    first.ncols()
                )));
            }
        }
        layers.push(LayerSnapshot {
            name: layer.name.clone(),
            kind: layer.kind,
            matrices,
        });
    }

    let errors = entry
        .errors
        .iter()
        .map(|e| {
            Ok(LayerSnapshot::single(
                e.name.clone(),
                manifest.read_checked(&e.tensor)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(BatchData {
        input,
        labels,
        layers,
        errors,
    })
}
