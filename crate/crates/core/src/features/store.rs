//! Binary persistence for extracted feature sets.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes  "HDRFEAT1"
//! kind    u8       0 = HOG, 1 = LBP, 2 = SPAM
//! dims    u32      values per record (324 / 944 / 686)
//! count   u32      number of records
//! records count times:
//!   source_id u32
//!   label     u8   0 = mHDR, 1 = iHDR
//!   origin    u32 x 2  (row, col) of the block in its source map
//!   values    dims x f32
//! ```
//!
//! Decoding validates the header against the kind's dimension contract and
//! reports the byte offset of anything malformed.

use std::path::Path;

use super::FeatureKind;
use crate::pipeline::HdrClass;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"HDRFEAT1";

/// One block's descriptor plus the identity needed to join it back to a
/// dataset manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub source_id: u32,
    pub label: HdrClass,
    pub origin: (u32, u32),
    pub values: Vec<f32>,
}

/// All records of one descriptor kind for one split.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub kind: FeatureKind,
    pub records: Vec<FeatureRecord>,
}

impl FeatureSet {
    pub fn new(kind: FeatureKind, records: Vec<FeatureRecord>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            if r.values.len() != kind.dims() {
                return Err(Error::Data(format!(
                    "record {i} has {} values, {} needs {}",
                    r.values.len(),
                    kind.name(),
                    kind.dims()
                )));
            }
            if let Some(v) = r.values.iter().find(|v| !v.is_finite()) {
                return Err(Error::Data(format!("non-finite value {v} in record {i}")));
            }
        }
        Ok(Self { kind, records })
    }

    /// Feature rows widened to f64, ready for SVM training.
    pub fn rows_f64(&self) -> Vec<Vec<f64>> {
        self.records
            .iter()
            .map(|r| r.values.iter().map(|&v| v as f64).collect())
            .collect()
    }

    pub fn labels(&self) -> Vec<HdrClass> {
        self.records.iter().map(|r| r.label).collect()
    }
}

fn kind_tag(kind: FeatureKind) -> u8 {
    match kind {
        FeatureKind::Hog => 0,
        FeatureKind::Lbp => 1,
        FeatureKind::Spam => 2,
    }
}

fn kind_from_tag(tag: u8, offset: u64) -> Result<FeatureKind> {
    match tag {
        0 => Ok(FeatureKind::Hog),
        1 => Ok(FeatureKind::Lbp),
        2 => Ok(FeatureKind::Spam),
        other => Err(Error::format(offset, format!("unknown feature kind tag {other}"))),
    }
}

pub fn encode_feature_set(set: &FeatureSet) -> Vec<u8> {
    let dims = set.kind.dims();
    let mut out = Vec::with_capacity(8 + 9 + set.records.len() * (13 + dims * 4));
    out.extend_from_slice(MAGIC);
    out.push(kind_tag(set.kind));
    out.extend_from_slice(&(dims as u32).to_le_bytes());
    out.extend_from_slice(&(set.records.len() as u32).to_le_bytes());
    for r in &set.records {
        out.extend_from_slice(&r.source_id.to_le_bytes());
        out.push(r.label.index() as u8);
        out.extend_from_slice(&r.origin.0.to_le_bytes());
        out.extend_from_slice(&r.origin.1.to_le_bytes());
        for &v in &r.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(
                self.pos as u64,
                format!(
                    "feature file truncated: needed {n} bytes for {what}, {} left",
                    self.bytes.len() - self.pos
                ),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_feature_set(bytes: &[u8]) -> Result<FeatureSet> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(8, "magic")?;
    if magic != MAGIC {
        return Err(Error::format(
            0,
            format!("bad magic {magic:02x?}, expected {MAGIC:02x?}"),
        ));
    }
    let kind = kind_from_tag(r.u8("kind tag")?, 8)?;
    let dims = r.u32("dims")? as usize;
    if dims != kind.dims() {
        return Err(Error::format(
            9,
            format!(
                "header says {dims} dims but {} features have {}",
                kind.name(),
                kind.dims()
            ),
        ));
    }
    let count = r.u32("record count")? as usize;
    let mut records = Vec::with_capacity(count);
    for i in 0..count {
        let source_id = r.u32("source id")?;
        let label_tag = r.u8("label")?;
        let label = HdrClass::from_index(label_tag as usize).map_err(|_| {
            Error::format(
                (r.pos - 1) as u64,
                format!("bad label tag {label_tag} in record {i}"),
            )
        })?;
        let origin = (r.u32("origin row")?, r.u32("origin col")?);
        let values_at = r.pos;
        let data = r.take(dims * 4, "feature values")?;
        let values: Vec<f32> = data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some((k, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::format(
                (values_at + 4 * k) as u64,
                format!("non-finite value {v} in record {i}"),
            ));
        }
        records.push(FeatureRecord { source_id, label, origin, values });
    }
    if r.pos != bytes.len() {
        return Err(Error::format(
            r.pos as u64,
            format!("{} trailing bytes after the last record", bytes.len() - r.pos),
        ));
    }
    FeatureSet::new(kind, records)
}

pub fn save_feature_set(path: &Path, set: &FeatureSet) -> Result<()> {
    std::fs::write(path, encode_feature_set(set)).map_err(|e| Error::io(path, e))
}

pub fn load_feature_set(path: &Path) -> Result<FeatureSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_feature_set(&bytes)
}

const SVM_MAGIC: &[u8; 8] = b"HDRSVM01";

/// Serializes a trained SVM together with the descriptor kind it was fit
/// on. Layout after the magic: kind u8, dims u32, C f64, bias f64, then
/// weights, means and standard deviations as dims x f64 each (all
/// little-endian).
pub fn encode_svm_model(model: &super::SvmModel, kind: FeatureKind) -> Result<Vec<u8>> {
    let dims = model.weights.len();
    if dims != kind.dims() || model.mean.len() != dims || model.std.len() != dims {
        return Err(Error::Data(format!(
            "svm model width {} / mean {} / std {} does not match {} ({})",
            dims,
            model.mean.len(),
            model.std.len(),
            kind.name(),
            kind.dims()
        )));
    }
    let mut out = Vec::with_capacity(8 + 1 + 4 + 16 + dims * 24);
    out.extend_from_slice(SVM_MAGIC);
    out.push(kind_tag(kind));
    out.extend_from_slice(&(dims as u32).to_le_bytes());
    out.extend_from_slice(&model.c.to_le_bytes());
    out.extend_from_slice(&model.bias.to_le_bytes());
    for series in [&model.weights, &model.mean, &model.std] {
        for &v in series {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_svm_model(bytes: &[u8]) -> Result<(super::SvmModel, FeatureKind)> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(8, "magic")?;
    if magic != SVM_MAGIC {
        return Err(Error::format(
            0,
            format!("bad magic {magic:02x?}, expected {SVM_MAGIC:02x?}"),
        ));
    }
    let kind = kind_from_tag(r.u8("kind tag")?, 8)?;
    let dims = r.u32("dims")? as usize;
    if dims != kind.dims() {
        return Err(Error::format(
            9,
            format!("header says {dims} dims but {} needs {}", kind.name(), kind.dims()),
        ));
    }
    let f64_at = |r: &mut Reader, what: &str| -> Result<f64> {
        Ok(f64::from_le_bytes(r.take(8, what)?.try_into().unwrap()))
    };
    let c = f64_at(&mut r, "C")?;
    let bias = f64_at(&mut r, "bias")?;
    let mut series = [Vec::new(), Vec::new(), Vec::new()];
    for (s, what) in series.iter_mut().zip(["weights", "means", "stds"]) {
        for _ in 0..dims {
            let at = r.pos;
            let v = f64_at(&mut r, what)?;
            if !v.is_finite() {
                return Err(Error::format(at as u64, format!("non-finite {what} value {v}")));
            }
            s.push(v);
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::format(
            r.pos as u64,
            format!("{} trailing bytes after svm model", bytes.len() - r.pos),
        ));
    }
    let [weights, mean, std] = series;
    if let Some(s) = std.iter().find(|s| **s <= 0.0) {
        return Err(Error::Data(format!("non-positive stored deviation {s}")));
    }
    Ok((super::SvmModel { weights, bias, c, mean, std }, kind))
}

pub fn save_svm_model(path: &Path, model: &super::SvmModel, kind: FeatureKind) -> Result<()> {
    std::fs::write(path, encode_svm_model(model, kind)?).map_err(|e| Error::io(path, e))
}

pub fn load_svm_model(path: &Path) -> Result<(super::SvmModel, FeatureKind)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_svm_model(&bytes)
}
