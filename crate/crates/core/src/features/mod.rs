//! Hand-crafted baseline descriptors over 64x64 blocks (HOG, uniform LBP,
//! SPAM) and a linear SVM with grid search, used as the comparison arm for
//! the CNN classifiers.
//!
//! All three descriptors are invariant to adding a constant to the block
//! (HOG and SPAM also to positive rescaling, LBP to any strictly monotone
//! remap), so they are extracted from raw log-luminance blocks without
//! dataset-level standardization; the SVM standardizes per feature
//! dimension instead.

mod hog;
mod lbp;
mod spam;
mod store;
mod svm;

pub use hog::hog;
pub use lbp::lbp_uniform;
pub use spam::spam;
pub use store::{
    decode_feature_set, decode_svm_model, encode_feature_set, encode_svm_model, load_feature_set,
    load_svm_model, save_feature_set, save_svm_model, FeatureRecord, FeatureSet,
};
pub use svm::{svm_train, SvmModel, SVM_C_GRID};

use crate::pipeline::BLOCK_SIZE;
use crate::{Error, Result};

/// Which descriptor a vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Hog,
    Lbp,
    Spam,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 3] = [FeatureKind::Hog, FeatureKind::Lbp, FeatureKind::Spam];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Hog => "hog",
            FeatureKind::Lbp => "lbp",
            FeatureKind::Spam => "spam",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hog" => Ok(FeatureKind::Hog),
            "lbp" => Ok(FeatureKind::Lbp),
            "spam" => Ok(FeatureKind::Spam),
            other => Err(Error::Parameter(format!(
                "unknown feature kind {other:?} (expected hog, lbp, or spam)"
            ))),
        }
    }

    /// Contracted descriptor length.
    pub fn dims(self) -> usize {
        match self {
            FeatureKind::Hog => 324,
            FeatureKind::Lbp => 944,
            FeatureKind::Spam => 686,
        }
    }
}

/// A descriptor with its provenance; construction enforces the length and
/// finiteness contracts.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub kind: FeatureKind,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(kind: FeatureKind, values: Vec<f64>) -> Result<Self> {
        if values.len() != kind.dims() {
            return Err(Error::Shape(format!(
                "{} descriptor must have {} values, got {}",
                kind.name(),
                kind.dims(),
                values.len()
            )));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "{} descriptor value {i} is not finite: {v}",
                kind.name()
            )));
        }
        Ok(Self { kind, values })
    }
}

/// Validates that `pixels` is a 64x64 block and returns it as f64.
fn require_block(pixels: &[f32]) -> Result<Vec<f64>> {
    if pixels.len() != BLOCK_SIZE * BLOCK_SIZE {
        return Err(Error::Shape(format!(
            "descriptors are defined on {0}x{0} blocks ({1} pixels), got {2}",
            BLOCK_SIZE,
            BLOCK_SIZE * BLOCK_SIZE,
            pixels.len()
        )));
    }
    if let Some((i, v)) = pixels.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Data(format!("block pixel {i} is not finite: {v}")));
    }
    Ok(pixels.iter().map(|&v| v as f64).collect())
}

/// Extracts one descriptor from a 64x64 block.
pub fn extract(kind: FeatureKind, pixels: &[f32]) -> Result<FeatureVector> {
    let p = require_block(pixels)?;
    let values = match kind {
        FeatureKind::Hog => hog::hog_f64(&p),
        FeatureKind::Lbp => lbp::lbp_f64(&p),
        FeatureKind::Spam => spam::spam_f64(&p),
    };
    FeatureVector::new(kind, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_round_trip_and_have_contracted_dims() {
        for kind in FeatureKind::ALL {
            assert_eq!(FeatureKind::parse(kind.name()).unwrap(), kind);
        }
        assert_eq!(FeatureKind::Hog.dims(), 324);
        assert_eq!(FeatureKind::Lbp.dims(), 944);
        assert_eq!(FeatureKind::Spam.dims(), 686);
        assert!(FeatureKind::parse("sift").is_err());
    }

    #[test]
    fn wrong_block_size_is_rejected_for_every_kind() {
        let short = vec![0.0f32; 100];
        for kind in FeatureKind::ALL {
            assert!(extract(kind, &short).is_err());
        }
        let nan = {
            let mut v = vec![0.0f32; 4096];
            v[7] = f32::NAN;
            v
        };
        for kind in FeatureKind::ALL {
            assert!(extract(kind, &nan).is_err());
        }
    }

    #[test]
    fn extract_enforces_dimension_contracts() {
        let block: Vec<f32> = (0..4096).map(|i| ((i * 37) % 113) as f32 / 113.0).collect();
        for kind in FeatureKind::ALL {
            let f = extract(kind, &block).unwrap();
            assert_eq!(f.values.len(), kind.dims());
            assert!(f.values.iter().all(|v| v.is_finite()));
        }
    }
}
