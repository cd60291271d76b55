//! Provenance analysis for high dynamic range images.
//!
//! An HDR radiance map can be captured by merging several bracketed LDR
//! exposures of a scene, or faked by expanding a single LDR image with an
//! inverse tone mapping operator. The two construction paths leave different
//! statistical traces in the luminance channel; this crate implements the
//! full pipeline for telling them apart:
//!
//! * [`io`] — Radiance RGBE, PFM and binary PPM codecs,
//! * [`pipeline`] — log-luminance preprocessing, tiling, dataset splits and
//!   an exposure-fusion synthesizer,
//! * [`itmo`] — parameterized inverse tone mapping operators for corpus
//!   synthesis,
//! * [`nn`] — a small tensor/layer library with exact backpropagation,
//! * [`models`] — the two block classifiers (plain convolutional and
//!   residual) plus training and checkpointing,
//! * [`features`] — HOG / LBP / SPAM descriptors and a linear SVM baseline,
//! * [`eval`] — ROC/AUC, confusion counts and image-level majority voting.
//!
//! All numeric kernels are generic over [`Scalar`] (`f32` or `f64`);
//! training runs in `f32`, while verification code instantiates the same
//! kernels at `f64`.

pub mod error;
pub mod eval;
pub mod features;
pub mod io;
pub mod itmo;
pub mod models;
pub mod nn;
pub mod pipeline;

mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f32` tensor, the training and inference carrier.
pub type Tensor32 = nn::Tensor<f32>;
/// `f64` tensor, used by the finite-difference verification path.
pub type Tensor64 = nn::Tensor<f64>;
/// Radiance map in working precision.
pub type HdrImage32 = io::HdrImage<f32>;
/// Single-channel map in working precision.
pub type LumMap32 = pipeline::LuminanceMap<f32>;
/// 64x64 conditioned block in working precision.
pub type LogLumBlock = pipeline::Block<f32>;
