//! Preprocessing and dataset construction.
//!
//! The preprocessing chain for one HDR image is: relative luminance
//! ([`compute_luminance`]), input conditioning ([`log_transform`] or the
//! [`normalize_pixels_8bit`] ablation), size capping ([`resize_area`]), and
//! tiling into 64x64 blocks ([`tile_blocks`]). Dataset assembly — split
//! assignment, normalization statistics, the manifest file and the binary
//! block store — lives in the [`manifest`], [`store`] and [`builder`]
//! submodules. [`fuse_exposures`] synthesizes merged-HDR surrogates from
//! bracketed 8-bit stacks.

pub mod builder;
pub mod manifest;
pub mod store;

pub use builder::{
    build_dataset, collect_class_images, load_split_blocks, preprocess_image, BuildConfig,
    BuildOutput,
};
pub use manifest::{
    assign_splits, Conditioning, DatasetManifest, ImageRecord, ManifestEntry, Split, SplitPlan,
};

use crate::io::{HdrImage, LdrImage};
use crate::{Error, Result, Scalar};

/// Side length of the square tiles fed to the classifiers.
pub const BLOCK_SIZE: usize = 64;
/// Epsilon added before the logarithm so zero luminance stays finite.
pub const LOG_EPSILON: f64 = 1e-6;
/// Default cap on the larger image dimension before tiling.
pub const DEFAULT_MAX_DIM: usize = 1024;

/// Image provenance class: merged from exposures or expanded from one LDR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HdrClass {
    Mhdr,
    Ihdr,
}

impl HdrClass {
    /// Stable label index: mHDR = 0, iHDR = 1.
    pub fn index(self) -> usize {
        match self {
            HdrClass::Mhdr => 0,
            HdrClass::Ihdr => 1,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(HdrClass::Mhdr),
            1 => Ok(HdrClass::Ihdr),
            other => Err(Error::Data(format!("invalid class index {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HdrClass::Mhdr => "mhdr",
            HdrClass::Ihdr => "ihdr",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mhdr" => Ok(HdrClass::Mhdr),
            "ihdr" => Ok(HdrClass::Ihdr),
            other => Err(Error::Data(format!("invalid class name {other:?}"))),
        }
    }

    pub const ALL: [HdrClass; 2] = [HdrClass::Mhdr, HdrClass::Ihdr];
}

/// Single-channel scalar map; holds linear luminance or a conditioned
/// (log-domain or [0,1]-normalized) version of it.
#[derive(Debug, Clone, PartialEq)]
pub struct LuminanceMap<T> {
    pub width: usize,
    pub height: usize,
    /// Row-major values; length `width * height`.
    pub values: Vec<T>,
}

impl<T: Scalar> LuminanceMap<T> {
    pub fn new(width: usize, height: usize, values: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!(
                "map dimensions must be >= 1, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::Shape(format!(
                "value buffer length {} != {width}*{height}",
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> T {
        self.values[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        let sum: f64 = self.values.iter().map(|v| v.to_f64v()).sum();
        sum / self.values.len() as f64
    }
}

/// One 64x64 tile of a conditioned luminance map, with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    /// Row-major pixels; length `BLOCK_SIZE * BLOCK_SIZE`.
    pub pixels: Vec<T>,
    pub label: HdrClass,
    /// Index of the source image in the dataset manifest.
    pub source_id: u32,
    /// (row, col) offset of the tile's top-left corner in the source map.
    pub origin: (u32, u32),
}

/// Result of tiling one map.
#[derive(Debug, Clone)]
pub struct Tiling<T> {
    pub blocks: Vec<Block<T>>,
    /// True when the map was smaller than one tile in some dimension.
    pub undersized: bool,
}

/// Rec. 709 relative luminance, `L = 0.2126 R + 0.7152 G + 0.0722 B`.
pub fn compute_luminance<T: Scalar>(img: &HdrImage<T>) -> LuminanceMap<T> {
    let (cr, cg, cb) = (T::from_f64v(0.2126), T::from_f64v(0.7152), T::from_f64v(0.0722));
    let values = img
        .data
        .chunks_exact(3)
        .map(|rgb| cr * rgb[0] + cg * rgb[1] + cb * rgb[2])
        .collect();
    LuminanceMap {
        width: img.width,
        height: img.height,
        values,
    }
}

/// Elementwise `ln(L + epsilon)`; total and finite on `L >= 0`.
pub fn log_transform<T: Scalar>(lum: &LuminanceMap<T>, epsilon: f64) -> Result<LuminanceMap<T>> {
    if !(epsilon > 0.0) {
        return Err(Error::Parameter(format!(
            "log epsilon must be > 0, got {epsilon}"
        )));
    }
    let eps = T::from_f64v(epsilon);
    let values = lum.values.iter().map(|&v| (v + eps).ln()).collect();
    Ok(LuminanceMap {
        width: lum.width,
        height: lum.height,
        values,
    })
}

/// Per-image min-max normalization of luminance to `[0, 1]`; a constant map
/// becomes 0.5 everywhere by convention.
pub fn normalize_pixels_8bit<T: Scalar>(img: &HdrImage<T>) -> LuminanceMap<T> {
    let lum = compute_luminance(img);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in &lum.values {
        let v = v.to_f64v();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let values = if hi > lo {
        let span = hi - lo;
        lum.values
            .iter()
            .map(|v| T::from_f64v((v.to_f64v() - lo) / span))
            .collect()
    } else {
        vec![T::from_f64v(0.5); lum.values.len()]
    };
    LuminanceMap {
        width: lum.width,
        height: lum.height,
        values,
    }
}

/// Caps the larger dimension at `max_dim` by box (area-average) resampling;
/// smaller maps pass through unchanged.
pub fn resize_area<T: Scalar>(map: &LuminanceMap<T>, max_dim: usize) -> Result<LuminanceMap<T>> {
    if max_dim < BLOCK_SIZE {
        return Err(Error::Parameter(format!(
            "max_dim must be >= {BLOCK_SIZE}, got {max_dim}"
        )));
    }
    let largest = map.width.max(map.height);
    if largest <= max_dim {
        return Ok(map.clone());
    }
    let (new_w, new_h) = if map.width >= map.height {
        let h = ((map.height * max_dim + largest / 2) / largest).max(1);
        (max_dim, h)
    } else {
        let w = ((map.width * max_dim + largest / 2) / largest).max(1);
        (w, max_dim)
    };
    // Separable box filter with exact partial-pixel coverage, accumulated in
    // f64 so integer-factor reductions preserve the mean to rounding noise.
    let horiz = box_resample_rows(&map.values, map.width, map.height, new_w);
    let transposed = transpose(&horiz, new_w, map.height);
    let vert = box_resample_rows(&transposed, map.height, new_w, new_h);
    let values_f64 = transpose(&vert, new_h, new_w);
    let values = values_f64.iter().map(|&v| T::from_f64v(v)).collect();
    LuminanceMap::new(new_w, new_h, values)
}

/// Resamples each row of a `w x h` f64-convertible buffer to `new_w` samples
/// with a box filter whose window is the exact source interval of the output
/// pixel.
fn box_resample_rows<T: Scalar>(values: &[T], w: usize, h: usize, new_w: usize) -> Vec<f64> {
    let scale = w as f64 / new_w as f64;
    let mut out = vec![0f64; new_w * h];
    for y in 0..h {
        let row = &values[y * w..(y + 1) * w];
        let out_row = &mut out[y * new_w..(y + 1) * new_w];
        for (j, slot) in out_row.iter_mut().enumerate() {
            let lo = j as f64 * scale;
            let hi = (j as f64 + 1.0) * scale;
            let first = lo.floor() as usize;
            let last = ((hi.ceil() as usize).min(w)).max(first + 1);
            let mut acc = 0f64;
            for (i, item) in row.iter().enumerate().take(last).skip(first) {
                let cov_lo = (i as f64).max(lo);
                let cov_hi = ((i + 1) as f64).min(hi);
                let cov = (cov_hi - cov_lo).max(0.0);
                acc += item.to_f64v() * cov;
            }
            *slot = acc / (hi - lo);
        }
    }
    out
}

fn transpose(values: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0f64; values.len()];
    for y in 0..h {
        for x in 0..w {
            out[x * h + y] = values[y * w + x];
        }
    }
    out
}

/// Splits a map into non-overlapping `size x size` tiles, row-major origins;
/// right/bottom remainders are discarded. An undersized map yields no blocks
/// and sets the warning flag.
pub fn tile_blocks<T: Scalar>(
    map: &LuminanceMap<T>,
    size: usize,
    label: HdrClass,
    source_id: u32,
) -> Tiling<T> {
    if map.width < size || map.height < size {
        return Tiling {
            blocks: Vec::new(),
            undersized: true,
        };
    }
    let tiles_x = map.width / size;
    let tiles_y = map.height / size;
    let mut blocks = Vec::with_capacity(tiles_x * tiles_y);
    for ty in 0..tiles_y {
        for tx in 0..tiles_x {
            let mut pixels = Vec::with_capacity(size * size);
            for dy in 0..size {
                let row_start = (ty * size + dy) * map.width + tx * size;
                pixels.extend_from_slice(&map.values[row_start..row_start + size]);
            }
            blocks.push(Block {
                pixels,
                label,
                source_id,
                origin: ((ty * size) as u32, (tx * size) as u32),
            });
        }
    }
    Tiling {
        blocks,
        undersized: false,
    }
}

/// Debevec-style exposure fusion of a bracketed 8-bit stack.
///
/// Per pixel and channel: codes are linearized as `(z/255)^gamma`, weighted by
/// the hat function `w(z) = 1 - |2 z/255 - 1|`, and each frame's contribution
/// is divided by its exposure time; the radiance estimate is the weighted
/// mean. Pixels whose weights vanish in every frame (all codes 0 or 255) fall
/// back to the mid-exposure frame's `lin(z)/t` so the 1/t scale property holds
/// everywhere.
pub fn fuse_exposures<T: Scalar>(
    stack: &[LdrImage],
    exposure_times: &[f64],
    gamma: f64,
) -> Result<HdrImage<T>> {
    if stack.len() < 2 {
        return Err(Error::Parameter(format!(
            "exposure fusion needs >= 2 frames, got {}",
            stack.len()
        )));
    }
    if stack.len() != exposure_times.len() {
        return Err(Error::Parameter(format!(
            "{} frames but {} exposure times",
            stack.len(),
            exposure_times.len()
        )));
    }
    let (w, h) = (stack[0].width, stack[0].height);
    for (i, frame) in stack.iter().enumerate() {
        if frame.width != w || frame.height != h {
            return Err(Error::Shape(format!(
                "frame {i} is {}x{}, expected {w}x{h}",
                frame.width, frame.height
            )));
        }
    }
    for (i, &t) in exposure_times.iter().enumerate() {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Parameter(format!(
                "exposure time {i} must be positive and finite, got {t}"
            )));
        }
    }
    if !(gamma > 0.0) {
        return Err(Error::Parameter(format!("gamma must be > 0, got {gamma}")));
    }

    // Mid exposure by time order, used only for fully saturated pixels.
    let mut order: Vec<usize> = (0..stack.len()).collect();
    order.sort_by(|&a, &b| exposure_times[a].total_cmp(&exposure_times[b]));
    let mid = order[order.len() / 2];

    // 256-entry lookup tables for the weight and linearization curves.
    let lin: Vec<f64> = (0..256).map(|z| (z as f64 / 255.0).powf(gamma)).collect();
    let wgt: Vec<f64> = (0..256)
        .map(|z| 1.0 - (2.0 * z as f64 / 255.0 - 1.0).abs())
        .collect();

    let mut data = Vec::with_capacity(3 * w * h);
    for i in 0..3 * w * h {
        let mut num = 0f64;
        let mut den = 0f64;
        for (frame, &t) in stack.iter().zip(exposure_times) {
            let z = frame.data[i] as usize;
            num += wgt[z] * lin[z] / t;
            den += wgt[z];
        }
        let v = if den > 0.0 {
            num / den
        } else {
            lin[stack[mid].data[i] as usize] / exposure_times[mid]
        };
        data.push(T::from_f64v(v));
    }
    HdrImage::new(w, h, data)
}
