//! Image containers and file codecs.
//!
//! Three formats are supported, chosen to keep the parser surface small and
//! auditable: Radiance RGBE (`.hdr`) and PFM for floating-point radiance maps,
//! and binary PPM (P6, maxval 255) for 8-bit LDR images. Decoders are strict:
//! malformed input produces a [`crate::Error::Format`] naming the byte offset
//! where the problem was detected.

mod pfm;
mod ppm;
mod rgbe;

pub use pfm::{decode_pfm, encode_pfm};
pub use ppm::{decode_ppm, encode_ppm};
pub use rgbe::{decode_rgbe, encode_rgbe};

use crate::{Error, Result, Scalar};

/// Linear floating-point RGB radiance map, row-major interleaved.
///
/// Radiance is relative (unitless) and every component is finite and `>= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct HdrImage<T> {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB triplets; length `3 * width * height`.
    pub data: Vec<T>,
}

impl<T: Scalar> HdrImage<T> {
    /// Builds an image after checking the container invariants.
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!(
                "image dimensions must be >= 1, got {width}x{height}"
            )));
        }
        if data.len() != 3 * width * height {
            return Err(Error::Shape(format!(
                "pixel buffer length {} != 3*{width}*{height}",
                data.len()
            )));
        }
        for (i, &v) in data.iter().enumerate() {
            if !v.is_finite() || v < T::zero() {
                return Err(Error::Data(format!(
                    "radiance component {i} is {v}; must be finite and >= 0"
                )));
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Constant-colored image.
    pub fn filled(width: usize, height: usize, rgb: [T; 3]) -> Self {
        let mut data = Vec::with_capacity(3 * width * height);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [T; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [T; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Converts the component type (e.g. `f32` storage to `f64` math).
    pub fn cast<U: Scalar>(&self) -> HdrImage<U> {
        HdrImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| U::from_f64v(v.to_f64v())).collect(),
        }
    }
}

/// 8-bit display-referred RGB image, row-major interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LdrImage {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB; length `3 * width * height`.
    pub data: Vec<u8>,
}

impl LdrImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!(
                "image dimensions must be >= 1, got {width}x{height}"
            )));
        }
        if data.len() != 3 * width * height {
            return Err(Error::Shape(format!(
                "pixel buffer length {} != 3*{width}*{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(3 * width * height);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Reads a whole file and decodes by extension (`.hdr`, `.pfm`).
pub fn read_hdr_file(path: &std::path::Path) -> Result<HdrImage<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("hdr") | Some("rgbe") => decode_rgbe(&bytes),
        Some("pfm") => decode_pfm(&bytes),
        other => Err(Error::Data(format!(
            "{}: unsupported HDR extension {:?} (expected .hdr or .pfm)",
            path.display(),
            other
        ))),
    }
}

/// Reads a binary PPM file.
pub fn read_ldr_file(path: &std::path::Path) -> Result<LdrImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes)
}
