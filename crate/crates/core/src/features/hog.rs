//! Histogram-of-oriented-gradients descriptor, 324 dimensions.
//!
//! Construction on a 64x64 block:
//! 1. centered-difference gradients (`[-1, 0, 1]`) with border samples
//!    clamped to the block edge;
//! 2. gradient magnitude votes into 9 unsigned orientation bins over
//!    `[0, pi)`, no interpolation;
//! 3. cell histograms over 16x16-pixel cells (a 4x4 cell grid);
//! 4. 2x2-cell blocks at one-cell stride (3x3 = 9 blocks), each L2-Hys
//!    normalized (L2 norm, clip at 0.2, renormalize);
//! 5. concatenation: 9 blocks x 4 cells x 9 bins = 324 values.

use super::FeatureVector;
use crate::pipeline::BLOCK_SIZE;
use crate::Result;

const CELL: usize = 16;
const CELLS: usize = BLOCK_SIZE / CELL; // 4x4 cell grid
const BINS: usize = 9;
const CLIP: f64 = 0.2;
const NORM_EPS: f64 = 1e-12;

/// Raw 324-value HOG; input must already be a validated 64x64 f64 block.
pub(super) fn hog_f64(p: &[f64]) -> Vec<f64> {
    let n = BLOCK_SIZE;
    let at = |y: usize, x: usize| p[y * n + x];
    let clamp = |v: isize| v.clamp(0, n as isize - 1) as usize;

    // Per-cell orientation histograms.
    let mut cells = [[0.0f64; BINS]; CELLS * CELLS];
    for y in 0..n {
        for x in 0..n {
            let gx = at(y, clamp(x as isize + 1)) - at(y, clamp(x as isize - 1));
            let gy = at(clamp(y as isize + 1), x) - at(clamp(y as isize - 1), x);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            // Unsigned orientation in [0, pi).
            let mut theta = gy.atan2(gx);
            if theta < 0.0 {
                theta += std::f64::consts::PI;
            }
            if theta >= std::f64::consts::PI {
                theta = 0.0;
            }
            let bin = ((theta / std::f64::consts::PI * BINS as f64) as usize).min(BINS - 1);
            cells[(y / CELL) * CELLS + x / CELL][bin] += mag;
        }
    }

    // 2x2-cell blocks at one-cell stride, L2-Hys normalized.
    let mut out = Vec::with_capacity(324);
    for by in 0..CELLS - 1 {
        for bx in 0..CELLS - 1 {
            let mut v = Vec::with_capacity(4 * BINS);
            for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                v.extend_from_slice(&cells[(by + dy) * CELLS + (bx + dx)]);
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > NORM_EPS {
                for a in &mut v {
                    *a = (*a / norm).min(CLIP);
                }
                let renorm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                if renorm > NORM_EPS {
                    for a in &mut v {
                        *a /= renorm;
                    }
                }
            }
            out.extend(v);
        }
    }
    out
}

/// 324-dimensional HOG descriptor of a 64x64 block.
pub fn hog(pixels: &[f32]) -> Result<FeatureVector> {
    super::extract(super::FeatureKind::Hog, pixels)
}

#[cfg(test)]
mod tests {
    use super::super::{extract, FeatureKind};
    use super::*;

    fn block_from(f: impl Fn(usize, usize) -> f32) -> Vec<f32> {
        (0..BLOCK_SIZE * BLOCK_SIZE)
            .map(|i| f(i / BLOCK_SIZE, i % BLOCK_SIZE))
            .collect()
    }

    #[test]
    fn has_324_dimensions() {
        let b = block_from(|y, x| ((x * 7 + y * 13) % 31) as f32);
        assert_eq!(hog(&b).unwrap().values.len(), 324);
    }

    #[test]
    fn constant_block_gives_zero_descriptor() {
        let b = block_from(|_, _| 3.25);
        let f = hog(&b).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_step_edge_concentrates_in_the_horizontal_gradient_bin() {
        // Left half 0, right half 1: gy = 0 everywhere, gx >= 0, so every
        // vote has orientation atan2(0, gx) = 0 -> bin 0.
        let b = block_from(|_, x| if x < 32 { 0.0 } else { 1.0 });
        let f = hog(&b).unwrap();
        let mut bin_energy = [0.0f64; BINS];
        for (i, &v) in f.values.iter().enumerate() {
            bin_energy[i % BINS] += v;
        }
        assert!(bin_energy[0] > 0.0, "edge produced no energy at all");
        for (bin, &e) in bin_energy.iter().enumerate().skip(1) {
            assert_eq!(e, 0.0, "unexpected energy in orientation bin {bin}");
        }
    }

    #[test]
    fn invariant_to_adding_a_constant() {
        // Quarter-integer pixels shifted by a power of two stay exactly
        // representable, so the centered differences are bit-identical and
        // the invariance holds exactly rather than up to rounding noise.
        let b = block_from(|y, x| ((x * 3 + y * y) % 17) as f32 * 0.25);
        let shifted: Vec<f32> = b.iter().map(|v| v + 64.0).collect();
        let f1 = extract(FeatureKind::Hog, &b).unwrap();
        let f2 = extract(FeatureKind::Hog, &shifted).unwrap();
        for (a, z) in f1.values.iter().zip(&f2.values) {
            assert!((a - z).abs() < 1e-12);
        }
    }

    #[test]
    fn nonzero_blocks_normalize_to_unit_length() {
        let b = block_from(|y, x| ((x ^ y) % 23) as f32);
        let f = hog(&b).unwrap();
        for block in f.values.chunks(4 * BINS) {
            let norm: f64 = block.iter().map(|v| v * v).sum::<f64>().sqrt();
            // L2-Hys ends with a renormalization, so each block is either
            // all-zero (flat region) or unit length.
            assert!(
                norm == 0.0 || (norm - 1.0).abs() < 1e-9,
                "block norm {norm}"
            );
        }
    }
}
