//! Uniform local-binary-pattern histogram descriptor, 944 dimensions.
//!
//! Radius-1, 8-neighbor LBP codes (bit set when the neighbor is strictly
//! greater than the center), reduced to the 59-bin uniform-pattern
//! alphabet: the 58 codes with at most two circular 0/1 transitions each
//! get a bin, everything else shares the final bin. Histograms are taken
//! over a 4x4 grid of 16x16-pixel regions, each restricted to its own
//! 14x14 interior so no code straddles a region boundary;
//! 16 regions x 59 bins = 944 values, each region summing to 196.

use super::FeatureVector;
use crate::pipeline::BLOCK_SIZE;
use crate::Result;

const REGION: usize = 16;
const GRID: usize = BLOCK_SIZE / REGION; // 4x4 regions
const UNIFORM_BINS: usize = 59;

/// Neighbor offsets, clockwise from the top-left; bit i of the code is
/// neighbor i.
const NEIGHBORS: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
];

/// Number of circular 0/1 transitions in an 8-bit pattern.
fn transitions(code: u8) -> u32 {
    let rotated = code.rotate_right(1);
    (code ^ rotated).count_ones()
}

/// Maps each of the 256 codes to its bin: uniform codes in ascending order
/// take bins 0..58, all non-uniform codes share bin 58.
fn bin_table() -> [usize; 256] {
    let mut table = [UNIFORM_BINS - 1; 256];
    let mut next = 0;
    for code in 0..=255u8 {
        if transitions(code) <= 2 {
            table[code as usize] = next;
            next += 1;
        }
    }
    debug_assert_eq!(next, UNIFORM_BINS - 1);
    table
}

/// Raw 944-value uniform-LBP histogram; input must already be a validated
/// 64x64 f64 block.
pub(super) fn lbp_f64(p: &[f64]) -> Vec<f64> {
    let n = BLOCK_SIZE;
    let at = |y: usize, x: usize| p[y * n + x];
    let table = bin_table();
    let mut out = vec![0.0f64; GRID * GRID * UNIFORM_BINS];
    for ry in 0..GRID {
        for rx in 0..GRID {
            let base = (ry * GRID + rx) * UNIFORM_BINS;
            // Interior of the region: full 8-neighborhoods only.
            for y in ry * REGION + 1..(ry + 1) * REGION - 1 {
                for x in rx * REGION + 1..(rx + 1) * REGION - 1 {
                    let c = at(y, x);
                    let mut code = 0u8;
                    for (i, (dy, dx)) in NEIGHBORS.iter().enumerate() {
                        let v = at((y as isize + dy) as usize, (x as isize + dx) as usize);
                        if v > c {
                            code |= 1 << i;
                        }
                    }
                    out[base + table[code as usize]] += 1.0;
                }
            }
        }
    }
    out
}

/// 944-dimensional uniform-LBP descriptor of a 64x64 block.
pub fn lbp_uniform(pixels: &[f32]) -> Result<FeatureVector> {
    super::extract(super::FeatureKind::Lbp, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block_from(f: impl Fn(usize, usize) -> f32) -> Vec<f32> {
        (0..BLOCK_SIZE * BLOCK_SIZE)
            .map(|i| f(i / BLOCK_SIZE, i % BLOCK_SIZE))
            .collect()
    }

    #[test]
    fn uniform_alphabet_has_58_codes() {
        let count = (0..=255u8).filter(|&c| transitions(c) <= 2).count();
        assert_eq!(count, 58);
        // Spot checks: 0 and 255 have zero transitions; 0b00001111 has two;
        // 0b01010101 has eight.
        assert_eq!(transitions(0), 0);
        assert_eq!(transitions(255), 0);
        assert_eq!(transitions(0b0000_1111), 2);
        assert_eq!(transitions(0b0101_0101), 8);
    }

    #[test]
    fn has_944_dimensions() {
        let b = block_from(|y, x| ((x * 5 + y * 11) % 29) as f32);
        assert_eq!(lbp_uniform(&b).unwrap().values.len(), 944);
    }

    #[test]
    fn each_region_histogram_sums_to_interior_count() {
        let b = block_from(|y, x| ((x * x + 3 * y) % 41) as f32);
        let f = lbp_uniform(&b).unwrap();
        for (r, hist) in f.values.chunks(UNIFORM_BINS).enumerate() {
            let sum: f64 = hist.iter().sum();
            assert_eq!(sum, 196.0, "region {r} sums to {sum}, not 14^2");
        }
    }

    #[test]
    fn constant_block_puts_all_mass_in_the_zero_code_bin() {
        let b = block_from(|_, _| 1.5);
        let f = lbp_uniform(&b).unwrap();
        let zero_bin = bin_table()[0];
        for hist in f.values.chunks(UNIFORM_BINS) {
            for (bin, &v) in hist.iter().enumerate() {
                if bin == zero_bin {
                    assert_eq!(v, 196.0);
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn invariant_to_strictly_monotone_remaps() {
        let b = block_from(|y, x| ((x * 7 + y * 3) % 13) as f32 - 6.0);
        let cubed: Vec<f32> = b.iter().map(|v| v * v * v).collect(); // strictly increasing on R
        let f1 = lbp_uniform(&b).unwrap();
        let f2 = lbp_uniform(&cubed).unwrap();
        assert_eq!(f1.values, f2.values);
    }
}
