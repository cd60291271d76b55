//! Second-order SPAM (subtractive pixel adjacency matrix) descriptor,
//! 686 dimensions.
//!
//! The block is min–max quantized to 8 bits, difference arrays are formed
//! in eight directions and truncated to [-3, 3], and second-order
//! transition probabilities Pr(d3 | d1, d2) are estimated per direction
//! from triples of successive differences. The four horizontal/vertical
//! directions average to one 343-value tensor and the four diagonals to
//! another; concatenated they give 2 * 7^3 = 686 values. Rows of each
//! conditional tensor sum to one; rows with no observations fall back to
//! the uniform distribution, and a constant block (no dynamic range to
//! quantize) yields the all-uniform model by convention.

use crate::pipeline::BLOCK_SIZE;

const T: i32 = 3;
const LEVELS: usize = 2 * T as usize + 1; // 7 difference values
const TENSOR: usize = LEVELS * LEVELS * LEVELS; // 343 per direction group

/// (dy, dx) steps: right, left, down, up.
const HV_DIRECTIONS: [(isize, isize); 4] = [(0, 1), (0, -1), (1, 0), (-1, 0)];
/// (dy, dx) steps: down-right, up-left, up-right, down-left.
const DIAG_DIRECTIONS: [(isize, isize); 4] = [(1, 1), (-1, -1), (-1, 1), (1, -1)];

/// Flat index of the (d1, d2, d3) cell, each component in [-3, 3].
fn idx(d1: i32, d2: i32, d3: i32) -> usize {
    (((d1 + T) * LEVELS as i32 + (d2 + T)) * LEVELS as i32 + (d3 + T)) as usize
}

/// Min–max quantization to integers 0..=255. Returns None when the block is
/// constant (zero dynamic range).
fn quantize(p: &[f64]) -> Option<Vec<i32>> {
    let min = p.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max <= min {
        return None;
    }
    let scale = 255.0 / (max - min);
    Some(p.iter().map(|&v| ((v - min) * scale).round() as i32).collect())
}

/// Transition-probability tensor for one direction, rows normalized;
/// unobserved (d1, d2) rows are uniform.
fn direction_tensor(q: &[i32], dy: isize, dx: isize) -> Vec<f64> {
    let n = BLOCK_SIZE as isize;
    let at = |y: isize, x: isize| q[(y * n + x) as usize];
    let in_range = |y: isize, x: isize| y >= 0 && y < n && x >= 0 && x < n;
    let diff = |y: isize, x: isize| (at(y, x) - at(y + dy, x + dx)).clamp(-T, T);

    let mut counts = vec![0u64; TENSOR];
    for y in 0..n {
        for x in 0..n {
            // A triple needs pixels out to (y + 3dy, x + 3dx).
            if !in_range(y + 3 * dy, x + 3 * dx) {
                continue;
            }
            let d1 = diff(y, x);
            let d2 = diff(y + dy, x + dx);
            let d3 = diff(y + 2 * dy, x + 2 * dx);
            counts[idx(d1, d2, d3)] += 1;
        }
    }

    let mut tensor = vec![0.0f64; TENSOR];
    for row in 0..LEVELS * LEVELS {
        let row_counts = &counts[row * LEVELS..(row + 1) * LEVELS];
        let total: u64 = row_counts.iter().sum();
        let cells = &mut tensor[row * LEVELS..(row + 1) * LEVELS];
        if total == 0 {
            cells.fill(1.0 / LEVELS as f64);
        } else {
            for (cell, &c) in cells.iter_mut().zip(row_counts) {
                *cell = c as f64 / total as f64;
            }
        }
    }
    tensor
}

/// Element-wise mean of the four directional tensors in `dirs`.
fn group_average(q: &[i32], dirs: &[(isize, isize); 4]) -> Vec<f64> {
    let mut avg = vec![0.0f64; TENSOR];
    for &(dy, dx) in dirs {
        for (a, v) in avg.iter_mut().zip(direction_tensor(q, dy, dx)) {
            *a += v / dirs.len() as f64;
        }
    }
    avg
}

/// Raw 686-value SPAM descriptor; input must already be a validated
/// 64x64 f64 block.
pub(super) fn spam_f64(p: &[f64]) -> Vec<f64> {
    let Some(q) = quantize(p) else {
        return vec![1.0 / LEVELS as f64; 2 * TENSOR];
    };
    let mut out = group_average(&q, &HV_DIRECTIONS);
    out.extend(group_average(&q, &DIAG_DIRECTIONS));
    out
}

/// 686-dimensional second-order SPAM descriptor of a 64x64 block.
pub fn spam(pixels: &[f32]) -> crate::Result<super::FeatureVector> {
    super::extract(super::FeatureKind::Spam, pixels)
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
    fn has_686_dimensions() {
        let b = block_from(|y, x| ((x * 13 + y * 7) % 23) as f32);
        assert_eq!(spam(&b).unwrap().values.len(), 686);
    }

    #[test]
    fn conditional_rows_sum_to_one() {
        let b = block_from(|y, x| ((x * x * 3 + y * 17) % 31) as f32);
        let f = spam(&b).unwrap();
        for (half, tensor) in f.values.chunks(TENSOR).enumerate() {
            for row in 0..LEVELS * LEVELS {
                let sum: f64 = tensor[row * LEVELS..(row + 1) * LEVELS].iter().sum();
                assert!(
                    (sum - 1.0).abs() < 1e-12,
                    "group {half} row {row} sums to {sum}"
                );
            }
        }
    }

    #[test]
    fn constant_block_yields_the_uniform_model() {
        let b = block_from(|_, _| 4.25);
        let f = spam(&b).unwrap();
        for &v in &f.values {
            assert_eq!(v, 1.0 / 7.0);
        }
    }

    #[test]
    fn horizontal_ramp_matches_hand_computed_tensor() {
        // X(y, x) = x quantizes to round(255 x / 63): steps of 4 or 5, all
        // truncating to +-3. Rightward differences are all -3, leftward all
        // +3, vertical all 0, and every diagonal inherits the horizontal
        // step, so one (d1, d2) row is observed per direction with all its
        // mass on the matching d3 while the other 48 rows stay uniform.
        //
        // Averaging the groups:
        //   h/v at (-3,-3,-3): (1 + 1/7 + 1/7 + 1/7) / 4 = 5/14  (and at
        //   (3,3,3) by left/right symmetry)
        //   h/v at (0,0,0):    (1/7 + 1/7 + 1 + 1) / 4 = 4/7
        //   h/v at (-3,-3,0):  (0 + 1/7 + 1/7 + 1/7) / 4 = 3/28
        //   diag at (-3,-3,-3) and (3,3,3): (1 + 1/7 + 1 + 1/7) / 4 = 4/7
        //   diag at (0,0,0):   uniform everywhere it is unobserved = 1/7
        let b = block_from(|_, x| x as f32);
        let f = spam(&b).unwrap();
        let (hv, diag) = f.values.split_at(TENSOR);
        let tol = 1e-12;
        assert!((hv[idx(-3, -3, -3)] - 5.0 / 14.0).abs() < tol);
        assert!((hv[idx(3, 3, 3)] - 5.0 / 14.0).abs() < tol);
        assert!((hv[idx(0, 0, 0)] - 4.0 / 7.0).abs() < tol);
        assert!((hv[idx(-3, -3, 0)] - 3.0 / 28.0).abs() < tol);
        assert!((diag[idx(-3, -3, -3)] - 4.0 / 7.0).abs() < tol);
        assert!((diag[idx(3, 3, 3)] - 4.0 / 7.0).abs() < tol);
        assert!((diag[idx(0, 0, 0)] - 1.0 / 7.0).abs() < tol);
        // A row no direction observes stays exactly uniform in both groups.
        for d3 in -3..=3 {
            assert_eq!(hv[idx(1, -2, d3)], 1.0 / 7.0);
            assert_eq!(diag[idx(1, -2, d3)], 1.0 / 7.0);
        }
    }

    #[test]
    fn descriptor_is_invariant_to_affine_intensity_maps() {
        // Min-max quantization cancels positive-affine rescaling; a
        // power-of-two scale keeps the cancellation bit-exact.
        let b = block_from(|y, x| ((x * 5 + y * y) % 37) as f32);
        let scaled: Vec<f32> = b.iter().map(|v| v * 4.0 + 16.0).collect();
        let f1 = spam(&b).unwrap();
        let f2 = spam(&scaled).unwrap();
        for (a, b) in f1.values.iter().zip(&f2.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
