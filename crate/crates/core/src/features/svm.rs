//! Linear soft-margin SVM trained with seeded Pegasos subgradient descent,
//! plus 5-fold cross-validated grid search over the regularization
//! parameter C.
//!
//! The hinge objective `lambda/2 ||w||^2 + mean_i max(0, 1 - y_i w.x_i)`
//! with `lambda = 1 / (C n)` is minimized over features augmented with a
//! constant-1 coordinate, so the bias is learned (and lightly regularized)
//! as one more weight. The returned model is the average of the iterates,
//! which carries the usual Pegasos convergence guarantee and makes the
//! empirical objective trajectory stable enough to test. Classes map to
//! the signs mHDR = -1, iHDR = +1, so a positive margin reads as an iHDR
//! score.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::pipeline::HdrClass;
use crate::{Error, Result};

/// Regularization grid searched by [`svm_train`], ascending.
pub const SVM_C_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

const FOLDS: usize = 5;
const MIN_STEPS: usize = 4_000;
const STEPS_PER_EXAMPLE: usize = 10;

/// Linear SVM with the per-dimension standardization learned at training
/// time baked in.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    /// One weight per feature dimension (in standardized space).
    pub weights: Vec<f64>,
    pub bias: f64,
    /// The C the grid search selected.
    pub c: f64,
    /// Per-dimension training mean subtracted before scoring.
    pub mean: Vec<f64>,
    /// Per-dimension training standard deviation divided out before
    /// scoring; zero-variance dimensions store 1 so they pass through.
    pub std: Vec<f64>,
}

impl SvmModel {
    /// Class decision and raw margin `w.x + b` for one feature vector.
    /// Positive margins vote iHDR, so the margin doubles as an iHDR score
    /// for ROC construction.
    pub fn predict(&self, feature: &[f64]) -> Result<(HdrClass, f64)> {
        if feature.len() != self.weights.len() {
            return Err(Error::Data(format!(
                "feature has {} dimensions, model expects {}",
                feature.len(),
                self.weights.len()
            )));
        }
        let mut margin = self.bias;
        for ((&v, &w), (&m, &s)) in feature
            .iter()
            .zip(&self.weights)
            .zip(self.mean.iter().zip(&self.std))
        {
            margin += w * ((v - m) / s);
        }
        if !margin.is_finite() {
            return Err(Error::Data("non-finite SVM margin".into()));
        }
        let class = if margin >= 0.0 { HdrClass::Ihdr } else { HdrClass::Mhdr };
        Ok((class, margin))
    }
}

fn signed_label(class: HdrClass) -> f64 {
    match class {
        HdrClass::Mhdr => -1.0,
        HdrClass::Ihdr => 1.0,
    }
}

/// Per-dimension mean and standard deviation (population), with zero
/// deviations replaced by 1.
fn standardization(features: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
    let dims = features[0].len();
    let n = features.len() as f64;
    let mut mean = vec![0.0f64; dims];
    for row in features {
        for (m, &v) in mean.iter_mut().zip(*row) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0f64; dims];
    for row in features {
        for ((s, &v), &m) in var.iter_mut().zip(*row).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    let std = var
        .iter()
        .map(|&v| {
            let s = v.sqrt();
            if s > 0.0 { s } else { 1.0 }
        })
        .collect();
    (mean, std)
}

fn apply_standardization(row: &[f64], mean: &[f64], std: &[f64]) -> Vec<f64> {
    row.iter()
        .zip(mean.iter().zip(std))
        .map(|(&v, (&m, &s))| (v - m) / s)
        .collect()
}

/// Hinge objective `lambda/2 ||w||^2 + mean hinge` of an augmented weight
/// vector on augmented rows.
fn objective(w: &[f64], xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> f64 {
    let reg: f64 = 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
    let hinge: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| (1.0 - y * dot(w, x)).max(0.0))
        .sum::<f64>()
        / xs.len() as f64;
    reg + hinge
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Pegasos on augmented rows. Returns the averaged iterate; when
/// `checkpoints` is non-empty, also records the objective of the running
/// average after each listed step count (1-based, ascending).
fn pegasos(
    xs: &[Vec<f64>],
    ys: &[f64],
    lambda: f64,
    steps: usize,
    seed: u64,
    checkpoints: &[usize],
) -> (Vec<f64>, Vec<f64>) {
    let dims = xs[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = vec![0.0f64; dims];
    let mut sum = vec![0.0f64; dims];
    let mut trace = Vec::with_capacity(checkpoints.len());
    for t in 1..=steps {
        let i = rng.gen_range(0..xs.len());
        let eta = 1.0 / (lambda * t as f64);
        let decay = 1.0 - eta * lambda; // = 1 - 1/t
        let active = ys[i] * dot(&w, &xs[i]) < 1.0;
        for (k, wk) in w.iter_mut().enumerate() {
            *wk *= decay;
            if active {
                *wk += eta * ys[i] * xs[i][k];
            }
        }
        for (s, &wk) in sum.iter_mut().zip(&w) {
            *s += wk;
        }
        if checkpoints.contains(&t) {
            let avg: Vec<f64> = sum.iter().map(|&s| s / t as f64).collect();
            trace.push(objective(&avg, xs, ys, lambda));
        }
    }
    let avg = sum.iter().map(|&s| s / steps as f64).collect();
    (avg, trace)
}

/// Augments standardized rows with a trailing constant-1 coordinate.
fn augment(rows: &[&[f64]], mean: &[f64], std: &[f64]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|row| {
            let mut x = apply_standardization(row, mean, std);
            x.push(1.0);
            x
        })
        .collect()
}

/// Trains on the given subset (standardizing from that subset alone) and
/// returns the augmented weight vector plus the standardization.
fn train_subset(
    rows: &[&[f64]],
    ys: &[f64],
    c: f64,
    seed: u64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (mean, std) = standardization(rows);
    let xs = augment(rows, &mean, &std);
    let n = rows.len();
    let lambda = 1.0 / (c * n as f64);
    let steps = MIN_STEPS.max(STEPS_PER_EXAMPLE * n);
    let (w, _) = pegasos(&xs, ys, lambda, steps, seed, &[]);
    (w, mean, std)
}

fn validate_inputs(features: &[Vec<f64>], labels: &[HdrClass]) -> Result<usize> {
    if features.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if features.is_empty() {
        return Err(Error::Data("no training examples".into()));
    }
    let dims = features[0].len();
    if dims == 0 {
        return Err(Error::Data("zero-dimensional features".into()));
    }
    for (i, row) in features.iter().enumerate() {
        if row.len() != dims {
            return Err(Error::Data(format!(
                "feature row {i} has {} dimensions, expected {dims}",
                row.len()
            )));
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value {v} in feature row {i}")));
        }
    }
    for class in HdrClass::ALL {
        let count = labels.iter().filter(|&&l| l == class).count();
        if count < 2 {
            return Err(Error::Data(format!(
                "need at least 2 {} examples, found {count}",
                class.name()
            )));
        }
    }
    Ok(dims)
}

/// Trains a linear SVM, choosing C from `grid` by 5-fold cross-validated
/// accuracy (ties keep the smallest C) and refitting on all data. The
/// same `seed` drives the fold shuffle and every Pegasos run, so equal
/// inputs produce an identical model.
pub fn svm_train(features: &[Vec<f64>], labels: &[HdrClass], grid: &[f64], seed: u64) -> Result<SvmModel> {
    validate_inputs(features, labels)?;
    if grid.is_empty() {
        return Err(Error::Data("empty C grid".into()));
    }
    if let Some(c) = grid.iter().find(|c| !c.is_finite() || **c <= 0.0) {
        return Err(Error::Data(format!("invalid C value {c} in grid")));
    }
    let n = features.len();
    let ys: Vec<f64> = labels.iter().map(|&l| signed_label(l)).collect();

    // One seeded shuffle defines the folds for every grid point.
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x666f_6c64); // fold stream
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }

    let folds = FOLDS.min(n);
    let mut best: Option<(f64, f64)> = None; // (accuracy, c)
    for &c in grid {
        let mut correct = 0usize;
        let mut total = 0usize;
        for fold in 0..folds {
            let lo = fold * n / folds;
            let hi = (fold + 1) * n / folds;
            let held: &[usize] = &order[lo..hi];
            if held.is_empty() {
                continue;
            }
            let train_idx: Vec<usize> = order[..lo].iter().chain(&order[hi..]).copied().collect();
            let rows: Vec<&[f64]> = train_idx.iter().map(|&i| features[i].as_slice()).collect();
            let fold_ys: Vec<f64> = train_idx.iter().map(|&i| ys[i]).collect();
            if fold_ys.iter().all(|&y| y > 0.0) || fold_ys.iter().all(|&y| y < 0.0) {
                // Degenerate fold: every held-out example counts as wrong
                // rather than skewing the mean with an untrainable split.
                total += held.len();
                continue;
            }
            let (w, mean, std) = train_subset(&rows, &fold_ys, c, seed);
            for &i in held {
                let mut x = apply_standardization(&features[i], &mean, &std);
                x.push(1.0);
                let margin = dot(&w, &x);
                let predicted = if margin >= 0.0 { 1.0 } else { -1.0 };
                if predicted == ys[i] {
                    correct += 1;
                }
                total += 1;
            }
        }
        let accuracy = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
        // Strictly greater replaces, so grid order (ascending) breaks ties
        // toward the smaller, more regularized C.
        if best.map_or(true, |(a, _)| accuracy > a) {
            best = Some((accuracy, c));
        }
    }
    let (_, c) = best.expect("non-empty grid always yields a candidate");

    let rows: Vec<&[f64]> = features.iter().map(|r| r.as_slice()).collect();
    let (mut w, mean, std) = train_subset(&rows, &ys, c, seed);
    let bias = w.pop().expect("augmented weights include a bias");
    Ok(SvmModel { weights: w, bias, c, mean, std })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two well-separated Gaussian-ish blobs in `dims` dimensions.
    fn blobs(n_per_class: usize, dims: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<HdrClass>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for &(class, center) in
            &[(HdrClass::Mhdr, -2.0f64), (HdrClass::Ihdr, 2.0f64)]
        {
            for _ in 0..n_per_class {
                let row: Vec<f64> = (0..dims)
                    .map(|d| center * ((d == 0) as i32 as f64) + rng.gen_range(-0.8..0.8))
                    .collect();
                features.push(row);
                labels.push(class);
            }
        }
        (features, labels)
    }

    #[test]
    fn separable_blobs_train_to_full_accuracy() {
        let (features, labels) = blobs(40, 3, 11);
        let model = svm_train(&features, &labels, &SVM_C_GRID, 7).unwrap();
        let correct = features
            .iter()
            .zip(&labels)
            .filter(|(f, &l)| model.predict(f).unwrap().0 == l)
            .count();
        assert_eq!(correct, features.len());
        assert_eq!(model.weights.len(), 3);
        assert!(SVM_C_GRID.contains(&model.c));
    }

    #[test]
    fn same_inputs_and_seed_give_an_identical_model() {
        let (features, labels) = blobs(25, 4, 3);
        let a = svm_train(&features, &labels, &SVM_C_GRID, 99).unwrap();
        let b = svm_train(&features, &labels, &SVM_C_GRID, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn label_flip_negates_the_separator() {
        let (features, labels) = blobs(30, 3, 5);
        let flipped: Vec<HdrClass> = labels
            .iter()
            .map(|&l| if l == HdrClass::Mhdr { HdrClass::Ihdr } else { HdrClass::Mhdr })
            .collect();
        let a = svm_train(&features, &labels, &SVM_C_GRID, 21).unwrap();
        let b = svm_train(&features, &flipped, &SVM_C_GRID, 21).unwrap();
        assert_eq!(a.c, b.c, "grid search is label-flip symmetric");
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            assert!((wa + wb).abs() < 1e-3, "{wa} vs {wb}");
        }
        assert!((a.bias + b.bias).abs() < 1e-3);
    }

    #[test]
    fn margin_matches_a_hand_evaluated_dot_product() {
        let (features, labels) = blobs(20, 5, 9);
        let model = svm_train(&features, &labels, &SVM_C_GRID, 13).unwrap();
        let probe = &features[7];
        let mut expected = model.bias;
        for k in 0..5 {
            expected += model.weights[k] * ((probe[k] - model.mean[k]) / model.std[k]);
        }
        let (_, margin) = model.predict(probe).unwrap();
        assert!((margin - expected).abs() < 1e-12);
        // Mirroring the probe through the separator flips the margin sign.
        let (class_pos, m_pos) = model.predict(&vec![2.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let (class_neg, m_neg) = model.predict(&vec![-2.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(class_pos, HdrClass::Ihdr);
        assert_eq!(class_neg, HdrClass::Mhdr);
        assert!(m_pos > 0.0 && m_neg < 0.0);
    }

    #[test]
    fn single_class_input_is_rejected() {
        let features = vec![vec![0.0, 1.0]; 6];
        let labels = vec![HdrClass::Ihdr; 6];
        assert!(svm_train(&features, &labels, &SVM_C_GRID, 1).is_err());
        let one_stray = {
            let mut l = labels.clone();
            l[0] = HdrClass::Mhdr;
            l
        };
        // A lone example of a class is still below the 2-per-class floor.
        assert!(svm_train(&features, &one_stray, &SVM_C_GRID, 1).is_err());
    }

    #[test]
    fn mismatched_and_non_finite_rows_are_rejected() {
        let features = vec![vec![0.0, 1.0], vec![1.0], vec![0.5, 0.5], vec![0.1, 0.9]];
        let labels = vec![HdrClass::Mhdr, HdrClass::Mhdr, HdrClass::Ihdr, HdrClass::Ihdr];
        assert!(svm_train(&features, &labels, &SVM_C_GRID, 1).is_err());
        let bad = vec![vec![0.0, 1.0], vec![f64::NAN, 0.0], vec![0.5, 0.5], vec![0.1, 0.9]];
        assert!(svm_train(&bad, &labels, &SVM_C_GRID, 1).is_err());
    }

    #[test]
    fn averaged_iterate_objective_is_non_increasing() {
        let (features, labels) = blobs(40, 3, 17);
        let ys: Vec<f64> = labels.iter().map(|&l| signed_label(l)).collect();
        let rows: Vec<&[f64]> = features.iter().map(|r| r.as_slice()).collect();
        let (mean, std) = standardization(&rows);
        let xs = augment(&rows, &mean, &std);
        let lambda = 1.0 / (1.0 * xs.len() as f64);
        let steps = MIN_STEPS;
        let checkpoints = [steps / 8, steps / 4, steps / 2, steps];
        let (_, trace) = pegasos(&xs, &ys, lambda, steps, 23, &checkpoints);
        assert_eq!(trace.len(), checkpoints.len());
        for pair in trace.windows(2) {
            assert!(
                pair[1] <= pair[0] * (1.0 + 1e-9),
                "objective rose from {} to {}",
                pair[0],
                pair[1]
            );
        }
    }
}
