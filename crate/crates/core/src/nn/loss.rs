//! Softmax cross-entropy loss with its analytic gradient.

use super::Tensor;
use crate::{Error, Result, Scalar};

/// Row-wise numerically stable softmax.
pub fn softmax_rows<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, k) = logits.dims2()?;
    let mut out = Tensor::zeros(vec![n, k]);
    for s in 0..n {
        let row = &logits.data()[s * k..(s + 1) * k];
        let max = row.iter().copied().fold(row[0], T::max);
        let mut denom = T::zero();
        for (j, &v) in row.iter().enumerate() {
            let e = (v - max).exp();
            out.data_mut()[s * k + j] = e;
            denom += e;
        }
        for v in &mut out.data_mut()[s * k..(s + 1) * k] {
            *v /= denom;
        }
    }
    Ok(out)
}

/// Mean negative log-likelihood of the labels under row-wise softmax.
///
/// Returns `(loss, grad)` with `grad = (softmax - onehot) / N`, the exact
/// gradient of the mean loss with respect to the logits.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(T, Tensor<T>)> {
    let (n, k) = logits.dims2()?;
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{n} logit rows but {} labels",
            labels.len()
        )));
    }
    for (i, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(Error::Data(format!(
                "label {label} at row {i} out of range for {k} classes"
            )));
        }
    }
    let probs = softmax_rows(logits)?;
    let inv_n = T::one() / T::from_f64v(n as f64);
    let mut loss = T::zero();
    let mut grad = probs.clone();
    for (s, &label) in labels.iter().enumerate() {
        let p = probs.data()[s * k + label];
        // Softmax output is > 0 for finite logits, so ln is safe.
        loss -= p.ln();
        grad.data_mut()[s * k + label] -= T::one();
    }
    grad.scale(inv_n);
    Ok((loss * inv_n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_give_ln2() {
        let logits = Tensor::new(vec![1, 2], vec![0.0f64, 0.0]).unwrap();
        let (loss, grad) = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((grad.data()[0] - (-0.5)).abs() < 1e-12);
        assert!((grad.data()[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_logits_give_near_zero_loss() {
        let logits = Tensor::new(vec![1, 2], vec![20.0f64, -20.0]).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert!(loss >= 0.0 && loss < 1e-12, "loss {loss}");
    }

    #[test]
    fn softmax_rows_sum_to_one_and_loss_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let logits = Tensor::<f64>::randn(vec![17, 2], 30.0, &mut rng);
        let probs = softmax_rows(&logits).unwrap();
        for s in 0..17 {
            let sum: f64 = probs.data()[2 * s..2 * s + 2].iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
        let labels: Vec<usize> = (0..17).map(|i| i % 2).collect();
        let (loss, _) = softmax_cross_entropy(&logits, &labels).unwrap();
        assert!(loss >= 0.0);
    }

    #[test]
    fn invalid_labels_rejected() {
        let logits = Tensor::zeros(vec![2, 2]);
        assert!(softmax_cross_entropy::<f32>(&logits, &[0, 2]).is_err());
        assert!(softmax_cross_entropy::<f32>(&logits, &[0]).is_err());
    }
}
