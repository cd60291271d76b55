//! Adam optimizer with bias-corrected moment estimates.

use super::Tensor;
use crate::{Error, Result, Scalar};

/// Standard Adam: `m` and `v` track first and second gradient moments,
/// bias-corrected by `1 - beta^t`, and the update is
/// `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Applies one update to every (parameter, gradient) pair. Pairs must be
    /// passed in the same order on every call; moment buffers are allocated
    /// lazily on the first step.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[&Tensor<T>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!(
                "{} parameter tensors but {} gradient tensors",
                params.len(),
                grads.len()
            )));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::zero(); p.numel()]).collect();
            self.v = params.iter().map(|p| vec![T::zero(); p.numel()]).collect();
        }
        if self.m.len() != params.len() {
            return Err(Error::Shape(format!(
                "optimizer was initialized with {} tensors, got {}",
                self.m.len(),
                params.len()
            )));
        }
        self.t += 1;
        let b1 = T::from_f64v(self.beta1);
        let b2 = T::from_f64v(self.beta2);
        let one = T::one();
        let corr1 = T::from_f64v(1.0 - self.beta1.powi(self.t as i32));
        let corr2 = T::from_f64v(1.0 - self.beta2.powi(self.t as i32));
        let lr = T::from_f64v(self.lr);
        let eps = T::from_f64v(self.eps);

        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(&mut self.v))
        {
            if param.numel() != grad.numel() || param.numel() != m.len() {
                return Err(Error::Shape(format!(
                    "parameter/gradient/moment sizes disagree: {} vs {} vs {}",
                    param.numel(),
                    grad.numel(),
                    m.len()
                )));
            }
            for (i, g) in grad.data().iter().enumerate() {
                if !g.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite gradient component {i}: {g}"
                    )));
                }
                m[i] = b1 * m[i] + (one - b1) * *g;
                v[i] = b2 * v[i] + (one - b2) * *g * *g;
                let m_hat = m[i] / corr1;
                let v_hat = v[i] / corr2;
                param.data_mut()[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Step count and flat moment buffers, for training-state serialization.
    pub fn export_state(&self) -> (u64, &[Vec<T>], &[Vec<T>]) {
        (self.t, &self.m, &self.v)
    }

    /// Restores previously exported state. Buffer counts and sizes are
    /// validated against the parameter list on the next [`Adam::step`].
    pub fn import_state(&mut self, t: u64, m: Vec<Vec<T>>, v: Vec<Vec<T>>) {
        self.t = t;
        self.m = m;
        self.v = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = Tensor::new(vec![3], vec![1.0f64, -2.0, 0.5]).unwrap();
        let g = Tensor::zeros(vec![3]);
        let mut adam = Adam::new(1e-3);
        let before = p.clone();
        adam.step(&mut [&mut p], &[&g]).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_magnitude_matches_hand_formula() {
        // After bias correction, step 1 with constant gradient g gives
        // m_hat = g and v_hat = g^2, so the update is
        // -lr * g / (|g| + eps) = -lr * sign(g), to within eps effects.
        let mut p = Tensor::new(vec![2], vec![0.0f64, 0.0]).unwrap();
        let g = Tensor::new(vec![2], vec![3.0f64, -0.01]).unwrap();
        let mut adam = Adam::new(1e-3);
        adam.step(&mut [&mut p], &[&g]).unwrap();
        assert!((p.data()[0] - (-1e-3)).abs() < 1e-9, "{}", p.data()[0]);
        assert!((p.data()[1] - 1e-3).abs() < 1e-9, "{}", p.data()[1]);
    }

    #[test]
    fn descends_a_quadratic() {
        // 50 steps on f(w) = w^2 from w = 1 with lr 0.05 drives |w| < 0.5.
        let mut w = Tensor::new(vec![1], vec![1.0f64]).unwrap();
        let mut adam = Adam::new(0.05);
        for _ in 0..50 {
            let g = Tensor::new(vec![1], vec![2.0 * w.data()[0]]).unwrap();
            adam.step(&mut [&mut w], &[&g]).unwrap();
        }
        assert!(w.data()[0].abs() < 0.5, "w = {}", w.data()[0]);
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let mut p = Tensor::zeros(vec![1]);
        let g = Tensor::new(vec![1], vec![f64::NAN]).unwrap();
        let mut adam = Adam::new(1e-3);
        assert!(adam.step(&mut [&mut p], &[&g]).is_err());
    }
}
