//! Batch normalization over the channel dimension of `(N, C, H, W)` tensors.

use super::{Mode, Tensor};
use crate::{Error, Result, Scalar};

/// Per-channel batch normalization with learned scale and shift.
///
/// TRAIN mode normalizes by the batch (biased) statistics and folds them into
/// the running estimates as `running = momentum * running + (1 - momentum) *
/// batch`; EVAL mode normalizes by the running estimates.
#[derive(Debug, Clone)]
pub struct BatchNorm<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub grad_gamma: Tensor<T>,
    pub grad_beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<Cache<T>>,
}

#[derive(Debug, Clone)]
struct Cache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
    train: bool,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::filled(vec![channels], T::one()),
            beta: Tensor::zeros(vec![channels]),
            grad_gamma: Tensor::zeros(vec![channels]),
            grad_beta: Tensor::zeros(vec![channels]),
            running_mean: Tensor::zeros(vec![channels]),
            running_var: Tensor::filled(vec![channels], T::one()),
            momentum: 0.9,
            eps: 1e-5,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.numel()
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (n, c, h, w) = x.dims4()?;
        if c != self.channels() {
            return Err(Error::Shape(format!(
                "batch norm built for {} channels, input has {c}",
                self.channels()
            )));
        }
        let plane = h * w;
        let per_channel = n * plane;
        let eps = T::from_f64v(self.eps);

        let (mean, var) = match mode {
            Mode::Train => {
                if n < 2 {
                    return Err(Error::Parameter(
                        "batch norm requires batch size >= 2 in TRAIN mode".into(),
                    ));
                }
                let mut mean = vec![T::zero(); c];
                let mut var = vec![T::zero(); c];
                for ch in 0..c {
                    let mut sum = T::zero();
                    for s in 0..n {
                        let base = (s * c + ch) * plane;
                        for &v in &x.data()[base..base + plane] {
                            sum += v;
                        }
                    }
                    mean[ch] = sum / T::from_f64v(per_channel as f64);
                    let mut ss = T::zero();
                    for s in 0..n {
                        let base = (s * c + ch) * plane;
                        for &v in &x.data()[base..base + plane] {
                            let d = v - mean[ch];
                            ss += d * d;
                        }
                    }
                    var[ch] = ss / T::from_f64v(per_channel as f64);
                }
                let momentum = T::from_f64v(self.momentum);
                let keep_new = T::one() - momentum;
                for ch in 0..c {
                    let rm = self.running_mean.data_mut();
                    rm[ch] = momentum * rm[ch] + keep_new * mean[ch];
                    let rv = self.running_var.data_mut();
                    rv[ch] = momentum * rv[ch] + keep_new * var[ch];
                }
                (mean, var)
            }
            Mode::Eval => (
                self.running_mean.data().to_vec(),
                self.running_var.data().to_vec(),
            ),
        };

        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = Tensor::zeros(x.shape().to_vec());
        let mut out = Tensor::zeros(x.shape().to_vec());
        for s in 0..n {
            for ch in 0..c {
                let base = (s * c + ch) * plane;
                let (m, is) = (mean[ch], inv_std[ch]);
                let (g, b) = (self.gamma.data()[ch], self.beta.data()[ch]);
                for i in base..base + plane {
                    let xh = (x.data()[i] - m) * is;
                    xhat.data_mut()[i] = xh;
                    out.data_mut()[i] = g * xh + b;
                }
            }
        }
        self.cache = Some(Cache {
            xhat,
            inv_std,
            train: mode == Mode::Train,
        });
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Numeric("batch norm backward called before forward".into()))?;
        let (n, c, h, w) = grad_out.dims4()?;
        if cache.xhat.shape() != grad_out.shape() {
            return Err(Error::Shape(format!(
                "batch norm backward expects grad shape {:?}, got {:?}",
                cache.xhat.shape(),
                grad_out.shape()
            )));
        }
        let plane = h * w;
        let m = T::from_f64v((n * plane) as f64);

        self.grad_gamma = Tensor::zeros(vec![c]);
        self.grad_beta = Tensor::zeros(vec![c]);
        let mut grad_x = Tensor::zeros(grad_out.shape().to_vec());
        for ch in 0..c {
            let mut sum_g = T::zero();
            let mut sum_gx = T::zero();
            for s in 0..n {
                let base = (s * c + ch) * plane;
                for i in base..base + plane {
                    let g = grad_out.data()[i];
                    sum_g += g;
                    sum_gx += g * cache.xhat.data()[i];
                }
            }
            self.grad_beta.data_mut()[ch] = sum_g;
            self.grad_gamma.data_mut()[ch] = sum_gx;

            let gamma = self.gamma.data()[ch];
            let inv_std = cache.inv_std[ch];
            if cache.train {
                // Standard batch-statistics backward.
                let k = gamma * inv_std / m;
                for s in 0..n {
                    let base = (s * c + ch) * plane;
                    for i in base..base + plane {
                        let g = grad_out.data()[i];
                        grad_x.data_mut()[i] =
                            k * (m * g - sum_g - cache.xhat.data()[i] * sum_gx);
                    }
                }
            } else {
                // EVAL statistics are constants, so the map is affine.
                let k = gamma * inv_std;
                for s in 0..n {
                    let base = (s * c + ch) * plane;
                    for i in base..base + plane {
                        grad_x.data_mut()[i] = k * grad_out.data()[i];
                    }
                }
            }
        }
        Ok(grad_x)
    }
}
