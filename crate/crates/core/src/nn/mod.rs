//! Minimal tensor and layer library with exact backpropagation.
//!
//! The layer set is closed: convolution, batch norm, ReLU, max/average/global
//! pooling, flatten, dense, inverted dropout, and the residual block, plus
//! softmax cross-entropy and an Adam optimizer. Every differentiable
//! operation is verifiable against central differences via [`gradcheck`];
//! the verification harness instantiates the same generic layer code at
//! `f64` while training runs at `f32`.

mod adam;
mod conv;
mod dense;
pub mod gradcheck;
mod loss;
mod norm;
mod pool;
mod residual;
mod tensor;

pub use adam::Adam;
pub use conv::Conv2d;
pub use dense::{Dense, Dropout, Flatten, Relu};
pub use loss::{softmax_cross_entropy, softmax_rows};
pub use norm::BatchNorm;
pub use pool::{AvgPool, GlobalAvgPool, MaxPool};
pub use residual::ResidualBlock;
pub use tensor::Tensor;

use crate::{Result, Scalar};

/// Forward-pass mode: TRAIN uses batch statistics and active dropout, EVAL
/// uses running statistics and identity dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Uniform wrapper over the closed layer set, so models are plain layer
/// lists and the optimizer/checkpoint code can walk parameters generically.
#[derive(Debug, Clone)]
pub enum Layer<T> {
    Conv(Conv2d<T>),
    BatchNorm(BatchNorm<T>),
    Relu(Relu<T>),
    MaxPool(MaxPool<T>),
    AvgPool(AvgPool<T>),
    GlobalAvgPool(GlobalAvgPool<T>),
    Flatten(Flatten),
    Dense(Dense<T>),
    Dropout(Dropout<T>),
    Residual(ResidualBlock<T>),
}

impl<T: Scalar> Layer<T> {
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        match self {
            Layer::Conv(l) => l.forward(x),
            Layer::BatchNorm(l) => l.forward(x, mode),
            Layer::Relu(l) => l.forward(x),
            Layer::MaxPool(l) => l.forward(x),
            Layer::AvgPool(l) => l.forward(x),
            Layer::GlobalAvgPool(l) => l.forward(x),
            Layer::Flatten(l) => l.forward(x),
            Layer::Dense(l) => l.forward(x),
            Layer::Dropout(l) => l.forward(x, mode),
            Layer::Residual(l) => l.forward(x, mode),
        }
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv(l) => l.backward(grad_out),
            Layer::BatchNorm(l) => l.backward(grad_out),
            Layer::Relu(l) => l.backward(grad_out),
            Layer::MaxPool(l) => l.backward(grad_out),
            Layer::AvgPool(l) => l.backward(grad_out),
            Layer::GlobalAvgPool(l) => l.backward(grad_out),
            Layer::Flatten(l) => l.backward(grad_out),
            Layer::Dense(l) => l.backward(grad_out),
            Layer::Dropout(l) => l.backward(grad_out),
            Layer::Residual(l) => l.backward(grad_out),
        }
    }

    /// Trainable parameters, paired positionally with [`Layer::grads`].
    pub fn params(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Conv(l) => vec![&l.weight, &l.bias],
            Layer::BatchNorm(l) => vec![&l.gamma, &l.beta],
            Layer::Dense(l) => vec![&l.weight, &l.bias],
            Layer::Residual(l) => {
                let mut v = vec![
                    &l.conv1.weight,
                    &l.conv1.bias,
                    &l.bn1.gamma,
                    &l.bn1.beta,
                    &l.conv2.weight,
                    &l.conv2.bias,
                    &l.bn2.gamma,
                    &l.bn2.beta,
                ];
                if let Some(s) = &l.shortcut {
                    v.push(&s.weight);
                    v.push(&s.bias);
                }
                v
            }
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Conv(l) => vec![&mut l.weight, &mut l.bias],
            Layer::BatchNorm(l) => vec![&mut l.gamma, &mut l.beta],
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Residual(l) => {
                let mut v = vec![
                    &mut l.conv1.weight,
                    &mut l.conv1.bias,
                    &mut l.bn1.gamma,
                    &mut l.bn1.beta,
                    &mut l.conv2.weight,
                    &mut l.conv2.bias,
                    &mut l.bn2.gamma,
                    &mut l.bn2.beta,
                ];
                if let Some(s) = &mut l.shortcut {
                    v.push(&mut s.weight);
                    v.push(&mut s.bias);
                }
                v
            }
            _ => Vec::new(),
        }
    }

    /// Mutable parameters paired with their gradients, for the optimizer
    /// step. Same order as [`Layer::params`].
    pub fn params_and_grads(&mut self) -> Vec<(&mut Tensor<T>, &Tensor<T>)> {
        match self {
            Layer::Conv(l) => vec![
                (&mut l.weight, &l.grad_weight),
                (&mut l.bias, &l.grad_bias),
            ],
            Layer::BatchNorm(l) => vec![
                (&mut l.gamma, &l.grad_gamma),
                (&mut l.beta, &l.grad_beta),
            ],
            Layer::Dense(l) => vec![
                (&mut l.weight, &l.grad_weight),
                (&mut l.bias, &l.grad_bias),
            ],
            Layer::Residual(l) => {
                let mut v = vec![
                    (&mut l.conv1.weight, &l.conv1.grad_weight),
                    (&mut l.conv1.bias, &l.conv1.grad_bias),
                    (&mut l.bn1.gamma, &l.bn1.grad_gamma),
                    (&mut l.bn1.beta, &l.bn1.grad_beta),
                    (&mut l.conv2.weight, &l.conv2.grad_weight),
                    (&mut l.conv2.bias, &l.conv2.grad_bias),
                    (&mut l.bn2.gamma, &l.bn2.grad_gamma),
                    (&mut l.bn2.beta, &l.bn2.grad_beta),
                ];
                if let Some(s) = &mut l.shortcut {
                    v.push((&mut s.weight, &s.grad_weight));
                    v.push((&mut s.bias, &s.grad_bias));
                }
                v
            }
            _ => Vec::new(),
        }
    }

    /// Gradients, in the same order as [`Layer::params`].
    pub fn grads(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Conv(l) => vec![&l.grad_weight, &l.grad_bias],
            Layer::BatchNorm(l) => vec![&l.grad_gamma, &l.grad_beta],
            Layer::Dense(l) => vec![&l.grad_weight, &l.grad_bias],
            Layer::Residual(l) => {
                let mut v = vec![
                    &l.conv1.grad_weight,
                    &l.conv1.grad_bias,
                    &l.bn1.grad_gamma,
                    &l.bn1.grad_beta,
                    &l.conv2.grad_weight,
                    &l.conv2.grad_bias,
                    &l.bn2.grad_gamma,
                    &l.bn2.grad_beta,
                ];
                if let Some(s) = &l.shortcut {
                    v.push(&s.grad_weight);
                    v.push(&s.grad_bias);
                }
                v
            }
            _ => Vec::new(),
        }
    }

    /// Names matching [`Layer::params`] order, for reports.
    pub fn param_names(&self) -> Vec<String> {
        match self {
            Layer::Conv(_) | Layer::Dense(_) => vec!["weight".into(), "bias".into()],
            Layer::BatchNorm(_) => vec!["gamma".into(), "beta".into()],
            Layer::Residual(l) => {
                let mut v: Vec<String> = [
                    "conv1.weight",
                    "conv1.bias",
                    "bn1.gamma",
                    "bn1.beta",
                    "conv2.weight",
                    "conv2.bias",
                    "bn2.gamma",
                    "bn2.beta",
                ]
                .iter()
                .map(|s| s.to_string())
                .collect();
                if l.shortcut.is_some() {
                    v.push("shortcut.weight".into());
                    v.push("shortcut.bias".into());
                }
                v
            }
            _ => Vec::new(),
        }
    }

    /// All persistent tensors (parameters plus batch-norm running statistics)
    /// in a fixed order, for checkpoint serialization.
    pub fn state(&self) -> Vec<&Tensor<T>> {
        let mut v = self.params();
        match self {
            Layer::BatchNorm(l) => {
                v.push(&l.running_mean);
                v.push(&l.running_var);
            }
            Layer::Residual(l) => {
                v.push(&l.bn1.running_mean);
                v.push(&l.bn1.running_var);
                v.push(&l.bn2.running_mean);
                v.push(&l.bn2.running_var);
            }
            _ => {}
        }
        v
    }

    pub fn state_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::BatchNorm(l) => vec![
                &mut l.gamma,
                &mut l.beta,
                &mut l.running_mean,
                &mut l.running_var,
            ],
            Layer::Residual(l) => {
                let mut v = vec![
                    &mut l.conv1.weight,
                    &mut l.conv1.bias,
                    &mut l.bn1.gamma,
                    &mut l.bn1.beta,
                    &mut l.conv2.weight,
                    &mut l.conv2.bias,
                    &mut l.bn2.gamma,
                    &mut l.bn2.beta,
                ];
                if let Some(s) = &mut l.shortcut {
                    v.push(&mut s.weight);
                    v.push(&mut s.bias);
                }
                v.push(&mut l.bn1.running_mean);
                v.push(&mut l.bn1.running_var);
                v.push(&mut l.bn2.running_mean);
                v.push(&mut l.bn2.running_var);
                v
            }
            other => other.params_mut(),
        }
    }

    /// Stable kind tag used in the checkpoint layer table.
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv",
            Layer::BatchNorm(_) => "batch_norm",
            Layer::Relu(_) => "relu",
            Layer::MaxPool(_) => "max_pool",
            Layer::AvgPool(_) => "avg_pool",
            Layer::GlobalAvgPool(_) => "global_avg_pool",
            Layer::Flatten(_) => "flatten",
            Layer::Dense(_) => "dense",
            Layer::Dropout(_) => "dropout",
            Layer::Residual(_) => "residual",
        }
    }
}
