//! Dense layer, ReLU, inverted dropout, and the flatten adapter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Mode, Tensor};
use crate::{Error, Result, Scalar};

/// Fully connected layer: `y = x W^T + b` with weight shape `(Dout, Din)`.
#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub grad_weight: Tensor<T>,
    pub grad_bias: Tensor<T>,
    cache_x: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    /// He-normal initialization (std = sqrt(2 / Din)), zero biases.
    pub fn new(din: usize, dout: usize, rng: &mut impl Rng) -> Self {
        let std = (2.0 / din as f64).sqrt();
        Self {
            weight: Tensor::randn(vec![dout, din], std, rng),
            bias: Tensor::zeros(vec![dout]),
            grad_weight: Tensor::zeros(vec![dout, din]),
            grad_bias: Tensor::zeros(vec![dout]),
            cache_x: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, din) = x.dims2()?;
        let (dout, w_din) = self.weight.dims2()?;
        if din != w_din {
            return Err(Error::Shape(format!(
                "dense expects {w_din} inputs, got {din}"
            )));
        }
        let mut out = Tensor::zeros(vec![n, dout]);
        T::gemm_bt(
            n,
            din,
            dout,
            T::one(),
            x.data(),
            self.weight.data(),
            T::zero(),
            out.data_mut(),
        );
        for s in 0..n {
            for (o, &b) in self.bias.data().iter().enumerate() {
                out.data_mut()[s * dout + o] += b;
            }
        }
        self.cache_x = Some(x.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .cache_x
            .as_ref()
            .ok_or_else(|| Error::Numeric("dense backward called before forward".into()))?;
        let (n, din) = x.dims2()?;
        let (dout, _) = self.weight.dims2()?;
        if grad_out.shape() != [n, dout] {
            return Err(Error::Shape(format!(
                "dense backward expects grad shape {:?}, got {:?}",
                [n, dout],
                grad_out.shape()
            )));
        }
        // dW = G^T X, db = sum_n G, dX = G W.
        self.grad_weight = Tensor::zeros(vec![dout, din]);
        T::gemm_at(
            dout,
            n,
            din,
            T::one(),
            grad_out.data(),
            x.data(),
            T::zero(),
            self.grad_weight.data_mut(),
        );
        self.grad_bias = Tensor::zeros(vec![dout]);
        for s in 0..n {
            for o in 0..dout {
                self.grad_bias.data_mut()[o] += grad_out.data()[s * dout + o];
            }
        }
        let mut grad_x = Tensor::zeros(vec![n, din]);
        T::gemm(
            n,
            dout,
            din,
            T::one(),
            grad_out.data(),
            self.weight.data(),
            T::zero(),
            grad_x.data_mut(),
        );
        Ok(grad_x)
    }
}

/// Elementwise `max(0, x)`; the gradient mask is `x > 0`.
#[derive(Debug, Clone, Default)]
pub struct Relu<T> {
    mask: Option<Vec<bool>>,
    shape: Vec<usize>,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> Relu<T> {
    pub fn new() -> Self {
        Self {
            mask: None,
            shape: Vec::new(),
            _marker: std::marker::PhantomData,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut out = x.clone();
        let mask: Vec<bool> = x.data().iter().map(|&v| v > T::zero()).collect();
        for (v, &keep) in out.data_mut().iter_mut().zip(&mask) {
            if !keep {
                *v = T::zero();
            }
        }
        self.mask = Some(mask);
        self.shape = x.shape().to_vec();
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let mask = self
            .mask
            .as_ref()
            .ok_or_else(|| Error::Numeric("relu backward called before forward".into()))?;
        if grad_out.shape() != &self.shape[..] {
            return Err(Error::Shape(format!(
                "relu backward expects grad shape {:?}, got {:?}",
                self.shape,
                grad_out.shape()
            )));
        }
        let mut grad_x = grad_out.clone();
        for (v, &keep) in grad_x.data_mut().iter_mut().zip(mask) {
            if !keep {
                *v = T::zero();
            }
        }
        Ok(grad_x)
    }
}

/// Inverted dropout: TRAIN zeroes activations with probability `p` and scales
/// survivors by `1/(1-p)`; EVAL is the identity. Each instance owns a seeded
/// RNG stream so training runs are reproducible.
#[derive(Debug, Clone)]
pub struct Dropout<T> {
    pub p: f64,
    rng: ChaCha8Rng,
    mask: Option<Vec<bool>>,
    shape: Vec<usize>,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> Dropout<T> {
    pub fn new(p: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Parameter(format!(
                "dropout probability must be in [0, 1), got {p}"
            )));
        }
        Ok(Self {
            p,
            rng: ChaCha8Rng::seed_from_u64(seed),
            mask: None,
            shape: Vec::new(),
            _marker: std::marker::PhantomData,
        })
    }

    /// Restarts the mask stream from a fresh seed. The training loop reseeds
    /// every dropout layer at each epoch boundary from (run seed, epoch,
    /// layer index), which makes a resumed run replay the exact mask
    /// sequence of an uninterrupted one.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.shape = x.shape().to_vec();
        if mode == Mode::Eval || self.p == 0.0 {
            self.mask = None;
            return Ok(x.clone());
        }
        let keep_scale = T::from_f64v(1.0 / (1.0 - self.p));
        let mask: Vec<bool> = (0..x.numel())
            .map(|_| self.rng.gen_range(0.0..1.0) >= self.p)
            .collect();
        let mut out = x.clone();
        for (v, &keep) in out.data_mut().iter_mut().zip(&mask) {
            *v = if keep { *v * keep_scale } else { T::zero() };
        }
        self.mask = Some(mask);
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        if grad_out.shape() != &self.shape[..] {
            return Err(Error::Shape(format!(
                "dropout backward expects grad shape {:?}, got {:?}",
                self.shape,
                grad_out.shape()
            )));
        }
        match &self.mask {
            None => Ok(grad_out.clone()),
            Some(mask) => {
                let keep_scale = T::from_f64v(1.0 / (1.0 - self.p));
                let mut grad_x = grad_out.clone();
                for (v, &keep) in grad_x.data_mut().iter_mut().zip(mask) {
                    *v = if keep { *v * keep_scale } else { T::zero() };
                }
                Ok(grad_x)
            }
        }
    }
}

/// `(N, C, H, W) -> (N, C H W)` adapter between the convolutional stack and
/// the dense head.
#[derive(Debug, Clone, Default)]
pub struct Flatten {
    in_shape: Vec<usize>,
}

impl Flatten {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, c, h, w) = x.dims4()?;
        self.in_shape = x.shape().to_vec();
        x.reshape(vec![n, c * h * w])
    }

    pub fn backward<T: Scalar>(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        if self.in_shape.is_empty() {
            return Err(Error::Numeric("flatten backward called before forward".into()));
        }
        grad_out.reshape(self.in_shape.clone())
    }
}
