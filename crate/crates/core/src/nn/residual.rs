//! Residual block: two conv+BN+ReLU stages plus a shortcut connection.

use rand::Rng;

use super::conv::Conv2d;
use super::dense::Relu;
use super::norm::BatchNorm;
use super::{Mode, Tensor};
use crate::{Error, Result, Scalar};

/// `out = relu(main(x) + shortcut(x))` where the main path is
/// `conv3x3/stride -> BN -> ReLU -> conv3x3/1 -> BN -> ReLU` and the shortcut
/// is the identity when the shapes already agree, otherwise a 1x1 convolution
/// with the block's stride.
#[derive(Debug, Clone)]
pub struct ResidualBlock<T> {
    pub conv1: Conv2d<T>,
    pub bn1: BatchNorm<T>,
    relu1: Relu<T>,
    pub conv2: Conv2d<T>,
    pub bn2: BatchNorm<T>,
    relu2: Relu<T>,
    pub shortcut: Option<Conv2d<T>>,
    relu_out: Relu<T>,
}

impl<T: Scalar> ResidualBlock<T> {
    pub fn new(
        cin: usize,
        cout: usize,
        stride: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let shortcut = if cin != cout || stride != 1 {
            Some(Conv2d::new(cin, cout, 1, stride, 0, rng)?)
        } else {
            None
        };
        Ok(Self {
            conv1: Conv2d::new(cin, cout, 3, stride, 1, rng)?,
            bn1: BatchNorm::new(cout),
            relu1: Relu::new(),
            conv2: Conv2d::new(cout, cout, 3, 1, 1, rng)?,
            bn2: BatchNorm::new(cout),
            relu2: Relu::new(),
            shortcut,
            relu_out: Relu::new(),
        })
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let main = self.relu2.forward(
            &self
                .bn2
                .forward(&self.conv2.forward(&self.relu1.forward(
                    &self.bn1.forward(&self.conv1.forward(x)?, mode)?,
                )?)?, mode)?,
        )?;
        let shortcut = match &mut self.shortcut {
            Some(conv) => conv.forward(x)?,
            None => x.clone(),
        };
        if main.shape() != shortcut.shape() {
            return Err(Error::Shape(format!(
                "residual branches disagree: main {:?}, shortcut {:?}",
                main.shape(),
                shortcut.shape()
            )));
        }
        let mut sum = main;
        sum.add_assign(&shortcut)?;
        self.relu_out.forward(&sum)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let grad_sum = self.relu_out.backward(grad_out)?;
        // Main path.
        let g = self.relu2.backward(&grad_sum)?;
        let g = self.bn2.backward(&g)?;
        let g = self.conv2.backward(&g)?;
        let g = self.relu1.backward(&g)?;
        let g = self.bn1.backward(&g)?;
        let mut grad_x = self.conv1.backward(&g)?;
        // Shortcut path.
        match &mut self.shortcut {
            Some(conv) => grad_x.add_assign(&conv.backward(&grad_sum)?)?,
            None => grad_x.add_assign(&grad_sum)?,
        }
        Ok(grad_x)
    }
}
