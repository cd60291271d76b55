//! 2-d convolution via im2col and GEMM.

use rand::Rng;

use super::Tensor;
use crate::{Error, Result, Scalar};

/// Square-kernel 2-d convolution with zero padding.
///
/// Weight layout `(Cout, Cin, K, K)`; output spatial size is
/// `(H + 2 pad - K) / stride + 1` (floor). The forward pass lowers each
/// sample to a `(Cin K K) x (Hout Wout)` column matrix and multiplies it with
/// the flattened weights; the backward pass reuses the same lowering, so all
/// heavy lifting is GEMM.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub grad_weight: Tensor<T>,
    pub grad_bias: Tensor<T>,
    pub stride: usize,
    pub pad: usize,
    cache_x: Option<Tensor<T>>,
}

impl<T: Scalar> Conv2d<T> {
    /// He-normal initialization (std = sqrt(2 / fan_in)), zero biases.
    pub fn new(
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if k == 0 || k % 2 == 0 {
            return Err(Error::Parameter(format!("kernel size must be odd, got {k}")));
        }
        if !(1..=2).contains(&stride) {
            return Err(Error::Parameter(format!("stride must be 1 or 2, got {stride}")));
        }
        if pad > (k - 1) / 2 {
            return Err(Error::Parameter(format!(
                "pad {pad} exceeds half the kernel size {k}"
            )));
        }
        let fan_in = cin * k * k;
        let std = (2.0 / fan_in as f64).sqrt();
        Ok(Self {
            weight: Tensor::randn(vec![cout, cin, k, k], std, rng),
            bias: Tensor::zeros(vec![cout]),
            grad_weight: Tensor::zeros(vec![cout, cin, k, k]),
            grad_bias: Tensor::zeros(vec![cout]),
            stride,
            pad,
            cache_x: None,
        })
    }

    pub fn kernel_size(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn out_spatial(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let k = self.kernel_size();
        if h + 2 * self.pad < k || w + 2 * self.pad < k {
            return Err(Error::Shape(format!(
                "input {h}x{w} smaller than kernel {k} with pad {}",
                self.pad
            )));
        }
        Ok((
            (h + 2 * self.pad - k) / self.stride + 1,
            (w + 2 * self.pad - k) / self.stride + 1,
        ))
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, cin, h, w) = x.dims4()?;
        let (cout, w_cin) = (self.weight.shape()[0], self.weight.shape()[1]);
        if cin != w_cin {
            return Err(Error::Shape(format!(
                "conv expects {w_cin} input channels, got {cin}"
            )));
        }
        let k = self.kernel_size();
        let (ho, wo) = self.out_spatial(h, w)?;
        let ckk = cin * k * k;
        let l = ho * wo;

        let mut out = Tensor::zeros(vec![n, cout, ho, wo]);
        let mut cols = vec![T::zero(); ckk * l];
        for s in 0..n {
            let x_s = &x.data()[s * cin * h * w..(s + 1) * cin * h * w];
            im2col(x_s, cin, h, w, k, self.stride, self.pad, ho, wo, &mut cols);
            let out_s = &mut out.data_mut()[s * cout * l..(s + 1) * cout * l];
            T::gemm(
                cout,
                ckk,
                l,
                T::one(),
                self.weight.data(),
                &cols,
                T::zero(),
                out_s,
            );
            for o in 0..cout {
                let b = self.bias.data()[o];
                for v in &mut out_s[o * l..(o + 1) * l] {
                    *v += b;
                }
            }
        }
        self.cache_x = Some(x.clone());
        Ok(out)
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .cache_x
            .as_ref()
            .ok_or_else(|| Error::Numeric("conv backward called before forward".into()))?;
        let (n, cin, h, w) = x.dims4()?;
        let cout = self.weight.shape()[0];
        let k = self.kernel_size();
        let (ho, wo) = self.out_spatial(h, w)?;
        if grad_out.shape() != [n, cout, ho, wo] {
            return Err(Error::Shape(format!(
                "conv backward expects grad shape {:?}, got {:?}",
                [n, cout, ho, wo],
                grad_out.shape()
            )));
        }
        let ckk = cin * k * k;
        let l = ho * wo;

        self.grad_weight = Tensor::zeros(self.weight.shape().to_vec());
        self.grad_bias = Tensor::zeros(vec![cout]);
        let mut grad_x = Tensor::zeros(vec![n, cin, h, w]);
        let mut cols = vec![T::zero(); ckk * l];
        let mut col_grad = vec![T::zero(); ckk * l];
        for s in 0..n {
            let g_s = &grad_out.data()[s * cout * l..(s + 1) * cout * l];
            for o in 0..cout {
                let sum: T = g_s[o * l..(o + 1) * l].iter().copied().sum();
                self.grad_bias.data_mut()[o] += sum;
            }
            // dW += G_s . cols_s^T
            let x_s = &x.data()[s * cin * h * w..(s + 1) * cin * h * w];
            im2col(x_s, cin, h, w, k, self.stride, self.pad, ho, wo, &mut cols);
            T::gemm_bt(
                cout,
                l,
                ckk,
                T::one(),
                g_s,
                &cols,
                T::one(),
                self.grad_weight.data_mut(),
            );
            // dcols = W^T . G_s, scattered back to the input layout.
            T::gemm_at(
                ckk,
                cout,
                l,
                T::one(),
                self.weight.data(),
                g_s,
                T::zero(),
                &mut col_grad,
            );
            let gx_s = &mut grad_x.data_mut()[s * cin * h * w..(s + 1) * cin * h * w];
            col2im(&col_grad, cin, h, w, k, self.stride, self.pad, ho, wo, gx_s);
        }
        Ok(grad_x)
    }
}

/// Lowers one sample `(Cin, H, W)` to columns: row `(c, u, v)` of the output
/// holds, for every output position, the input value that kernel tap `(u, v)`
/// of channel `c` sees (zero outside the padded support).
#[allow(clippy::too_many_arguments)]
fn im2col<T: Scalar>(
    x: &[T],
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    cols: &mut [T],
) {
    let l = ho * wo;
    for c in 0..cin {
        let plane = &x[c * h * w..(c + 1) * h * w];
        for u in 0..k {
            for v in 0..k {
                let row = &mut cols[(c * k * k + u * k + v) * l..(c * k * k + u * k + v + 1) * l];
                for oy in 0..ho {
                    let iy = (oy * stride + u) as isize - pad as isize;
                    let dst = &mut row[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        for d in dst.iter_mut() {
                            *d = T::zero();
                        }
                        continue;
                    }
                    let src_row = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * stride + v) as isize - pad as isize;
                        *d = if ix < 0 || ix >= w as isize {
                            T::zero()
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds column gradients back onto the input.
#[allow(clippy::too_many_arguments)]
fn col2im<T: Scalar>(
    cols: &[T],
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    x_grad: &mut [T],
) {
    let l = ho * wo;
    for v in x_grad.iter_mut() {
        *v = T::zero();
    }
    for c in 0..cin {
        let plane = &mut x_grad[c * h * w..(c + 1) * h * w];
        for u in 0..k {
            for v in 0..k {
                let row = &cols[(c * k * k + u * k + v) * l..(c * k * k + u * k + v + 1) * l];
                for oy in 0..ho {
                    let iy = (oy * stride + u) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..wo {
                        let ix = (ox * stride + v) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst_row[ix as usize] += row[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn conv(cin: usize, cout: usize, k: usize, stride: usize, pad: usize) -> Conv2d<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        Conv2d::new(cin, cout, k, stride, pad, &mut rng).unwrap()
    }

    #[test]
    fn all_ones_kernel_sums_window() {
        let mut c = conv(1, 1, 3, 1, 0);
        c.weight = Tensor::filled(vec![1, 1, 3, 3], 1.0);
        let x = Tensor::filled(vec![1, 1, 3, 3], 1.0);
        let y = c.forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert!((y.data()[0] - 9.0).abs() < 1e-12);
    }

    #[test]
    fn identity_kernel_with_same_padding() {
        let mut c = conv(1, 1, 3, 1, 1);
        let mut w = Tensor::zeros(vec![1, 1, 3, 3]);
        w.data_mut()[4] = 1.0; // center tap
        c.weight = w;
        let x = Tensor::from_fn(vec![2, 1, 5, 5], |i| (i as f64).sin());
        let y = c.forward(&x).unwrap();
        assert_eq!(y.shape(), x.shape());
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_direct_convolution_oracle() {
        // Brute-force definition: out[n,o,i,j] = b[o] +
        //   sum_{c,u,v} x[n,c,i*s+u-pad, j*s+v-pad] * w[o,c,u,v].
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(cin, cout, k, stride, pad, h, w) in &[
            (2usize, 3usize, 3usize, 1usize, 1usize, 6usize, 5usize),
            (1, 2, 3, 2, 1, 8, 8),
            (3, 1, 1, 1, 0, 4, 4),
            (2, 2, 7, 1, 3, 9, 9),
            (1, 1, 3, 1, 0, 3, 7),
        ] {
            let mut layer = Conv2d::<f64>::new(cin, cout, k, stride, pad, &mut rng).unwrap();
            layer.bias = Tensor::randn(vec![cout], 1.0, &mut rng);
            let x = Tensor::randn(vec![2, cin, h, w], 1.0, &mut rng);
            let y = layer.forward(&x).unwrap();
            let (ho, wo) = layer.out_spatial(h, w).unwrap();
            for n in 0..2 {
                for o in 0..cout {
                    for i in 0..ho {
                        for j in 0..wo {
                            let mut acc = layer.bias.data()[o];
                            for c in 0..cin {
                                for u in 0..k {
                                    for v in 0..k {
                                        let iy = (i * stride + u) as isize - pad as isize;
                                        let ix = (j * stride + v) as isize - pad as isize;
                                        if iy < 0
                                            || ix < 0
                                            || iy >= h as isize
                                            || ix >= w as isize
                                        {
                                            continue;
                                        }
                                        let xv = x.data()[((n * cin + c) * h
                                            + iy as usize)
                                            * w
                                            + ix as usize];
                                        let wv = layer.weight.data()
                                            [((o * cin + c) * k + u) * k + v];
                                        acc += xv * wv;
                                    }
                                }
                            }
                            let got = y.data()[((n * cout + o) * ho + i) * wo + j];
                            assert!(
                                (got - acc).abs() < 1e-10,
                                "mismatch at n={n} o={o} i={i} j={j}: {got} vs {acc}"
                            );
                        }
                    }
                }
            }
        }
    }
}
