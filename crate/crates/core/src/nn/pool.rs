//! Pooling layers: max, overlapping average, global average.

use super::Tensor;
use crate::{Error, Result, Scalar};

/// 2x2/2 max pooling. Gradients route to the argmax; ties take the first
/// index in row-major window order (this is observable, hence documented).
#[derive(Debug, Clone, Default)]
pub struct MaxPool<T> {
    cache: Option<(Vec<usize>, Vec<usize>, Vec<usize>)>, // argmax, in shape, out shape
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> MaxPool<T> {
    pub fn new() -> Self {
        Self {
            cache: None,
            _marker: std::marker::PhantomData,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, c, h, w) = x.dims4()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Shape(format!(
                "max pool 2x2/2 needs even spatial dims, got {h}x{w}"
            )));
        }
        let (ho, wo) = (h / 2, w / 2);
        let mut out = Tensor::zeros(vec![n, c, ho, wo]);
        let mut argmax = vec![0usize; out.numel()];
        for nc in 0..n * c {
            let plane = &x.data()[nc * h * w..(nc + 1) * h * w];
            let out_plane = &mut out.data_mut()[nc * ho * wo..(nc + 1) * ho * wo];
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best_idx = (2 * oy) * w + 2 * ox;
                    let mut best = plane[best_idx];
                    for (dy, dx) in [(0usize, 1usize), (1, 0), (1, 1)] {
                        let idx = (2 * oy + dy) * w + 2 * ox + dx;
                        if plane[idx] > best {
                            best = plane[idx];
                            best_idx = idx;
                        }
                    }
                    out_plane[oy * wo + ox] = best;
                    argmax[nc * ho * wo + oy * wo + ox] = nc * h * w + best_idx;
                }
            }
        }
        self.cache = Some((argmax, x.shape().to_vec(), out.shape().to_vec()));
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (argmax, in_shape, out_shape) = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Numeric("max pool backward called before forward".into()))?;
        if grad_out.shape() != &out_shape[..] {
            return Err(Error::Shape(format!(
                "max pool backward expects grad shape {out_shape:?}, got {:?}",
                grad_out.shape()
            )));
        }
        let mut grad_x = Tensor::zeros(in_shape.clone());
        for (i, &src) in argmax.iter().enumerate() {
            grad_x.data_mut()[src] += grad_out.data()[i];
        }
        Ok(grad_x)
    }
}

/// Overlapping average pooling (default 3x3 window, stride 2) in ceil mode:
/// output size is `ceil((H - k)/s) + 1`, windows are clipped to the input,
/// and the divisor is the number of in-bounds taps (padding never dilutes the
/// average).
#[derive(Debug, Clone)]
pub struct AvgPool<T> {
    pub window: usize,
    pub stride: usize,
    cache: Option<(Vec<usize>, Vec<usize>)>, // in shape, out shape
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> AvgPool<T> {
    pub fn new(window: usize, stride: usize) -> Result<Self> {
        if window == 0 || stride == 0 || window < stride {
            return Err(Error::Parameter(format!(
                "avg pool needs window >= stride >= 1, got window {window} stride {stride}"
            )));
        }
        Ok(Self {
            window,
            stride,
            cache: None,
            _marker: std::marker::PhantomData,
        })
    }

    pub fn out_dim(&self, d: usize) -> usize {
        if d <= self.window {
            1
        } else {
            (d - self.window).div_ceil(self.stride) + 1
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, c, h, w) = x.dims4()?;
        let (ho, wo) = (self.out_dim(h), self.out_dim(w));
        let mut out = Tensor::zeros(vec![n, c, ho, wo]);
        for nc in 0..n * c {
            let plane = &x.data()[nc * h * w..(nc + 1) * h * w];
            let out_plane = &mut out.data_mut()[nc * ho * wo..(nc + 1) * ho * wo];
            for oy in 0..ho {
                let y0 = oy * self.stride;
                let y1 = (y0 + self.window).min(h);
                for ox in 0..wo {
                    let x0 = ox * self.stride;
                    let x1 = (x0 + self.window).min(w);
                    let mut sum = T::zero();
                    for y in y0..y1 {
                        for x_ in x0..x1 {
                            sum += plane[y * w + x_];
                        }
                    }
                    let count = (y1 - y0) * (x1 - x0);
                    out_plane[oy * wo + ox] = sum / T::from_f64v(count as f64);
                }
            }
        }
        self.cache = Some((x.shape().to_vec(), out.shape().to_vec()));
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (in_shape, out_shape) = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Numeric("avg pool backward called before forward".into()))?;
        if grad_out.shape() != &out_shape[..] {
            return Err(Error::Shape(format!(
                "avg pool backward expects grad shape {out_shape:?}, got {:?}",
                grad_out.shape()
            )));
        }
        let (n, c, h, w) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
        let (ho, wo) = (out_shape[2], out_shape[3]);
        let mut grad_x = Tensor::zeros(in_shape.clone());
        for nc in 0..n * c {
            let g_plane = &grad_out.data()[nc * ho * wo..(nc + 1) * ho * wo];
            let gx_plane = &mut grad_x.data_mut()[nc * h * w..(nc + 1) * h * w];
            for oy in 0..ho {
                let y0 = oy * self.stride;
                let y1 = (y0 + self.window).min(h);
                for ox in 0..wo {
                    let x0 = ox * self.stride;
                    let x1 = (x0 + self.window).min(w);
                    let count = T::from_f64v(((y1 - y0) * (x1 - x0)) as f64);
                    let share = g_plane[oy * wo + ox] / count;
                    for y in y0..y1 {
                        for x_ in x0..x1 {
                            gx_plane[y * w + x_] += share;
                        }
                    }
                }
            }
        }
        Ok(grad_x)
    }
}

/// Global average pooling `(N, C, H, W) -> (N, C)`.
#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool<T> {
    cache: Option<Vec<usize>>, // input shape
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> GlobalAvgPool<T> {
    pub fn new() -> Self {
        Self {
            cache: None,
            _marker: std::marker::PhantomData,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, c, h, w) = x.dims4()?;
        let plane = h * w;
        let mut out = Tensor::zeros(vec![n, c]);
        for nc in 0..n * c {
            let sum: T = x.data()[nc * plane..(nc + 1) * plane].iter().copied().sum();
            out.data_mut()[nc] = sum / T::from_f64v(plane as f64);
        }
        self.cache = Some(x.shape().to_vec());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let in_shape = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Numeric("global pool backward called before forward".into()))?;
        let (n, c, h, w) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
        if grad_out.shape() != [n, c] {
            return Err(Error::Shape(format!(
                "global pool backward expects grad shape {:?}, got {:?}",
                [n, c],
                grad_out.shape()
            )));
        }
        let plane = h * w;
        let inv = T::one() / T::from_f64v(plane as f64);
        let mut grad_x = Tensor::zeros(in_shape.clone());
        for nc in 0..n * c {
            let share = grad_out.data()[nc] * inv;
            for v in &mut grad_x.data_mut()[nc * plane..(nc + 1) * plane] {
                *v = share;
            }
        }
        Ok(grad_x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_pool_picks_window_max_and_first_tie() {
        let x = Tensor::new(vec![1, 1, 2, 2], vec![1.0f64, 3.0, 2.0, 0.0]).unwrap();
        let mut pool = MaxPool::new();
        let y = pool.forward(&x).unwrap();
        assert_eq!(y.data(), &[3.0]);
        let g = pool
            .backward(&Tensor::new(vec![1, 1, 1, 1], vec![5.0]).unwrap())
            .unwrap();
        assert_eq!(g.data(), &[0.0, 5.0, 0.0, 0.0]);

        // All-tie window: gradient goes to the first element.
        let x = Tensor::filled(vec![1, 1, 2, 2], 7.0f64);
        let mut pool = MaxPool::new();
        assert_eq!(pool.forward(&x).unwrap().data(), &[7.0]);
        let g = pool
            .backward(&Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap())
            .unwrap();
        assert_eq!(g.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn max_pool_constant_input_constant_output() {
        let x = Tensor::filled(vec![2, 3, 4, 4], 0.25f32);
        let y = MaxPool::new().forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 3, 2, 2]);
        assert!(y.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn avg_pool_shapes_and_values() {
        // 3x3 ones with window 3 stride 2 -> single 1.0.
        let x = Tensor::filled(vec![1, 1, 3, 3], 1.0f64);
        let mut pool = AvgPool::new(3, 2).unwrap();
        let y = pool.forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert!((y.data()[0] - 1.0).abs() < 1e-12);

        // Constant input stays constant even where windows are clipped.
        let x = Tensor::filled(vec![1, 2, 8, 8], 0.5f64);
        let mut pool = AvgPool::new(3, 2).unwrap();
        let y = pool.forward(&x).unwrap();
        // ceil((8-3)/2)+1 = 4
        assert_eq!(y.shape(), &[1, 2, 4, 4]);
        assert!(y.data().iter().all(|&v| (v - 0.5).abs() < 1e-12));

        // 64 -> 32 is the residual stem geometry.
        let pool = AvgPool::<f32>::new(3, 2).unwrap();
        assert_eq!(pool.out_dim(64), 32);
    }

    #[test]
    fn avg_pool_border_divisor_counts_in_bounds_taps_only() {
        // 4x4 ramp, window 3 stride 2: the bottom-right window covers a 2x2
        // region only, so its average uses divisor 4.
        let x = Tensor::from_fn(vec![1, 1, 4, 4], |i| i as f64);
        let mut pool = AvgPool::new(3, 2).unwrap();
        let y = pool.forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        // Window at (2..4, 2..4): values 10, 11, 14, 15 -> mean 12.5.
        assert!((y.data()[3] - 12.5).abs() < 1e-12);
    }

    #[test]
    fn global_avg_pool_mean_and_uniform_gradient() {
        let x = Tensor::from_fn(vec![1, 1, 4, 4], |i| i as f64);
        let mut pool = GlobalAvgPool::new();
        let y = pool.forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1]);
        assert!((y.data()[0] - 7.5).abs() < 1e-12);
        let g = pool
            .backward(&Tensor::new(vec![1, 1], vec![16.0]).unwrap())
            .unwrap();
        assert!(g.data().iter().all(|&v| (v - 1.0).abs() < 1e-12));

        let c = Tensor::filled(vec![3, 5, 2, 2], 0.125f32);
        let y = GlobalAvgPool::new().forward(&c).unwrap();
        assert!(y.data().iter().all(|&v| (v - 0.125).abs() < 1e-7));
    }
}
