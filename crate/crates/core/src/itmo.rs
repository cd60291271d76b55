//! Parameterized inverse tone mapping operators.
//!
//! Four operator families generate the iHDR class, each a deliberately
//! explicit approximation of one qualitative expansion strategy: a global
//! power-law ([`itmo_linear`]), a sigmoid response ([`itmo_sigmoid`]), a
//! spatially-varying highlight expand map ([`itmo_expand_map`]), and a
//! pointwise dual highlight/shadow mapping ([`itmo_dual_region`]). All are
//! pointwise monotone in the input code value, deterministic, and bounded by
//! `l_max * boost`.

use crate::io::{HdrImage, LdrImage};
use crate::{Error, Result, Scalar};

/// Operator family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ItmoOperator {
    Linear,
    Sigmoid,
    ExpandMap,
    DualRegion,
}

impl ItmoOperator {
    pub fn name(self) -> &'static str {
        match self {
            ItmoOperator::Linear => "linear",
            ItmoOperator::Sigmoid => "sigmoid",
            ItmoOperator::ExpandMap => "expand_map",
            ItmoOperator::DualRegion => "dual_region",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ItmoOperator::Linear),
            "sigmoid" => Ok(ItmoOperator::Sigmoid),
            "expand_map" => Ok(ItmoOperator::ExpandMap),
            "dual_region" => Ok(ItmoOperator::DualRegion),
            other => Err(Error::Parameter(format!(
                "unknown iTMO operator {other:?} (linear, sigmoid, expand_map, dual_region)"
            ))),
        }
    }

    pub const ALL: [ItmoOperator; 4] = [
        ItmoOperator::Linear,
        ItmoOperator::Sigmoid,
        ItmoOperator::ExpandMap,
        ItmoOperator::DualRegion,
    ];
}

/// Operator parameters; see field docs for roles and ranges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItmoParams {
    pub operator: ItmoOperator,
    /// Decoding exponent applied to `z/255`; > 0.
    pub gamma: f64,
    /// Peak output luminance in relative units; > 0.
    pub l_max: f64,
    /// Normalized luminance above which a pixel counts as highlight; in (0,1).
    pub highlight_threshold: f64,
    /// Highlight gain (and shadow divisor for the dual-region operator); >= 1.
    pub boost: f64,
    /// Sigmoid knee shape.
    pub sigma_s: f64,
}

impl ItmoParams {
    pub fn new(operator: ItmoOperator) -> Self {
        Self {
            operator,
            gamma: 2.2,
            l_max: 1000.0,
            highlight_threshold: 0.92,
            boost: 4.0,
            sigma_s: 0.6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::Parameter(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.l_max > 0.0) {
            return Err(Error::Parameter(format!("l_max must be > 0, got {}", self.l_max)));
        }
        if !(self.highlight_threshold > 0.0 && self.highlight_threshold < 1.0) {
            return Err(Error::Parameter(format!(
                "highlight_threshold must be in (0,1), got {}",
                self.highlight_threshold
            )));
        }
        if !(self.boost >= 1.0) {
            return Err(Error::Parameter(format!("boost must be >= 1, got {}", self.boost)));
        }
        if !(self.sigma_s > 0.0) {
            return Err(Error::Parameter(format!(
                "sigma_s must be > 0, got {}",
                self.sigma_s
            )));
        }
        Ok(())
    }
}

/// Applies the operator selected by `p.operator`.
pub fn apply<T: Scalar>(img: &LdrImage, p: &ItmoParams) -> Result<HdrImage<T>> {
    match p.operator {
        ItmoOperator::Linear => itmo_linear(img, p),
        ItmoOperator::Sigmoid => itmo_sigmoid(img, p),
        ItmoOperator::ExpandMap => itmo_expand_map(img, p),
        ItmoOperator::DualRegion => itmo_dual_region(img, p),
    }
}

/// Tone curve of the linear (power-law) operator on normalized input.
pub fn linear_curve(n01: f64, p: &ItmoParams) -> f64 {
    p.l_max * n01.powf(p.gamma)
}

/// Tone curve of the sigmoid operator on normalized input.
pub fn sigmoid_curve(n01: f64, p: &ItmoParams) -> f64 {
    let n = n01.powf(p.gamma);
    p.l_max * p.sigma_s * n / (1.0 + p.sigma_s - n)
}

/// Half-width of the linear blending bands around the dual-region knees.
const KNEE_BAND_HALF_WIDTH: f64 = 0.01;
/// Linearized-luminance knee below which shadows are compressed.
const SHADOW_KNEE: f64 = 0.05;

/// Tone curve of the dual-region operator on normalized input.
///
/// In linearized luminance `n = n01^gamma`: shadows below 0.05 are divided by
/// `boost`, highlights above `highlight_threshold` are multiplied by it, and
/// the identity band lies between. Each knee is made continuous by linear
/// blending over a 0.02-wide band centered on it.
pub fn dual_region_curve(n01: f64, p: &ItmoParams) -> f64 {
    let n = n01.powf(p.gamma);
    let shadow = p.l_max * n / p.boost;
    let mid = p.l_max * n;
    let high = p.l_max * n * p.boost;
    let th = p.highlight_threshold;
    if n <= SHADOW_KNEE - KNEE_BAND_HALF_WIDTH {
        shadow
    } else if n < SHADOW_KNEE + KNEE_BAND_HALF_WIDTH {
        let t = (n - (SHADOW_KNEE - KNEE_BAND_HALF_WIDTH)) / (2.0 * KNEE_BAND_HALF_WIDTH);
        (1.0 - t) * shadow + t * mid
    } else if n <= th - KNEE_BAND_HALF_WIDTH {
        mid
    } else if n < th + KNEE_BAND_HALF_WIDTH {
        let t = (n - (th - KNEE_BAND_HALF_WIDTH)) / (2.0 * KNEE_BAND_HALF_WIDTH);
        (1.0 - t) * mid + t * high
    } else {
        high
    }
}

fn apply_curve<T: Scalar>(
    img: &LdrImage,
    p: &ItmoParams,
    curve: impl Fn(f64, &ItmoParams) -> f64,
) -> Result<HdrImage<T>> {
    p.validate()?;
    let lut: Vec<f64> = (0..256).map(|z| curve(z as f64 / 255.0, p)).collect();
    let data = img
        .data
        .iter()
        .map(|&z| T::from_f64v(lut[z as usize]))
        .collect();
    HdrImage::new(img.width, img.height, data)
}

/// Global power-law expansion: `out = l_max * (z/255)^gamma` per channel.
pub fn itmo_linear<T: Scalar>(img: &LdrImage, p: &ItmoParams) -> Result<HdrImage<T>> {
    apply_curve(img, p, linear_curve)
}

/// Sigmoid expansion: `n = (z/255)^gamma`, `out = l_max * sigma_s n / (1 +
/// sigma_s - n)`; strictly increasing with `out(1) = l_max`.
pub fn itmo_sigmoid<T: Scalar>(img: &LdrImage, p: &ItmoParams) -> Result<HdrImage<T>> {
    apply_curve(img, p, sigmoid_curve)
}

/// Pointwise dual-region expansion; see [`dual_region_curve`].
pub fn itmo_dual_region<T: Scalar>(img: &LdrImage, p: &ItmoParams) -> Result<HdrImage<T>> {
    apply_curve(img, p, dual_region_curve)
}

/// Spatially-varying highlight expansion: the linear operator's output is
/// multiplied by `1 + (boost - 1) E`, where `E` is a Gaussian-blurred binary
/// mask of highlight pixels (normalized display luminance at or above the
/// threshold). The blur radius scales with image size (`sigma = max(w,h)/50`)
/// so behavior is resolution-covariant.
pub fn itmo_expand_map<T: Scalar>(img: &LdrImage, p: &ItmoParams) -> Result<HdrImage<T>> {
    p.validate()?;
    let base: HdrImage<f64> = itmo_linear(img, p)?;
    let (w, h) = (img.width, img.height);

    let mut mask = vec![0f64; w * h];
    for (i, rgb) in img.data.chunks_exact(3).enumerate() {
        let lum_n = (0.2126 * rgb[0] as f64 + 0.7152 * rgb[1] as f64 + 0.0722 * rgb[2] as f64)
            / 255.0;
        if lum_n >= p.highlight_threshold {
            mask[i] = 1.0;
        }
    }
    let sigma = w.max(h) as f64 / 50.0;
    let expand = gaussian_blur_approx(&mask, w, h, sigma);

    let data = base
        .data
        .chunks_exact(3)
        .zip(&expand)
        .flat_map(|(rgb, &e)| {
            let factor = 1.0 + (p.boost - 1.0) * e;
            rgb.iter().map(move |&v| T::from_f64v(v * factor))
        })
        .collect();
    HdrImage::new(w, h, data)
}

/// Gaussian blur approximated by three passes of a separable box filter.
///
/// The box width is chosen so three passes match the target variance
/// (`3 (w^2-1)/12 = sigma^2`), and averages are renormalized at borders: the
/// divisor is the number of in-bounds taps, so an all-ones mask blurs to all
/// ones exactly.
pub fn gaussian_blur_approx(values: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    assert_eq!(values.len(), w * h);
    if sigma <= 0.0 {
        return values.to_vec();
    }
    let half = (((4.0 * sigma * sigma + 1.0).sqrt() - 1.0) / 2.0).round() as usize;
    if half == 0 {
        return values.to_vec();
    }
    let mut cur = values.to_vec();
    let mut tmp = vec![0f64; w * h];
    for _ in 0..3 {
        box_pass_rows(&cur, &mut tmp, w, h, half);
        box_pass_cols(&tmp, &mut cur, w, h, half);
    }
    cur
}

fn box_pass_rows(src: &[f64], dst: &mut [f64], w: usize, h: usize, half: usize) {
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let lo = x.saturating_sub(half);
            let hi = (x + half).min(w - 1);
            let sum: f64 = row[lo..=hi].iter().sum();
            dst[y * w + x] = sum / (hi - lo + 1) as f64;
        }
    }
}

fn box_pass_cols(src: &[f64], dst: &mut [f64], w: usize, h: usize, half: usize) {
    for x in 0..w {
        for y in 0..h {
            let lo = y.saturating_sub(half);
            let hi = (y + half).min(h - 1);
            let mut sum = 0f64;
            for row in lo..=hi {
                sum += src[row * w + x];
            }
            dst[y * w + x] = sum / (hi - lo + 1) as f64;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(op: ItmoOperator) -> ItmoParams {
        ItmoParams::new(op)
    }

    fn gray(z: u8) -> LdrImage {
        LdrImage::filled(2, 2, [z, z, z])
    }

    #[test]
    fn linear_endpoints_and_midpoint() {
        let p = params(ItmoOperator::Linear);
        let lo: HdrImage<f64> = itmo_linear(&gray(0), &p).unwrap();
        assert!(lo.data.iter().all(|&v| v == 0.0));
        let hi: HdrImage<f64> = itmo_linear(&gray(255), &p).unwrap();
        assert!(hi.data.iter().all(|&v| (v - 1000.0).abs() < 1e-9));
        // 1000 * (128/255)^2.2 = 219.5197... by direct evaluation.
        let mid: HdrImage<f64> = itmo_linear(&gray(128), &p).unwrap();
        let expected = 1000.0 * (128.0f64 / 255.0).powf(2.2);
        assert!((expected - 219.5197).abs() < 1e-3, "oracle drifted: {expected}");
        assert!(mid.data.iter().all(|&v| (v - expected).abs() < 1e-9));
    }

    #[test]
    fn linear_with_unit_params_is_code_embedding() {
        let mut p = params(ItmoOperator::Linear);
        p.gamma = 1.0;
        p.l_max = 1.0;
        for z in [0u8, 1, 77, 128, 254, 255] {
            let out: HdrImage<f64> = itmo_linear(&gray(z), &p).unwrap();
            assert_eq!(out.data[0], z as f64 / 255.0);
        }
    }

    #[test]
    fn sigmoid_endpoints_and_strict_monotonicity() {
        let p = params(ItmoOperator::Sigmoid);
        let lo: HdrImage<f64> = itmo_sigmoid(&gray(0), &p).unwrap();
        assert_eq!(lo.data[0], 0.0);
        let hi: HdrImage<f64> = itmo_sigmoid(&gray(255), &p).unwrap();
        assert!((hi.data[0] - 1000.0).abs() < 1e-9);
        let mut prev = -1.0;
        for z in 0..=255u8 {
            let v = sigmoid_curve(z as f64 / 255.0, &p);
            assert!(v > prev, "sigmoid not strictly increasing at code {z}");
            prev = v;
        }
    }

    #[test]
    fn dual_region_identity_band_and_knee_continuity() {
        let p = params(ItmoOperator::DualRegion);
        // n = 0.5 lies in the identity band: out = l_max * 0.5. Choose n01
        // so that n01^gamma = 0.5.
        let n01 = 0.5f64.powf(1.0 / p.gamma);
        assert!((dual_region_curve(n01, &p) - 500.0).abs() < 1e-9);

        // Continuity at both knees and both band edges.
        for knee in [0.04, 0.05, 0.06, 0.91, 0.92, 0.93] {
            let n01 = (knee as f64).powf(1.0 / p.gamma);
            let below = dual_region_curve(n01 - 1e-9, &p);
            let above = dual_region_curve(n01 + 1e-9, &p);
            assert!(
                (below - above).abs() <= 1e-6 * p.l_max,
                "jump at n={knee}: {below} vs {above}"
            );
        }
    }

    #[test]
    fn dual_region_branches_and_monotonicity() {
        let p = params(ItmoOperator::DualRegion);
        // Deep shadow: n well below the band -> l_max * n / boost.
        let n = 0.02f64;
        assert!((dual_region_curve(n.powf(1.0 / p.gamma), &p) - 1000.0 * n / 4.0).abs() < 1e-9);
        // Strong highlight: n above the band -> l_max * n * boost.
        let n = 0.97f64;
        assert!((dual_region_curve(n.powf(1.0 / p.gamma), &p) - 1000.0 * n * 4.0).abs() < 1e-9);
        let mut prev = -1.0;
        for z in 0..=255u8 {
            let v = dual_region_curve(z as f64 / 255.0, &p);
            assert!(v >= prev, "dual_region decreasing at code {z}");
            prev = v;
        }
    }

    #[test]
    fn expand_map_without_highlights_equals_linear() {
        let p = params(ItmoOperator::ExpandMap);
        let mut img = LdrImage::filled(16, 16, [40, 90, 10]);
        img.set_pixel(3, 4, [200, 180, 120]); // bright but below threshold
        let linear: HdrImage<f64> = itmo_linear(&img, &p).unwrap();
        let expanded: HdrImage<f64> = itmo_expand_map(&img, &p).unwrap();
        assert_eq!(linear, expanded);
    }

    #[test]
    fn expand_map_fully_saturated_boosts_everywhere() {
        let p = params(ItmoOperator::ExpandMap);
        let img = LdrImage::filled(32, 16, [255, 255, 255]);
        let out: HdrImage<f64> = itmo_expand_map(&img, &p).unwrap();
        // Blurring an all-ones mask with border renormalization leaves it at
        // one, so every pixel is base * boost = 4000.
        for v in &out.data {
            assert!((v - 4000.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn expand_map_disk_decays_like_gaussian_oracle() {
        let p = params(ItmoOperator::ExpandMap);
        let (w, h) = (129usize, 129usize);
        let mut img = LdrImage::filled(w, h, [100, 100, 100]);
        let (cx, cy) = (64i32, 64i32);
        for y in 0..h as i32 {
            for x in 0..w as i32 {
                if (x - cx).pow(2) + (y - cy).pow(2) <= 100 {
                    img.set_pixel(x as usize, y as usize, [255, 255, 255]);
                }
            }
        }
        let base: HdrImage<f64> = itmo_linear(&img, &p).unwrap();
        let out: HdrImage<f64> = itmo_expand_map(&img, &p).unwrap();
        // Recover E from the expansion factor.
        let mut e_map = vec![0f64; w * h];
        for i in 0..w * h {
            let factor = out.data[3 * i] / base.data[3 * i];
            e_map[i] = (factor - 1.0) / (p.boost - 1.0);
        }
        // Monotone decay with distance along the center row.
        let row = 64usize;
        let mut prev = f64::INFINITY;
        for x in 64..120 {
            let e = e_map[row * w + x];
            assert!(e <= prev + 1e-9, "E increased at x={x}");
            prev = e;
        }
        // Agreement with a direct sampled-Gaussian convolution. The box-blur
        // approximation plus its width rounding differ from the true kernel
        // by at most a few percent of full scale.
        let sigma = w.max(h) as f64 / 50.0;
        let mask: Vec<f64> = img
            .data
            .chunks_exact(3)
            .map(|rgb| {
                let lum = (0.2126 * rgb[0] as f64 + 0.7152 * rgb[1] as f64
                    + 0.0722 * rgb[2] as f64)
                    / 255.0;
                if lum >= p.highlight_threshold {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let oracle = direct_gaussian_blur(&mask, w, h, sigma);
        let max_diff = e_map
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_diff < 0.15, "box approximation deviates by {max_diff}");
    }

    /// Direct truncated-Gaussian convolution with border renormalization.
    fn direct_gaussian_blur(values: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
        let half = (3.0 * sigma).ceil() as i32;
        let mut kernel = Vec::new();
        for d in -half..=half {
            kernel.push((-(d as f64).powi(2) / (2.0 * sigma * sigma)).exp());
        }
        let mut out = vec![0f64; w * h];
        for y in 0..h as i32 {
            for x in 0..w as i32 {
                let mut acc = 0f64;
                let mut norm = 0f64;
                for dy in -half..=half {
                    for dx in -half..=half {
                        let (sx, sy) = (x + dx, y + dy);
                        if sx < 0 || sy < 0 || sx >= w as i32 || sy >= h as i32 {
                            continue;
                        }
                        let k = kernel[(dy + half) as usize] * kernel[(dx + half) as usize];
                        acc += k * values[sy as usize * w + sx as usize];
                        norm += k;
                    }
                }
                out[y as usize * w + x as usize] = acc / norm;
            }
        }
        out
    }

    #[test]
    fn all_operators_bounded_monotone_and_deterministic() {
        for op in ItmoOperator::ALL {
            let p = params(op);
            let bound = p.l_max * p.boost;
            let mut prev = -1.0;
            for z in 0..=255u8 {
                let img = gray(z);
                let out: HdrImage<f64> = apply(&img, &p).unwrap();
                let again: HdrImage<f64> = apply(&img, &p).unwrap();
                assert_eq!(out, again, "{op:?} not deterministic");
                for &v in &out.data {
                    assert!(v.is_finite() && v >= 0.0 && v <= bound + 1e-9, "{op:?}: {v}");
                }
                // Constant images expose pointwise monotonicity for every
                // operator, including the spatially-varying one.
                assert!(out.data[0] >= prev - 1e-12, "{op:?} decreasing at {z}");
                prev = out.data[0];
            }
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = params(ItmoOperator::Linear);
        p.gamma = 0.0;
        assert!(itmo_linear::<f32>(&gray(1), &p).is_err());
        let mut p = params(ItmoOperator::DualRegion);
        p.highlight_threshold = 1.0;
        assert!(itmo_dual_region::<f32>(&gray(1), &p).is_err());
        let mut p = params(ItmoOperator::ExpandMap);
        p.boost = 0.5;
        assert!(itmo_expand_map::<f32>(&gray(1), &p).is_err());
    }
}
