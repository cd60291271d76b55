//! Central-difference gradient verification for every layer.
//!
//! The check projects the layer output onto a fixed random direction `u`,
//! giving a scalar objective `phi(theta) = <u, layer(x)>`, and compares the
//! analytic gradient of `phi` (one backward pass with `u` as the output
//! gradient) against `(phi(theta + h) - phi(theta - h)) / 2h` at `f64`
//! precision with `h = 1e-3`.
//!
//! Every numeric evaluation starts from a fresh clone of the original layer,
//! so stateful pieces (batch-norm running statistics, the dropout RNG) are
//! reset identically and the objective is a deterministic function of the
//! perturbed value. Note this makes dropout checkable even in TRAIN mode:
//! each clone replays the same mask.
//!
//! Validity caveat: central differences assume the objective is smooth at the
//! evaluation point. ReLU and max-pool are piecewise linear, so a check point
//! with a pre-activation within `h` of a kink (or a near-tie in a pooling
//! window) violates that assumption and can report a spurious mismatch. The
//! standalone activation tests use fixed seeds verified to avoid such points;
//! composite checks through batch norm (which centers activations exactly on
//! the ReLU kink) instead construct margin explicitly, by shifting the norm's
//! beta so the pre-activation distribution sits several sigma from zero.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{softmax_cross_entropy, Layer, Mode, Tensor};
use crate::{Result, Scalar};

/// Finite-difference step used throughout.
pub const STEP: f64 = 1e-3;

/// Result for one checked tensor (the layer input or one parameter).
#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub checked: usize,
}

/// Per-tensor worst-case relative errors for one layer check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    /// Worst relative error over all checked tensors.
    pub fn max_rel_err(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.max_rel_err)
            .fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err() <= tol
    }
}

fn dot<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&p, &q)| p.to_f64v() * q.to_f64v())
        .sum()
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Evaluate the projected objective with one element of one tensor nudged by
/// `delta`. `tensor = None` perturbs the input, `Some(t)` perturbs parameter
/// tensor `t` (in [`Layer::params`] order).
fn objective(
    template: &Layer<f64>,
    x: &Tensor<f64>,
    u: &Tensor<f64>,
    tensor: Option<usize>,
    elem: usize,
    delta: f64,
) -> Result<f64> {
    let mut layer = template.clone();
    let y = match tensor {
        None => {
            let mut xp = x.clone();
            xp.data_mut()[elem] += delta;
            layer.forward(&xp, Mode::Train)?
        }
        Some(t) => {
            layer.params_mut()[t].data_mut()[elem] += delta;
            layer.forward(x, Mode::Train)?
        }
    };
    Ok(dot(u, &y))
}

/// Pick up to `max_indices` element indices of a tensor with `numel`
/// elements, deterministically from `rng`.
fn pick_indices(rng: &mut ChaCha8Rng, numel: usize, max_indices: usize) -> Vec<usize> {
    if numel <= max_indices {
        (0..numel).collect()
    } else {
        rand::seq::index::sample(rng, numel, max_indices).into_vec()
    }
}

/// Check the analytic gradients of `layer` at input `x` against central
/// differences. At most `max_indices` elements per tensor are probed
/// (seeded subsample for large tensors). Returns per-tensor worst relative
/// errors; see the module docs for the comparison formula.
pub fn grad_check_layer(
    layer: &Layer<f64>,
    x: &Tensor<f64>,
    seed: u64,
    max_indices: usize,
) -> Result<GradCheckReport> {
    grad_check_layer_scaled(layer, x, seed, max_indices, 1.0)
}

/// [`grad_check_layer`] with the analytic gradients multiplied by
/// `analytic_scale` before comparison. The scale exists purely so tests can
/// prove the harness detects wrong gradients: any scale other than `1.0`
/// must make the check fail.
pub fn grad_check_layer_scaled(
    layer: &Layer<f64>,
    x: &Tensor<f64>,
    seed: u64,
    max_indices: usize,
    analytic_scale: f64,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Analytic pass on a scratch clone; `layer` itself stays pristine so the
    // numeric evaluations all start from the same state.
    let mut work = layer.clone();
    let y = work.forward(x, Mode::Train)?;
    let mut u = Tensor::<f64>::zeros(y.shape().to_vec());
    for v in u.data_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    let grad_x = work.backward(&u)?;
    let analytic_params: Vec<Tensor<f64>> = work.grads().into_iter().cloned().collect();

    let mut names = vec!["input".to_string()];
    names.extend(work.param_names());

    let mut tensors = Vec::new();
    for (slot, name) in names.iter().enumerate() {
        let (tensor_sel, analytic) = if slot == 0 {
            (None, &grad_x)
        } else {
            (Some(slot - 1), &analytic_params[slot - 1])
        };
        let base = match tensor_sel {
            None => x,
            Some(t) => layer.params()[t],
        };
        let indices = pick_indices(&mut rng, base.numel(), max_indices);
        let mut worst = 0.0f64;
        for &i in &indices {
            let plus = objective(layer, x, &u, tensor_sel, i, STEP)?;
            let minus = objective(layer, x, &u, tensor_sel, i, -STEP)?;
            let numeric = (plus - minus) / (2.0 * STEP);
            let a = analytic.data()[i] * analytic_scale;
            worst = worst.max(rel_err(a, numeric));
        }
        tensors.push(TensorCheck {
            name: name.clone(),
            max_rel_err: worst,
            checked: indices.len(),
        });
    }
    Ok(GradCheckReport { tensors })
}

/// Check the softmax cross-entropy gradient on a random `(n, k)` logit
/// matrix against central differences. Returns the worst relative error
/// over all logit elements.
pub fn grad_check_softmax_ce(n: usize, k: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut logits = Tensor::<f64>::zeros(vec![n, k]);
    for v in logits.data_mut() {
        *v = rng.gen_range(-2.0..2.0);
    }
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();

    let (_, grad) = softmax_cross_entropy(&logits, &labels)?;
    let mut worst = 0.0f64;
    for i in 0..n * k {
        let mut lp = logits.clone();
        lp.data_mut()[i] += STEP;
        let (loss_p, _) = softmax_cross_entropy(&lp, &labels)?;
        let mut lm = logits.clone();
        lm.data_mut()[i] -= STEP;
        let (loss_m, _) = softmax_cross_entropy(&lm, &labels)?;
        let numeric = (loss_p - loss_m) / (2.0 * STEP);
        worst = worst.max(rel_err(grad.data()[i], numeric));
    }
    Ok(worst)
}
