//! The two block classifiers and their training/inference plumbing.
//!
//! Both models map a normalized `(N, 1, 64, 64)` log-luminance block batch to
//! two logits (mHDR vs iHDR):
//!
//! * `PLAIN` — a VGG-style stack: three double-conv + max-pool stages with
//!   64/128/256 channels, then a 512-512-2 dense head with dropout.
//! * `RESIDUAL` — a 7x7/1 stem into overlapping 3x3/2 average pooling,
//!   then three stages of two residual blocks (64/128/256 channels, the
//!   second and third stage entering at stride 2), global average pooling,
//!   and a single dense pair of logits.
//!
//! `build_model` self-audits: it walks the planned shapes with plain
//! arithmetic and counts parameters in closed form, and refuses to return a
//! model that disagrees with either.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use train::{
    train_from_manifest, train_on_blocks, TrainConfig, TrainHistory, TrainOutcome, TrainState,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::{
    softmax_rows, AvgPool, BatchNorm, Conv2d, Dense, Dropout, Flatten, GlobalAvgPool, Layer,
    MaxPool, Mode, Relu, ResidualBlock, Tensor,
};
use crate::pipeline::{Block, HdrClass, BLOCK_SIZE};
use crate::{Error, Result};

/// Which classifier to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    Plain,
    Residual,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Plain => "plain",
            Architecture::Residual => "residual",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "plain" => Ok(Architecture::Plain),
            "residual" => Ok(Architecture::Residual),
            other => Err(Error::Parameter(format!(
                "unknown architecture {other:?} (expected plain or residual)"
            ))),
        }
    }
}

/// One step of an architecture plan. The plan is data, so shape walking and
/// parameter counting can be done arithmetically, independent of the layer
/// implementations they audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanStep {
    Conv {
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
    },
    BatchNorm {
        channels: usize,
    },
    Relu,
    MaxPool,
    AvgPool {
        window: usize,
        stride: usize,
    },
    GlobalAvgPool,
    Flatten,
    Dense {
        din: usize,
        dout: usize,
    },
    Dropout,
    Residual {
        cin: usize,
        cout: usize,
        stride: usize,
    },
}

/// Architecture choice plus the few knobs that are not fixed by it.
/// Input is always one 64x64 log-luminance channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub dropout: f64,
}

impl ModelSpec {
    pub fn new(architecture: Architecture) -> Self {
        Self {
            architecture,
            dropout: 0.5,
        }
    }

    /// The full layer plan, in forward order.
    pub fn plan(&self) -> Vec<PlanStep> {
        use PlanStep::*;
        match self.architecture {
            Architecture::Plain => {
                let mut steps = Vec::new();
                let widths = [(1, 64), (64, 128), (128, 256)];
                for (cin, cout) in widths {
                    steps.push(Conv {
                        cin,
                        cout,
                        k: 3,
                        stride: 1,
                        pad: 1,
                    });
                    steps.push(Relu);
                    steps.push(Conv {
                        cin: cout,
                        cout,
                        k: 3,
                        stride: 1,
                        pad: 1,
                    });
                    steps.push(Relu);
                    steps.push(MaxPool);
                }
                steps.push(Flatten);
                steps.push(Dense {
                    din: 256 * 8 * 8,
                    dout: 512,
                });
                steps.push(Relu);
                steps.push(Dropout);
                steps.push(Dense {
                    din: 512,
                    dout: 512,
                });
                steps.push(Relu);
                steps.push(Dropout);
                steps.push(Dense { din: 512, dout: 2 });
                steps
            }
            Architecture::Residual => vec![
                Conv {
                    cin: 1,
                    cout: 32,
                    k: 7,
                    stride: 1,
                    pad: 3,
                },
                BatchNorm { channels: 32 },
                Relu,
                AvgPool {
                    window: 3,
                    stride: 2,
                },
                Residual {
                    cin: 32,
                    cout: 64,
                    stride: 1,
                },
                Residual {
                    cin: 64,
                    cout: 64,
                    stride: 1,
                },
                Residual {
                    cin: 64,
                    cout: 128,
                    stride: 2,
                },
                Residual {
                    cin: 128,
                    cout: 128,
                    stride: 1,
                },
                Residual {
                    cin: 128,
                    cout: 256,
                    stride: 2,
                },
                Residual {
                    cin: 256,
                    cout: 256,
                    stride: 1,
                },
                GlobalAvgPool,
                Dense { din: 256, dout: 2 },
            ],
        }
    }

    /// Walks the plan arithmetically from a `(n, 1, 64, 64)` input and
    /// returns the shape after every step (input shape first). Errors on any
    /// inconsistency (odd dims into max pool, dense width mismatch, ...).
    pub fn shape_walk(&self, n: usize) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![vec![n, 1, BLOCK_SIZE, BLOCK_SIZE]];
        let mut cur = shapes[0].clone();
        for (i, step) in self.plan().into_iter().enumerate() {
            let next = step_shape(&cur, step)
                .map_err(|e| Error::Shape(format!("plan step {i} ({step:?}): {e}")))?;
            shapes.push(next.clone());
            cur = next;
        }
        if cur != [n, 2] {
            return Err(Error::Shape(format!(
                "plan must end at (n, 2) logits, ended at {cur:?}"
            )));
        }
        Ok(shapes)
    }

    /// Closed-form trainable parameter count (weights + biases + BN affine
    /// pairs), derived from the plan without touching layer code.
    pub fn param_count(&self) -> usize {
        self.plan().into_iter().map(step_param_count).sum()
    }
}

fn conv_out(d: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = d + 2 * pad;
    if padded < k {
        return Err(Error::Shape(format!(
            "kernel {k} larger than padded input {padded}"
        )));
    }
    Ok((padded - k) / stride + 1)
}

fn step_shape(cur: &[usize], step: PlanStep) -> Result<Vec<usize>> {
    let spatial = |cur: &[usize]| -> Result<(usize, usize, usize, usize)> {
        if cur.len() != 4 {
            return Err(Error::Shape(format!("expected 4-d input, got {cur:?}")));
        }
        Ok((cur[0], cur[1], cur[2], cur[3]))
    };
    match step {
        PlanStep::Conv {
            cin,
            cout,
            k,
            stride,
            pad,
        } => {
            let (n, c, h, w) = spatial(cur)?;
            if c != cin {
                return Err(Error::Shape(format!("expected {cin} channels, got {c}")));
            }
            Ok(vec![
                n,
                cout,
                conv_out(h, k, stride, pad)?,
                conv_out(w, k, stride, pad)?,
            ])
        }
        PlanStep::BatchNorm { channels } => {
            let (_, c, _, _) = spatial(cur)?;
            if c != channels {
                return Err(Error::Shape(format!(
                    "batch norm over {channels} channels fed {c}"
                )));
            }
            Ok(cur.to_vec())
        }
        PlanStep::Relu | PlanStep::Dropout => Ok(cur.to_vec()),
        PlanStep::MaxPool => {
            let (n, c, h, w) = spatial(cur)?;
            if h % 2 != 0 || w % 2 != 0 {
                return Err(Error::Shape(format!("max pool needs even dims, got {h}x{w}")));
            }
            Ok(vec![n, c, h / 2, w / 2])
        }
        PlanStep::AvgPool { window, stride } => {
            let (n, c, h, w) = spatial(cur)?;
            let out = |d: usize| {
                if d <= window {
                    1
                } else {
                    (d - window).div_ceil(stride) + 1
                }
            };
            Ok(vec![n, c, out(h), out(w)])
        }
        PlanStep::GlobalAvgPool => {
            let (n, c, _, _) = spatial(cur)?;
            Ok(vec![n, c])
        }
        PlanStep::Flatten => {
            let (n, c, h, w) = spatial(cur)?;
            Ok(vec![n, c * h * w])
        }
        PlanStep::Dense { din, dout } => {
            if cur.len() != 2 || cur[1] != din {
                return Err(Error::Shape(format!(
                    "dense expects (n, {din}), got {cur:?}"
                )));
            }
            Ok(vec![cur[0], dout])
        }
        PlanStep::Residual { cin, cout, stride } => {
            let (n, c, h, w) = spatial(cur)?;
            if c != cin {
                return Err(Error::Shape(format!("expected {cin} channels, got {c}")));
            }
            // Both convs are 3x3 pad 1; only the first (and the shortcut)
            // carry the stride.
            Ok(vec![
                n,
                cout,
                conv_out(h, 3, stride, 1)?,
                conv_out(w, 3, stride, 1)?,
            ])
        }
    }
}

fn step_param_count(step: PlanStep) -> usize {
    match step {
        PlanStep::Conv {
            cin, cout, k, ..
        } => cin * cout * k * k + cout,
        PlanStep::BatchNorm { channels } => 2 * channels,
        PlanStep::Dense { din, dout } => din * dout + dout,
        PlanStep::Residual { cin, cout, stride } => {
            let convs = cin * cout * 9 + cout + cout * cout * 9 + cout;
            let bns = 2 * (2 * cout);
            let shortcut = if cin != cout || stride != 1 {
                cin * cout + cout
            } else {
                0
            };
            convs + bns + shortcut
        }
        _ => 0,
    }
}

/// A built classifier: the spec it was built from plus the live layer stack.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub layers: Vec<Layer<f32>>,
}

impl Model {
    pub fn forward(&mut self, x: &Tensor<f32>, mode: Mode) -> Result<Tensor<f32>> {
        let mut cur = x.clone();
        for layer in &mut self.layers {
            cur = layer.forward(&cur, mode)?;
        }
        Ok(cur)
    }

    /// Backpropagates the logit gradient through the stack, filling each
    /// layer's parameter gradients. The input gradient is discarded.
    pub fn backward(&mut self, grad_logits: &Tensor<f32>) -> Result<()> {
        let mut cur = grad_logits.clone();
        for layer in self.layers.iter_mut().rev() {
            cur = layer.backward(&cur)?;
        }
        Ok(())
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<f32>> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect()
    }

    pub fn grads(&self) -> Vec<&Tensor<f32>> {
        self.layers.iter().flat_map(|l| l.grads()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.params())
            .map(|t| t.numel())
            .sum()
    }

    pub fn grads_all_finite(&self) -> bool {
        self.grads().iter().all(|g| g.all_finite())
    }

    /// Reseeds every dropout layer from (base seed, epoch, layer index) so a
    /// resumed run replays an uninterrupted run's mask streams exactly.
    pub fn reseed_dropout(&mut self, base_seed: u64, epoch: usize) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            if let Layer::Dropout(d) = layer {
                d.reseed(mix_seed(base_seed, 0x6472_6f70, (epoch as u64) << 16 | i as u64));
            }
        }
    }
}

/// Deterministic seed derivation for independent RNG streams.
pub(crate) fn mix_seed(seed: u64, stream: u64, index: u64) -> u64 {
    // SplitMix64 finalizer over the combined words.
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Builds a model with He-normal weights, zero biases, and identity batch
/// norm, deterministically from `seed`. The spec's arithmetic shape walk and
/// closed-form parameter count are audited against the built layers; any
/// disagreement is a build error.
pub fn build_model(spec: &ModelSpec, seed: u64) -> Result<Model> {
    if !(0.0..1.0).contains(&spec.dropout) {
        return Err(Error::Parameter(format!(
            "dropout must be in [0, 1), got {}",
            spec.dropout
        )));
    }
    spec.shape_walk(1)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    for step in spec.plan() {
        let layer = match step {
            PlanStep::Conv {
                cin,
                cout,
                k,
                stride,
                pad,
            } => Layer::Conv(Conv2d::new(cin, cout, k, stride, pad, &mut rng)?),
            PlanStep::BatchNorm { channels } => Layer::BatchNorm(BatchNorm::new(channels)),
            PlanStep::Relu => Layer::Relu(Relu::new()),
            PlanStep::MaxPool => Layer::MaxPool(MaxPool::new()),
            PlanStep::AvgPool { window, stride } => {
                Layer::AvgPool(AvgPool::new(window, stride)?)
            }
            PlanStep::GlobalAvgPool => Layer::GlobalAvgPool(GlobalAvgPool::new()),
            PlanStep::Flatten => Layer::Flatten(Flatten::new()),
            PlanStep::Dense { din, dout } => Layer::Dense(Dense::new(din, dout, &mut rng)),
            PlanStep::Dropout => Layer::Dropout(Dropout::new(spec.dropout, rng.gen())?),
            PlanStep::Residual { cin, cout, stride } => {
                Layer::Residual(ResidualBlock::new(cin, cout, stride, &mut rng)?)
            }
        };
        layers.push(layer);
    }

    let model = Model {
        spec: *spec,
        layers,
    };
    let built = model.param_count();
    let planned = spec.param_count();
    if built != planned {
        return Err(Error::Shape(format!(
            "parameter audit failed: plan says {planned}, built model has {built}"
        )));
    }
    Ok(model)
}

/// Assembles normalized blocks into a `(N, 1, 64, 64)` batch tensor plus
/// class-index labels.
pub fn blocks_to_batch(blocks: &[&Block<f32>]) -> Result<(Tensor<f32>, Vec<usize>)> {
    let n = blocks.len();
    let mut data = Vec::with_capacity(n * BLOCK_SIZE * BLOCK_SIZE);
    let mut labels = Vec::with_capacity(n);
    for b in blocks {
        if b.pixels.len() != BLOCK_SIZE * BLOCK_SIZE {
            return Err(Error::Shape(format!(
                "block has {} pixels, expected {}",
                b.pixels.len(),
                BLOCK_SIZE * BLOCK_SIZE
            )));
        }
        data.extend_from_slice(&b.pixels);
        labels.push(b.label.index());
    }
    let x = Tensor::new(vec![n, 1, BLOCK_SIZE, BLOCK_SIZE], data)?;
    Ok((x, labels))
}

/// EVAL-mode class probabilities for a batch of normalized blocks.
/// Rejects non-finite inputs and inputs that are clearly not standardized
/// (any |value| > 100 would be a >100-sigma pixel).
pub fn predict_probs(model: &mut Model, x: &Tensor<f32>) -> Result<Tensor<f32>> {
    for (i, v) in x.data().iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Data(format!("non-finite input at element {i}: {v}")));
        }
        if v.abs() > 100.0 {
            return Err(Error::Data(format!(
                "input element {i} = {v} is outside any plausible standardized range; \
                 was the block normalized?"
            )));
        }
    }
    let logits = model.forward(x, Mode::Eval)?;
    softmax_rows(&logits)
}

/// Probabilities `(p_mhdr, p_ihdr)` for each block, evaluated in bounded
/// batches.
pub fn predict_blocks(model: &mut Model, blocks: &[&Block<f32>]) -> Result<Vec<(f32, f32)>> {
    let mut out = Vec::with_capacity(blocks.len());
    for chunk in blocks.chunks(256) {
        let (x, _) = blocks_to_batch(chunk)?;
        let probs = predict_probs(model, &x)?;
        for row in 0..chunk.len() {
            out.push((probs.data()[row * 2], probs.data()[row * 2 + 1]));
        }
    }
    Ok(out)
}

/// Fraction of blocks whose argmax probability matches their label.
pub fn block_accuracy(model: &mut Model, blocks: &[Block<f32>]) -> Result<f64> {
    if blocks.is_empty() {
        return Err(Error::Data("no blocks to evaluate".into()));
    }
    let refs: Vec<&Block<f32>> = blocks.iter().collect();
    let probs = predict_blocks(model, &refs)?;
    let correct = probs
        .iter()
        .zip(blocks)
        .filter(|((pm, pi), b)| {
            let pred = if pm >= pi {
                HdrClass::Mhdr
            } else {
                HdrClass::Ihdr
            };
            pred == b.label
        })
        .count();
    Ok(correct as f64 / blocks.len() as f64)
}
