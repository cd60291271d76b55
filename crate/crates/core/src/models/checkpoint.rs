//! Self-contained inference checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "HDRCKPT1"
//! arch       u8       0 = plain, 1 = residual
//! dropout    f64
//! norm_mean  f64      TRAIN normalization statistics, so a checkpoint can
//! norm_std   f64      score raw log-luminance blocks without the manifest
//! layers     u32      layer count
//! per layer:
//!   kind_len u8, kind bytes (ASCII tag from Layer::kind)
//!   tensors  u8       persistent tensor count (params + BN running stats)
//!   per tensor: ndim u8, then ndim x u32 dims
//! then, in the same order: every tensor's data as raw f32
//! ```
//!
//! Loading rebuilds the architecture from the header and then requires the
//! stored layer table to match the rebuilt stack exactly, so a corrupt or
//! mismatched file fails before any weight is copied.

use std::path::Path;

use super::{build_model, Architecture, Model, ModelSpec};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"HDRCKPT1";

/// A trained model plus the normalization statistics it expects.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub norm_mean: f64,
    pub norm_std: f64,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(
                (self.pos) as u64,
                format!("checkpoint truncated while reading {what}"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(f64::from_le_bytes(a))
    }
}

/// Serializes a checkpoint to bytes.
pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(match ckpt.model.spec.architecture {
        Architecture::Plain => 0,
        Architecture::Residual => 1,
    });
    put_f64(&mut out, ckpt.model.spec.dropout);
    put_f64(&mut out, ckpt.norm_mean);
    put_f64(&mut out, ckpt.norm_std);
    put_u32(&mut out, ckpt.model.layers.len() as u32);
    for layer in &ckpt.model.layers {
        let kind = layer.kind().as_bytes();
        out.push(kind.len() as u8);
        out.extend_from_slice(kind);
        let tensors = layer.state();
        out.push(tensors.len() as u8);
        for t in &tensors {
            out.push(t.shape().len() as u8);
            for &d in t.shape() {
                put_u32(&mut out, d as u32);
            }
        }
    }
    for layer in &ckpt.model.layers {
        for t in layer.state() {
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

/// Parses checkpoint bytes back into a live model.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::format(0, "not a checkpoint file (bad magic)"));
    }
    let arch = match r.u8("architecture")? {
        0 => Architecture::Plain,
        1 => Architecture::Residual,
        other => {
            return Err(Error::format(
                (r.pos - 1) as u64,
                format!("unknown architecture tag {other}"),
            ))
        }
    };
    let dropout = r.f64("dropout")?;
    let norm_mean = r.f64("norm_mean")?;
    let norm_std = r.f64("norm_std")?;
    if !dropout.is_finite() || !norm_mean.is_finite() || !norm_std.is_finite() {
        return Err(Error::format(9, "non-finite header field"));
    }
    let layer_count = r.u32("layer count")? as usize;

    let spec = ModelSpec { architecture: arch, dropout };
    // Weights are about to be overwritten, so the init seed is irrelevant.
    let mut model = build_model(&spec, 0)?;
    if model.layers.len() != layer_count {
        return Err(Error::format(
            (r.pos - 4) as u64,
            format!(
                "architecture {} has {} layers but file declares {layer_count}",
                arch.name(),
                model.layers.len()
            ),
        ));
    }

    // Validate the layer table against the rebuilt stack.
    for (i, layer) in model.layers.iter().enumerate() {
        let kind_len = r.u8("kind length")? as usize;
        let kind = r.take(kind_len, "kind tag")?;
        if kind != layer.kind().as_bytes() {
            return Err(Error::format(
                (r.pos - kind_len) as u64,
                format!(
                    "layer {i}: file says {:?}, architecture says {:?}",
                    String::from_utf8_lossy(kind),
                    layer.kind()
                ),
            ));
        }
        let tensors = layer.state();
        let declared = r.u8("tensor count")? as usize;
        if declared != tensors.len() {
            return Err(Error::format(
                (r.pos - 1) as u64,
                format!(
                    "layer {i}: file declares {declared} tensors, expected {}",
                    tensors.len()
                ),
            ));
        }
        for (j, t) in tensors.iter().enumerate() {
            let ndim = r.u8("tensor rank")? as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(r.u32("tensor dim")? as usize);
            }
            if dims != t.shape() {
                return Err(Error::format(
                    (r.pos) as u64,
                    format!(
                        "layer {i} tensor {j}: file shape {dims:?}, expected {:?}",
                        t.shape()
                    ),
                ));
            }
        }
    }

    // Copy the payload.
    for layer in model.layers.iter_mut() {
        for t in layer.state_mut() {
            let n = t.numel();
            let raw = r.take(4 * n, "tensor data")?;
            for (i, chunk) in raw.chunks_exact(4).enumerate() {
                let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
                if !v.is_finite() {
                    return Err(Error::format(
                        (r.pos - 4 * n + 4 * i) as u64,
                        format!("non-finite weight {v}"),
                    ));
                }
                t.data_mut()[i] = v;
            }
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::format(
            (r.pos) as u64,
            format!("{} trailing bytes after checkpoint payload", bytes.len() - r.pos),
        ));
    }
    Ok(Checkpoint {
        model,
        norm_mean,
        norm_std,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    std::fs::write(path, encode_checkpoint(ckpt)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weights_of(model: &Model) -> Vec<f32> {
        model
            .layers
            .iter()
            .flat_map(|l| l.state())
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    #[test]
    fn round_trips_bit_exactly() {
        for arch in [Architecture::Plain, Architecture::Residual] {
            let model = build_model(&ModelSpec::new(arch), 31).unwrap();
            let ckpt = Checkpoint {
                model,
                norm_mean: -2.25,
                norm_std: 1.75,
            };
            let bytes = encode_checkpoint(&ckpt);
            let back = decode_checkpoint(&bytes).unwrap();
            assert_eq!(back.norm_mean, -2.25);
            assert_eq!(back.norm_std, 1.75);
            assert_eq!(weights_of(&ckpt.model), weights_of(&back.model));
            // And the round trip of the round trip is byte-identical.
            assert_eq!(encode_checkpoint(&back), bytes);
        }
    }

    #[test]
    fn corrupt_files_are_rejected_with_offsets() {
        let model = build_model(&ModelSpec::new(Architecture::Residual), 3).unwrap();
        let ckpt = Checkpoint {
            model,
            norm_mean: 0.0,
            norm_std: 1.0,
        };
        let bytes = encode_checkpoint(&ckpt);

        assert!(decode_checkpoint(b"not a checkpoint").is_err());
        // Truncation mid-payload.
        assert!(decode_checkpoint(&bytes[..bytes.len() / 2]).is_err());
        // Trailing garbage.
        let mut long = bytes.clone();
        long.push(0);
        assert!(decode_checkpoint(&long).is_err());
        // Flipped architecture tag: table no longer matches.
        let mut wrong = bytes.clone();
        wrong[8] = 0;
        assert!(decode_checkpoint(&wrong).is_err());
    }
}
