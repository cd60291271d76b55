//! Binary block store: one shard file per split holding unnormalized
//! conditioned-luminance tiles.
//!
//! Layout (all integers little-endian):
//! `"HDRBLKS1"` magic, `block_size: u32`, `count: u32`, then `count` records
//! of `label: u8`, `source_id: u32`, `origin_row: u32`, `origin_col: u32`,
//! and `block_size^2` f32 pixels.

use std::path::Path;

use super::{Block, HdrClass};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"HDRBLKS1";

/// Serializes blocks into a shard byte buffer.
pub fn encode_blocks(blocks: &[Block<f32>], block_size: usize) -> Result<Vec<u8>> {
    let pixels_per_block = block_size * block_size;
    let mut out = Vec::with_capacity(16 + blocks.len() * (13 + 4 * pixels_per_block));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(block_size as u32).to_le_bytes());
    out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
    for (i, b) in blocks.iter().enumerate() {
        if b.pixels.len() != pixels_per_block {
            return Err(Error::Shape(format!(
                "block {i} has {} pixels, expected {pixels_per_block}",
                b.pixels.len()
            )));
        }
        out.push(b.label.index() as u8);
        out.extend_from_slice(&b.source_id.to_le_bytes());
        out.extend_from_slice(&b.origin.0.to_le_bytes());
        out.extend_from_slice(&b.origin.1.to_le_bytes());
        for v in &b.pixels {
            if !v.is_finite() {
                return Err(Error::Data(format!("block {i} contains non-finite pixel")));
            }
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Parses a shard byte buffer.
pub fn decode_blocks(bytes: &[u8]) -> Result<Vec<Block<f32>>> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize, what: &str| -> Result<&[u8]> {
        let chunk = bytes.get(*pos..*pos + n).ok_or_else(|| {
            Error::format(bytes.len() as u64, format!("truncated shard in {what}"))
        })?;
        *pos += n;
        Ok(chunk)
    };
    let magic = take(&mut pos, 8, "magic")?;
    if magic != MAGIC {
        return Err(Error::format(0, "bad shard magic (expected HDRBLKS1)"));
    }
    let block_size = u32::from_le_bytes(take(&mut pos, 4, "header")?.try_into().unwrap()) as usize;
    if block_size == 0 || block_size > 4096 {
        return Err(Error::format(8, format!("implausible block size {block_size}")));
    }
    let count = u32::from_le_bytes(take(&mut pos, 4, "header")?.try_into().unwrap()) as usize;
    let pixels_per_block = block_size * block_size;
    let mut blocks = Vec::with_capacity(count);
    for i in 0..count {
        let at = pos;
        let label_byte = take(&mut pos, 1, "record label")?[0];
        let label = HdrClass::from_index(label_byte as usize)
            .map_err(|_| Error::format(at as u64, format!("invalid label byte {label_byte}")))?;
        let source_id = u32::from_le_bytes(take(&mut pos, 4, "record header")?.try_into().unwrap());
        let row = u32::from_le_bytes(take(&mut pos, 4, "record header")?.try_into().unwrap());
        let col = u32::from_le_bytes(take(&mut pos, 4, "record header")?.try_into().unwrap());
        let raw = take(&mut pos, 4 * pixels_per_block, "record pixels")?;
        let mut pixels = Vec::with_capacity(pixels_per_block);
        for (j, chunk) in raw.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::format(
                    (at + 13 + 4 * j) as u64,
                    format!("non-finite pixel in block {i}"),
                ));
            }
            pixels.push(v);
        }
        blocks.push(Block {
            pixels,
            label,
            source_id,
            origin: (row, col),
        });
    }
    if pos != bytes.len() {
        return Err(Error::format(
            pos as u64,
            format!("{} trailing bytes after final block", bytes.len() - pos),
        ));
    }
    Ok(blocks)
}

pub fn save_blocks(path: &Path, blocks: &[Block<f32>], block_size: usize) -> Result<()> {
    std::fs::write(path, encode_blocks(blocks, block_size)?).map_err(|e| Error::io(path, e))
}

pub fn load_blocks(path: &Path) -> Result<Vec<Block<f32>>> {
    decode_blocks(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Shard file name for a split.
pub fn shard_name(split: super::Split) -> String {
    format!("{}.blocks", split.name())
}
