//! Radiance RGBE (`.hdr`) codec.
//!
//! Each pixel is stored as four bytes `(r, g, b, e)` sharing one exponent:
//! `component = mantissa/256 * 2^(e-128)`, with `e = 0` denoting black.
//! The decoder accepts flat scanlines, old-style repeat codes, and new-style
//! per-channel RLE; the encoder always emits flat scanlines, which are valid
//! for every image size.

use super::HdrImage;
use crate::{Error, Result};

/// Widths for which new-style RLE scanlines are defined by the format.
const MIN_RLE_WIDTH: usize = 8;
const MAX_RLE_WIDTH: usize = 0x7fff;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn err(&self, at: usize, msg: impl Into<String>) -> Error {
        Error::format(at as u64, msg)
    }

    fn read_byte(&mut self, what: &str) -> Result<u8> {
        match self.bytes.get(self.pos) {
            Some(&b) => {
                self.pos += 1;
                Ok(b)
            }
            None => Err(self.err(self.pos, format!("unexpected end of file in {what}"))),
        }
    }

    /// Reads up to the next `\n` (consumed, not returned); trims a trailing `\r`.
    fn read_line(&mut self) -> Result<&'a [u8]> {
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            self.pos += 1;
            if b == b'\n' {
                let mut line = &self.bytes[start..self.pos - 1];
                if line.last() == Some(&b'\r') {
                    line = &line[..line.len() - 1];
                }
                return Ok(line);
            }
        }
        Err(self.err(start, "unterminated header line"))
    }
}

/// Decomposes a positive finite value as `m * 2^e` with `m` in `[0.5, 1)`.
fn frexp(x: f32) -> (f32, i32) {
    debug_assert!(x.is_finite() && x > 0.0);
    let mut v = x;
    let mut shift = 0i32;
    // Normalize subnormals so the exponent field is usable.
    if v < f32::MIN_POSITIVE {
        v *= 2f32.powi(64);
        shift = -64;
    }
    let bits = v.to_bits();
    let e = ((bits >> 23) & 0xff) as i32 - 126;
    let m = f32::from_bits((bits & 0x007f_ffff) | 0x3f00_0000);
    (m, e + shift)
}

/// Decodes a Radiance RGBE byte stream into linear radiance.
pub fn decode_rgbe(bytes: &[u8]) -> Result<HdrImage<f32>> {
    let mut rd = Reader::new(bytes);

    let magic = rd.read_line()?;
    if magic != b"#?RADIANCE" && magic != b"#?RGBE" {
        return Err(rd.err(0, "missing Radiance magic (expected #?RADIANCE or #?RGBE)"));
    }
    loop {
        let at = rd.pos;
        let line = rd.read_line()?;
        if line.is_empty() {
            break;
        }
        if line.starts_with(b"#") {
            continue;
        }
        if let Some(fmt) = line.strip_prefix(b"FORMAT=") {
            if fmt != b"32-bit_rle_rgbe" {
                return Err(rd.err(
                    at,
                    format!("unsupported FORMAT {:?}", String::from_utf8_lossy(fmt)),
                ));
            }
        }
        // EXPOSURE, GAMMA and other informational variables are ignored.
    }

    let res_at = rd.pos;
    let res_line = rd.read_line()?;
    let res_str = std::str::from_utf8(res_line)
        .map_err(|_| rd.err(res_at, "resolution line is not ASCII"))?;
    let tokens: Vec<&str> = res_str.split_ascii_whitespace().collect();
    if tokens.len() != 4 {
        return Err(rd.err(res_at, format!("malformed resolution line {res_str:?}")));
    }
    if tokens[0] != "-Y" || tokens[2] != "+X" {
        return Err(rd.err(
            res_at,
            format!("unsupported orientation {res_str:?} (only `-Y h +X w`)"),
        ));
    }
    let height: usize = tokens[1]
        .parse()
        .map_err(|_| rd.err(res_at, format!("invalid height {:?}", tokens[1])))?;
    let width: usize = tokens[3]
        .parse()
        .map_err(|_| rd.err(res_at, format!("invalid width {:?}", tokens[3])))?;
    if width == 0 || height == 0 {
        return Err(rd.err(res_at, format!("degenerate resolution {width}x{height}")));
    }

    let mut data = vec![0f32; 3 * width * height];
    let mut scan = vec![[0u8; 4]; width];
    for y in 0..height {
        read_scanline(&mut rd, &mut scan)?;
        let row = &mut data[3 * width * y..3 * width * (y + 1)];
        for (x, q) in scan.iter().enumerate() {
            let [r, g, b] = decode_quad(*q);
            row[3 * x] = r;
            row[3 * x + 1] = g;
            row[3 * x + 2] = b;
        }
    }
    // Trailing bytes after the final scanline are tolerated.
    HdrImage::new(width, height, data)
}

fn decode_quad([r, g, b, e]: [u8; 4]) -> [f32; 3] {
    if e == 0 {
        return [0.0; 3];
    }
    let factor = 2f64.powi(e as i32 - 136);
    [
        (r as f64 * factor) as f32,
        (g as f64 * factor) as f32,
        (b as f64 * factor) as f32,
    ]
}

fn read_scanline(rd: &mut Reader<'_>, scan: &mut [[u8; 4]]) -> Result<()> {
    let width = scan.len();
    if (MIN_RLE_WIDTH..=MAX_RLE_WIDTH).contains(&width) {
        let mark = rd.pos;
        let b0 = rd.read_byte("scanline")?;
        let b1 = rd.read_byte("scanline")?;
        let b2 = rd.read_byte("scanline")?;
        let b3 = rd.read_byte("scanline")?;
        if b0 == 2 && b1 == 2 && ((b2 as usize) << 8 | b3 as usize) == width {
            return read_rle_scanline(rd, scan);
        }
        rd.pos = mark;
    }
    read_flat_scanline(rd, scan)
}

/// New-style RLE: four independent byte streams (R, G, B, E), each a series of
/// runs (`code > 128`: repeat next byte `code - 128` times) and literals
/// (`1 <= code <= 128`: copy `code` bytes).
fn read_rle_scanline(rd: &mut Reader<'_>, scan: &mut [[u8; 4]]) -> Result<()> {
    let width = scan.len();
    for ch in 0..4 {
        let mut x = 0usize;
        while x < width {
            let at = rd.pos;
            let code = rd.read_byte("RLE scanline")?;
            if code > 128 {
                let run = (code - 128) as usize;
                let value = rd.read_byte("RLE scanline")?;
                if x + run > width {
                    return Err(rd.err(at, format!("RLE run of {run} overflows scanline")));
                }
                for q in &mut scan[x..x + run] {
                    q[ch] = value;
                }
                x += run;
            } else {
                if code == 0 {
                    return Err(rd.err(at, "zero-length literal run in RLE scanline"));
                }
                let n = code as usize;
                if x + n > width {
                    return Err(rd.err(at, format!("literal run of {n} overflows scanline")));
                }
                for q in &mut scan[x..x + n] {
                    q[ch] = rd.read_byte("RLE scanline")?;
                }
                x += n;
            }
        }
    }
    Ok(())
}

/// Flat scanline of RGBE quadruples, with old-style `(1,1,1,count)` repeat
/// codes (consecutive repeats shift the count left by 8 bits each).
fn read_flat_scanline(rd: &mut Reader<'_>, scan: &mut [[u8; 4]]) -> Result<()> {
    let width = scan.len();
    let mut x = 0usize;
    let mut repeat_shift = 0u32;
    while x < width {
        let at = rd.pos;
        let q = [
            rd.read_byte("scanline")?,
            rd.read_byte("scanline")?,
            rd.read_byte("scanline")?,
            rd.read_byte("scanline")?,
        ];
        if q[0] == 1 && q[1] == 1 && q[2] == 1 {
            if x == 0 {
                return Err(rd.err(at, "old-style repeat code with no previous pixel"));
            }
            let count = (q[3] as usize) << repeat_shift;
            if x + count > width {
                return Err(rd.err(at, format!("repeat of {count} overflows scanline")));
            }
            let prev = scan[x - 1];
            for slot in &mut scan[x..x + count] {
                *slot = prev;
            }
            x += count;
            repeat_shift += 8;
        } else {
            scan[x] = q;
            x += 1;
            repeat_shift = 0;
        }
    }
    Ok(())
}

/// Encodes linear radiance as a Radiance RGBE file with flat scanlines.
pub fn encode_rgbe(img: &HdrImage<f32>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(64 + 4 * img.width * img.height);
    out.extend_from_slice(b"#?RADIANCE\n");
    out.extend_from_slice(b"FORMAT=32-bit_rle_rgbe\n");
    out.extend_from_slice(b"\n");
    out.extend_from_slice(format!("-Y {} +X {}\n", img.height, img.width).as_bytes());
    for (i, rgb) in img.data.chunks_exact(3).enumerate() {
        out.extend_from_slice(&encode_quad(rgb[0], rgb[1], rgb[2]).map_err(|e| {
            Error::Data(format!("pixel {i}: {e}"))
        })?);
    }
    Ok(out)
}

fn encode_quad(r: f32, g: f32, b: f32) -> std::result::Result<[u8; 4], String> {
    for v in [r, g, b] {
        if !v.is_finite() || v < 0.0 {
            return Err(format!("component {v} is not finite and >= 0"));
        }
    }
    let max = r.max(g).max(b);
    if max < 1e-32 {
        return Ok([0, 0, 0, 0]);
    }
    let (m, e) = frexp(max);
    if e > 127 {
        return Err(format!("component {max} exceeds the RGBE exponent range"));
    }
    if e < -127 {
        return Ok([0, 0, 0, 0]);
    }
    let scale = m * 256.0 / max;
    Ok([
        ((r * scale).min(255.0)) as u8,
        ((g * scale).min(255.0)) as u8,
        ((b * scale).min(255.0)) as u8,
        (e + 128) as u8,
    ])
}
