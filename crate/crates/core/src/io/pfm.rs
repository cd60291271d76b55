//! PFM (Portable FloatMap) codec, color (`PF`) only.
//!
//! Header: `PF`, width/height, then a scale whose sign encodes endianness
//! (negative = little-endian). Scanlines are stored bottom-to-top. The f32
//! payload survives a round trip bit-exactly.

use super::HdrImage;
use crate::{Error, Result};

/// Decodes a PFM byte stream.
pub fn decode_pfm(bytes: &[u8]) -> Result<HdrImage<f32>> {
    let mut pos = 0usize;
    let magic = read_token(bytes, &mut pos)?;
    match magic.as_str() {
        "PF" => {}
        "Pf" => {
            return Err(Error::format(0, "grayscale PFM (`Pf`) is not supported"));
        }
        other => {
            return Err(Error::format(0, format!("not a PFM file (magic {other:?})")));
        }
    }
    let w_at = pos;
    let width: usize = parse_token(bytes, &mut pos, "width")?;
    let height: usize = parse_token(bytes, &mut pos, "height")?;
    if width == 0 || height == 0 {
        return Err(Error::format(
            w_at as u64,
            format!("degenerate resolution {width}x{height}"),
        ));
    }
    let scale_at = pos;
    let scale: f32 = parse_token(bytes, &mut pos, "scale")?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::format(scale_at as u64, format!("invalid scale {scale}")));
    }
    let little_endian = scale < 0.0;
    // Exactly one whitespace byte separates the header from the payload; the
    // token reader has already consumed it.

    let n = 3 * width * height;
    let payload = bytes
        .get(pos..pos + 4 * n)
        .ok_or_else(|| {
            Error::format(
                bytes.len() as u64,
                format!(
                    "truncated payload: need {} bytes from offset {pos}, file has {}",
                    4 * n,
                    bytes.len()
                ),
            )
        })?;

    let mut data = vec![0f32; n];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let raw: [u8; 4] = chunk.try_into().unwrap();
        let v = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        if !v.is_finite() || v < 0.0 {
            return Err(Error::format(
                (pos + 4 * i) as u64,
                format!("radiance component {v} is not finite and >= 0"),
            ));
        }
        // PFM rows run bottom-to-top.
        let y_file = i / (3 * width);
        let rest = i % (3 * width);
        let y = height - 1 - y_file;
        data[3 * width * y + rest] = v;
    }
    HdrImage::new(width, height, data)
}

/// Encodes an image as little-endian PFM.
pub fn encode_pfm(img: &HdrImage<f32>) -> Result<Vec<u8>> {
    for (i, &v) in img.data.iter().enumerate() {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Data(format!(
                "component {i} is {v}; must be finite and >= 0"
            )));
        }
    }
    let mut out = Vec::with_capacity(32 + 12 * img.width * img.height);
    out.extend_from_slice(format!("PF\n{} {}\n-1.0\n", img.width, img.height).as_bytes());
    for y in (0..img.height).rev() {
        let row = &img.data[3 * img.width * y..3 * img.width * (y + 1)];
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Reads one whitespace-delimited ASCII token, consuming one trailing
/// whitespace byte.
fn read_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    while bytes.get(*pos).is_some_and(|b| b.is_ascii_whitespace()) {
        *pos += 1;
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace()) {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::format(start as u64, "unexpected end of header"));
    }
    let token = std::str::from_utf8(&bytes[start..*pos])
        .map_err(|_| Error::format(start as u64, "header token is not ASCII"))?
        .to_owned();
    if bytes.get(*pos).is_some() {
        *pos += 1; // the single whitespace terminator
    }
    Ok(token)
}

fn parse_token<T: std::str::FromStr>(bytes: &[u8], pos: &mut usize, what: &str) -> Result<T> {
    let at = *pos;
    let token = read_token(bytes, pos)?;
    token
        .parse()
        .map_err(|_| Error::format(at as u64, format!("invalid {what} {token:?}")))
}
