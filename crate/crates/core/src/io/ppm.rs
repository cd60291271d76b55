//! Binary PPM (P6) codec, maxval 255 only.

use super::LdrImage;
use crate::{Error, Result};

/// Decodes a binary PPM (P6) byte stream.
pub fn decode_ppm(bytes: &[u8]) -> Result<LdrImage> {
    let mut pos = 0usize;
    let magic = read_token(bytes, &mut pos)?;
    if magic != "P6" {
        return Err(Error::format(
            0,
            format!("not a binary PPM file (magic {magic:?}, expected \"P6\")"),
        ));
    }
    let width: usize = parse_token(bytes, &mut pos, "width")?;
    let height: usize = parse_token(bytes, &mut pos, "height")?;
    if width == 0 || height == 0 {
        return Err(Error::format(
            pos as u64,
            format!("degenerate resolution {width}x{height}"),
        ));
    }
    let maxval_at = pos;
    let maxval: u32 = parse_token(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(Error::format(
            maxval_at as u64,
            format!("unsupported maxval {maxval} (only 255)"),
        ));
    }
    let n = 3 * width * height;
    let payload = bytes.get(pos..pos + n).ok_or_else(|| {
        Error::format(
            bytes.len() as u64,
            format!(
                "truncated payload: need {n} bytes from offset {pos}, file has {}",
                bytes.len()
            ),
        )
    })?;
    LdrImage::new(width, height, payload.to_vec())
}

/// Encodes an image as binary PPM.
pub fn encode_ppm(img: &LdrImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + img.data.len());
    out.extend_from_slice(format!("P6\n{} {}\n255\n", img.width, img.height).as_bytes());
    out.extend_from_slice(&img.data);
    out
}

/// Reads one header token, skipping whitespace and `#` comment lines, and
/// consuming exactly one whitespace byte after the token.
fn read_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        while bytes.get(*pos).is_some_and(|b| b.is_ascii_whitespace()) {
            *pos += 1;
        }
        if bytes.get(*pos) == Some(&b'#') {
            while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while bytes
        .get(*pos)
        .is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#')
    {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::format(start as u64, "unexpected end of header"));
    }
    let token = std::str::from_utf8(&bytes[start..*pos])
        .map_err(|_| Error::format(start as u64, "header token is not ASCII"))?
        .to_owned();
    if bytes.get(*pos).is_some() {
        *pos += 1;
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
