//! Binary greyscale PGM (`P5`), 8 or 16 bits per sample.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

struct Header {
    width: usize,
    height: usize,
    maxval: u32,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(format_err("not a binary PGM (expected magic P5)"));
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in &mut fields {
        // whitespace and comments between fields
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(format_err("truncated PGM header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(format_err("malformed PGM header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format_err("PGM header value out of range"))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(format_err("missing whitespace after PGM maxval")),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(format_err("PGM has zero size"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format_err(format!("unsupported PGM maxval {maxval}")));
    }
    Ok(Header {
        width: width as usize,
        height: height as usize,
        maxval,
        data_start: pos,
    })
}

/// Decode to a `(1, 1, h, w)` tensor with values divided by maxval.
pub fn decode_pgm(bytes: &[u8]) -> Result<Tensor> {
    let h = parse_header(bytes)?;
    let n = h.width * h.height;
    let wide = h.maxval > 255;
    let need = n * if wide { 2 } else { 1 };
    let raw = &bytes[h.data_start..];
    if raw.len() < need {
        return Err(format_err(format!(
            "truncated PGM raster: {} of {need} bytes",
            raw.len()
        )));
    }
    let max = f64::from(h.maxval);
    let pixels: Vec<f64> = if wide {
        raw[..need]
            .chunks_exact(2)
            .map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])) / max)
            .collect()
    } else {
        raw[..n].iter().map(|&b| f64::from(b) / max).collect()
    };
    if pixels.iter().any(|&v| v > 1.0) {
        return Err(format_err("PGM sample exceeds maxval"));
    }
    Tensor::image(h.height, h.width, pixels)
}

/// Encode a single image, quantizing `round_ties_even(v·maxval)`.
pub fn encode_pgm(image: &Tensor, maxval: u16) -> Result<Vec<u8>> {
    if image.batch() != 1 || image.channels() != 1 {
        return Err(Error::invalid(format!(
            "can only save a single greyscale image, got shape {:?}",
            image.shape()
        )));
    }
    if maxval == 0 {
        return Err(Error::invalid("maxval must be positive"));
    }
    if let Some(v) = image.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid(format!("pixel value {v} outside [0, 1]")));
    }
    let max = f64::from(maxval);
    let mut out = format!("P5\n{} {}\n{}\n", image.width(), image.height(), maxval).into_bytes();
    for &v in image.data() {
        let q = (v * max).round_ties_even() as u16;
        if maxval > 255 {
            out.extend_from_slice(&q.to_be_bytes());
        } else {
            out.push(q as u8);
        }
    }
    Ok(out)
}

pub fn load_image(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path)?;
    decode_pgm(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Save as 8-bit PGM.
pub fn save_image(image: &Tensor, path: &Path) -> Result<()> {
    fs::write(path, encode_pgm(image, 255)?)?;
    Ok(())
}
