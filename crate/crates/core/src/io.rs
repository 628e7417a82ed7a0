//! PFM, PGM and PPM raster encoding.
//!
//! PFM files are written grayscale (`Pf`), little-endian, bottom row first.
//! PGM/PPM are binary 8-bit (`P5`/`P6`) and meant for viewing only.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{Image, ImageF32, ImageF64, Mask};

pub fn encode_pfm(image: &ImageF32) -> Vec<u8> {
    let (w, h) = image.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for y in (0..h).rev() {
        for v in image.row(y) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Narrows to `f32`; NaN stays NaN.
pub fn encode_pfm_f64(image: &ImageF64) -> Vec<u8> {
    encode_pfm(&image.map(|&v| v as f32))
}

/// Splits `count` whitespace-separated header tokens off the front of `bytes`.
/// The single whitespace byte after the last token is consumed.
fn header_tokens(bytes: &[u8], count: usize, context: &str) -> Result<(Vec<String>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(Error::parse(context, "truncated header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    if i >= bytes.len() || !bytes[i].is_ascii_whitespace() {
        return Err(Error::parse(context, "missing data after header"));
    }
    Ok((tokens, i + 1))
}

fn parse_dim(tok: &str, context: &str, what: &str) -> Result<usize> {
    tok.parse()
        .map_err(|_| Error::parse(context, format!("bad {what} `{tok}`")))
}

pub fn decode_pfm(bytes: &[u8]) -> Result<ImageF32> {
    const CTX: &str = "pfm";
    let (toks, start) = header_tokens(bytes, 4, CTX)?;
    match toks[0].as_str() {
        "Pf" => {}
        "PF" => return Err(Error::parse(CTX, "colour PFM is not supported")),
        other => return Err(Error::parse(CTX, format!("bad magic `{other}`"))),
    }
    let w = parse_dim(&toks[1], CTX, "width")?;
    let h = parse_dim(&toks[2], CTX, "height")?;
    let scale: f32 = toks[3]
        .parse()
        .map_err(|_| Error::parse(CTX, format!("bad scale `{}`", toks[3])))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::parse(CTX, "scale must be nonzero"));
    }
    let body = &bytes[start..];
    if body.len() < w * h * 4 {
        return Err(Error::parse(
            CTX,
            format!("expected {} data bytes, got {}", w * h * 4, body.len()),
        ));
    }
    let mut data = vec![0f32; w * h];
    for (k, chunk) in body[..w * h * 4].chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if scale < 0.0 {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let (x, y_up) = (k % w.max(1), k / w.max(1));
        data[(h - 1 - y_up) * w + x] = v;
    }
    Image::from_vec(w, h, data)
}

pub fn encode_pgm(image: &Image<u8>) -> Vec<u8> {
    let (w, h) = image.dims();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(image.as_slice());
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Image<u8>> {
    const CTX: &str = "pgm";
    let (toks, start) = header_tokens(bytes, 4, CTX)?;
    if toks[0] != "P5" {
        return Err(Error::parse(CTX, format!("bad magic `{}`", toks[0])));
    }
    let w = parse_dim(&toks[1], CTX, "width")?;
    let h = parse_dim(&toks[2], CTX, "height")?;
    if toks[3] != "255" {
        return Err(Error::parse(CTX, "only 8-bit maxval 255 is supported"));
    }
    let body = &bytes[start..];
    if body.len() < w * h {
        return Err(Error::parse(CTX, "truncated pixel data"));
    }
    Image::from_vec(w, h, body[..w * h].to_vec())
}

pub fn mask_to_gray(mask: &Mask) -> Image<u8> {
    mask.map(|&m| if m { 255 } else { 0 })
}

pub fn gray_to_mask(gray: &Image<u8>) -> Mask {
    gray.map(|&g| g >= 128)
}

/// Linear map of `[lo, hi]` to `0..=255`; NaN becomes 0.
pub fn to_gray(image: &ImageF64, lo: f64, hi: f64) -> Image<u8> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    image.map(|&v| {
        if v.is_nan() {
            0
        } else {
            ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
        }
    })
}

pub fn encode_ppm(image: &Image<[u8; 3]>) -> Vec<u8> {
    let (w, h) = image.dims();
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for px in image.as_slice() {
        out.extend_from_slice(px);
    }
    out
}

/// Diverging blue–white–red rendering of a signed map over `[-limit, limit]`;
/// NaN pixels are black.
pub fn diverging_colormap(image: &ImageF64, limit: f64) -> Image<[u8; 3]> {
    let limit = if limit > 0.0 { limit } else { 1.0 };
    image.map(|&v| {
        if v.is_nan() {
            return [0, 0, 0];
        }
        let t = (v / limit).clamp(-1.0, 1.0);
        let fade = ((1.0 - t.abs()) * 255.0).round() as u8;
        if t >= 0.0 {
            [255, fade, fade]
        } else {
            [fade, fade, 255]
        }
    })
}

pub fn write_pfm(path: impl AsRef<Path>, image: &ImageF32) -> Result<()> {
    Ok(std::fs::write(path, encode_pfm(image))?)
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<ImageF32> {
    decode_pfm(&std::fs::read(path)?)
}

pub fn write_pgm(path: impl AsRef<Path>, image: &Image<u8>) -> Result<()> {
    Ok(std::fs::write(path, encode_pgm(image))?)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image<u8>> {
    decode_pgm(&std::fs::read(path)?)
}

pub fn write_ppm(path: impl AsRef<Path>, image: &Image<[u8; 3]>) -> Result<()> {
    Ok(std::fs::write(path, encode_ppm(image))?)
}
