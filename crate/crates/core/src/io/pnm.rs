//! Binary portable graymap (`P5`) and pixmap (`P6`) images. Pixels load as
//! `C × H × W` tensors with values in `[0, 1]`.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn bad(path: &Path, message: impl Into<String>) -> Error {
    Error::ImageFormat {
        path: PathBuf::from(path),
        message: message.into(),
    }
}

/// Reads the next whitespace-delimited header token, skipping `#` comments.
fn header_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let mut pos = 0;
    let channels = match header_token(bytes, &mut pos).as_deref() {
        Some("P5") => 1,
        Some("P6") => 3,
        Some(other) => return Err(bad(path, format!("unsupported PNM kind {other:?}"))),
        None => return Err(bad(path, "empty file")),
    };
    let mut number = |what: &str| -> Result<usize> {
        header_token(bytes, &mut pos)
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(path, format!("bad {what}")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if width == 0 || height == 0 || !(1..=65535).contains(&maxval) {
        return Err(bad(path, "invalid dimensions or maxval"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let bytes_per = if maxval > 255 { 2 } else { 1 };
    let n = width * height * channels;
    let raster = bytes
        .get(pos..pos + n * bytes_per)
        .ok_or_else(|| bad(path, "truncated raster"))?;
    let scale = 1.0 / maxval as f64;
    let mut data = vec![0.0; n];
    for idx in 0..width * height {
        for c in 0..channels {
            let k = idx * channels + c;
            let v = if bytes_per == 2 {
                u16::from_be_bytes([raster[2 * k], raster[2 * k + 1]]) as f64
            } else {
                raster[k] as f64
            };
            data[c * width * height + idx] = v * scale;
        }
    }
    Tensor::new(vec![channels, height, width], data)
}

pub fn read(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    decode(&std::fs::read(path)?, path)
}

/// Encodes a 1- or 3-channel tensor with 8-bit samples, clamping to `[0, 1]`.
pub fn encode(image: &Tensor) -> Result<Vec<u8>> {
    let (c, h, w) = image.dims3()?;
    let kind = match c {
        1 => "P5",
        3 => "P6",
        _ => return Err(Error::shape(format!("PNM needs 1 or 3 channels, got {c}"))),
    };
    let mut out = format!("{kind}\n{w} {h}\n255\n").into_bytes();
    for idx in 0..h * w {
        for ch in 0..c {
            let v = image.data()[ch * h * w + idx];
            out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    Ok(out)
}

pub fn write(path: impl AsRef<Path>, image: &Tensor) -> Result<()> {
    std::fs::write(path, encode(image)?)?;
    Ok(())
}

/// Writes a single-channel tensor min-max scaled to the full gray range.
pub fn write_scaled(path: impl AsRef<Path>, image: &Tensor) -> Result<()> {
    let lo = image.data().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = image.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    write(path, &image.map(|v| (v - lo) / span))
}
