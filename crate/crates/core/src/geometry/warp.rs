use super::PointMap;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const SNAP: f64 = 1e-9;

/// Reflects an integer index into `[0, n)` about the first and last sample
/// (`-1 → 1`, `n → n - 2`).
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    if i >= 0 && (i as usize) < n {
        return i as usize;
    }
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

#[inline]
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP {
        r
    } else {
        v
    }
}

#[inline]
pub(crate) fn to_pixel(coord: f64, size: usize) -> f64 {
    if size == 1 {
        0.0
    } else {
        (coord + 1.0) * (size - 1) as f64 / 2.0
    }
}

#[inline]
pub(crate) fn to_normalized(pixel: f64, size: usize) -> f64 {
    if size == 1 {
        0.0
    } else {
        -1.0 + 2.0 * pixel / (size - 1) as f64
    }
}

/// Bilinear sample of channel `c` at pixel position `(px, py)`; positions
/// outside the image read its mirror reflection. Positions within `1e-9` of
/// an integer are snapped so aligned sampling is exact.
pub fn sample_bilinear(image: &Tensor, c: usize, px: f64, py: f64) -> f64 {
    let (_, h, w) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    let (px, py) = (snap(px), snap(py));
    let (x0, y0) = (px.floor(), py.floor());
    let (fx, fy) = (px - x0, py - y0);
    let (x0, y0) = (x0 as isize, y0 as isize);
    let plane = &image.data()[c * h * w..(c + 1) * h * w];
    let at = |y: isize, x: isize| plane[reflect_index(y, h) * w + reflect_index(x, w)];
    let top = if fx == 0.0 {
        at(y0, x0)
    } else {
        (1.0 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)
    };
    if fy == 0.0 {
        return top;
    }
    let bottom = if fx == 0.0 {
        at(y0 + 1, x0)
    } else {
        (1.0 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1)
    };
    (1.0 - fy) * top + fy * bottom
}

/// Output pixel at normalised location `g` samples the input at `T(g)`.
pub fn bilinear_warp(image: &Tensor, transform: &impl PointMap) -> Result<Tensor> {
    let (ch, h, w) = image.dims3()?;
    let mut out = Tensor::zeros(&[ch, h, w]);
    for r in 0..h {
        for col in 0..w {
            let g = [to_normalized(col as f64, w), to_normalized(r as f64, h)];
            let p = transform.map_point(g);
            let (px, py) = (to_pixel(p[0], w), to_pixel(p[1], h));
            for c in 0..ch {
                out.data_mut()[(c * h + r) * w + col] = sample_bilinear(image, c, px, py);
            }
        }
    }
    out.ensure_finite("bilinear_warp")?;
    Ok(out)
}

/// Reflects the image outward by `pad` pixels on every side.
pub fn mirror_pad(image: &Tensor, pad: usize) -> Result<Tensor> {
    let (ch, h, w) = image.dims3()?;
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    let mut out = Tensor::zeros(&[ch, ph, pw]);
    for c in 0..ch {
        for r in 0..ph {
            let sr = reflect_index(r as isize - pad as isize, h);
            for col in 0..pw {
                let sc = reflect_index(col as isize - pad as isize, w);
                out.data_mut()[(c * ph + r) * pw + col] = image.at3(c, sr, sc);
            }
        }
    }
    Ok(out)
}

/// Mirror-pads the image by `pad`, returns the centre crop as the source
/// and the centre crop of the transformed padded image as the target.
/// Fails if any target pixel would sample outside the padded extent.
pub fn mirror_pad_center_crop(image: &Tensor, pad: usize, transform: &impl PointMap) -> Result<(Tensor, Tensor)> {
    let (ch, h, w) = image.dims3()?;
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    let limit_x = (pw - 1) as f64 + SNAP;
    let limit_y = (ph - 1) as f64 + SNAP;
    let mut target = Tensor::zeros(&[ch, h, w]);
    for r in 0..h {
        for col in 0..w {
            let g = [to_normalized(col as f64, w), to_normalized(r as f64, h)];
            let p = transform.map_point(g);
            let px = to_pixel(p[0], w) + pad as f64;
            let py = to_pixel(p[1], h) + pad as f64;
            if !(px >= -SNAP && py >= -SNAP && px <= limit_x && py <= limit_y) {
                return Err(Error::PadTooSmall {
                    pad,
                    x: px - pad as f64,
                    y: py - pad as f64,
                });
            }
            // inside the padded extent one reflection about the original
            // border reads the same pixel as the padded image would
            let (sx, sy) = (px - pad as f64, py - pad as f64);
            for c in 0..ch {
                target.data_mut()[(c * h + r) * w + col] = sample_bilinear(image, c, sx, sy);
            }
        }
    }
    Ok((image.clone(), target))
}
