use std::path::Path;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::geometry::sample_bilinear;
use crate::io::pnm;
use crate::rng::derived;
use crate::tensor::Tensor;

const CORPUS_STREAM: u64 = 0x434f_5250;

/// Smooth random image in `[0, 1]`: a coloured linear gradient with a
/// sinusoidal texture, overlaid with anisotropic Gaussian blobs.
pub fn procedural_image(channels: usize, size: (usize, usize), seed: u64) -> Tensor {
    let (h, w) = size;
    let mut rng = derived(seed, CORPUS_STREAM, 0);
    let mut img = vec![0.0; channels * h * w];
    let scale = h.max(w) as f64;
    for c in 0..channels {
        let base = rng.random_range(0.3..0.7);
        let gx = rng.random_range(-0.3..0.3);
        let gy = rng.random_range(-0.3..0.3);
        let (fx, fy) = (rng.random_range(-12.0..12.0), rng.random_range(-12.0..12.0));
        let (amp, phase) = (rng.random_range(0.02..0.12), rng.random_range(0.0..std::f64::consts::TAU));
        for y in 0..h {
            for x in 0..w {
                let (u, v) = (x as f64 / scale, y as f64 / scale);
                img[(c * h + y) * w + x] = base + gx * (u - 0.5) + gy * (v - 0.5) + amp * (fx * u + fy * v + phase).sin();
            }
        }
    }
    let blobs = rng.random_range(4..=8);
    for _ in 0..blobs {
        let (cx, cy) = (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64));
        let sx = rng.random_range(0.05..0.25) * scale;
        let sy = rng.random_range(0.05..0.25) * scale;
        let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let (ca, sa) = (angle.cos(), angle.sin());
        let colour: Vec<f64> = (0..channels).map(|_| rng.random_range(-0.6..0.6)).collect();
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let (a, b) = ((ca * dx + sa * dy) / sx, (-sa * dx + ca * dy) / sy);
                let g = (-0.5 * (a * a + b * b)).exp();
                for (c, col) in colour.iter().enumerate() {
                    img[(c * h + y) * w + x] += col * g;
                }
            }
        }
    }
    img.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    Tensor::new(vec![channels, h, w], img).expect("image shape")
}

/// Bilinear resampling with corners mapped to corners.
pub fn resize_bilinear(image: &Tensor, size: (usize, usize)) -> Result<Tensor> {
    let (c, h, w) = image.dims3()?;
    let (oh, ow) = size;
    if oh == 0 || ow == 0 {
        return Err(Error::invalid("resize target must be non-empty"));
    }
    if (oh, ow) == (h, w) {
        return Ok(image.clone());
    }
    let scale = |i: usize, n: usize, m: usize| if n > 1 { i as f64 * (m - 1) as f64 / (n - 1) as f64 } else { 0.0 };
    Ok(Tensor::from_fn(&[c, oh, ow], |idx| {
        let (ch, y, x) = (idx / (oh * ow), (idx / ow) % oh, idx % ow);
        sample_bilinear(image, ch, scale(x, ow, w), scale(y, oh, h))
    }))
}

/// Converts between gray and colour by channel averaging or replication.
fn to_channels(image: Tensor, channels: usize) -> Result<Tensor> {
    let (c, h, w) = image.dims3()?;
    if c == channels {
        return Ok(image);
    }
    let plane = h * w;
    let gray: Vec<f64> = (0..plane)
        .map(|i| (0..c).map(|k| image.data()[k * plane + i]).sum::<f64>() / c as f64)
        .collect();
    Ok(Tensor::from_fn(&[channels, h, w], |idx| gray[idx % plane]))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageCorpus {
    pub images: Vec<Tensor>,
}

impl ImageCorpus {
    pub fn procedural(count: usize, channels: usize, size: (usize, usize), seed: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::Empty("image corpus"));
        }
        let images = (0..count)
            .map(|i| procedural_image(channels, size, crate::rng::derive_seed(seed, CORPUS_STREAM, i as u64)))
            .collect();
        Ok(ImageCorpus { images })
    }

    /// Loads every `.pgm`/`.ppm` file in `dir` (sorted by name), converted to
    /// `channels` and resized to `size`.
    pub fn from_dir(dir: impl AsRef<Path>, channels: usize, size: (usize, usize)) -> Result<Self> {
        let mut paths: Vec<_> = std::fs::read_dir(dir.as_ref())?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                    Some("pgm" | "ppm" | "pnm")
                )
            })
            .collect();
        paths.sort();
        let images = paths
            .iter()
            .map(|p| resize_bilinear(&to_channels(pnm::read(p)?, channels)?, size))
            .collect::<Result<Vec<_>>>()?;
        if images.is_empty() {
            return Err(Error::Empty("image directory"));
        }
        Ok(ImageCorpus { images })
    }

    /// Training and validation images; the last `fraction` of the corpus
    /// (at least one image) is held out.
    pub fn split(&self, fraction: f64) -> Result<(&[Tensor], &[Tensor])> {
        let n = self.images.len();
        let held = ((n as f64 * fraction).ceil() as usize).max(1);
        if held >= n {
            return Err(Error::invalid(format!(
                "corpus of {n} images leaves nothing to train on after a {fraction} validation split"
            )));
        }
        Ok(self.images.split_at(n - held))
    }
}
