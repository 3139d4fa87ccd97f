use std::path::Path;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::reflect_index;
use crate::io::read_tensor;
use crate::rng::derived;
use crate::tensor::Tensor;

/// Columns whose norm falls below this are set to zero instead of scaled.
pub const FEATURE_EPS: f64 = 1e-12;

const PROJECTION_STREAM: u64 = 0x5052_4f4a;

/// Maps an image (`C × H_img × W_img`) to an L2-normalised feature map.
pub trait FeatureProvider {
    fn name(&self) -> &'static str;
    fn extract(&self, image: &Tensor) -> Result<Tensor>;
}

/// Divides every column by its norm; columns with norm below
/// [`FEATURE_EPS`] become exactly zero.
pub fn normalize_columns(x: &Tensor) -> Result<Tensor> {
    let (d, h, w) = x.dims3()?;
    let plane = h * w;
    let mut out = x.data().to_vec();
    for loc in 0..plane {
        let norm = (0..d).map(|c| out[c * plane + loc].powi(2)).sum::<f64>().sqrt();
        for c in 0..d {
            let v = &mut out[c * plane + loc];
            *v = if norm < FEATURE_EPS { 0.0 } else { *v / norm };
        }
    }
    Tensor::new(vec![d, h, w], out)
}

/// Frozen stand-in for a pretrained extractor: each image cell's pixels are
/// flattened, mean-centred, multiplied by a fixed random matrix, rectified
/// and normalised. The matrix has orthonormal rows when `D` does not exceed
/// the patch length, and scaled Gaussian rows otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomProjection {
    channels: usize,
    image: (usize, usize),
    grid: (usize, usize),
    field: usize,
    /// `D × (C·cell_h·cell_w)`.
    projection: Tensor,
}

impl RandomProjection {
    pub fn new(channels: usize, image: (usize, usize), grid: (usize, usize), dim: usize, seed: u64) -> Result<Self> {
        Self::with_field(channels, image, grid, 1, dim, seed)
    }

    /// Like [`RandomProjection::new`], but each cell sees a window `field`
    /// cells wide centred on it, average-pooled by `field` back to the cell
    /// size. Pixels outside the image are mirror-reflected.
    pub fn with_field(
        channels: usize,
        image: (usize, usize),
        grid: (usize, usize),
        field: usize,
        dim: usize,
        seed: u64,
    ) -> Result<Self> {
        let ((ih, iw), (gh, gw)) = (image, grid);
        if channels == 0 || dim == 0 || gh == 0 || gw == 0 || field == 0 {
            return Err(Error::invalid("provider dimensions must be positive"));
        }
        if ih % gh != 0 || iw % gw != 0 || ih == 0 || iw == 0 {
            return Err(Error::invalid(format!(
                "image {ih}x{iw} is not divisible into a {gh}x{gw} grid of cells"
            )));
        }
        let patch = channels * (ih / gh) * (iw / gw);
        let mut rng = derived(seed, PROJECTION_STREAM, patch as u64);
        let gaussian = nalgebra::DMatrix::from_fn(patch, dim, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
        let projection = if dim <= patch {
            // orthonormal rows: a uniformly random D-dimensional subspace
            let q = gaussian.qr().q();
            Tensor::from_fn(&[dim, patch], |idx| q[(idx % patch, idx / patch)])
        } else {
            let scale = 1.0 / (patch as f64).sqrt();
            Tensor::from_fn(&[dim, patch], |idx| gaussian[(idx % patch, idx / patch)] * scale)
        };
        Ok(RandomProjection {
            channels,
            image,
            grid,
            field,
            projection,
        })
    }

    pub fn dim(&self) -> usize {
        self.projection.shape()[0]
    }

    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }

    pub fn image_size(&self) -> (usize, usize) {
        self.image
    }
}

impl FeatureProvider for RandomProjection {
    fn name(&self) -> &'static str {
        "random_projection"
    }

    fn extract(&self, image: &Tensor) -> Result<Tensor> {
        let (c, ih, iw) = image.dims3()?;
        if c != self.channels || (ih, iw) != self.image {
            return Err(Error::shape(format!(
                "provider expects {}x{}x{} images, got {:?}",
                self.channels,
                self.image.0,
                self.image.1,
                image.shape()
            )));
        }
        let (gh, gw) = self.grid;
        let (ch, cw) = (ih / gh, iw / gw);
        let patch_len = c * ch * cw;
        let d = self.dim();
        let plane = gh * gw;
        let px = image.data();
        let pr = self.projection.data();
        let f = self.field;
        let norm = 1.0 / (f * f) as f64;
        let mut out = vec![0.0; d * plane];
        let mut patch = vec![0.0; patch_len];
        // summed-area table over the mirror-reflected extent every window covers
        let (top, left) = (-(((f - 1) * ch / 2) as isize), -(((f - 1) * cw / 2) as isize));
        let (ext_h, ext_w) = (ih + (f - 1) * ch, iw + (f - 1) * cw);
        let (sat_h, sat_w) = (ext_h + 1, ext_w + 1);
        let sat_plane = sat_h * sat_w;
        let mut integral = Vec::new();
        if f > 1 {
            integral = vec![0.0; c * sat_plane];
            for cc in 0..c {
                let sat = &mut integral[cc * sat_plane..(cc + 1) * sat_plane];
                for y in 0..ext_h {
                    let sy = reflect_index(top + y as isize, ih);
                    let mut row = 0.0;
                    for x in 0..ext_w {
                        row += px[(cc * ih + sy) * iw + reflect_index(left + x as isize, iw)];
                        sat[(y + 1) * sat_w + x + 1] = sat[y * sat_w + x + 1] + row;
                    }
                }
            }
        }
        for gi in 0..gh {
            for gj in 0..gw {
                if f == 1 {
                    let mut k = 0;
                    for cc in 0..c {
                        for y in gi * ch..(gi + 1) * ch {
                            let row = &px[(cc * ih + y) * iw + gj * cw..(cc * ih + y) * iw + (gj + 1) * cw];
                            patch[k..k + cw].copy_from_slice(row);
                            k += cw;
                        }
                    }
                } else {
                    // window origin, so that the window centre is the cell centre
                    let y0 = (gi * ch) as isize - ((f - 1) * ch / 2) as isize;
                    let x0 = (gj * cw) as isize - ((f - 1) * cw / 2) as isize;
                    let (oy, ox) = ((y0 - top) as usize, (x0 - left) as usize);
                    for cc in 0..c {
                        let sat = &integral[cc * sat_plane..(cc + 1) * sat_plane];
                        for py in 0..ch {
                            let (ya, yb) = (oy + py * f, oy + (py + 1) * f);
                            for pxx in 0..cw {
                                let (xa, xb) = (ox + pxx * f, ox + (pxx + 1) * f);
                                let sum = sat[yb * sat_w + xb] - sat[ya * sat_w + xb] - sat[yb * sat_w + xa]
                                    + sat[ya * sat_w + xa];
                                patch[(cc * ch + py) * cw + pxx] = sum * norm;
                            }
                        }
                    }
                }
                let mean = patch.iter().sum::<f64>() / patch_len as f64;
                patch.iter_mut().for_each(|v| *v -= mean);
                let loc = gi * gw + gj;
                for n in 0..d {
                    let v: f64 = pr[n * patch_len..(n + 1) * patch_len]
                        .iter()
                        .zip(&patch)
                        .map(|(a, b)| a * b)
                        .sum();
                    out[n * plane + loc] = v.max(0.0);
                }
            }
        }
        normalize_columns(&Tensor::new(vec![d, gh, gw], out)?)
    }
}

pub fn provider_random_projection(image: &Tensor, grid: (usize, usize), dim: usize, seed: u64) -> Result<Tensor> {
    let (c, ih, iw) = image.dims3()?;
    RandomProjection::new(c, (ih, iw), grid, dim, seed)?.extract(image)
}

/// Loads an externally computed `D × H × W` feature map and normalises its
/// columns.
pub fn provider_import(path: impl AsRef<Path>) -> Result<Tensor> {
    let t = read_tensor(path)?;
    if t.rank() != 3 {
        return Err(Error::shape(format!("imported features must be rank 3, got {:?}", t.shape())));
    }
    normalize_columns(&t)
}
