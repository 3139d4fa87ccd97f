use rand::Rng;

use super::{AffineParams, TpsParams, TransformFamily, TransformParams};
use crate::rng::{seeded, Rng as ChaRng};

/// Largest absolute anchor displacement drawn for synthetic TPS pairs.
pub const TPS_MAX_DISPLACEMENT: f64 = 0.4;

/// Ranges of the random affine perturbations. The matrix is
/// `R(φ) · [[1, k], [0, 1]] · diag(sx, sy)` plus a translation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineSampling {
    pub max_rotation_deg: f64,
    pub scale_range: (f64, f64),
    pub max_shear: f64,
    pub max_translation: f64,
}

impl Default for AffineSampling {
    fn default() -> Self {
        AffineSampling {
            max_rotation_deg: 15.0,
            scale_range: (0.75, 1.25),
            max_shear: 0.15,
            max_translation: 0.25,
        }
    }
}

impl AffineSampling {
    pub fn compose(rotation_deg: f64, sx: f64, sy: f64, shear: f64, tx: f64, ty: f64) -> AffineParams {
        let (s, c) = rotation_deg.to_radians().sin_cos();
        // [[1, k], [0, 1]] · diag(sx, sy) = [[sx, k sy], [0, sy]]
        let (m00, m01, m11) = (sx, shear * sy, sy);
        AffineParams {
            theta: [c * m00, c * m01 - s * m11, tx, s * m00, s * m01 + c * m11, ty],
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> AffineParams {
        let sym = |rng: &mut dyn rand::RngCore, b: f64| if b > 0.0 { rng.random_range(-b..=b) } else { 0.0 };
        let rot = sym(rng, self.max_rotation_deg);
        let (lo, hi) = self.scale_range;
        let sx = rng.random_range(lo..=hi);
        let sy = rng.random_range(lo..=hi);
        let shear = sym(rng, self.max_shear);
        let tx = sym(rng, self.max_translation);
        let ty = sym(rng, self.max_translation);
        Self::compose(rot, sx, sy, shear, tx, ty)
    }
}

/// Draws a random ground-truth transform from `rng`.
pub fn sample_transform(family: TransformFamily, rng: &mut ChaRng) -> TransformParams {
    match family {
        TransformFamily::Affine => AffineSampling::default().sample(rng).into(),
        TransformFamily::Tps { grid } => {
            let d = (0..2 * grid * grid)
                .map(|_| rng.random_range(-TPS_MAX_DISPLACEMENT..=TPS_MAX_DISPLACEMENT))
                .collect();
            TpsParams::new(grid, d).expect("length matches grid").into()
        }
    }
}

/// Deterministic in `seed`.
pub fn sample_random_transform(family: TransformFamily, seed: u64) -> TransformParams {
    sample_transform(family, &mut seeded(seed))
}
