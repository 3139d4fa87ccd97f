use rand::Rng as _;

use crate::error::{Error, Result};
use crate::geometry::{
    mirror_pad_center_crop, sample_random_transform, AffineParams, Composed, ImageFrame, KeypointPairSet, PointMap,
    TpsParams, TransformFamily, TransformParams,
};
use crate::rng::derived;
use crate::tensor::Tensor;

const KEYPOINT_STREAM: u64 = 0x4b45_5950;

/// Self-supervised example: `target(g) = source(θ_GT(g))` in normalised
/// coordinates, with the source's mirror reflection filling in outside it.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    pub source: Tensor,
    pub target: Tensor,
    pub theta_gt: TransformParams,
}

/// Mirror padding wide enough for every transform the samplers draw:
/// half the larger image side.
pub fn default_pad(height: usize, width: usize) -> usize {
    height.max(width).div_ceil(2)
}

pub fn pair_with_transform(image: &Tensor, theta: TransformParams, pad: usize) -> Result<TrainingPair> {
    let (source, target) = mirror_pad_center_crop(image, pad, &theta)?;
    Ok(TrainingPair {
        source,
        target,
        theta_gt: theta,
    })
}

/// Draws `θ_GT` from `family` with `seed` and builds the pair.
pub fn generate_pair(image: &Tensor, family: TransformFamily, pad: usize, seed: u64) -> Result<TrainingPair> {
    pair_with_transform(image, sample_random_transform(family, seed), pad)
}

/// `count` random keypoints in the pair's target frame, each matched with
/// its image under `θ` (its location in the source frame). Predicting `θ`
/// exactly therefore puts every keypoint on its match.
pub fn synthetic_keypoints(
    pair_id: impl Into<String>,
    theta: &impl PointMap,
    frame: ImageFrame,
    count: usize,
    seed: u64,
) -> Result<KeypointPairSet> {
    if count == 0 {
        return Err(Error::Empty("keypoint set"));
    }
    let mut rng = derived(seed, KEYPOINT_STREAM, 0);
    let (h, w) = (frame.height as f64, frame.width as f64);
    let mut source = Vec::with_capacity(count);
    let mut target = Vec::with_capacity(count);
    for _ in 0..count {
        let p = [rng.random_range(0.0..w - 1.0), rng.random_range(0.0..h - 1.0)];
        source.push(p);
        target.push(frame.to_pixels(theta.map_point(frame.normalize(p))));
    }
    KeypointPairSet::new(pair_id, source, target, h, w)
}

/// Composite mapping of an affine-then-TPS cascade. Each stage warps the
/// output of the previous one, so output-frame points pass through the TPS
/// first and the affine second.
pub fn compose_affine_tps(affine: &AffineParams, tps: &TpsParams) -> Composed<TransformParams, TransformParams> {
    Composed {
        first: TransformParams::Tps(tps.clone()),
        second: TransformParams::Affine(*affine),
    }
}
