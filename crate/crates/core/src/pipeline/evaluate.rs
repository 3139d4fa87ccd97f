use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{grid_distance, pck, GridPoints, ImageFrame, KeypointPairSet, PckResult, PointMap, TransformParams};
use crate::io::pnm;
use crate::network::Model;
use crate::tensor::{Mode, Tensor};

/// Largest batch pushed through the network at once during evaluation.
pub const EVAL_BATCH: usize = 32;

/// Feature maps of a pair and the transform relating them.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSample {
    pub source: Tensor,
    pub target: Tensor,
    pub theta_gt: TransformParams,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TgdReport {
    pub mean_tgd: f64,
    /// Mean TGD of always predicting the identity.
    pub identity_tgd: f64,
    pub count: usize,
}

/// Model prediction for one pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub theta: TransformParams,
    /// `1 × Ĥ × Ŵ`.
    pub attention: Tensor,
}

/// Eval-mode predictions for `(source, target)` feature pairs.
pub fn predict_all(model: &Model, inputs: &[(&Tensor, &Tensor)]) -> Result<Vec<Prediction>> {
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(EVAL_BATCH) {
        let pass = model.forward(chunk, Mode::Eval)?;
        for (b, theta) in pass.thetas.iter().enumerate() {
            out.push(Prediction {
                theta: theta.clone(),
                attention: pass.attention(b),
            });
        }
    }
    Ok(out)
}

/// Mean grid distance between paired mappings.
pub fn mean_grid_distance<A: PointMap, B: PointMap>(predicted: &[A], truth: &[B], grid: &GridPoints) -> Result<f64> {
    if predicted.is_empty() || predicted.len() != truth.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} ground-truth transforms",
            predicted.len(),
            truth.len()
        )));
    }
    let total: f64 = predicted.iter().zip(truth).map(|(p, t)| grid_distance(p, t, grid)).sum();
    Ok(total / predicted.len() as f64)
}

pub fn identity_baseline(truth: &[TransformParams], grid: &GridPoints) -> Result<f64> {
    let ids: Vec<TransformParams> = truth.iter().map(|t| t.family().identity()).collect();
    mean_grid_distance(&ids, truth, grid)
}

/// Scores `predicted` against the samples' ground truth.
pub fn score_predictions(predicted: &[TransformParams], samples: &[EvalSample], grid: &GridPoints) -> Result<TgdReport> {
    let truth: Vec<TransformParams> = samples.iter().map(|s| s.theta_gt.clone()).collect();
    for (p, t) in predicted.iter().zip(&truth) {
        if p.family() != t.family() {
            return Err(Error::FamilyMismatch(format!("predicted {} for a {} pair", p.family(), t.family())));
        }
    }
    Ok(TgdReport {
        mean_tgd: mean_grid_distance(predicted, &truth, grid)?,
        identity_tgd: identity_baseline(&truth, grid)?,
        count: samples.len(),
    })
}

/// Runs the model in eval mode over every sample and reports mean TGD.
pub fn evaluate_tgd(model: &Model, samples: &[EvalSample], grid: &GridPoints) -> Result<TgdReport> {
    let inputs: Vec<(&Tensor, &Tensor)> = samples.iter().map(|s| (&s.source, &s.target)).collect();
    let preds: Vec<TransformParams> = predict_all(model, &inputs)?.into_iter().map(|p| p.theta).collect();
    score_predictions(&preds, samples, grid)
}

/// PCK of model predictions on annotated pairs. `features[i]` holds the
/// feature maps of the `i`-th set's source and target images. The model
/// samples the target image, so its transform carries source keypoints
/// into the target frame.
pub fn evaluate_keypoints(
    model: &Model,
    sets: &[KeypointPairSet],
    features: &[(Tensor, Tensor)],
    frame: ImageFrame,
    alpha: f64,
) -> Result<(PckResult, Vec<Prediction>)> {
    if sets.len() != features.len() {
        return Err(Error::shape(format!("{} keypoint sets, {} feature pairs", sets.len(), features.len())));
    }
    let inputs: Vec<(&Tensor, &Tensor)> = features.iter().map(|(s, t)| (t, s)).collect();
    let preds = predict_all(model, &inputs)?;
    let thetas: Vec<&TransformParams> = preds.iter().map(|p| &p.theta).collect();
    Ok((pck(sets, &thetas, frame, alpha)?, preds))
}

/// Writes `attention_NNNN.csv` (one row per attention row) and a min-max
/// scaled `attention_NNNN.pgm`.
pub fn dump_attention(dir: impl AsRef<Path>, index: usize, attention: &Tensor) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let (_, h, w) = attention.dims3()?;
    let csv = dir.join(format!("attention_{index:04}.csv"));
    let mut out = std::io::BufWriter::new(std::fs::File::create(&csv)?);
    for row in attention.data().chunks_exact(w) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    debug_assert_eq!(attention.len(), h * w);
    let pgm = dir.join(format!("attention_{index:04}.pgm"));
    pnm::write_scaled(&pgm, attention)?;
    Ok((csv, pgm))
}
