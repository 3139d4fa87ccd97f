use std::path::{Path, PathBuf};

use clap::Args;
use oac_core::geometry::{make_regular_grid, pck, read_keypoint_csv, ImageFrame, KeypointPairSet, TransformParams};
use oac_core::pipeline::{
    dump_attention, evaluate_keypoints, predict_all, provider_import, score_predictions, synthetic_keypoints, DataSetup,
    Prediction, TrainConfig,
};
use oac_core::{Model, Tensor};

use crate::args::{read_thetas, ImageSize};
use crate::train::TRAIN_FILE;
use crate::{Failure, Outcome};

/// Synthetic keypoints scored per generated pair.
const KEYPOINTS_PER_PAIR: usize = 20;

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Checkpoint directory written by `oac train`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Score this many held-out synthetic pairs (TGD and PCK).
    #[arg(long, conflicts_with = "keypoints_csv")]
    pub pairs: Option<usize>,
    /// `pair_id,src_x,src_y,trg_x,trg_y,bbox_h,bbox_w` rows in pixels.
    #[arg(long, requires = "image_size")]
    pub keypoints_csv: Option<PathBuf>,
    /// Image size of the annotated pairs, `HxW`.
    #[arg(long)]
    pub image_size: Option<ImageSize>,
    /// Holds `<pair_id>_source.oact` and `<pair_id>_target.oact` feature maps.
    #[arg(long, requires = "keypoints_csv", conflicts_with = "thetas")]
    pub features_dir: Option<PathBuf>,
    /// Score these transforms, one per line in pair order, instead of
    /// model predictions.
    #[arg(long, requires = "keypoints_csv")]
    pub thetas: Option<PathBuf>,
    /// PCK threshold as a fraction of the bounding box.
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Write attention_NNNN.csv and .pgm for every prediction here.
    #[arg(long)]
    pub dump_attention: Option<PathBuf>,
}

/// The training configuration saved with a checkpoint, or the defaults
/// around the checkpoint's architecture.
pub fn checkpoint_config(dir: &Path, model: &Model) -> Result<TrainConfig, Failure> {
    let path = dir.join(TRAIN_FILE);
    let mut cfg = if path.exists() {
        TrainConfig::read(&path)?
    } else {
        TrainConfig::default()
    };
    if cfg.model != model.config {
        if path.exists() {
            return Err(Failure::Usage(format!("{} does not match the checkpoint's model", path.display())));
        }
        cfg.model = model.config.clone();
    }
    Ok(cfg)
}

fn load(dir: &Option<PathBuf>) -> Result<(PathBuf, Model), Failure> {
    let dir = dir.clone().ok_or_else(|| Failure::Usage("--checkpoint is required".into()))?;
    let model = Model::load(&dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?;
    Ok((dir, model))
}

fn dump(dir: &Option<PathBuf>, preds: &[Prediction]) -> Outcome {
    if let Some(dir) = dir {
        for (i, p) in preds.iter().enumerate() {
            dump_attention(dir, i, &p.attention)?;
        }
        println!("attention maps written to {}", dir.display());
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Outcome {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("--alpha must be positive, got {alpha}")))
    }
}

pub fn run(a: EvalArgs) -> Outcome {
    check_alpha(a.alpha)?;
    match (&a.keypoints_csv, a.pairs) {
        (Some(csv), _) => keypoints(&a, csv),
        (None, Some(n)) => synthetic(&a, n),
        (None, None) => Err(Failure::Usage("give --pairs N or --keypoints-csv".into())),
    }
}

fn synthetic(a: &EvalArgs, n: usize) -> Outcome {
    if n == 0 {
        return Err(Failure::Usage("--pairs must be positive".into()));
    }
    let (dir, model) = load(&a.checkpoint)?;
    let cfg = checkpoint_config(&dir, &model)?;
    print!("{cfg}");
    println!("seed = {}\npairs = {n}\nalpha = {}", cfg.seed(), a.alpha);
    let data = DataSetup::new(&cfg)?;
    let samples = data.validation_samples(&cfg, n)?;
    let inputs: Vec<(&Tensor, &Tensor)> = samples.iter().map(|s| (&s.source, &s.target)).collect();
    let preds = predict_all(&model, &inputs)?;
    let thetas: Vec<TransformParams> = preds.iter().map(|p| p.theta.clone()).collect();
    let report = score_predictions(&thetas, &samples, &make_regular_grid(cfg.tgd_grid)?)?;
    let frame = ImageFrame::new(cfg.image_height, cfg.image_width);
    let sets: Vec<KeypointPairSet> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| synthetic_keypoints(format!("pair{i}"), &s.theta_gt, frame, KEYPOINTS_PER_PAIR, i as u64))
        .collect::<Result<_, _>>()?;
    let p = pck(&sets, &thetas, frame, a.alpha)?;
    println!(
        "TGD: mean {:.6e} over {} pairs, identity {:.6e}, ratio {:.4}",
        report.mean_tgd,
        report.count,
        report.identity_tgd,
        report.mean_tgd / report.identity_tgd
    );
    println!("PCK@{}: {:.4} ({}/{} keypoints)", a.alpha, p.value(), p.correct, p.total);
    dump(&a.dump_attention, &preds)
}

fn keypoints(a: &EvalArgs, csv: &Path) -> Outcome {
    let size = a.image_size.expect("clap enforces --image-size");
    let frame = ImageFrame::new(size.height, size.width);
    let sets = read_keypoint_csv(csv)?;
    println!(
        "keypoints_csv = {}\nimage_size = {}x{}\nalpha = {}",
        csv.display(),
        size.height,
        size.width,
        a.alpha
    );
    let result = if let Some(path) = &a.thetas {
        println!("thetas = {}\nseed = none", path.display());
        let thetas = read_thetas(path)?;
        if thetas.len() != sets.len() {
            return Err(Failure::Usage(format!(
                "{} transforms for {} keypoint pairs",
                thetas.len(),
                sets.len()
            )));
        }
        pck(&sets, &thetas, frame, a.alpha)?
    } else {
        let features_dir = a
            .features_dir
            .as_ref()
            .ok_or_else(|| Failure::Usage("give --features-dir or --thetas with --keypoints-csv".into()))?;
        let (dir, model) = load(&a.checkpoint)?;
        print!("{}", model.config.to_kv());
        println!("checkpoint = {}\nfeatures_dir = {}", dir.display(), features_dir.display());
        let features: Vec<(Tensor, Tensor)> = sets
            .iter()
            .map(|s| {
                let f = |side: &str| provider_import(features_dir.join(format!("{}_{side}.oact", s.pair_id)));
                Ok((f("source")?, f("target")?))
            })
            .collect::<Result<_, oac_core::Error>>()?;
        let (result, preds) = evaluate_keypoints(&model, &sets, &features, frame, a.alpha)?;
        dump(&a.dump_attention, &preds)?;
        result
    };
    println!(
        "PCK@{}: {:.4} ({}/{} keypoints, {} pairs)",
        a.alpha,
        result.value(),
        result.correct,
        result.total,
        sets.len()
    );
    Ok(())
}
