use std::io::Write as _;
use std::path::Path;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::geometry::{make_regular_grid, tgd, GridPoints, TransformParams};
use crate::network::Model;
use crate::rng::{derive_seed, derived};
use crate::tensor::{Adam, Mode, Tensor};

use super::config::{CorpusSource, TrainConfig};
use super::corpus::ImageCorpus;
use super::evaluate::{evaluate_tgd, EvalSample, TgdReport};
use super::pairs::{default_pad, generate_pair, TrainingPair};
use super::provider::{FeatureProvider, RandomProjection};

/// Abort when the loss stays above this multiple of its first value...
pub const DIVERGENCE_FACTOR: f64 = 10.0;
/// ...for this many consecutive steps.
pub const DIVERGENCE_PATIENCE: usize = 100;

const STREAM_CORPUS: u64 = 1;
const STREAM_PROVIDER: u64 = 2;
const STREAM_TRAIN: u64 = 3;
const STREAM_VALIDATION: u64 = 4;

/// Corpus, provider and padding shared by training and evaluation.
pub struct DataSetup {
    pub corpus: ImageCorpus,
    pub provider: RandomProjection,
    pub pad: usize,
    pub validation_start: usize,
}

impl DataSetup {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let size = (config.image_height, config.image_width);
        let seed = config.seed();
        let corpus = match &config.corpus {
            CorpusSource::Procedural { count } => {
                ImageCorpus::procedural(*count, config.channels, size, derive_seed(seed, STREAM_CORPUS, 0))?
            }
            CorpusSource::Directory(dir) => ImageCorpus::from_dir(dir, config.channels, size)?,
        };
        let (train, _) = corpus.split(config.validation_fraction)?;
        let validation_start = train.len();
        let provider = RandomProjection::with_field(
            config.channels,
            size,
            (config.model.height, config.model.width),
            config.provider_field,
            config.model.feature_dim,
            derive_seed(seed, STREAM_PROVIDER, 0),
        )?;
        Ok(DataSetup {
            corpus,
            provider,
            pad: config.pad.unwrap_or_else(|| default_pad(size.0, size.1)),
            validation_start,
        })
    }

    pub fn train_images(&self) -> &[Tensor] {
        &self.corpus.images[..self.validation_start]
    }

    pub fn validation_images(&self) -> &[Tensor] {
        &self.corpus.images[self.validation_start..]
    }

    /// Feature maps of a generated pair.
    pub fn featurize(&self, pair: &TrainingPair) -> Result<EvalSample> {
        Ok(EvalSample {
            source: self.provider.extract(&pair.source)?,
            target: self.provider.extract(&pair.target)?,
            theta_gt: pair.theta_gt.clone(),
        })
    }

    /// Training example number `index`: a deterministic image choice and
    /// transform draw.
    pub fn training_sample(&self, config: &TrainConfig, index: u64) -> Result<EvalSample> {
        let images = self.train_images();
        let mut rng = derived(config.seed(), STREAM_TRAIN, index);
        let image = &images[rng.random_range(0..images.len())];
        self.featurize(&generate_pair(image, config.model.family, self.pad, rng.random())?)
    }

    /// Held-out pair number `index`: validation images in turn, each with
    /// its own transform draw.
    pub fn validation_pair(&self, config: &TrainConfig, index: usize) -> Result<TrainingPair> {
        let images = self.validation_images();
        let seed = derive_seed(config.seed(), STREAM_VALIDATION, index as u64);
        generate_pair(&images[index % images.len()], config.model.family, self.pad, seed)
    }

    pub fn validation_samples(&self, config: &TrainConfig, count: usize) -> Result<Vec<EvalSample>> {
        (0..count).map(|i| self.featurize(&self.validation_pair(config, i)?)).collect()
    }
}

/// Mean TGD of a batch of predictions and its gradient wrt each `θ`.
pub fn batch_tgd(thetas: &[TransformParams], gts: &[TransformParams], grid: &GridPoints) -> Result<(f64, Tensor)> {
    let b = thetas.len();
    if b == 0 || b != gts.len() {
        return Err(Error::shape(format!("{b} predictions for {} targets", gts.len())));
    }
    let q = thetas[0].as_slice().len();
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(b * q);
    for (t, gt) in thetas.iter().zip(gts) {
        let (l, g) = tgd(t, gt, grid)?;
        loss += l;
        grad.extend(g.iter().map(|v| v / b as f64));
    }
    Ok((loss / b as f64, Tensor::new(vec![b, q], grad)?))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    /// Mean batch TGD before each update.
    pub losses: Vec<f64>,
    pub validation: TgdReport,
}

/// Aborts with [`Error::Diverged`] once the loss has exceeded
/// [`DIVERGENCE_FACTOR`] times its first value for [`DIVERGENCE_PATIENCE`]
/// consecutive steps.
#[derive(Clone, Debug, Default)]
pub struct DivergenceGuard {
    initial: Option<f64>,
    run: usize,
}

impl DivergenceGuard {
    pub fn observe(&mut self, step: usize, loss: f64) -> Result<()> {
        if !loss.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        let initial = *self.initial.get_or_insert(loss);
        if loss > DIVERGENCE_FACTOR * initial {
            self.run += 1;
            if self.run >= DIVERGENCE_PATIENCE {
                return Err(Error::Diverged { step, loss, initial });
            }
        } else {
            self.run = 0;
        }
        Ok(())
    }
}

/// Mini-batch ADAM on mean TGD. The provider is fixed; only the model
/// learns. `on_step` sees `(step, loss)` after each update.
pub fn train_with(config: &TrainConfig, data: &DataSetup, mut on_step: impl FnMut(usize, f64)) -> Result<TrainOutcome> {
    let mut model = Model::new(config.model.clone())?;
    model.oac_path = config.oac_path;
    let grid = make_regular_grid(config.tgd_grid)?;
    let mut adam = Adam::new(config.learning_rate);
    let mut guard = DivergenceGuard::default();
    let total = config.total_steps();
    let b = config.batch_size;
    let mut losses = Vec::with_capacity(total);
    let mut averaged: Option<Vec<Tensor>> = None;
    for step in 0..total {
        let batch: Vec<EvalSample> = (0..b)
            .map(|i| data.training_sample(config, (step * b + i) as u64))
            .collect::<Result<_>>()?;
        let inputs: Vec<(&Tensor, &Tensor)> = batch.iter().map(|s| (&s.source, &s.target)).collect();
        let pass = model.forward(&inputs, Mode::Train)?;
        let gts: Vec<TransformParams> = batch.iter().map(|s| s.theta_gt.clone()).collect();
        let (loss, d_theta) = batch_tgd(&pass.thetas, &gts, &grid)?;
        guard.observe(step, loss)?;
        model.backward(&pass, &d_theta)?;
        model.update_running_stats(&pass);
        adam.step(&mut model.parameters_mut());
        if config.weight_average > 0.0 {
            let params = model.parameters_mut();
            match averaged.as_mut() {
                None => averaged = Some(params.iter().map(|p| p.value.clone()).collect()),
                Some(avg) => {
                    // bias-free EMA; early steps weigh in as 1/(step+1)
                    let decay = config.weight_average.min(step as f64 / (step + 1) as f64);
                    for (a, p) in avg.iter_mut().zip(&params) {
                        for (av, v) in a.data_mut().iter_mut().zip(p.value.data()) {
                            *av += (1.0 - decay) * (v - *av);
                        }
                    }
                }
            }
        }
        losses.push(loss);
        on_step(step, loss);
    }
    if let Some(avg) = averaged {
        for (p, a) in model.parameters_mut().into_iter().zip(avg) {
            p.value = a;
        }
    }
    for p in model.parameters_mut() {
        p.value.ensure_finite("trained parameters")?;
    }
    if config.bn_recalibration > 0 {
        // fresh training draws, numbered after the ones the steps consumed
        let first = (total * b) as u64;
        let samples: Vec<EvalSample> = (0..(config.bn_recalibration * b) as u64)
            .map(|i| data.training_sample(config, first + i))
            .collect::<Result<_>>()?;
        let batches: Vec<Vec<(&Tensor, &Tensor)>> = samples
            .chunks(b)
            .map(|c| c.iter().map(|s| (&s.source, &s.target)).collect())
            .collect();
        model.recalibrate_batch_norm(&batches)?;
    }
    let validation = evaluate_tgd(&model, &data.validation_samples(config, config.validation_pairs)?, &grid)?;
    Ok(TrainOutcome {
        model,
        losses,
        validation,
    })
}

pub fn train(config: &TrainConfig) -> Result<TrainOutcome> {
    let data = DataSetup::new(config)?;
    train_with(config, &data, |_, _| {})
}

/// `step,loss` CSV with full-precision values.
pub fn write_loss_csv(path: impl AsRef<Path>, losses: &[f64]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "step,loss")?;
    for (i, l) in losses.iter().enumerate() {
        writeln!(out, "{i},{l:e}")?;
    }
    out.flush()?;
    Ok(())
}
