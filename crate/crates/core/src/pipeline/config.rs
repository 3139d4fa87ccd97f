use std::fmt;
use std::path::Path;

use crate::correlation::OacPath;
use crate::error::{Error, Result};
use crate::geometry::{TransformFamily, DEFAULT_TGD_GRID};
use crate::io::{parse_value, KvDocument};
use crate::network::ModelConfig;

pub const DEFAULT_LEARNING_RATE: f64 = 2e-4;
pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_EPOCHS: usize = 50;
pub const DEFAULT_PCK_ALPHA: f64 = 0.1;
pub const DEFAULT_BN_RECALIBRATION: usize = 20;
pub const DEFAULT_WEIGHT_AVERAGE: f64 = 0.99;
pub const DEFAULT_PROVIDER_FIELD: usize = 3;
pub const DEFAULT_CORPUS_SIZE: usize = 2000;

/// Where training images come from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CorpusSource {
    /// `count` procedurally generated images.
    Procedural { count: usize },
    /// Every PGM/PPM file in a directory.
    Directory(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    /// Feature provider; only `random_projection` can run on generated
    /// crops.
    pub provider: String,
    /// Receptive field of each provider cell, in cells.
    pub provider_field: usize,
    pub channels: usize,
    pub image_height: usize,
    pub image_width: usize,
    pub corpus: CorpusSource,
    pub validation_fraction: f64,
    pub validation_pairs: usize,
    /// Mirror padding in pixels; `None` picks half the larger image side.
    pub pad: Option<usize>,
    pub tgd_grid: usize,
    /// Training batches whose averaged statistics replace the batch-norm
    /// running estimates after the last step; 0 keeps the moving averages.
    pub bn_recalibration: usize,
    /// Decay of the exponential moving average of the weights that becomes
    /// the trained model; 0 keeps the last iterate.
    pub weight_average: f64,
    pub oac_path: OacPath,
    /// Architecture; its `seed` is the run seed.
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: DEFAULT_LEARNING_RATE,
            batch_size: DEFAULT_BATCH_SIZE,
            epochs: DEFAULT_EPOCHS,
            steps_per_epoch: 40,
            provider: "random_projection".into(),
            provider_field: DEFAULT_PROVIDER_FIELD,
            channels: 3,
            image_height: 32,
            image_width: 32,
            corpus: CorpusSource::Procedural { count: DEFAULT_CORPUS_SIZE },
            validation_fraction: 0.1,
            validation_pairs: 200,
            pad: None,
            tgd_grid: DEFAULT_TGD_GRID,
            bn_recalibration: DEFAULT_BN_RECALIBRATION,
            weight_average: DEFAULT_WEIGHT_AVERAGE,
            oac_path: OacPath::Direct,
            model: ModelConfig::desk(TransformFamily::Affine),
        }
    }
}

impl TrainConfig {
    pub fn seed(&self) -> u64 {
        self.model.seed
    }

    pub fn total_steps(&self) -> usize {
        self.epochs * self.steps_per_epoch
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be a non-negative number"));
        }
        let positive = [
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("steps_per_epoch", self.steps_per_epoch),
            ("channels", self.channels),
            ("provider_field", self.provider_field),
            ("validation_pairs", self.validation_pairs),
            ("tgd_grid", self.tgd_grid),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.weight_average) {
            return Err(Error::invalid("weight_average must lie in [0, 1)"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::invalid("validation_fraction must lie in (0, 1)"));
        }
        if self.provider != "random_projection" {
            return Err(Error::invalid(format!(
                "provider `{}` cannot featurise generated crops; use random_projection",
                self.provider
            )));
        }
        if !self.image_height.is_multiple_of(self.model.height) || !self.image_width.is_multiple_of(self.model.width) {
            return Err(Error::invalid(format!(
                "image {}x{} is not divisible into the {}x{} feature grid",
                self.image_height, self.image_width, self.model.height, self.model.width
            )));
        }
        if let CorpusSource::Procedural { count: 0 } = self.corpus {
            return Err(Error::Empty("image corpus"));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<bool, String> {
        match key {
            "learning_rate" => self.learning_rate = parse_value(value)?,
            "batch_size" => self.batch_size = parse_value(value)?,
            "epochs" => self.epochs = parse_value(value)?,
            "steps_per_epoch" => self.steps_per_epoch = parse_value(value)?,
            "provider" => self.provider = value.to_string(),
            "provider_field" => self.provider_field = parse_value(value)?,
            "channels" => self.channels = parse_value(value)?,
            "image_height" => self.image_height = parse_value(value)?,
            "image_width" => self.image_width = parse_value(value)?,
            "corpus_size" => self.corpus = CorpusSource::Procedural { count: parse_value(value)? },
            "corpus_dir" => self.corpus = CorpusSource::Directory(value.to_string()),
            "validation_fraction" => self.validation_fraction = parse_value(value)?,
            "validation_pairs" => self.validation_pairs = parse_value(value)?,
            "pad" => {
                self.pad = match value {
                    "auto" => None,
                    v => Some(parse_value(v)?),
                }
            }
            "tgd_grid" => self.tgd_grid = parse_value(value)?,
            "bn_recalibration" => self.bn_recalibration = parse_value(value)?,
            "weight_average" => self.weight_average = parse_value(value)?,
            "oac_path" => self.oac_path = parse_value(value)?,
            _ => return self.model.set(key, value),
        }
        Ok(true)
    }

    pub fn from_kv(doc: &KvDocument) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        if let Some(e) = doc.entries.iter().find(|e| e.key == "family") {
            cfg.set("family", &e.value).map_err(|message| Error::Config {
                path: doc.path.clone(),
                line: e.line,
                message,
            })?;
        }
        doc.visit(|k, v| cfg.set(k, v))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str, path: &str) -> Result<Self> {
        Self::from_kv(&KvDocument::parse(text, path)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv(&KvDocument::read(path)?)
    }

    pub fn to_kv(&self) -> String {
        let mut s = format!(
            "learning_rate = {:e}\nbatch_size = {}\nepochs = {}\nsteps_per_epoch = {}\nprovider = {}\n\
             provider_field = {}\nchannels = {}\nimage_height = {}\nimage_width = {}\n",
            self.learning_rate,
            self.batch_size,
            self.epochs,
            self.steps_per_epoch,
            self.provider,
            self.provider_field,
            self.channels,
            self.image_height,
            self.image_width
        );
        match &self.corpus {
            CorpusSource::Procedural { count } => s += &format!("corpus_size = {count}\n"),
            CorpusSource::Directory(d) => s += &format!("corpus_dir = {d}\n"),
        }
        s += &format!(
            "validation_fraction = {}\nvalidation_pairs = {}\npad = {}\ntgd_grid = {}\nbn_recalibration = {}\nweight_average = {}\noac_path = {}\n",
            self.validation_fraction,
            self.validation_pairs,
            self.pad.map_or("auto".to_string(), |p| p.to_string()),
            self.tgd_grid,
            self.bn_recalibration,
            self.weight_average,
            self.oac_path
        );
        s + &self.model.to_kv()
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_kv())
    }
}
