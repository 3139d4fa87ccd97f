use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{TransformFamily, DEFAULT_TPS_GRID};
use crate::io::{parse_value, KvDocument};

/// Side of the square local-transformation encoder kernel.
pub const ENCODER_KERNEL: usize = 7;
/// Width of the per-location index embedding.
pub const EMBEDDING_DIM: usize = 5;
/// Epsilon of the L2 normalisation applied to correlation vectors.
pub const CORRELATION_EPS: f64 = 1e-12;
pub const DEFAULT_INIT_SCALE: f64 = 0.03;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbeddingKind {
    /// Trainable table, zero at initialisation.
    Learned,
    /// `(x, y, x·y, x², y²)` of the normalised location.
    Fixed,
}

impl fmt::Display for EmbeddingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbeddingKind::Learned => "learned",
            EmbeddingKind::Fixed => "fixed",
        })
    }
}

impl FromStr for EmbeddingKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "learned" => Ok(EmbeddingKind::Learned),
            "fixed" => Ok(EmbeddingKind::Fixed),
            _ => Err(format!("expected `learned` or `fixed`, got `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub family: TransformFamily,
    /// Feature depth `D`.
    pub feature_dim: usize,
    pub height: usize,
    pub width: usize,
    /// Number of OAC kernels `N`.
    pub kernels: usize,
    /// Output channels of the 7×7 encoder.
    pub encoder_channels: usize,
    /// Hidden and output width of G.
    pub g_width: usize,
    /// Hidden width of S.
    pub s_hidden: usize,
    pub embedding: EmbeddingKind,
    pub oac_bias: bool,
    /// Multiplier on the He-uniform draws of every weight matrix. The
    /// layers feed batch norm or a softmax, so this mostly sets how fast
    /// they move early in training under ADAM.
    pub init_scale: f64,
    pub seed: u64,
}

impl ModelConfig {
    /// Full-size widths: D=512 on a 15×15 grid, 128 kernels.
    pub fn full(family: TransformFamily) -> Self {
        ModelConfig {
            family,
            feature_dim: 512,
            height: 15,
            width: 15,
            kernels: 128,
            encoder_channels: 128,
            g_width: 128,
            s_hidden: 64,
            embedding: EmbeddingKind::Learned,
            oac_bias: true,
            init_scale: DEFAULT_INIT_SCALE,
            seed: 0,
        }
    }

    /// Small configuration that trains in seconds on one core.
    pub fn desk(family: TransformFamily) -> Self {
        ModelConfig {
            family,
            feature_dim: 16,
            height: 8,
            width: 8,
            kernels: 32,
            encoder_channels: 64,
            g_width: 64,
            s_hidden: 32,
            embedding: EmbeddingKind::Learned,
            oac_bias: true,
            init_scale: DEFAULT_INIT_SCALE,
            seed: 0,
        }
    }

    pub fn param_count(&self) -> usize {
        self.family.param_count()
    }

    /// `(Ĥ, Ŵ)` after the valid 7×7 encoder.
    pub fn encoded_size(&self) -> (usize, usize) {
        (self.height + 1 - ENCODER_KERNEL, self.width + 1 - ENCODER_KERNEL)
    }

    pub fn locations(&self) -> usize {
        let (h, w) = self.encoded_size();
        h * w
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("feature_dim", self.feature_dim),
            ("kernels", self.kernels),
            ("encoder_channels", self.encoder_channels),
            ("g_width", self.g_width),
            ("s_hidden", self.s_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::invalid("init_scale must be a positive number"));
        }
        if self.height < ENCODER_KERNEL || self.width < ENCODER_KERNEL {
            return Err(Error::invalid(format!(
                "feature grid {}x{} is smaller than the {ENCODER_KERNEL}x{ENCODER_KERNEL} encoder",
                self.height, self.width
            )));
        }
        if let TransformFamily::Tps { grid } = self.family {
            if grid < 2 {
                return Err(Error::invalid("tps_grid must be at least 2"));
            }
        }
        Ok(())
    }

    /// Applies one `key = value` setting; `Ok(false)` for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<bool, String> {
        match key {
            "family" => {
                let grid = match self.family {
                    TransformFamily::Tps { grid } => grid,
                    TransformFamily::Affine => DEFAULT_TPS_GRID,
                };
                self.family = match value {
                    "affine" => TransformFamily::Affine,
                    "tps" => TransformFamily::Tps { grid },
                    _ => return Err(format!("expected `affine` or `tps`, got `{value}`")),
                };
            }
            "tps_grid" => {
                let g: usize = parse_value(value)?;
                if let TransformFamily::Tps { grid } = &mut self.family {
                    *grid = g;
                } else if g != DEFAULT_TPS_GRID {
                    return Err("tps_grid only applies to the tps family".into());
                }
            }
            "feature_dim" => self.feature_dim = parse_value(value)?,
            "height" => self.height = parse_value(value)?,
            "width" => self.width = parse_value(value)?,
            "kernels" => self.kernels = parse_value(value)?,
            "encoder_channels" => self.encoder_channels = parse_value(value)?,
            "g_width" => self.g_width = parse_value(value)?,
            "s_hidden" => self.s_hidden = parse_value(value)?,
            "embedding" => self.embedding = parse_value(value)?,
            "oac_bias" => self.oac_bias = parse_value(value)?,
            "init_scale" => self.init_scale = parse_value(value)?,
            "seed" => self.seed = parse_value(value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_kv(&self) -> String {
        let mut s = format!("family = {}\n", self.family);
        if let TransformFamily::Tps { grid } = self.family {
            s += &format!("tps_grid = {grid}\n");
        }
        s += &format!(
            "feature_dim = {}\nheight = {}\nwidth = {}\nkernels = {}\nencoder_channels = {}\n\
             g_width = {}\ns_hidden = {}\nembedding = {}\noac_bias = {}\ninit_scale = {}\nseed = {}\n",
            self.feature_dim,
            self.height,
            self.width,
            self.kernels,
            self.encoder_channels,
            self.g_width,
            self.s_hidden,
            self.embedding,
            self.oac_bias,
            self.init_scale,
            self.seed
        );
        s
    }

    pub fn from_kv(doc: &KvDocument) -> Result<Self> {
        let mut cfg = ModelConfig::desk(TransformFamily::Affine);
        // family first so a tps_grid line is accepted regardless of order
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

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv(&KvDocument::read(path)?)
    }
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_kv())
    }
}
