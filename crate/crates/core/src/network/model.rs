use std::path::Path;

use crate::correlation::{
    correlation_map, normalize_correlation, oac_backward, oac_backward_reordered, oac_forward_direct,
    oac_forward_reordered, CorrelationMap, DisplacementMap, OacKernelBank, OacPath,
};
use crate::error::{Error, Result};
use crate::geometry::TransformParams;
use crate::io::{read_checkpoint, write_checkpoint, CheckpointEntry, KvDocument, Role};
use crate::rng::seeded;
use crate::tensor::{BatchNorm, Mode, Parameter, Tensor};

use super::attention::{theta_from_raw, AttentionHead, HeadCache};
use super::config::{ModelConfig, CORRELATION_EPS};
use super::encoder::{add_into, rows_to_plane, Encoder, EncoderCache};

/// File holding the model configuration inside a checkpoint directory.
pub const CONFIG_FILE: &str = "config.txt";

/// Diagnostics for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionState {
    /// `F`, `E × Ĥ × Ŵ`.
    pub local_features: Tensor,
    /// Raw scores of S, `1 × Ĥ × Ŵ`.
    pub scores: Tensor,
    /// Attention probabilities `α`, `1 × Ĥ × Ŵ`.
    pub alpha: Tensor,
    /// `τ`, length G.
    pub attended: Tensor,
}

/// Everything the backward pass needs from a batched forward pass.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub thetas: Vec<TransformParams>,
    correlations: Vec<CorrelationMap>,
    displacements: Vec<DisplacementMap>,
    encoder: EncoderCache,
    features: Tensor,
    head: HeadCache,
    encoded: (usize, usize),
    path: OacPath,
}

impl ForwardPass {
    pub fn batch(&self) -> usize {
        self.thetas.len()
    }

    /// Normalised correlation map of sample `b`.
    pub fn correlation(&self, b: usize) -> &CorrelationMap {
        &self.correlations[b]
    }

    pub fn displacement(&self, b: usize) -> &DisplacementMap {
        &self.displacements[b]
    }

    pub fn attention(&self, b: usize) -> Tensor {
        let (h, w) = self.encoded;
        let l = h * w;
        Tensor::new(vec![1, h, w], self.head.alpha().data()[b * l..(b + 1) * l].to_vec()).expect("attention shape")
    }

    pub fn attention_state(&self, b: usize) -> AttentionState {
        let (h, w) = self.encoded;
        let l = h * w;
        let gw = self.head.tau().shape()[1];
        AttentionState {
            local_features: rows_to_plane(&self.features, b, h, w),
            scores: Tensor::new(vec![1, h, w], self.head.scores().data()[b * l..(b + 1) * l].to_vec())
                .expect("score shape"),
            alpha: self.attention(b),
            attended: Tensor::new(vec![gw], self.head.tau().data()[b * gw..(b + 1) * gw].to_vec())
                .expect("tau shape"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub oac: OacKernelBank,
    pub encoder: Encoder,
    pub head: AttentionHead,
    /// Which OAC formulation the forward and backward passes use.
    pub oac_path: OacPath,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(config.seed);
        let oac = OacKernelBank::init(config.kernels, config.height, config.width, config.oac_bias, &mut rng);
        let encoder = Encoder::new(config.kernels, config.encoder_channels, &mut rng);
        let head = AttentionHead::new(
            config.family,
            config.embedding,
            config.encoded_size(),
            config.encoder_channels,
            config.g_width,
            config.s_hidden,
            &mut rng,
        );
        let mut model = Model {
            config,
            oac,
            encoder,
            head,
            oac_path: OacPath::Direct,
        };
        let scale = model.config.init_scale;
        if scale != 1.0 {
            let head = &mut model.head;
            for w in [
                &mut model.oac.weights,
                &mut model.encoder.weight,
                &mut head.g1.linear.weight,
                &mut head.g2.linear.weight,
                &mut head.s1.linear.weight,
                &mut head.s2.weight,
            ] {
                w.value.data_mut().iter_mut().for_each(|v| *v *= scale);
            }
        }
        Ok(model)
    }

    fn check_features(&self, f: &Tensor) -> Result<()> {
        let c = &self.config;
        if f.shape() != [c.feature_dim, c.height, c.width] {
            return Err(Error::shape(format!(
                "model expects {}x{}x{} features, got {:?}",
                c.feature_dim,
                c.height,
                c.width,
                f.shape()
            )));
        }
        Ok(())
    }

    /// Batched forward pass over `(f_src, f_trg)` feature pairs. Does not
    /// touch the model; call [`Model::update_running_stats`] afterwards in
    /// training.
    pub fn forward(&self, pairs: &[(&Tensor, &Tensor)], mode: Mode) -> Result<ForwardPass> {
        if pairs.is_empty() {
            return Err(Error::Empty("forward batch"));
        }
        let mut correlations = Vec::with_capacity(pairs.len());
        let mut displacements = Vec::with_capacity(pairs.len());
        for (src, trg) in pairs {
            self.check_features(src)?;
            self.check_features(trg)?;
            let c = normalize_correlation(&correlation_map(src, trg)?, CORRELATION_EPS)?;
            let h = match self.oac_path {
                OacPath::Direct => oac_forward_direct(&c, &self.oac)?,
                OacPath::Reordered => oac_forward_reordered(&c, &self.oac)?,
            };
            correlations.push(c);
            displacements.push(h);
        }
        let maps: Vec<&Tensor> = displacements.iter().map(|d| &d.values).collect();
        let (features, encoder) = self.encoder.forward(&maps, mode)?;
        let (raw, head) = self.head.forward(&features, pairs.len(), mode)?;
        let q = self.config.param_count();
        let thetas = raw
            .data()
            .chunks_exact(q)
            .map(|r| theta_from_raw(self.config.family, r))
            .collect::<Result<_>>()?;
        Ok(ForwardPass {
            thetas,
            correlations,
            displacements,
            encoder,
            features,
            head,
            encoded: self.config.encoded_size(),
            path: self.oac_path,
        })
    }

    /// Single-pair forward pass returning `θ` and the attention diagnostics.
    pub fn predict(&self, f_src: &Tensor, f_trg: &Tensor, mode: Mode) -> Result<(TransformParams, AttentionState)> {
        let pass = self.forward(&[(f_src, f_trg)], mode)?;
        Ok((pass.thetas[0].clone(), pass.attention_state(0)))
    }

    /// Accumulates gradients of every parameter given `∂L/∂θ` (`B × Q`).
    /// Feature inputs are frozen, so no gradient flows past the correlation.
    pub fn backward(&mut self, pass: &ForwardPass, grad_theta: &Tensor) -> Result<()> {
        let d_features = self.head.backward(&pass.head, grad_theta)?;
        let maps: Vec<&Tensor> = pass.displacements.iter().map(|d| &d.values).collect();
        let d_maps = self.encoder.backward(&maps, &pass.encoder, &d_features)?;
        for ((c, h), dh) in pass.correlations.iter().zip(&pass.displacements).zip(&d_maps) {
            let g = match pass.path {
                OacPath::Direct => oac_backward(c, &self.oac, h, dh, false)?,
                OacPath::Reordered => oac_backward_reordered(c, &self.oac, h, dh, false)?,
            };
            add_into(&mut self.oac.weights.grad, &g.weights);
            if let (Some(b), Some(gb)) = (self.oac.bias.as_mut(), g.bias.as_ref()) {
                add_into(&mut b.grad, gb);
            }
        }
        Ok(())
    }

    /// Folds the batch statistics of a training-mode pass into the running
    /// estimates.
    pub fn update_running_stats(&mut self, pass: &ForwardPass) {
        self.encoder.update_running(&pass.encoder);
        self.head.update_running(&pass.head);
    }

    /// Replaces the running statistics with the plain average of the batch
    /// statistics of `batches`, all computed with the current weights.
    /// Parameters are untouched.
    pub fn recalibrate_batch_norm(&mut self, batches: &[Vec<(&Tensor, &Tensor)>]) -> Result<()> {
        if batches.is_empty() {
            return Err(Error::Empty("recalibration batches"));
        }
        let saved: Vec<f64> = self.batch_norms_mut().iter().map(|(_, bn)| bn.momentum).collect();
        for (k, batch) in batches.iter().enumerate() {
            let pass = self.forward(batch, Mode::Train)?;
            for (_, bn) in self.batch_norms_mut() {
                bn.momentum = 1.0 / (k + 1) as f64;
            }
            self.update_running_stats(&pass);
        }
        for ((_, bn), m) in self.batch_norms_mut().into_iter().zip(saved) {
            bn.momentum = m;
        }
        Ok(())
    }

    /// Trainable parameters with stable names, in a fixed order.
    pub fn named_parameters_mut(&mut self) -> Vec<(String, &mut Parameter)> {
        let mut v: Vec<(String, &mut Parameter)> = vec![("oac.weight".into(), &mut self.oac.weights)];
        if let Some(b) = self.oac.bias.as_mut() {
            v.push(("oac.bias".into(), b));
        }
        v.push(("encoder.conv.weight".into(), &mut self.encoder.weight));
        v.push(("encoder.conv.bias".into(), &mut self.encoder.bias));
        v.push(("encoder.bn.gamma".into(), &mut self.encoder.bn.gamma));
        v.push(("encoder.bn.beta".into(), &mut self.encoder.bn.beta));
        let head = &mut self.head;
        if head.embedding_kind == super::EmbeddingKind::Learned {
            v.push(("head.embedding".into(), &mut head.embedding));
        }
        for (name, block) in [("g1", &mut head.g1), ("g2", &mut head.g2), ("s1", &mut head.s1)] {
            v.push((format!("head.{name}.weight"), &mut block.linear.weight));
            if let Some(b) = block.linear.bias.as_mut() {
                v.push((format!("head.{name}.bias"), b));
            }
            v.push((format!("head.{name}.bn.gamma"), &mut block.bn.gamma));
            v.push((format!("head.{name}.bn.beta"), &mut block.bn.beta));
        }
        v.push(("head.s2.weight".into(), &mut head.s2.weight));
        v.push(("head.output".into(), &mut head.output));
        v
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.named_parameters_mut().into_iter().map(|(_, p)| p).collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    fn batch_norms_mut(&mut self) -> Vec<(&'static str, &mut BatchNorm)> {
        vec![
            ("encoder.bn", &mut self.encoder.bn),
            ("head.g1.bn", &mut self.head.g1.bn),
            ("head.g2.bn", &mut self.head.g2.bn),
            ("head.s1.bn", &mut self.head.s1.bn),
        ]
    }

    /// Parameters and batch-norm buffers as checkpoint entries.
    pub fn checkpoint_entries(&self) -> Vec<CheckpointEntry> {
        let mut m = self.clone();
        let mut entries: Vec<CheckpointEntry> = m
            .named_parameters_mut()
            .into_iter()
            .map(|(name, p)| CheckpointEntry {
                name,
                role: Role::Param,
                tensor: p.value.clone(),
            })
            .collect();
        for (name, bn) in m.batch_norms_mut() {
            let c = bn.channels();
            let buf = |suffix: &str, tensor: Tensor| CheckpointEntry {
                name: format!("{name}.{suffix}"),
                role: Role::Buffer,
                tensor,
            };
            entries.push(buf("running_mean", Tensor::new(vec![c], bn.running_mean.clone()).expect("bn shape")));
            entries.push(buf("running_var", Tensor::new(vec![c], bn.running_var.clone()).expect("bn shape")));
            entries.push(buf("initialized", Tensor::scalar(if bn.initialized { 1.0 } else { 0.0 })));
        }
        entries
    }

    /// Writes `config.txt`, one tensor file per entry and the manifest.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(CONFIG_FILE), self.config.to_kv())?;
        write_checkpoint(dir, &self.checkpoint_entries())
    }

    /// Rebuilds a model from a checkpoint directory. Every tensor must be
    /// present with exactly the shape the recorded configuration implies.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let config = ModelConfig::from_kv(&KvDocument::read(dir.join(CONFIG_FILE))?)?;
        let mut model = Model::new(config)?;
        let mut entries = read_checkpoint(dir)?;
        let mut take = |name: &str, shape: &[usize], role: Role| -> Result<Tensor> {
            let pos = entries
                .iter()
                .position(|e| e.name == name)
                .ok_or_else(|| Error::invalid(format!("checkpoint is missing `{name}`")))?;
            let e = entries.swap_remove(pos);
            if e.tensor.shape() != shape || e.role != role {
                return Err(Error::shape(format!(
                    "checkpoint tensor `{name}` is {:?} ({}), configuration needs {shape:?} ({role})",
                    e.tensor.shape(),
                    e.role
                )));
            }
            Ok(e.tensor)
        };
        for (name, p) in model.named_parameters_mut() {
            let shape = p.value.shape().to_vec();
            *p = Parameter::new(take(&name, &shape, Role::Param)?);
        }
        for (name, bn) in model.batch_norms_mut() {
            let c = bn.channels();
            bn.running_mean = take(&format!("{name}.running_mean"), &[c], Role::Buffer)?.into_data();
            bn.running_var = take(&format!("{name}.running_var"), &[c], Role::Buffer)?.into_data();
            let flag = take(&format!("{name}.initialized"), &[1], Role::Buffer)?;
            bn.initialized = flag.data()[0] != 0.0;
        }
        if let Some(extra) = entries.first() {
            return Err(Error::invalid(format!("checkpoint has unexpected tensor `{}`", extra.name)));
        }
        Ok(model)
    }
}
