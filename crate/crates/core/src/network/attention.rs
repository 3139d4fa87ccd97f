use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{TransformFamily, TransformParams};
use crate::tensor::{spatial_softmax, spatial_softmax_backward, Mode, Parameter, Tensor};

use super::config::{EmbeddingKind, EMBEDDING_DIM};
use super::encoder::planes_to_rows;
use super::layers::{BlockCache, Linear, PointwiseBlock};

/// Scores locations with S, pools G's features under the softmax of those
/// scores and maps the pooled feature to transformation parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionHead {
    pub family: TransformFamily,
    pub embedding_kind: EmbeddingKind,
    /// `L × 5`, one row per encoded location.
    pub embedding: Parameter,
    pub g1: PointwiseBlock,
    pub g2: PointwiseBlock,
    pub s1: PointwiseBlock,
    /// Scalar score, no bias.
    pub s2: Linear,
    /// `Q × G`, zero at initialisation.
    pub output: Parameter,
}

#[derive(Clone, Debug)]
pub struct HeadCache {
    batch: usize,
    features: Tensor,
    s1: BlockCache,
    s_hidden: Tensor,
    scores: Tensor,
    alpha: Tensor,
    g1: BlockCache,
    g2: BlockCache,
    g: Tensor,
    tau: Tensor,
}

impl HeadCache {
    /// Attention probabilities, `B × L`.
    pub fn alpha(&self) -> &Tensor {
        &self.alpha
    }

    /// Raw scores of S, `B × L`.
    pub fn scores(&self) -> &Tensor {
        &self.scores
    }

    /// Attended features `τ`, `B × G`.
    pub fn tau(&self) -> &Tensor {
        &self.tau
    }

    /// Per-location outputs of G, `(B·L) × G`.
    pub fn g(&self) -> &Tensor {
        &self.g
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// `(x, y, x·y, x², y²)` over a row-major `h × w` lattice in `[-1, 1]²`.
pub fn fixed_embedding(h: usize, w: usize) -> Tensor {
    let coord = |i: usize, n: usize| if n > 1 { -1.0 + 2.0 * i as f64 / (n - 1) as f64 } else { 0.0 };
    let mut data = Vec::with_capacity(h * w * EMBEDDING_DIM);
    for i in 0..h {
        for j in 0..w {
            let (x, y) = (coord(j, w), coord(i, h));
            data.extend_from_slice(&[x, y, x * y, x * x, y * y]);
        }
    }
    Tensor::new(vec![h * w, EMBEDDING_DIM], data).expect("embedding shape")
}

impl AttentionHead {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        family: TransformFamily,
        embedding_kind: EmbeddingKind,
        encoded: (usize, usize),
        channels: usize,
        g_width: usize,
        s_hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let (h, w) = encoded;
        let embedding = match embedding_kind {
            EmbeddingKind::Learned => Parameter::zeros(&[h * w, EMBEDDING_DIM]),
            EmbeddingKind::Fixed => Parameter::new(fixed_embedding(h, w)),
        };
        AttentionHead {
            family,
            embedding_kind,
            embedding,
            g1: PointwiseBlock::new(channels + EMBEDDING_DIM, g_width, rng),
            g2: PointwiseBlock::new(g_width, g_width, rng),
            s1: PointwiseBlock::new(channels, s_hidden, rng),
            s2: Linear::he(s_hidden, 1, false, rng),
            output: Parameter::zeros(&[family.param_count(), g_width]),
        }
    }

    pub fn locations(&self) -> usize {
        self.embedding.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.s1.linear.inputs()
    }

    pub fn g_width(&self) -> usize {
        self.output.shape()[1]
    }

    fn check_rows(&self, features: &Tensor, batch: usize) -> Result<()> {
        let (rows, ch) = features.dims2()?;
        if ch != self.channels() || rows != batch * self.locations() || batch == 0 {
            return Err(Error::shape(format!(
                "attention head expects {batch}·{} rows of {} channels, got {:?}",
                self.locations(),
                self.channels(),
                features.shape()
            )));
        }
        Ok(())
    }

    /// Runs the head on `(B·L) × E` rows. Returns raw outputs `W τ` (`B × Q`)
    /// before the identity offset.
    pub fn forward(&self, features: &Tensor, batch: usize, mode: Mode) -> Result<(Tensor, HeadCache)> {
        self.check_rows(features, batch)?;
        let l = self.locations();
        let e = self.channels();

        let (s_hidden, s1) = self.s1.forward(features, mode)?;
        let scores = self.s2.forward(&s_hidden)?.reshape(&[batch, l])?;
        let mut alpha = Vec::with_capacity(batch * l);
        for b in 0..batch {
            let sb = Tensor::new(vec![l], scores.data()[b * l..(b + 1) * l].to_vec())?;
            alpha.extend_from_slice(spatial_softmax(&sb)?.data());
        }
        let alpha = Tensor::new(vec![batch, l], alpha)?;

        let emb = self.embedding.value.data();
        let mut aug = Vec::with_capacity(batch * l * (e + EMBEDDING_DIM));
        for (r, row) in features.data().chunks_exact(e).enumerate() {
            let loc = r % l;
            aug.extend_from_slice(row);
            aug.extend_from_slice(&emb[loc * EMBEDDING_DIM..(loc + 1) * EMBEDDING_DIM]);
        }
        let aug = Tensor::new(vec![batch * l, e + EMBEDDING_DIM], aug)?;
        let (g1_out, g1) = self.g1.forward(&aug, mode)?;
        let (g, g2) = self.g2.forward(&g1_out, mode)?;

        let gw = self.g_width();
        let mut tau = vec![0.0; batch * gw];
        for b in 0..batch {
            let t = &mut tau[b * gw..(b + 1) * gw];
            for loc in 0..l {
                let a = alpha.data()[b * l + loc];
                let row = &g.data()[(b * l + loc) * gw..(b * l + loc + 1) * gw];
                for (tv, gv) in t.iter_mut().zip(row) {
                    *tv += a * gv;
                }
            }
        }
        let tau = Tensor::new(vec![batch, gw], tau)?;
        let raw = self.project(&tau, batch);
        raw.ensure_finite("attention head")?;
        Ok((
            raw,
            HeadCache {
                batch,
                features: features.clone(),
                s1,
                s_hidden,
                scores,
                alpha,
                g1,
                g2,
                g,
                tau,
            },
        ))
    }

    fn project(&self, tau: &Tensor, batch: usize) -> Tensor {
        let (q, gw) = (self.family.param_count(), self.g_width());
        let w = self.output.value.data();
        Tensor::from_fn(&[batch, q], |idx| {
            let (b, k) = (idx / q, idx % q);
            w[k * gw..(k + 1) * gw]
                .iter()
                .zip(&tau.data()[b * gw..(b + 1) * gw])
                .map(|(a, t)| a * t)
                .sum()
        })
    }

    /// Accumulates parameter gradients from `∂L/∂raw` (`B × Q`); returns
    /// `∂L/∂F` as `(B·L) × E` rows.
    pub fn backward(&mut self, cache: &HeadCache, grad_raw: &Tensor) -> Result<Tensor> {
        let batch = cache.batch;
        let (q, gw, l, e) = (
            self.family.param_count(),
            self.g_width(),
            self.locations(),
            self.channels(),
        );
        if grad_raw.shape() != [batch, q] {
            return Err(Error::shape(format!(
                "head upstream gradient {:?}, expected [{batch}, {q}]",
                grad_raw.shape()
            )));
        }
        let w = self.output.value.data().to_vec();
        let mut d_tau = vec![0.0; batch * gw];
        {
            let dw = self.output.grad.data_mut();
            for b in 0..batch {
                let tau_b = &cache.tau.data()[b * gw..(b + 1) * gw];
                for k in 0..q {
                    let dr = grad_raw.data()[b * q + k];
                    for c in 0..gw {
                        dw[k * gw + c] += dr * tau_b[c];
                        d_tau[b * gw + c] += dr * w[k * gw + c];
                    }
                }
            }
        }

        let mut d_g = vec![0.0; batch * l * gw];
        let mut d_scores = Vec::with_capacity(batch * l);
        for b in 0..batch {
            let dt = &d_tau[b * gw..(b + 1) * gw];
            let mut d_alpha = vec![0.0; l];
            for loc in 0..l {
                let r = b * l + loc;
                let a = cache.alpha.data()[r];
                let g_row = &cache.g.data()[r * gw..(r + 1) * gw];
                d_alpha[loc] = g_row.iter().zip(dt).map(|(g, d)| g * d).sum();
                for (dg, d) in d_g[r * gw..(r + 1) * gw].iter_mut().zip(dt) {
                    *dg = a * d;
                }
            }
            let alpha_b = Tensor::new(vec![l], cache.alpha.data()[b * l..(b + 1) * l].to_vec())?;
            let ds = spatial_softmax_backward(&alpha_b, &Tensor::new(vec![l], d_alpha)?)?;
            d_scores.extend_from_slice(ds.data());
        }

        let d_scores = Tensor::new(vec![batch * l, 1], d_scores)?;
        let d_hidden = self.s2.backward(&cache.s_hidden, &d_scores)?;
        let d_features_s = self.s1.backward(&cache.s1, &d_hidden)?;

        let d_g = Tensor::new(vec![batch * l, gw], d_g)?;
        let d_g1 = self.g2.backward(&cache.g2, &d_g)?;
        let d_aug = self.g1.backward(&cache.g1, &d_g1)?;

        let width = e + EMBEDDING_DIM;
        let learned = self.embedding_kind == EmbeddingKind::Learned;
        let mut d_features = d_features_s.into_data();
        for (r, row) in d_aug.data().chunks_exact(width).enumerate() {
            for (df, v) in d_features[r * e..(r + 1) * e].iter_mut().zip(&row[..e]) {
                *df += v;
            }
            if learned {
                let loc = r % l;
                let de = &mut self.embedding.grad.data_mut()[loc * EMBEDDING_DIM..(loc + 1) * EMBEDDING_DIM];
                for (d, v) in de.iter_mut().zip(&row[e..]) {
                    *d += v;
                }
            }
        }
        debug_assert_eq!(cache.features.shape(), [batch * l, e]);
        Tensor::new(vec![batch * l, e], d_features)
    }

    pub fn update_running(&mut self, cache: &HeadCache) {
        self.g1.update_running(&cache.g1);
        self.g2.update_running(&cache.g2);
        self.s1.update_running(&cache.s1);
    }

    /// `α` for one `E × Ĥ × Ŵ` feature map, shaped `1 × Ĥ × Ŵ`.
    pub fn attention_distribution(&self, features: &Tensor, mode: Mode) -> Result<Tensor> {
        let (_, h, w) = features.dims3()?;
        let rows = planes_to_rows(std::slice::from_ref(features))?;
        self.check_rows(&rows, 1)?;
        let (s_hidden, _) = self.s1.forward(&rows, mode)?;
        let scores = self.s2.forward(&s_hidden)?.reshape(&[1, h, w])?;
        spatial_softmax(&scores)
    }

    /// `τ = Σ α G(t ⊕ e)` for one feature map under a given `α`.
    pub fn attended_feature(&self, features: &Tensor, alpha: &Tensor, mode: Mode) -> Result<Tensor> {
        let rows = planes_to_rows(std::slice::from_ref(features))?;
        self.check_rows(&rows, 1)?;
        let l = self.locations();
        if alpha.len() != l {
            return Err(Error::shape(format!("attention has {} entries, expected {l}", alpha.len())));
        }
        let e = self.channels();
        let emb = self.embedding.value.data();
        let mut aug = Vec::with_capacity(l * (e + EMBEDDING_DIM));
        for (loc, row) in rows.data().chunks_exact(e).enumerate() {
            aug.extend_from_slice(row);
            aug.extend_from_slice(&emb[loc * EMBEDDING_DIM..(loc + 1) * EMBEDDING_DIM]);
        }
        let aug = Tensor::new(vec![l, e + EMBEDDING_DIM], aug)?;
        let (g1, _) = self.g1.forward(&aug, mode)?;
        let (g, _) = self.g2.forward(&g1, mode)?;
        let gw = self.g_width();
        let mut tau = vec![0.0; gw];
        for (loc, row) in g.data().chunks_exact(gw).enumerate() {
            for (t, v) in tau.iter_mut().zip(row) {
                *t += alpha.data()[loc] * v;
            }
        }
        Tensor::new(vec![gw], tau)
    }

    /// `θ = identity + W τ`.
    pub fn predict_theta(&self, tau: &Tensor) -> Result<TransformParams> {
        if tau.len() != self.g_width() {
            return Err(Error::shape(format!(
                "attended feature has {} entries, expected {}",
                tau.len(),
                self.g_width()
            )));
        }
        let raw = self.project(&tau.clone().reshape(&[1, self.g_width()])?, 1);
        theta_from_raw(self.family, raw.data())
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v = Vec::new();
        if self.embedding_kind == EmbeddingKind::Learned {
            v.push(&mut self.embedding);
        }
        v.extend(self.g1.parameters_mut());
        v.extend(self.g2.parameters_mut());
        v.extend(self.s1.parameters_mut());
        v.extend(self.s2.parameters_mut());
        v.push(&mut self.output);
        v
    }
}

/// Adds the identity parameter vector of `family` to a raw head output.
pub fn theta_from_raw(family: TransformFamily, raw: &[f64]) -> Result<TransformParams> {
    let values: Vec<f64> = family.identity_vector().iter().zip(raw).map(|(i, r)| i + r).collect();
    TransformParams::from_slice(family, &values)
}
