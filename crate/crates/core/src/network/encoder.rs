use rand::Rng;

use crate::correlation::DisplacementMap;
use crate::error::{Error, Result};
use crate::tensor::{conv2d, conv2d_backward, init, relu, relu_backward, BatchNorm, BatchNormCache, Mode, Parameter, Tensor};

use super::config::ENCODER_KERNEL;

/// 7×7 valid convolution, batch norm and ReLU over the displacement map.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    /// `E × N × 7 × 7`.
    pub weight: Parameter,
    pub bias: Parameter,
    pub bn: BatchNorm,
}

#[derive(Clone, Debug)]
pub struct EncoderCache {
    bn: BatchNormCache,
    normalized: Tensor,
    encoded: (usize, usize),
}

impl EncoderCache {
    pub fn batch_norm(&self) -> &BatchNormCache {
        &self.bn
    }
}

/// `C × L` planes for each sample, stacked into `(B·L) × C` rows.
pub(crate) fn planes_to_rows(planes: &[Tensor]) -> Result<Tensor> {
    let c = planes.first().map(|p| p.shape()[0]).unwrap_or(0);
    let l = planes.first().map(|p| p.len() / c.max(1)).unwrap_or(0);
    let mut rows = vec![0.0; planes.len() * l * c];
    for (b, p) in planes.iter().enumerate() {
        if p.len() != c * l {
            return Err(Error::shape("samples in a batch differ in shape"));
        }
        let d = p.data();
        for ch in 0..c {
            for loc in 0..l {
                rows[(b * l + loc) * c + ch] = d[ch * l + loc];
            }
        }
    }
    Tensor::new(vec![planes.len() * l, c], rows)
}

/// Inverse of [`planes_to_rows`] for one sample.
pub(crate) fn rows_to_plane(rows: &Tensor, sample: usize, height: usize, width: usize) -> Tensor {
    let c = rows.shape()[1];
    let l = height * width;
    let d = rows.data();
    Tensor::from_fn(&[c, height, width], |idx| {
        let (ch, loc) = (idx / l, idx % l);
        d[(sample * l + loc) * c + ch]
    })
}

impl Encoder {
    pub fn new(kernels: usize, channels: usize, rng: &mut impl Rng) -> Self {
        let fan_in = kernels * ENCODER_KERNEL * ENCODER_KERNEL;
        Encoder {
            weight: Parameter::new(init::he_uniform(
                &[channels, kernels, ENCODER_KERNEL, ENCODER_KERNEL],
                fan_in,
                rng,
            )),
            bias: Parameter::zeros(&[channels]),
            bn: BatchNorm::new(channels),
        }
    }

    pub fn channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernels(&self) -> usize {
        self.weight.shape()[1]
    }

    /// Encodes a batch of displacement maps; returns `F` as `(B·Ĥ·Ŵ) × E`
    /// rows, sample-major.
    pub fn forward(&self, maps: &[&Tensor], mode: Mode) -> Result<(Tensor, EncoderCache)> {
        if maps.is_empty() {
            return Err(Error::Empty("encoder batch"));
        }
        let mut encoded = None;
        for h in maps {
            let (n, hh, ww) = h.dims3()?;
            if n != self.kernels() {
                return Err(Error::shape(format!(
                    "encoder expects {} displacement channels, got {n}",
                    self.kernels()
                )));
            }
            if hh < ENCODER_KERNEL || ww < ENCODER_KERNEL {
                return Err(Error::shape(format!(
                    "displacement map {hh}x{ww} is smaller than the {ENCODER_KERNEL}x{ENCODER_KERNEL} encoder"
                )));
            }
            let size = (hh + 1 - ENCODER_KERNEL, ww + 1 - ENCODER_KERNEL);
            if *encoded.get_or_insert(size) != size {
                return Err(Error::shape("samples in a batch differ in spatial size"));
            }
        }
        let encoded = encoded.unwrap_or_default();
        let conv: Vec<Tensor> = maps
            .iter()
            .map(|h| conv2d(h, &self.weight.value, Some(&self.bias.value), 0))
            .collect::<Result<_>>()?;
        let rows = planes_to_rows(&conv)?;
        let (normalized, bn) = self.bn.forward(&rows, mode)?;
        let features = relu(&normalized);
        Ok((features, EncoderCache { bn, normalized, encoded }))
    }

    /// Accumulates parameter gradients; returns `∂L/∂h` per sample.
    pub fn backward(&mut self, maps: &[&Tensor], cache: &EncoderCache, grad_features: &Tensor) -> Result<Vec<Tensor>> {
        let d_norm = relu_backward(&cache.normalized, grad_features)?;
        let d_rows = self.bn.backward(&cache.bn, &d_norm)?;
        let (eh, ew) = cache.encoded;
        let weight = &self.weight.value;
        let mut d_maps = Vec::with_capacity(maps.len());
        for (b, h) in maps.iter().enumerate() {
            let g = conv2d_backward(h, weight, 0, &rows_to_plane(&d_rows, b, eh, ew), true)?;
            add_into(&mut self.weight.grad, &g.weights);
            add_into(&mut self.bias.grad, &g.bias);
            d_maps.push(g.input.expect("input gradient requested"));
        }
        Ok(d_maps)
    }

    pub fn update_running(&mut self, cache: &EncoderCache) {
        self.bn.update_running(&cache.bn);
    }
}

pub(crate) fn add_into(acc: &mut Tensor, g: &Tensor) {
    for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
        *a += v;
    }
}

/// Local transformation feature map `F` (`E × Ĥ × Ŵ`) of one sample.
pub fn encode_local_transforms(h: &DisplacementMap, encoder: &Encoder, mode: Mode) -> Result<Tensor> {
    let (_, hh, ww) = h.values.dims3()?;
    let (rows, _) = encoder.forward(&[&h.values], mode)?;
    Ok(rows_to_plane(&rows, 0, hh + 1 - ENCODER_KERNEL, ww + 1 - ENCODER_KERNEL))
}
