//! Per-location (1×1 convolution) building blocks, operating on
//! `rows × channels` matrices where each row is one (sample, location).

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::linalg::{add_matmul_tn, matmul_nn, matmul_nt};
use crate::tensor::{init, relu, relu_backward, BatchNorm, BatchNormCache, Mode, Parameter, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `out × in`.
    pub weight: Parameter,
    pub bias: Option<Parameter>,
}

impl Linear {
    pub fn he(inputs: usize, outputs: usize, with_bias: bool, rng: &mut impl Rng) -> Self {
        Linear {
            weight: Parameter::new(init::he_uniform(&[outputs, inputs], inputs, rng)),
            bias: with_bias.then(|| Parameter::zeros(&[outputs])),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (rows, inner) = x.dims2()?;
        if inner != self.inputs() {
            return Err(Error::shape(format!(
                "linear layer takes {} inputs, got {inner}",
                self.inputs()
            )));
        }
        let outs = self.outputs();
        let mut y = matmul_nt(x.data(), self.weight.value.data(), rows, inner, outs);
        if let Some(b) = &self.bias {
            for row in y.chunks_exact_mut(outs) {
                for (v, bv) in row.iter_mut().zip(b.value.data()) {
                    *v += bv;
                }
            }
        }
        Tensor::new(vec![rows, outs], y)
    }

    /// Accumulates weight/bias gradients; returns the input gradient.
    pub fn backward(&mut self, x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        let (rows, inner) = x.dims2()?;
        let outs = self.outputs();
        if grad_out.shape() != [rows, outs] {
            return Err(Error::shape(format!(
                "linear upstream gradient {:?}, expected [{rows}, {outs}]",
                grad_out.shape()
            )));
        }
        add_matmul_tn(self.weight.grad.data_mut(), grad_out.data(), x.data(), rows, outs, inner);
        if let Some(b) = self.bias.as_mut() {
            for row in grad_out.data().chunks_exact(outs) {
                for (g, v) in b.grad.data_mut().iter_mut().zip(row) {
                    *g += v;
                }
            }
        }
        let dx = matmul_nn(grad_out.data(), self.weight.value.data(), rows, outs, inner);
        Tensor::new(vec![rows, inner], dx)
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v = vec![&mut self.weight];
        if let Some(b) = self.bias.as_mut() {
            v.push(b);
        }
        v
    }
}

/// Linear → batch norm → ReLU.
#[derive(Clone, Debug, PartialEq)]
pub struct PointwiseBlock {
    pub linear: Linear,
    pub bn: BatchNorm,
}

#[derive(Clone, Debug)]
pub struct BlockCache {
    input: Tensor,
    bn: BatchNormCache,
    normalized: Tensor,
}

impl BlockCache {
    pub fn batch_norm(&self) -> &BatchNormCache {
        &self.bn
    }
}

impl PointwiseBlock {
    pub fn new(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        PointwiseBlock {
            linear: Linear::he(inputs, outputs, true, rng),
            bn: BatchNorm::new(outputs),
        }
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<(Tensor, BlockCache)> {
        let z = self.linear.forward(x)?;
        let (normalized, bn) = self.bn.forward(&z, mode)?;
        let y = relu(&normalized);
        Ok((
            y,
            BlockCache {
                input: x.clone(),
                bn,
                normalized,
            },
        ))
    }

    pub fn backward(&mut self, cache: &BlockCache, grad_out: &Tensor) -> Result<Tensor> {
        let d_norm = relu_backward(&cache.normalized, grad_out)?;
        let dz = self.bn.backward(&cache.bn, &d_norm)?;
        self.linear.backward(&cache.input, &dz)
    }

    pub fn update_running(&mut self, cache: &BlockCache) {
        self.bn.update_running(&cache.bn);
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v = self.linear.parameters_mut();
        v.push(&mut self.bn.gamma);
        v.push(&mut self.bn.beta);
        v
    }
}
