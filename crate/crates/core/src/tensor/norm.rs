use super::{Mode, Parameter, Tensor};
use crate::error::{Error, Result};

pub const DEFAULT_BN_MOMENTUM: f64 = 0.1;
pub const DEFAULT_BN_EPS: f64 = 1e-5;

/// Divides the `D`-vector at every location of a `D×H×W` map by
/// `max(‖v‖, epsilon)`.
pub fn l2_normalize_channels(x: &Tensor, epsilon: f64) -> Result<Tensor> {
    let (d, h, w) = x.dims3()?;
    let plane = h * w;
    let mut out = x.clone();
    let data = out.data_mut();
    for p in 0..plane {
        let norm = (0..d).map(|c| data[c * plane + p].powi(2)).sum::<f64>().sqrt();
        let scale = 1.0 / norm.max(epsilon);
        for c in 0..d {
            data[c * plane + p] *= scale;
        }
    }
    Ok(out)
}

/// Batch normalisation over the rows of a `rows × channels` matrix. In the
/// network every (sample, location) pair is one row, so this is the usual
/// spatial batch norm of a 1×1 convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: Parameter,
    pub beta: Parameter,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    /// Set once the running statistics have seen a training batch.
    pub initialized: bool,
    pub momentum: f64,
    pub eps: f64,
}

/// What [`BatchNorm::backward`] needs from the forward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache {
    pub mode: Mode,
    pub x_hat: Tensor,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    /// Biased batch variance; empty in eval mode.
    pub batch_var: Vec<f64>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: Parameter::new(Tensor::filled(&[channels], 1.0)),
            beta: Parameter::zeros(&[channels]),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            initialized: false,
            momentum: DEFAULT_BN_MOMENTUM,
            eps: DEFAULT_BN_EPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<(Tensor, BatchNormCache)> {
        let (rows, ch) = x.dims2()?;
        if ch != self.channels() {
            return Err(Error::shape(format!(
                "batch norm has {} channels, input has {ch}",
                self.channels()
            )));
        }
        if rows == 0 {
            return Err(Error::Empty("batch norm input"));
        }
        let xs = x.data();
        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; ch];
                let mut var = vec![0.0; ch];
                for row in xs.chunks_exact(ch) {
                    for (m, v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= rows as f64);
                for row in xs.chunks_exact(ch) {
                    for c in 0..ch {
                        var[c] += (row[c] - mean[c]).powi(2);
                    }
                }
                var.iter_mut().for_each(|v| *v /= rows as f64);
                (mean, var)
            }
            Mode::Eval => {
                if !self.initialized {
                    return Err(Error::UninitializedStats);
                }
                (self.running_mean.clone(), self.running_var.clone())
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let gamma = self.gamma.value.data();
        let beta = self.beta.value.data();
        let mut x_hat = vec![0.0; xs.len()];
        let mut y = vec![0.0; xs.len()];
        for (r, row) in xs.chunks_exact(ch).enumerate() {
            for c in 0..ch {
                let n = (row[c] - mean[c]) * inv_std[c];
                x_hat[r * ch + c] = n;
                y[r * ch + c] = gamma[c] * n + beta[c];
            }
        }
        let cache = BatchNormCache {
            mode,
            x_hat: Tensor::new(vec![rows, ch], x_hat)?,
            inv_std,
            batch_mean: if mode == Mode::Train { mean } else { Vec::new() },
            batch_var: if mode == Mode::Train { var } else { Vec::new() },
        };
        Ok((Tensor::new(vec![rows, ch], y)?, cache))
    }

    /// Folds a train-mode batch into the running statistics. The running
    /// variance uses the unbiased batch estimate.
    pub fn update_running(&mut self, cache: &BatchNormCache) {
        if cache.mode != Mode::Train {
            return;
        }
        let rows = cache.x_hat.shape()[0] as f64;
        let correction = if rows > 1.0 { rows / (rows - 1.0) } else { 1.0 };
        let m = self.momentum;
        for c in 0..self.channels() {
            self.running_mean[c] = (1.0 - m) * self.running_mean[c] + m * cache.batch_mean[c];
            self.running_var[c] = (1.0 - m) * self.running_var[c] + m * cache.batch_var[c] * correction;
        }
        self.initialized = true;
    }

    /// Accumulates the gamma/beta gradients and returns the input gradient.
    pub fn backward(&mut self, cache: &BatchNormCache, grad_out: &Tensor) -> Result<Tensor> {
        cache.x_hat.same_shape(grad_out, "batch norm backward")?;
        let (rows, ch) = grad_out.dims2()?;
        let dy = grad_out.data();
        let xh = cache.x_hat.data();
        let mut sum_dy = vec![0.0; ch];
        let mut sum_dy_xh = vec![0.0; ch];
        for r in 0..rows {
            for c in 0..ch {
                sum_dy[c] += dy[r * ch + c];
                sum_dy_xh[c] += dy[r * ch + c] * xh[r * ch + c];
            }
        }
        for c in 0..ch {
            self.gamma.grad.data_mut()[c] += sum_dy_xh[c];
            self.beta.grad.data_mut()[c] += sum_dy[c];
        }
        let gamma = self.gamma.value.data();
        let n = rows as f64;
        let mut dx = vec![0.0; dy.len()];
        for r in 0..rows {
            for c in 0..ch {
                let i = r * ch + c;
                let scale = gamma[c] * cache.inv_std[c];
                dx[i] = match cache.mode {
                    Mode::Train => scale * (dy[i] - sum_dy[c] / n - xh[i] * sum_dy_xh[c] / n),
                    Mode::Eval => scale * dy[i],
                };
            }
        }
        Tensor::new(vec![rows, ch], dx)
    }
}
