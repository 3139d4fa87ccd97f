use std::path::{Path, PathBuf};

use rand::Rng;

use super::reorder::offset_channel;
use super::{reorder_by_offset, CorrelationMap, ReorderedCorrelationMap};
use crate::error::{Error, Result};
use crate::io::pnm;
use crate::tensor::{conv2d_backward, conv2d_counted, init, relu, MulCounter, NoCount, Parameter, Tensor};

/// `N` offset-aware kernels for `H × W` feature maps. Weight
/// `(n, s + H - 1, t + W - 1)` is the weight of kernel `n` for every
/// correlation whose source-minus-target offset is `(s, t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OacKernelBank {
    pub weights: Parameter,
    /// One bias per kernel; `None` reproduces bias-free kernels.
    pub bias: Option<Parameter>,
}

impl OacKernelBank {
    pub fn zeros(kernels: usize, height: usize, width: usize, with_bias: bool) -> Self {
        OacKernelBank {
            weights: Parameter::zeros(&[kernels, 2 * height - 1, 2 * width - 1]),
            bias: with_bias.then(|| Parameter::zeros(&[kernels])),
        }
    }

    /// He-uniform weights (each output sees `H·W` non-zero correlations),
    /// zero bias.
    pub fn init(kernels: usize, height: usize, width: usize, with_bias: bool, rng: &mut impl Rng) -> Self {
        let shape = [kernels, 2 * height - 1, 2 * width - 1];
        OacKernelBank {
            weights: Parameter::new(init::he_uniform(&shape, height * width, rng)),
            bias: with_bias.then(|| Parameter::zeros(&[kernels])),
        }
    }

    pub fn kernels(&self) -> usize {
        self.weights.shape()[0]
    }

    /// Feature map height the bank was built for.
    pub fn height(&self) -> usize {
        self.weights.shape()[1].div_ceil(2)
    }

    pub fn width(&self) -> usize {
        self.weights.shape()[2].div_ceil(2)
    }

    pub fn weight(&self, n: usize, s: isize, t: isize) -> f64 {
        let (h, w) = (self.height(), self.width());
        let off = offset_channel(h, w, s, t);
        self.weights.value.data()[n * (2 * h - 1) * (2 * w - 1) + off]
    }

    pub fn set_weight(&mut self, n: usize, s: isize, t: isize, value: f64) {
        let (h, w) = (self.height(), self.width());
        let off = offset_channel(h, w, s, t);
        self.weights.value.data_mut()[n * (2 * h - 1) * (2 * w - 1) + off] = value;
    }

    fn bias_value(&self, n: usize) -> f64 {
        self.bias.as_ref().map_or(0.0, |b| b.value.data()[n])
    }

    fn check(&self, h: usize, w: usize) -> Result<()> {
        if self.height() != h || self.width() != w {
            return Err(Error::shape(format!(
                "kernel bank is for {}x{} maps, correlation is {h}x{w}",
                self.height(),
                self.width()
            )));
        }
        Ok(())
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v = vec![&mut self.weights];
        if let Some(b) = self.bias.as_mut() {
            v.push(b);
        }
        v
    }
}

/// `N × H × W` kernel responses, one `N`-vector per source location.
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementMap {
    pub values: Tensor,
}

/// Gradients of the OAC layer (bias included, ReLU applied).
#[derive(Clone, Debug)]
pub struct OacGrads {
    pub weights: Tensor,
    pub bias: Option<Tensor>,
    pub correlation: Option<Tensor>,
}

/// `h(n, i, j) = relu(b_n + Σ_{k,l} w_n(i - k, j - l) · c(i, j; k, l))`.
pub fn oac_forward_direct(c: &CorrelationMap, bank: &OacKernelBank) -> Result<DisplacementMap> {
    oac_forward_direct_counted(c, bank, &mut NoCount)
}

pub fn oac_forward_direct_counted(
    c: &CorrelationMap,
    bank: &OacKernelBank,
    counter: &mut impl MulCounter,
) -> Result<DisplacementMap> {
    let (h, w) = (c.height(), c.width());
    bank.check(h, w)?;
    let n_k = bank.kernels();
    let plane = h * w;
    let (rows, cols) = (2 * h - 1, 2 * w - 1);
    let cv = c.values().data();
    let wv = bank.weights.value.data();
    let mut out = vec![0.0; n_k * plane];
    for (n, dst) in out.chunks_exact_mut(plane).enumerate() {
        dst.fill(bank.bias_value(n));
        let kernel = &wv[n * rows * cols..(n + 1) * rows * cols];
        for k in 0..h {
            for l in 0..w {
                let corr = &cv[(k * w + l) * plane..(k * w + l + 1) * plane];
                // For fixed (k, l, i), t = j - l + W - 1 runs over W consecutive columns.
                let t0 = w - 1 - l;
                for i in 0..h {
                    let s = i + h - 1 - k;
                    let wrow = &kernel[s * cols + t0..s * cols + t0 + w];
                    let crow = &corr[i * w..(i + 1) * w];
                    for ((o, a), b) in dst[i * w..(i + 1) * w].iter_mut().zip(wrow).zip(crow) {
                        *o += a * b;
                    }
                    counter.add(w as u64);
                }
            }
        }
    }
    let pre = Tensor::new(vec![n_k, h, w], out)?;
    Ok(DisplacementMap { values: relu(&pre) })
}

/// Bank weights flattened to `N × (2H-1)(2W-1) × 1 × 1` conv weights.
fn as_pointwise_weights(bank: &OacKernelBank) -> Tensor {
    let s = bank.weights.shape();
    Tensor::new(vec![s[0], s[1] * s[2], 1, 1], bank.weights.value.data().to_vec()).expect("same length")
}

/// Reorders by offset, then applies the bank as a 1×1 convolution over the
/// offset channels. Mathematically identical to [`oac_forward_direct`].
pub fn oac_forward_reordered(c: &CorrelationMap, bank: &OacKernelBank) -> Result<DisplacementMap> {
    oac_forward_reordered_counted(c, bank, &mut NoCount)
}

pub fn oac_forward_reordered_counted(
    c: &CorrelationMap,
    bank: &OacKernelBank,
    counter: &mut impl MulCounter,
) -> Result<DisplacementMap> {
    bank.check(c.height(), c.width())?;
    let r = reorder_by_offset(c);
    reordered_forward(&r, bank, counter)
}

fn reordered_forward(
    r: &ReorderedCorrelationMap,
    bank: &OacKernelBank,
    counter: &mut impl MulCounter,
) -> Result<DisplacementMap> {
    let pre = conv2d_counted(
        r.values(),
        &as_pointwise_weights(bank),
        bank.bias.as_ref().map(|b| &b.value),
        0,
        counter,
    )?;
    Ok(DisplacementMap { values: relu(&pre) })
}

fn check_upstream(output: &DisplacementMap, upstream: &Tensor) -> Result<()> {
    output.values.same_shape(upstream, "OAC upstream gradient")
}

/// Exact gradients of the direct OAC layer. `output` is the forward result;
/// the ReLU mask is taken from it. Weight `w_n(s, t)` accumulates over every
/// source location that has a target at offset `(s, t)`.
pub fn oac_backward(
    c: &CorrelationMap,
    bank: &OacKernelBank,
    output: &DisplacementMap,
    upstream: &Tensor,
    need_correlation: bool,
) -> Result<OacGrads> {
    let (h, w) = (c.height(), c.width());
    bank.check(h, w)?;
    check_upstream(output, upstream)?;
    let n_k = bank.kernels();
    let plane = h * w;
    let (rows, cols) = (2 * h - 1, 2 * w - 1);
    let cv = c.values().data();
    let wv = bank.weights.value.data();
    let dz: Vec<f64> = output
        .values
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&y, &g)| if y > 0.0 { g } else { 0.0 })
        .collect();
    let mut dw = vec![0.0; wv.len()];
    let mut dc = if need_correlation { vec![0.0; cv.len()] } else { Vec::new() };
    for n in 0..n_k {
        let dzn = &dz[n * plane..(n + 1) * plane];
        let base = n * rows * cols;
        for k in 0..h {
            for l in 0..w {
                let cidx = (k * w + l) * plane;
                let t0 = w - 1 - l;
                for i in 0..h {
                    let s = i + h - 1 - k;
                    let widx = base + s * cols + t0;
                    let g = &dzn[i * w..(i + 1) * w];
                    let crow = &cv[cidx + i * w..cidx + (i + 1) * w];
                    for ((d, gv), cvv) in dw[widx..widx + w].iter_mut().zip(g).zip(crow) {
                        *d += gv * cvv;
                    }
                    if need_correlation {
                        let wrow = &wv[widx..widx + w];
                        for ((d, gv), wvv) in dc[cidx + i * w..cidx + (i + 1) * w].iter_mut().zip(g).zip(wrow) {
                            *d += gv * wvv;
                        }
                    }
                }
            }
        }
    }
    let bias = bank
        .bias
        .as_ref()
        .map(|_| Tensor::from_fn(&[n_k], |n| dz[n * plane..(n + 1) * plane].iter().sum()));
    Ok(OacGrads {
        weights: Tensor::new(bank.weights.shape().to_vec(), dw)?,
        bias,
        correlation: if need_correlation {
            Some(Tensor::new(c.values().shape().to_vec(), dc)?)
        } else {
            None
        },
    })
}

/// Gradients through the reordered path: 1×1 convolution backward, then the
/// offset layout mapped back to absolute target channels.
pub fn oac_backward_reordered(
    c: &CorrelationMap,
    bank: &OacKernelBank,
    output: &DisplacementMap,
    upstream: &Tensor,
    need_correlation: bool,
) -> Result<OacGrads> {
    bank.check(c.height(), c.width())?;
    check_upstream(output, upstream)?;
    let r = reorder_by_offset(c);
    let dz = crate::tensor::relu_backward(&output.values, upstream)?;
    let g = conv2d_backward(r.values(), &as_pointwise_weights(bank), 0, &dz, need_correlation)?;
    let correlation = match g.input {
        Some(dr) => Some(
            super::restore_from_offsets(&ReorderedCorrelationMap::from_tensor(dr)?)
                .into_tensor(),
        ),
        None => None,
    };
    Ok(OacGrads {
        weights: g.weights.reshape(bank.weights.shape())?,
        bias: bank.bias.as_ref().map(|_| g.bias),
        correlation,
    })
}

/// Writes each kernel's `(2H-1) × (2W-1)` weight sheet as an 8-bit graymap,
/// min-max scaled per kernel. Returns the written paths.
pub fn dump_kernel_sheets(bank: &OacKernelBank, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let s = bank.weights.shape();
    let (rows, cols) = (s[1], s[2]);
    let mut paths = Vec::with_capacity(s[0]);
    for (n, sheet) in bank.weights.value.data().chunks_exact(rows * cols).enumerate() {
        let path = dir.join(format!("kernel_{n:03}.pgm"));
        let t = Tensor::new(vec![1, rows, cols], sheet.to_vec())?;
        pnm::write_scaled(&path, &t)?;
        paths.push(path);
    }
    Ok(paths)
}
