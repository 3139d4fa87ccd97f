use super::{MulCounter, NoCount, Tensor};
use crate::error::{Error, Result};

/// Gradients of a 2-D convolution with respect to its three inputs.
#[derive(Clone, Debug)]
pub struct Conv2dGrads {
    /// `None` when the caller did not ask for the input gradient.
    pub input: Option<Tensor>,
    pub weights: Tensor,
    pub bias: Tensor,
}

struct Geometry {
    d_in: usize,
    h: usize,
    w: usize,
    d_out: usize,
    k: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn new(input: &Tensor, weights: &Tensor, padding: usize) -> Result<Self> {
        let (d_in, h, w) = input.dims3()?;
        let [d_out, w_in, kh, kw] = weights.shape()[..] else {
            return Err(Error::shape(format!(
                "conv weights must be rank 4, got {:?}",
                weights.shape()
            )));
        };
        if w_in != d_in {
            return Err(Error::shape(format!(
                "conv weights expect {w_in} input channels, input has {d_in}"
            )));
        }
        if kh != kw || kh % 2 == 0 {
            return Err(Error::shape(format!("conv kernel must be square and odd, got {kh}x{kw}")));
        }
        let out_h = (h + 2 * padding + 1).checked_sub(kh).filter(|&v| v >= 1);
        let out_w = (w + 2 * padding + 1).checked_sub(kw).filter(|&v| v >= 1);
        let (Some(out_h), Some(out_w)) = (out_h, out_w) else {
            return Err(Error::shape(format!(
                "conv output size is not positive for {h}x{w} input, {kh}x{kw} kernel, padding {padding}"
            )));
        };
        Ok(Geometry {
            d_in,
            h,
            w,
            d_out,
            k: kh,
            pad: padding,
            out_h,
            out_w,
        })
    }

    fn taps(&self) -> usize {
        self.d_in * self.k * self.k
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Patch matrix: one row of `D_in·k·k` taps per output position, zero
    /// where a tap falls in the padding.
    fn im2col(&self, x: &[f64]) -> Vec<f64> {
        let (k, taps) = (self.k, self.taps());
        let mut cols = vec![0.0; self.positions() * taps];
        for y in 0..self.out_h {
            for xx in 0..self.out_w {
                let row = &mut cols[(y * self.out_w + xx) * taps..][..taps];
                for c in 0..self.d_in {
                    for ky in 0..k {
                        let Some(iy) = (y + ky).checked_sub(self.pad).filter(|&v| v < self.h) else {
                            continue;
                        };
                        for kx in 0..k {
                            if let Some(ix) = (xx + kx).checked_sub(self.pad).filter(|&v| v < self.w) {
                                row[(c * k + ky) * k + kx] = x[(c * self.h + iy) * self.w + ix];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    /// Adds patch-matrix gradients back onto the input positions they came from.
    fn col2im(&self, cols: &[f64], dx: &mut [f64]) {
        let (k, taps) = (self.k, self.taps());
        for y in 0..self.out_h {
            for xx in 0..self.out_w {
                let row = &cols[(y * self.out_w + xx) * taps..][..taps];
                for c in 0..self.d_in {
                    for ky in 0..k {
                        let Some(iy) = (y + ky).checked_sub(self.pad).filter(|&v| v < self.h) else {
                            continue;
                        };
                        for kx in 0..k {
                            if let Some(ix) = (xx + kx).checked_sub(self.pad).filter(|&v| v < self.w) {
                                dx[(c * self.h + iy) * self.w + ix] += row[(c * k + ky) * k + kx];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Four independent partial sums so the loop vectorises.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a4, b4) = (a[..n].chunks_exact(4), b[..n].chunks_exact(4));
    let tail: f64 = a4.remainder().iter().zip(b4.remainder()).map(|(x, y)| x * y).sum();
    let mut acc = [0.0; 4];
    for (x, y) in a4.zip(b4) {
        for q in 0..4 {
            acc[q] += x[q] * y[q];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

/// Cross-correlation (no kernel flip) of a `D_in×H×W` input with
/// `D_out×D_in×k×k` weights and optional per-output-channel bias.
pub fn conv2d(input: &Tensor, weights: &Tensor, bias: Option<&Tensor>, padding: usize) -> Result<Tensor> {
    conv2d_counted(input, weights, bias, padding, &mut NoCount)
}

/// [`conv2d`] that reports every multiply it executes to `counter`.
pub fn conv2d_counted(
    input: &Tensor,
    weights: &Tensor,
    bias: Option<&Tensor>,
    padding: usize,
    counter: &mut impl MulCounter,
) -> Result<Tensor> {
    let g = Geometry::new(input, weights, padding)?;
    if let Some(b) = bias {
        if b.shape() != [g.d_out] {
            return Err(Error::shape(format!(
                "conv bias must have shape [{}], got {:?}",
                g.d_out,
                b.shape()
            )));
        }
    }
    let (taps, positions) = (g.taps(), g.positions());
    let single = g.k == 1 && g.pad == 0;
    // a 1×1 unpadded convolution reads the input planes directly
    let cols = if single { Vec::new() } else { g.im2col(input.data()) };
    let x = input.data();
    let wt = weights.data();
    let mut out = vec![0.0; g.d_out * positions];
    for o in 0..g.d_out {
        let b = bias.map_or(0.0, |b| b.data()[o]);
        let wrow = &wt[o * taps..(o + 1) * taps];
        let plane = &mut out[o * positions..(o + 1) * positions];
        if single {
            plane.fill(b);
            for (c, &wv) in wrow.iter().enumerate() {
                axpy(wv, &x[c * positions..(c + 1) * positions], plane);
            }
        } else {
            for (p, v) in plane.iter_mut().enumerate() {
                *v = b + dot(wrow, &cols[p * taps..(p + 1) * taps]);
            }
        }
        counter.add((taps * positions) as u64);
    }
    Tensor::new(vec![g.d_out, g.out_h, g.out_w], out)
}

/// Backward pass of [`conv2d`]. The bias gradient is always returned, the
/// input gradient only when `need_input` is set.
pub fn conv2d_backward(
    input: &Tensor,
    weights: &Tensor,
    padding: usize,
    grad_out: &Tensor,
    need_input: bool,
) -> Result<Conv2dGrads> {
    let g = Geometry::new(input, weights, padding)?;
    if grad_out.shape() != [g.d_out, g.out_h, g.out_w] {
        return Err(Error::shape(format!(
            "conv upstream gradient {:?} does not match output [{}, {}, {}]",
            grad_out.shape(),
            g.d_out,
            g.out_h,
            g.out_w
        )));
    }
    let (taps, positions) = (g.taps(), g.positions());
    let single = g.k == 1 && g.pad == 0;
    let x = input.data();
    let wt = weights.data();
    let dy = grad_out.data();
    let db: Vec<f64> = dy.chunks_exact(positions).map(|p| p.iter().sum()).collect();
    let mut dw = vec![0.0; wt.len()];
    let mut dx = if need_input { vec![0.0; x.len()] } else { Vec::new() };

    if single {
        for o in 0..g.d_out {
            let dplane = &dy[o * positions..(o + 1) * positions];
            for c in 0..g.d_in {
                let xplane = &x[c * positions..(c + 1) * positions];
                dw[o * taps + c] = dot(dplane, xplane);
                if need_input {
                    axpy(wt[o * taps + c], dplane, &mut dx[c * positions..(c + 1) * positions]);
                }
            }
        }
    } else {
        let cols = g.im2col(x);
        let mut dcols = if need_input { vec![0.0; cols.len()] } else { Vec::new() };
        for o in 0..g.d_out {
            let wrow = &wt[o * taps..(o + 1) * taps];
            for p in 0..positions {
                let d = dy[o * positions + p];
                if d == 0.0 {
                    continue;
                }
                axpy(d, &cols[p * taps..(p + 1) * taps], &mut dw[o * taps..(o + 1) * taps]);
                if need_input {
                    axpy(d, wrow, &mut dcols[p * taps..(p + 1) * taps]);
                }
            }
        }
        if need_input {
            g.col2im(&dcols, &mut dx);
        }
    }

    Ok(Conv2dGrads {
        input: if need_input {
            Some(Tensor::new(input.shape().to_vec(), dx)?)
        } else {
            None
        },
        weights: Tensor::new(weights.shape().to_vec(), dw)?,
        bias: Tensor::new(vec![g.d_out], db)?,
    })
}
