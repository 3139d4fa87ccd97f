//! Dense correlation between two feature maps and the offset-aware
//! correlation (OAC) kernels built on top of it.
//!
//! Index conventions, used throughout:
//!
//! * a correlation map has `H·W` channels; channel `k·W + l` at location
//!   `(i, j)` holds `⟨f_src(i, j), f_trg(k, l)⟩`;
//! * the offset of that pair is `(s, t) = (i - k, j - l)`, with
//!   `s ∈ [-(H-1), H-1]` and `t ∈ [-(W-1), W-1]`;
//! * offset-indexed tensors (reordered maps, kernel weights) lay offsets out
//!   row-major starting from `(-(H-1), -(W-1))`, i.e. offset `(s, t)` lives at
//!   `(s + H - 1) · (2W - 1) + (t + W - 1)`.

mod count;
mod oac;
mod reorder;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use count::{count_multiplications, count_nonzero_reordered, OacPath};
pub use oac::{
    dump_kernel_sheets, oac_backward, oac_backward_reordered, oac_forward_direct, oac_forward_direct_counted,
    oac_forward_reordered, oac_forward_reordered_counted, DisplacementMap, OacGrads, OacKernelBank,
};
pub use reorder::{reorder_by_offset, restore_from_offsets, ReorderedCorrelationMap};

/// `H·W × H × W` map of source/target feature dot products.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMap {
    values: Tensor,
    height: usize,
    width: usize,
}

impl CorrelationMap {
    pub fn from_tensor(values: Tensor) -> Result<Self> {
        let (ch, h, w) = values.dims3()?;
        if ch != h * w {
            return Err(Error::shape(format!(
                "correlation map over {h}x{w} needs {} channels, got {ch}",
                h * w
            )));
        }
        Ok(CorrelationMap {
            values,
            height: h,
            width: w,
        })
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn into_tensor(self) -> Tensor {
        self.values
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Correlation between source `(i, j)` and target `(k, l)`.
    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.values.at3(k * self.width + l, i, j)
    }
}

/// Correlates every source location with every target location.
pub fn correlation_map(f_src: &Tensor, f_trg: &Tensor) -> Result<CorrelationMap> {
    f_src.same_shape(f_trg, "correlation inputs")?;
    let (d, h, w) = f_src.dims3()?;
    let plane = h * w;
    let src = f_src.data();
    let trg = f_trg.data();
    let mut out = vec![0.0; plane * plane];
    for (kl, row) in out.chunks_exact_mut(plane).enumerate() {
        for c in 0..d {
            let t = trg[c * plane + kl];
            if t == 0.0 {
                continue;
            }
            for (o, s) in row.iter_mut().zip(&src[c * plane..(c + 1) * plane]) {
                *o += t * s;
            }
        }
    }
    CorrelationMap::from_tensor(Tensor::new(vec![plane, h, w], out)?)
}

/// ReLU, then each correlation vector `c(i, j, ·)` divided by
/// `max(‖·‖, epsilon)`.
pub fn normalize_correlation(c: &CorrelationMap, epsilon: f64) -> Result<CorrelationMap> {
    let rectified = crate::tensor::relu(&c.values);
    let values = crate::tensor::l2_normalize_channels(&rectified, epsilon)?;
    CorrelationMap::from_tensor(values)
}
