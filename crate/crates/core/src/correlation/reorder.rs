use super::CorrelationMap;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `(2H-1)(2W-1) × H × W` correlation map indexed by source-to-target
/// offset instead of absolute target position. Entries whose offset points
/// outside the target map are exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ReorderedCorrelationMap {
    values: Tensor,
    height: usize,
    width: usize,
}

impl ReorderedCorrelationMap {
    pub fn from_tensor(values: Tensor) -> Result<Self> {
        let (ch, h, w) = values.dims3()?;
        if ch != (2 * h - 1) * (2 * w - 1) {
            return Err(Error::shape(format!(
                "reordered map over {h}x{w} needs {} channels, got {ch}",
                (2 * h - 1) * (2 * w - 1)
            )));
        }
        Ok(ReorderedCorrelationMap {
            values,
            height: h,
            width: w,
        })
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Channel holding offset `(s, t)`.
    pub fn channel(&self, s: isize, t: isize) -> usize {
        offset_channel(self.height, self.width, s, t)
    }
}

#[inline]
pub(crate) fn offset_channel(h: usize, w: usize, s: isize, t: isize) -> usize {
    ((s + h as isize - 1) as usize) * (2 * w - 1) + (t + w as isize - 1) as usize
}

/// Visits every existing (offset channel, absolute channel, location) triple.
fn for_each_pair(h: usize, w: usize, mut f: impl FnMut(usize, usize, usize)) {
    for i in 0..h {
        for j in 0..w {
            for k in 0..h {
                for l in 0..w {
                    let s = i as isize - k as isize;
                    let t = j as isize - l as isize;
                    f(offset_channel(h, w, s, t), k * w + l, i * w + j);
                }
            }
        }
    }
}

/// Moves `c(i, j; k, l)` to offset channel `(i - k, j - l)` at `(i, j)`.
pub fn reorder_by_offset(c: &CorrelationMap) -> ReorderedCorrelationMap {
    let (h, w) = (c.height(), c.width());
    let plane = h * w;
    let mut out = vec![0.0; (2 * h - 1) * (2 * w - 1) * plane];
    let src = c.values().data();
    for_each_pair(h, w, |off, abs, loc| {
        out[off * plane + loc] = src[abs * plane + loc];
    });
    ReorderedCorrelationMap {
        values: Tensor::new(vec![(2 * h - 1) * (2 * w - 1), h, w], out).expect("sized above"),
        height: h,
        width: w,
    }
}

/// Inverse of [`reorder_by_offset`]; structurally-zero entries are dropped.
pub fn restore_from_offsets(r: &ReorderedCorrelationMap) -> CorrelationMap {
    let (h, w) = (r.height(), r.width());
    let plane = h * w;
    let mut out = vec![0.0; plane * plane];
    let src = r.values().data();
    for_each_pair(h, w, |off, abs, loc| {
        out[abs * plane + loc] = src[off * plane + loc];
    });
    CorrelationMap::from_tensor(Tensor::new(vec![plane, h, w], out).expect("sized above")).expect("square map")
}
