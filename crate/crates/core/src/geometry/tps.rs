use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use nalgebra::DMatrix;

use super::{Point, TpsParams};
use crate::error::{Error, Result};

/// Anchor lattice used when none is configured (`Q = 18`).
pub const DEFAULT_TPS_GRID: usize = 3;

/// `U(r) = r² log r²`, written in terms of `r²`; `U(0) = 0`.
#[inline]
fn radial(r2: f64) -> f64 {
    if r2 == 0.0 {
        0.0
    } else {
        r2 * r2.ln()
    }
}

pub(crate) fn lattice(grid: usize) -> Vec<Point> {
    let coord = |i: usize| -1.0 + 2.0 * i as f64 / (grid - 1) as f64;
    (0..grid)
        .flat_map(|r| (0..grid).map(move |c| [coord(c), coord(r)]))
        .collect()
}

/// The solved thin-plate system for a fixed anchor lattice.
///
/// With anchors `a_k`, the spline through targets `v_k` is
/// `T(p) = Σ w_k U(|p - a_k|) + c0 + c1 x + c2 y` where `[w; c] = L⁻¹ [v; 0]`.
/// Since `L` depends only on the lattice, `T(p) = Σ_k β_k(p) v_k` with
/// `β(p) = b(p)ᵀ L⁻¹[:, ..K]`. The affine constraints make `Σ β_k(p) a_k = p`,
/// so the transform is evaluated as `p + Σ β_k(p) d_k` for displacements `d`.
#[derive(Debug)]
pub struct TpsBasis {
    grid: usize,
    anchors: Vec<Point>,
    /// `(K + 3) × K`, row-major.
    solve: Vec<f64>,
}

thread_local! {
    static CACHE: RefCell<HashMap<usize, Rc<TpsBasis>>> = RefCell::new(HashMap::new());
}

impl TpsBasis {
    pub fn new(grid: usize) -> Result<Self> {
        if grid < 2 {
            return Err(Error::invalid(format!("TPS grid must be at least 2x2, got {grid}")));
        }
        let anchors = lattice(grid);
        let k = anchors.len();
        let n = k + 3;
        let mut l = DMatrix::<f64>::zeros(n, n);
        for (i, a) in anchors.iter().enumerate() {
            for (j, b) in anchors.iter().enumerate() {
                l[(i, j)] = radial((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2));
            }
            for (c, v) in [1.0, a[0], a[1]].into_iter().enumerate() {
                l[(i, k + c)] = v;
                l[(k + c, i)] = v;
            }
        }
        let inv = l.lu().try_inverse().ok_or(Error::SingularTps)?;
        if inv.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularTps);
        }
        let mut solve = vec![0.0; n * k];
        for r in 0..n {
            for c in 0..k {
                solve[r * k + c] = inv[(r, c)];
            }
        }
        Ok(TpsBasis { grid, anchors, solve })
    }

    /// Per-thread shared basis for a lattice size.
    pub fn cached(grid: usize) -> Result<Rc<TpsBasis>> {
        if let Some(b) = CACHE.with(|c| c.borrow().get(&grid).cloned()) {
            return Ok(b);
        }
        let basis = Rc::new(TpsBasis::new(grid)?);
        CACHE.with(|c| c.borrow_mut().insert(grid, basis.clone()));
        Ok(basis)
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn anchors(&self) -> &[Point] {
        &self.anchors
    }

    /// Interpolation weights `β(p)`, one per anchor.
    pub fn coefficients(&self, p: Point) -> Vec<f64> {
        let k = self.anchors.len();
        let mut b = Vec::with_capacity(k + 3);
        b.extend(
            self.anchors
                .iter()
                .map(|a| radial((p[0] - a[0]).powi(2) + (p[1] - a[1]).powi(2))),
        );
        b.extend([1.0, p[0], p[1]]);
        let mut beta = vec![0.0; k];
        for (r, &bv) in b.iter().enumerate() {
            for (o, s) in beta.iter_mut().zip(&self.solve[r * k..(r + 1) * k]) {
                *o += bv * s;
            }
        }
        beta
    }

    pub fn apply(&self, t: &TpsParams, p: Point) -> Point {
        debug_assert_eq!(t.grid(), self.grid);
        let beta = self.coefficients(p);
        let k = beta.len();
        let d = t.displacements();
        let dx: f64 = beta.iter().zip(&d[..k]).map(|(b, v)| b * v).sum();
        let dy: f64 = beta.iter().zip(&d[k..]).map(|(b, v)| b * v).sum();
        [p[0] + dx, p[1] + dy]
    }
}
