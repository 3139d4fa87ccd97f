//! Global parametric transforms on the normalised square `[-1, 1]²`.
//!
//! Coordinates are `(x, y)` with `(-1, -1)` at the centre of the top-left
//! pixel and `(1, 1)` at the centre of the bottom-right one. Every transform,
//! grid and warp in the crate shares this convention.

mod keypoints;
mod loss;
mod sample;
mod tps;
mod warp;

use std::fmt;

use crate::error::{Error, Result};

pub use keypoints::{pck, read_keypoint_csv, ImageFrame, KeypointPairSet, PckResult};
pub use loss::{grid_distance, tgd, DEFAULT_TGD_GRID};
pub use sample::{sample_random_transform, sample_transform, AffineSampling, TPS_MAX_DISPLACEMENT};
pub use tps::{TpsBasis, DEFAULT_TPS_GRID};
pub use warp::{bilinear_warp, mirror_pad, mirror_pad_center_crop, reflect_index, sample_bilinear};

pub type Point = [f64; 2];

/// Anything that maps a normalised point to a normalised point.
pub trait PointMap {
    fn map_point(&self, p: Point) -> Point;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransformFamily {
    Affine,
    /// Thin-plate spline over a `grid × grid` anchor lattice.
    Tps { grid: usize },
}

impl TransformFamily {
    pub const TPS: TransformFamily = TransformFamily::Tps { grid: DEFAULT_TPS_GRID };

    /// Length `Q` of the parameter vector.
    pub fn param_count(self) -> usize {
        match self {
            TransformFamily::Affine => 6,
            TransformFamily::Tps { grid } => 2 * grid * grid,
        }
    }

    pub fn identity(self) -> TransformParams {
        match self {
            TransformFamily::Affine => TransformParams::Affine(AffineParams::IDENTITY),
            TransformFamily::Tps { grid } => TransformParams::Tps(TpsParams::zeros(grid)),
        }
    }

    /// Parameter vector of the identity transform of this family.
    pub fn identity_vector(self) -> Vec<f64> {
        self.identity().as_slice().to_vec()
    }

    pub fn name(self) -> &'static str {
        match self {
            TransformFamily::Affine => "affine",
            TransformFamily::Tps { .. } => "tps",
        }
    }
}

impl fmt::Display for TransformFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `(a11, a12, tx, a21, a22, ty)`: `x' = a11 x + a12 y + tx`,
/// `y' = a21 x + a22 y + ty`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineParams {
    pub theta: [f64; 6],
}

impl AffineParams {
    pub const IDENTITY: AffineParams = AffineParams {
        theta: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
    };

    pub fn translation(tx: f64, ty: f64) -> Self {
        AffineParams {
            theta: [1.0, 0.0, tx, 0.0, 1.0, ty],
        }
    }

    pub fn determinant(&self) -> f64 {
        let t = &self.theta;
        t[0] * t[4] - t[1] * t[3]
    }

    #[inline]
    pub fn apply(&self, [x, y]: Point) -> Point {
        let t = &self.theta;
        [t[0] * x + t[1] * y + t[2], t[3] * x + t[4] * y + t[5]]
    }
}

impl PointMap for AffineParams {
    fn map_point(&self, p: Point) -> Point {
        self.apply(p)
    }
}

/// Displacements of a regular `grid × grid` anchor lattice over `[-1, 1]²`.
/// Anchors are ordered row-major (`y` outer, `x` inner); the first `grid²`
/// entries are x offsets, the rest y offsets.
#[derive(Clone, Debug, PartialEq)]
pub struct TpsParams {
    grid: usize,
    displacements: Vec<f64>,
}

impl TpsParams {
    pub fn new(grid: usize, displacements: Vec<f64>) -> Result<Self> {
        if grid < 2 {
            return Err(Error::invalid(format!("TPS grid must be at least 2x2, got {grid}")));
        }
        if displacements.len() != 2 * grid * grid {
            return Err(Error::shape(format!(
                "TPS with a {grid}x{grid} grid needs {} displacements, got {}",
                2 * grid * grid,
                displacements.len()
            )));
        }
        Ok(TpsParams { grid, displacements })
    }

    pub fn zeros(grid: usize) -> Self {
        TpsParams {
            grid,
            displacements: vec![0.0; 2 * grid * grid],
        }
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn displacements(&self) -> &[f64] {
        &self.displacements
    }

    pub fn anchors(&self) -> Vec<Point> {
        tps::lattice(self.grid)
    }

    /// Displacement of anchor `k`.
    pub fn displacement(&self, k: usize) -> Point {
        let n = self.grid * self.grid;
        [self.displacements[k], self.displacements[n + k]]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TransformParams {
    Affine(AffineParams),
    Tps(TpsParams),
}

impl TransformParams {
    pub fn family(&self) -> TransformFamily {
        match self {
            TransformParams::Affine(_) => TransformFamily::Affine,
            TransformParams::Tps(t) => TransformFamily::Tps { grid: t.grid },
        }
    }

    pub fn from_slice(family: TransformFamily, values: &[f64]) -> Result<Self> {
        if values.len() != family.param_count() {
            return Err(Error::shape(format!(
                "{family} transform needs {} parameters, got {}",
                family.param_count(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("transform parameters"));
        }
        Ok(match family {
            TransformFamily::Affine => {
                let mut theta = [0.0; 6];
                theta.copy_from_slice(values);
                TransformParams::Affine(AffineParams { theta })
            }
            TransformFamily::Tps { grid } => TransformParams::Tps(TpsParams::new(grid, values.to_vec())?),
        })
    }

    pub fn as_slice(&self) -> &[f64] {
        match self {
            TransformParams::Affine(a) => &a.theta,
            TransformParams::Tps(t) => &t.displacements,
        }
    }

    /// Maps every point of the grid.
    pub fn transform_points(&self, pts: &GridPoints) -> Result<GridPoints> {
        match self {
            TransformParams::Affine(a) => GridPoints::new(pts.iter().map(|&p| a.apply(p)).collect()),
            TransformParams::Tps(t) => {
                let basis = TpsBasis::cached(t.grid)?;
                GridPoints::new(pts.iter().map(|&p| basis.apply(t, p)).collect())
            }
        }
    }
}

impl PointMap for TransformParams {
    fn map_point(&self, p: Point) -> Point {
        match self {
            TransformParams::Affine(a) => a.apply(p),
            TransformParams::Tps(t) => TpsBasis::cached(t.grid)
                .expect("fixed TPS lattice is never singular")
                .apply(t, p),
        }
    }
}

impl From<AffineParams> for TransformParams {
    fn from(a: AffineParams) -> Self {
        TransformParams::Affine(a)
    }
}

impl From<TpsParams> for TransformParams {
    fn from(t: TpsParams) -> Self {
        TransformParams::Tps(t)
    }
}

/// `second ∘ first`: applies `first`, then `second`.
#[derive(Clone, Debug, PartialEq)]
pub struct Composed<A, B> {
    pub first: A,
    pub second: B,
}

impl<A: PointMap, B: PointMap> PointMap for Composed<A, B> {
    fn map_point(&self, p: Point) -> Point {
        self.second.map_point(self.first.map_point(p))
    }
}

impl<T: PointMap + ?Sized> PointMap for &T {
    fn map_point(&self, p: Point) -> Point {
        (**self).map_point(p)
    }
}

/// Non-empty list of normalised points.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPoints {
    points: Vec<Point>,
}

impl GridPoints {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("grid points"));
        }
        Ok(GridPoints { points })
    }

    /// `n × n` points spanning `[-1, 1]²` corners included, row-major.
    pub fn regular(n_per_side: usize) -> Result<Self> {
        if n_per_side < 2 {
            return Err(Error::invalid(format!("regular grid needs n >= 2, got {n_per_side}")));
        }
        let coord = |i: usize| -1.0 + 2.0 * i as f64 / (n_per_side - 1) as f64;
        let points = (0..n_per_side)
            .flat_map(|r| (0..n_per_side).map(move |c| [coord(c), coord(r)]))
            .collect();
        Ok(GridPoints { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.points.iter()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn map(&self, t: &impl PointMap) -> GridPoints {
        GridPoints {
            points: self.points.iter().map(|&p| t.map_point(p)).collect(),
        }
    }
}

pub fn make_regular_grid(n_per_side: usize) -> Result<GridPoints> {
    GridPoints::regular(n_per_side)
}
