use super::{GridPoints, PointMap, TpsBasis, TransformParams};
use crate::error::{Error, Result};

/// Points per side of the grid the training loss is measured on.
pub const DEFAULT_TGD_GRID: usize = 20;

/// Transformed grid distance: mean squared Euclidean distance between the
/// grid mapped by `theta` and by `theta_gt`. Returns the loss and its
/// gradient with respect to `theta`; `theta_gt` is treated as constant.
pub fn tgd(theta: &TransformParams, theta_gt: &TransformParams, grid: &GridPoints) -> Result<(f64, Vec<f64>)> {
    if theta.family() != theta_gt.family() {
        return Err(Error::FamilyMismatch(format!(
            "{} vs {}",
            theta.family(),
            theta_gt.family()
        )));
    }
    let scale = 1.0 / grid.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; theta.as_slice().len()];
    match (theta, theta_gt) {
        (TransformParams::Affine(a), TransformParams::Affine(b)) => {
            for &p in grid.iter() {
                let (q, r) = (a.apply(p), b.apply(p));
                let (ex, ey) = (q[0] - r[0], q[1] - r[1]);
                loss += ex * ex + ey * ey;
                let basis = [p[0], p[1], 1.0];
                for c in 0..3 {
                    grad[c] += 2.0 * ex * basis[c];
                    grad[3 + c] += 2.0 * ey * basis[c];
                }
            }
        }
        (TransformParams::Tps(a), TransformParams::Tps(b)) => {
            let basis = TpsBasis::cached(a.grid())?;
            let k = basis.anchors().len();
            let (da, db) = (a.displacements(), b.displacements());
            for &p in grid.iter() {
                let beta = basis.coefficients(p);
                // The identity part cancels; only displacements differ.
                let ex: f64 = beta.iter().enumerate().map(|(i, w)| w * (da[i] - db[i])).sum();
                let ey: f64 = beta.iter().enumerate().map(|(i, w)| w * (da[k + i] - db[k + i])).sum();
                loss += ex * ex + ey * ey;
                for (i, w) in beta.iter().enumerate() {
                    grad[i] += 2.0 * ex * w;
                    grad[k + i] += 2.0 * ey * w;
                }
            }
        }
        _ => unreachable!("families checked above"),
    }
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((loss * scale, grad))
}

/// Value-only grid distance between any two point maps, e.g. a composed
/// affine + TPS prediction against a ground truth.
pub fn grid_distance(a: &impl PointMap, b: &impl PointMap, grid: &GridPoints) -> f64 {
    grid.iter()
        .map(|&p| {
            let (q, r) = (a.map_point(p), b.map_point(p));
            (q[0] - r[0]).powi(2) + (q[1] - r[1]).powi(2)
        })
        .sum::<f64>()
        / grid.len() as f64
}
