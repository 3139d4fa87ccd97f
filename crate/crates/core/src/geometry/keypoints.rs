use std::path::Path;

use super::warp::{to_normalized, to_pixel};
use super::{Point, PointMap};
use crate::error::{Error, Result};

/// Pixel dimensions used to move keypoints into normalised coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ImageFrame {
    pub height: usize,
    pub width: usize,
}

impl ImageFrame {
    pub fn new(height: usize, width: usize) -> Self {
        ImageFrame { height, width }
    }

    pub fn normalize(&self, p: Point) -> Point {
        [to_normalized(p[0], self.width), to_normalized(p[1], self.height)]
    }

    pub fn to_pixels(&self, p: Point) -> Point {
        [to_pixel(p[0], self.width), to_pixel(p[1], self.height)]
    }
}

/// Annotated keypoints of one image pair, in pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct KeypointPairSet {
    pub pair_id: String,
    pub source: Vec<Point>,
    pub target: Vec<Point>,
    pub bbox_h: f64,
    pub bbox_w: f64,
}

impl KeypointPairSet {
    pub fn new(pair_id: impl Into<String>, source: Vec<Point>, target: Vec<Point>, bbox_h: f64, bbox_w: f64) -> Result<Self> {
        let pair_id = pair_id.into();
        if source.len() != target.len() {
            return Err(Error::shape(format!(
                "pair {pair_id}: {} source vs {} target keypoints",
                source.len(),
                target.len()
            )));
        }
        if !(bbox_h > 0.0 && bbox_w > 0.0) {
            return Err(Error::invalid(format!("pair {pair_id}: bounding box must be positive")));
        }
        Ok(KeypointPairSet {
            pair_id,
            source,
            target,
            bbox_h,
            bbox_w,
        })
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PckResult {
    pub correct: usize,
    pub total: usize,
}

impl PckResult {
    pub fn value(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

/// Fraction of keypoints, pooled over all pairs, whose source point mapped
/// by the pair's predicted transform lands strictly within
/// `alpha · max(h, w)` pixels of the target point.
pub fn pck<T: PointMap>(sets: &[KeypointPairSet], predicted: &[T], frame: ImageFrame, alpha: f64) -> Result<PckResult> {
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::invalid(format!("PCK alpha must be positive, got {alpha}")));
    }
    if sets.len() != predicted.len() {
        return Err(Error::shape(format!(
            "{} keypoint sets but {} predictions",
            sets.len(),
            predicted.len()
        )));
    }
    let mut result = PckResult { correct: 0, total: 0 };
    for (set, t) in sets.iter().zip(predicted) {
        let threshold = alpha * set.bbox_h.max(set.bbox_w);
        for (s, g) in set.source.iter().zip(&set.target) {
            let p = frame.to_pixels(t.map_point(frame.normalize(*s)));
            let d = ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2)).sqrt();
            if d < threshold {
                result.correct += 1;
            }
            result.total += 1;
        }
    }
    if result.total == 0 {
        return Err(Error::Empty("keypoint set"));
    }
    Ok(result)
}

/// Reads `pair_id,src_x,src_y,trg_x,trg_y,bbox_h,bbox_w` rows, one per
/// keypoint. A non-numeric first row is taken as a header. Pairs keep the
/// order of their first appearance.
pub fn read_keypoint_csv(path: impl AsRef<Path>) -> Result<Vec<KeypointPairSet>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut sets: Vec<KeypointPairSet> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 1;
        let bad = |message: String| Error::Config {
            path: path.display().to_string(),
            line,
            message,
        };
        if record.len() != 7 {
            return Err(bad(format!("expected 7 fields, found {}", record.len())));
        }
        let nums: std::result::Result<Vec<f64>, _> = (1..7).map(|f| record[f].parse::<f64>()).collect();
        let nums = match nums {
            Ok(n) => n,
            Err(_) if i == 0 => continue,
            Err(e) => return Err(bad(format!("bad number: {e}"))),
        };
        let id = &record[0];
        let (src, trg, bh, bw) = ([nums[0], nums[1]], [nums[2], nums[3]], nums[4], nums[5]);
        if !(bh > 0.0 && bw > 0.0) {
            return Err(bad("bounding box must be positive".into()));
        }
        match sets.iter_mut().find(|s| s.pair_id == id) {
            Some(set) => {
                if set.bbox_h != bh || set.bbox_w != bw {
                    return Err(bad(format!("pair {id} has inconsistent bounding boxes")));
                }
                set.source.push(src);
                set.target.push(trg);
            }
            None => sets.push(KeypointPairSet::new(id, vec![src], vec![trg], bh, bw)?),
        }
    }
    if sets.is_empty() {
        return Err(Error::Empty("keypoint CSV"));
    }
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{AffineParams, TransformFamily};
    use std::io::Write;

    fn frame() -> ImageFrame {
        ImageFrame::new(101, 101)
    }

    #[test]
    fn exact_prediction_scores_one() {
        let t = AffineParams {
            theta: [0.9, 0.1, 0.05, -0.1, 1.1, -0.02],
        };
        let f = frame();
        let src = vec![[10.0, 20.0], [50.0, 50.0], [90.0, 5.0]];
        let trg = src.iter().map(|&p| f.to_pixels(t.apply(f.normalize(p)))).collect();
        let set = KeypointPairSet::new("a", src, trg, 40.0, 60.0).unwrap();
        let r = pck(&[set], &[t], f, 0.1).unwrap();
        assert_eq!(r.value(), 1.0);
    }

    #[test]
    fn far_translation_scores_zero() {
        // 0.5 · max(h, w) = 30 px; one normalised unit is 50 px here.
        let set = KeypointPairSet::new("a", vec![[50.0, 50.0]; 3], vec![[50.0, 50.0]; 3], 40.0, 60.0).unwrap();
        let t = AffineParams::translation(30.0 / 50.0, 0.0);
        let r = pck(&[set], &[t], frame(), 0.1).unwrap();
        assert_eq!(r.correct, 0);
    }

    #[test]
    fn threshold_count() {
        // max(h, w) = 100: distances 5, 9, 20 px against a 10 px threshold.
        let src = vec![[10.0, 10.0], [20.0, 20.0], [30.0, 30.0]];
        let trg = vec![[15.0, 10.0], [20.0, 29.0], [30.0, 50.0]];
        let set = KeypointPairSet::new("a", src, trg, 100.0, 80.0).unwrap();
        let id = TransformFamily::Affine.identity();
        let r = pck(&[set], &[id], frame(), 0.1).unwrap();
        assert_eq!((r.correct, r.total), (2, 3));
        assert!((r.value() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn pooled_over_pairs_and_monotone() {
        let a = KeypointPairSet::new("a", vec![[0.0, 0.0]], vec![[7.0, 0.0]], 100.0, 100.0).unwrap();
        let b = KeypointPairSet::new("b", vec![[0.0, 0.0]; 3], vec![[3.0, 0.0], [12.0, 0.0], [30.0, 0.0]], 100.0, 100.0).unwrap();
        let id = TransformFamily::Affine.identity();
        let ids = [id.clone(), id];
        let mut last = 0.0;
        for alpha in [0.05, 0.1, 0.15, 0.5] {
            let v = pck(&[a.clone(), b.clone()], &ids, frame(), alpha).unwrap().value();
            assert!(v >= last);
            last = v;
        }
        // alpha 0.1: 7 and 3 pass out of 4 pooled keypoints
        assert_eq!(pck(&[a, b], &ids, frame(), 0.1).unwrap().value(), 0.5);
    }

    #[test]
    fn empty_set_is_error() {
        let set = KeypointPairSet::new("a", vec![], vec![], 1.0, 1.0).unwrap();
        let id = TransformFamily::Affine.identity();
        assert!(matches!(pck(&[set], &[id], frame(), 0.1), Err(Error::Empty(_))));
    }

    #[test]
    fn csv_groups_rows_by_pair() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "pair_id,src_x,src_y,trg_x,trg_y,bbox_h,bbox_w").unwrap();
        writeln!(f, "p1,1,2,3,4,10,20").unwrap();
        writeln!(f, "p2,5,6,7,8,30,40").unwrap();
        writeln!(f, "p1,9,10,11,12,10,20").unwrap();
        let sets = read_keypoint_csv(f.path()).unwrap();
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[0].pair_id, "p1");
        assert_eq!(sets[0].source, vec![[1.0, 2.0], [9.0, 10.0]]);
        assert_eq!(sets[1].target, vec![[7.0, 8.0]]);
    }

    #[test]
    fn csv_rejects_bad_rows() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "p1,1,2,3,4,10,20").unwrap();
        writeln!(f, "p1,1,2,x,4,10,20").unwrap();
        let err = read_keypoint_csv(f.path()).unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }), "{err}");
    }
}
