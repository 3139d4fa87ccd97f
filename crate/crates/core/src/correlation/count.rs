use std::fmt;
use std::str::FromStr;

use crate::error::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OacPath {
    /// Offset-indexed weights applied straight to the `H·W`-channel map.
    Direct,
    /// Offset reordering followed by a dense 1×1 convolution.
    Reordered,
}

impl fmt::Display for OacPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OacPath::Direct => "direct",
            OacPath::Reordered => "reordered",
        })
    }
}

impl FromStr for OacPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(OacPath::Direct),
            "reordered" => Ok(OacPath::Reordered),
            other => Err(Error::invalid(format!("unknown OAC path {other:?}"))),
        }
    }
}

/// Closed-form multiply count of one OAC layer: `N·H²·W²` for the direct
/// path and `N·(2H²-H)·(2W²-W)` for the reordered one, which multiplies
/// structurally-zero entries too.
pub fn count_multiplications(h: u64, w: u64, n: u64, path: OacPath) -> u64 {
    match path {
        OacPath::Direct => n * h * h * w * w,
        OacPath::Reordered => n * (2 * h * h - h) * (2 * w * w - w),
    }
}

/// Multiplies of the reordered path that touch an existing source/target
/// pair; equals the direct count.
pub fn count_nonzero_reordered(h: u64, w: u64, n: u64) -> u64 {
    n * h * w * h * w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_dims() {
        assert_eq!(count_multiplications(1, 1, 1, OacPath::Direct), 1);
        assert_eq!(count_multiplications(1, 1, 1, OacPath::Reordered), 1);
    }

    #[test]
    fn fifteen_by_fifteen_by_128() {
        assert_eq!(count_multiplications(15, 15, 128, OacPath::Direct), 6_480_000);
        assert_eq!(count_multiplications(15, 15, 128, OacPath::Reordered), 24_220_800);
        let ratio = 24_220_800.0 / 6_480_000.0;
        assert!((ratio - (435.0f64 / 225.0).powi(2)).abs() < 1e-12);
        assert!((ratio - 3.738).abs() < 1e-3);
    }

    #[test]
    fn parses_paths() {
        assert_eq!("direct".parse::<OacPath>().unwrap(), OacPath::Direct);
        assert!("sparse".parse::<OacPath>().is_err());
    }
}
