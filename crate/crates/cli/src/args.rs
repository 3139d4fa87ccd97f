//! Flag value types and the transform text format.

use std::path::Path;
use std::str::FromStr;

use oac_core::geometry::{TransformFamily, TransformParams};

use crate::Failure;

fn parse_dims<const K: usize>(s: &str, what: &str) -> Result<[usize; K], String> {
    let parts: Vec<&str> = s.split(['x', 'X']).collect();
    let err = || format!("expected {what}, got `{s}`");
    if parts.len() != K {
        return Err(err());
    }
    let mut out = [0; K];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.trim().parse().map_err(|_| err())?;
        if *o == 0 {
            return Err(format!("dimensions must be positive, got `{s}`"));
        }
    }
    Ok(out)
}

/// `HxWxN`: feature grid and kernel count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub height: usize,
    pub width: usize,
    pub kernels: usize,
}

impl FromStr for Dims {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let [height, width, kernels] = parse_dims::<3>(s, "HxWxN")?;
        Ok(Dims { height, width, kernels })
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.kernels)
    }
}

/// `HxW` in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ImageSize {
    pub height: usize,
    pub width: usize,
}

impl FromStr for ImageSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let [height, width] = parse_dims::<2>(s, "HxW")?;
        Ok(ImageSize { height, width })
    }
}

/// `KEY=VALUE` configuration override.
#[derive(Clone, Debug)]
pub struct Setting {
    pub key: String,
    pub value: String,
}

impl FromStr for Setting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
        Ok(Setting {
            key: k.trim().to_string(),
            value: v.trim().to_string(),
        })
    }
}

/// Family implied by a parameter count: 6 is affine, `2·g²` a `g × g` TPS.
pub fn family_for_len(len: usize) -> Option<TransformFamily> {
    if len == 6 {
        return Some(TransformFamily::Affine);
    }
    let grid = (2..=16).find(|g| 2 * g * g == len)?;
    Some(TransformFamily::Tps { grid })
}

pub fn parse_theta(line: &str) -> Result<TransformParams, String> {
    let values: Vec<f64> = line
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
        .collect::<Result<_, _>>()?;
    let family =
        family_for_len(values.len()).ok_or_else(|| format!("{} values is neither affine (6) nor TPS (2g²)", values.len()))?;
    TransformParams::from_slice(family, &values).map_err(|e| e.to_string())
}

/// One transform per non-blank, non-`#` line.
pub fn read_thetas(path: &Path) -> Result<Vec<TransformParams>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(parse_theta(line).map_err(|m| Failure::Usage(format!("{}:{}: {m}", path.display(), i + 1)))?);
    }
    if out.is_empty() {
        return Err(Failure::Usage(format!("{}: no transforms", path.display())));
    }
    Ok(out)
}

pub fn format_theta(theta: &TransformParams) -> String {
    let v: Vec<String> = theta.as_slice().iter().map(|x| format!("{x:e}")).collect();
    v.join(" ")
}
