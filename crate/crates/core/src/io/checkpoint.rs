//! Checkpoint directories: one `OACT` file per named tensor plus a
//! `manifest.txt` with a `name shape role` line per tensor.

use std::fmt;
use std::path::Path;

use super::oact::{read_tensor, write_tensor};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MANIFEST: &str = "manifest.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    /// Trainable parameter.
    Param,
    /// Non-trainable state such as batch-norm running statistics.
    Buffer,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Param => "param",
            Role::Buffer => "buffer",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub role: Role,
    pub tensor: Tensor,
}

fn shape_string(shape: &[usize]) -> String {
    if shape.is_empty() {
        return "scalar".into();
    }
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

fn parse_shape(s: &str) -> Option<Vec<usize>> {
    if s == "scalar" {
        return Some(Vec::new());
    }
    s.split('x').map(|d| d.parse().ok()).collect()
}

pub fn write_checkpoint(dir: impl AsRef<Path>, entries: &[CheckpointEntry]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    for e in entries {
        if e.name.is_empty() || e.name.contains(char::is_whitespace) || e.name.contains('/') {
            return Err(Error::invalid(format!("bad tensor name {:?}", e.name)));
        }
        write_tensor(dir.join(format!("{}.oact", e.name)), &e.tensor)?;
        manifest.push_str(&format!("{} {} {}\n", e.name, shape_string(e.tensor.shape()), e.role));
    }
    std::fs::write(dir.join(MANIFEST), manifest)?;
    Ok(())
}

/// Reads every tensor listed in the manifest and checks it against the
/// recorded shape.
pub fn read_checkpoint(dir: impl AsRef<Path>) -> Result<Vec<CheckpointEntry>> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&manifest_path)?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let bad = |message: String| Error::Config {
            path: manifest_path.display().to_string(),
            line: i + 1,
            message,
        };
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [name, shape, role] = fields[..] else {
            return Err(bad("expected `name shape role`".into()));
        };
        let shape = parse_shape(shape).ok_or_else(|| bad(format!("bad shape {shape:?}")))?;
        let role = match role {
            "param" => Role::Param,
            "buffer" => Role::Buffer,
            other => return Err(bad(format!("unknown role {other:?}"))),
        };
        let tensor = read_tensor(dir.join(format!("{name}.oact")))?;
        if tensor.shape() != shape.as_slice() {
            return Err(bad(format!(
                "{name}: manifest says {shape:?}, file holds {:?}",
                tensor.shape()
            )));
        }
        entries.push(CheckpointEntry {
            name: name.to_string(),
            role,
            tensor,
        });
    }
    Ok(entries)
}
