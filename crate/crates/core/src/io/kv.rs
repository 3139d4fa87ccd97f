//! Flat `key = value` text files. Blank lines and lines starting with `#`
//! are ignored.

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KvEntry {
    pub key: String,
    pub value: String,
    /// 1-based line number.
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KvDocument {
    pub path: String,
    pub entries: Vec<KvEntry>,
}

impl KvDocument {
    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let mut entries: Vec<KvEntry> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Config {
                path: path.to_string(),
                line,
                message,
            };
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{trimmed}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(err("empty key".into()));
            }
            if let Some(prev) = entries.iter().find(|e| e.key == key) {
                return Err(err(format!("duplicate key `{key}` (first set on line {})", prev.line)));
            }
            entries.push(KvEntry {
                key: key.to_string(),
                value: value.to_string(),
                line,
            });
        }
        Ok(KvDocument {
            path: path.to_string(),
            entries,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Feeds every entry to `visit`, which returns `Ok(false)` for keys it
    /// does not know. Unknown keys and visitor errors become line-numbered
    /// [`Error::Config`] values.
    pub fn visit(&self, mut visit: impl FnMut(&str, &str) -> std::result::Result<bool, String>) -> Result<()> {
        for e in &self.entries {
            let err = |message: String| Error::Config {
                path: self.path.clone(),
                line: e.line,
                message,
            };
            match visit(&e.key, &e.value) {
                Ok(true) => {}
                Ok(false) => return Err(err(format!("unknown key `{}`", e.key))),
                Err(m) => return Err(err(format!("bad value for `{}`: {m}", e.key))),
            }
        }
        Ok(())
    }
}

/// Parses a value, turning the error into a message for [`KvDocument::visit`].
pub fn parse_value<T: FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("`{value}`: {e}"))
}
