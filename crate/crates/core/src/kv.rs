//! Flat `key = value` text files, used for synthesis configs, run configs and
//! run summaries.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are unique.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, thiserror::Error)]
pub enum KvError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("key `{key}`: cannot parse `{value}`: {reason}")]
    Value {
        key: String,
        value: String,
        reason: String,
    },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
}

/// Parsed key/value pairs in key order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvMap(BTreeMap<String, String>);

impl KvMap {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(KvError::Syntax { line: i + 1 })?;
            let key = k.trim();
            if key.is_empty() {
                return Err(KvError::Syntax { line: i + 1 });
            }
            if map.insert(key.to_string(), v.trim().to_string()).is_some() {
                return Err(KvError::Duplicate {
                    line: i + 1,
                    key: key.to_string(),
                });
            }
        }
        Ok(KvMap(map))
    }

    pub fn read(path: &Path) -> Result<Self, KvError> {
        let text = std::fs::read_to_string(path).map_err(|source| KvError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    /// Parses the value under `key`, if present.
    pub fn get<T>(&self, key: &str) -> Result<Option<T>, KvError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.0
            .get(key)
            .map(|v| {
                v.parse::<T>().map_err(|e| KvError::Value {
                    key: key.to_string(),
                    value: v.clone(),
                    reason: e.to_string(),
                })
            })
            .transpose()
    }

    /// Parses a comma-separated list under `key`, if present.
    pub fn get_list<T>(&self, key: &str) -> Result<Option<Vec<T>>, KvError>
    where
        T: FromStr,
        T::Err: Display,
    {
        let Some(v) = self.0.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|item| {
                item.trim().parse::<T>().map_err(|e| KvError::Value {
                    key: key.to_string(),
                    value: v.clone(),
                    reason: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    /// Fails on the first key not in `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), KvError> {
        match self.0.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(KvError::UnknownKey(k.clone())),
            None => Ok(()),
        }
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl ToString) {
        self.0.insert(key.into(), value.to_string());
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// Ordered writer for key/value reports; keeps insertion order.
#[derive(Debug, Default)]
pub struct KvWriter {
    lines: Vec<(String, String)>,
}

impl KvWriter {
    pub fn push(&mut self, key: impl Into<String>, value: impl Display) {
        self.lines.push((key.into(), value.to_string()));
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.lines {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}
