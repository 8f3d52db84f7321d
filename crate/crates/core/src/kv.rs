//! Flat `key = value` text used for configuration files and reports.
//!
//! Blank lines and lines starting with `#` are ignored. Later assignments of
//! the same key override earlier ones.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KvError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: cannot parse `{value}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
}

/// Ordered key/value map; insertion order is irrelevant, output is sorted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvMap {
    entries: BTreeMap<String, String>,
}

impl KvMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut map = KvMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| KvError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(KvError::Syntax {
                    line: i + 1,
                    text: raw.to_string(),
                });
            }
            map.set(k, v.trim());
        }
        Ok(map)
    }

    /// Parses a command-line `key=value` override.
    pub fn parse_assignment(s: &str) -> Result<(String, String), KvError> {
        let (k, v) = s.split_once('=').ok_or_else(|| KvError::Syntax {
            line: 0,
            text: s.to_string(),
        })?;
        Ok((k.trim().to_string(), v.trim().to_string()))
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn extend(&mut self, other: &KvMap) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    /// Fails on the first key not in `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), KvError> {
        match self.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(KvError::UnknownKey(k.to_string())),
            None => Ok(()),
        }
    }

    pub fn parse_value<T>(&self, key: &str) -> Result<Option<T>, KvError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| parse_scalar(key, v))
            .transpose()
    }

    /// Reads `key` into `slot` if present.
    pub fn read_into<T>(&self, key: &str, slot: &mut T) -> Result<(), KvError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.parse_value(key)? {
            *slot = v;
        }
        Ok(())
    }

    /// Reads a two-element list written `a, b`.
    pub fn read_pair_into<T>(&self, key: &str, slot: &mut [T; 2]) -> Result<(), KvError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        let Some(v) = self.get(key) else {
            return Ok(());
        };
        let parts: Vec<&str> = v.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            return Err(KvError::BadValue {
                key: key.into(),
                value: v.into(),
                reason: "expected two comma-separated values".into(),
            });
        }
        *slot = [parse_scalar(key, parts[0])?, parse_scalar(key, parts[1])?];
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

fn parse_scalar<T>(key: &str, v: &str) -> Result<T, KvError>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| KvError::BadValue {
        key: key.into(),
        value: v.into(),
        reason: e.to_string(),
    })
}

/// Formats a two-element list the way [`KvMap::read_pair_into`] reads it.
pub fn pair<T: std::fmt::Display>(v: &[T; 2]) -> String {
    format!("{}, {}", v[0], v[1])
}
