//! Flat `key = value` configuration files.
//!
//! One pair per line; `#` starts a comment; blank lines are ignored. Keys
//! must be unique and each consumer rejects keys it does not know.

use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("config line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

impl Entry {
    pub fn parse<V: FromStr>(&self) -> Result<V, ConfigError>
    where
        V::Err: std::fmt::Display,
    {
        self.value.parse().map_err(|e: V::Err| ConfigError {
            line: self.line,
            message: format!("bad value {:?} for `{}`: {e}", self.value, self.key),
        })
    }

    /// Comma-separated list.
    pub fn parse_list<V: FromStr>(&self) -> Result<Vec<V>, ConfigError>
    where
        V::Err: std::fmt::Display,
    {
        self.value
            .split(',')
            .map(|part| {
                part.trim().parse().map_err(|e: V::Err| ConfigError {
                    line: self.line,
                    message: format!("bad list item {part:?} for `{}`: {e}", self.key),
                })
            })
            .collect()
    }

    pub fn unknown(&self) -> ConfigError {
        ConfigError {
            line: self.line,
            message: format!("unknown key `{}`", self.key),
        }
    }
}

pub fn parse_entries(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError {
            line,
            message: format!("expected `key = value`, got {content:?}"),
        })?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(ConfigError {
                line,
                message: "empty key".into(),
            });
        }
        if out.iter().any(|e| e.key == key) {
            return Err(ConfigError {
                line,
                message: format!("duplicate key `{key}`"),
            });
        }
        out.push(Entry {
            line,
            key,
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}
