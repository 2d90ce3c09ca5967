//! Flat `key: value` text files.
//!
//! One pair per line, `#` starts a comment line, blank lines are skipped.
//! Values run to the end of the line with surrounding whitespace trimmed.
//! Used for the pipeline config file and the emitted trainer config.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct KvError {
    pub line: usize,
    pub message: String,
}

/// Parses `text`, keeping insertion order. Duplicate keys are an error.
pub fn parse(text: &str) -> Result<Vec<(String, String)>, KvError> {
    Ok(parse_lines(text)?.into_iter().map(|(_, k, v)| (k, v)).collect())
}

/// Like [`parse`], with the 1-based line number of each pair.
pub fn parse_lines(text: &str) -> Result<Vec<(usize, String, String)>, KvError> {
    let mut out: Vec<(usize, String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once(':') else {
            return Err(KvError {
                line: i + 1,
                message: format!("expected `key: value`, got {line:?}"),
            });
        };
        let key = k.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(KvError {
                line: i + 1,
                message: format!("invalid key {key:?}"),
            });
        }
        if out.iter().any(|(_, existing, _)| existing == key) {
            return Err(KvError {
                line: i + 1,
                message: format!("duplicate key {key:?}"),
            });
        }
        out.push((i + 1, key.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn parse_map(text: &str) -> Result<BTreeMap<String, String>, KvError> {
    Ok(parse(text)?.into_iter().collect())
}

pub fn format<'a>(pairs: impl IntoIterator<Item = (&'a str, String)>) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        out.push_str(k);
        out.push_str(": ");
        out.push_str(&v);
        out.push('\n');
    }
    out
}
