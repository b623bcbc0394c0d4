//! Self-describing plain-text model documents.
//!
//! One `key = value` pair per line; keys may repeat (`row = ...`), list values
//! are space separated and floats are written in shortest round-trip form.
//! Blank lines and lines starting with `#` are ignored. The first entry is
//! always `model = <kind>`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Document {
    entries: Vec<(String, String)>,
}

impl Document {
    pub fn new(kind: &str) -> Self {
        let mut doc = Document::default();
        doc.push("model", kind);
        doc
    }

    pub fn push(&mut self, key: &str, value: impl Into<String>) {
        self.entries.push((key.to_string(), value.into()));
    }

    pub fn push_float(&mut self, key: &str, v: f64) {
        self.push(key, v.to_string());
    }

    pub fn push_floats(&mut self, key: &str, vs: &[f64]) {
        let s: Vec<String> = vs.iter().map(|v| v.to_string()).collect();
        self.push(key, s.join(" "));
    }

    pub fn kind(&self) -> Result<&str> {
        self.get("model")
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        let found = self.kind()?;
        if found != kind {
            return Err(Error::Parse(format!("expected a {kind} model document, found {found}")));
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Parse(format!("missing key {key:?}")))
    }

    pub fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.entries
            .iter()
            .filter(move |(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| Error::Parse(format!("bad value {raw:?} for key {key:?}")))
    }

    pub fn get_float(&self, key: &str) -> Result<f64> {
        self.get_parsed(key)
    }

    pub fn get_floats(&self, key: &str) -> Result<Vec<f64>> {
        Self::parse_floats(self.get(key)?)
    }

    pub fn parse_floats(s: &str) -> Result<Vec<f64>> {
        s.split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("bad number {t:?}"))))
            .collect()
    }
}

impl fmt::Display for Document {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

impl FromStr for Document {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut doc = Document::default();
        for (lineno, line) in s.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
            doc.entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        if doc.entries.first().map(|(k, _)| k.as_str()) != Some("model") {
            return Err(Error::Parse("document must start with a model = <kind> line".into()));
        }
        Ok(doc)
    }
}
