//! `key = value` configuration files. Keys mirror the long flag names;
//! `#` starts a comment.

use std::collections::BTreeMap;
use std::path::Path;

use crate::CliError;

pub const KEYS: [&str; 10] = [
    "patch",
    "overlap",
    "model",
    "coeffs",
    "poly",
    "fringe-method",
    "weights",
    "jpeg",
    "threads",
    "seed",
];

#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("config line {}: expected key = value", n + 1))
            })?;
            let key = k.trim().replace('_', "-");
            if !KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!(
                    "config line {}: unknown key '{}'",
                    n + 1,
                    k.trim()
                )));
            }
            let value = v.trim().trim_matches('"').to_string();
            values.insert(key, value);
        }
        Ok(ConfigFile { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Core(aberrex::Error::Io {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Parsed value of `key`, if present.
    pub fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| CliError::Usage(format!("config: bad value '{v}' for {key}")))
            })
            .transpose()
    }

    pub fn flag(&self, key: &str) -> Result<bool, CliError> {
        match self.get(key) {
            None => Ok(false),
            Some("true" | "1" | "yes" | "on") => Ok(true),
            Some("false" | "0" | "no" | "off") => Ok(false),
            Some(v) => Err(CliError::Usage(format!("config: bad boolean '{v}' for {key}"))),
        }
    }
}
