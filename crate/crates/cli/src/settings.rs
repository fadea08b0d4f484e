//! Run settings resolved as flags over config file over defaults.
//!
//! The config file is flat `key=value` text; keys are the long flag names
//! without dashes (`eta=2.5`, `eps-min=1e-10`). Blank lines and lines
//! starting with `#` are ignored.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::CliError;

pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Usage(format!("config line {}: expected key=value", n + 1)));
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(CliError::Usage(format!("config line {}: empty key", n + 1)));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(CliError::Usage(format!("config line {}: duplicate key {k}", n + 1)));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    /// Layers `config` and then `flags` over `defaults`. Keys absent from
    /// `defaults` are rejected.
    pub fn resolve(
        defaults: &[(&str, String)],
        config: &BTreeMap<String, String>,
        flags: &[(&str, Option<String>)],
    ) -> Result<Settings, CliError> {
        let mut values: BTreeMap<String, String> =
            defaults.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        for (k, v) in config {
            match values.get_mut(k) {
                Some(slot) => *slot = v.clone(),
                None => return Err(CliError::Usage(format!("unknown config key '{k}'"))),
            }
        }
        for (k, v) in flags {
            if let Some(v) = v {
                match values.get_mut(*k) {
                    Some(slot) => *slot = v.clone(),
                    None => return Err(CliError::Usage(format!("flag --{k} does not apply here"))),
                }
            }
        }
        Ok(Settings { values })
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn str(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.str(key);
        raw.parse()
            .map_err(|e| CliError::Usage(format!("invalid value '{raw}' for {key}: {e}")))
    }

    /// Comma-separated list; empty input gives an empty list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.str(key);
        if raw.trim().is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|e| CliError::Usage(format!("invalid entry '{s}' in {key}: {e}")))
            })
            .collect()
    }

    /// `None` for an empty value.
    pub fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        if self.str(key).trim().is_empty() {
            Ok(None)
        } else {
            self.get(key).map(Some)
        }
    }
}
