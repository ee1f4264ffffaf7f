//! TOML scenario files.
//!
//! A file either holds a complete [`ScenarioConfig`] or a partial table that
//! is merged key by key over a preset. Unknown keys are rejected in both
//! cases. TOML integers are signed 64-bit, so `rng_seed` values above
//! `i64::MAX` cannot be written to a file; pass them on the command line.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;
use toml::{Table, Value};

use crate::model::{validate_config, ConfigError, ScenarioConfig, ValidatedConfig};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot encode scenario: {0}")]
    Encode(#[from] toml::ser::Error),
    #[error(transparent)]
    Invalid(#[from] ConfigError),
}

pub fn to_toml_string(cfg: &ScenarioConfig) -> Result<String, ScenarioError> {
    Ok(toml::to_string(cfg)?)
}

/// Parses a complete scenario. Missing keys are an error.
pub fn from_toml_str(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    Ok(toml::from_str(text)?)
}

/// Parses an override table without interpreting it.
pub fn parse_overrides(text: &str) -> Result<Table, ScenarioError> {
    Ok(text.parse::<Table>()?)
}

/// Merges `overrides` over `base`. Nested tables merge recursively; arrays
/// and scalars replace the base value.
pub fn apply_overrides(base: &ScenarioConfig, overrides: &Table) -> Result<ScenarioConfig, ScenarioError> {
    let mut merged = Table::try_from(base)?;
    merge(&mut merged, overrides);
    Ok(Value::Table(merged).try_into()?)
}

fn merge(into: &mut Table, from: &Table) {
    for (key, value) in from {
        match (into.get_mut(key), value) {
            (Some(Value::Table(dst)), Value::Table(src)) => merge(dst, src),
            _ => {
                into.insert(key.clone(), value.clone());
            }
        }
    }
}

/// True if `key` (dotted path) is set in the override table.
pub fn overrides_key(overrides: &Table, key: &str) -> bool {
    let mut table = overrides;
    let mut parts = key.split('.').peekable();
    while let Some(part) = parts.next() {
        match table.get(part) {
            None => return false,
            Some(Value::Table(inner)) if parts.peek().is_some() => table = inner,
            Some(_) => return parts.peek().is_none(),
        }
    }
    false
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    fs::read_to_string(path).map_err(|source| ScenarioError::Read {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    from_toml_str(&read(path)?)
}

pub fn load_overrides(path: &Path) -> Result<Table, ScenarioError> {
    parse_overrides(&read(path)?)
}

/// Loads and validates a complete scenario file.
pub fn load_validated(path: &Path) -> Result<ValidatedConfig, ScenarioError> {
    Ok(validate_config(&load(path)?)?)
}

pub fn save(path: &Path, cfg: &ScenarioConfig) -> Result<(), ScenarioError> {
    let text = to_toml_string(cfg)?;
    fs::write(path, text).map_err(|source| ScenarioError::Write {
        path: path.to_path_buf(),
        source,
    })
}
