//! `--config` files and flag parsing helpers shared by the subcommands.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

/// A list given either as a comma-separated string or as a JSON array.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ListValue {
    Text(String),
    Numbers(Vec<f64>),
    Single(f64),
}

impl ListValue {
    fn into_text(self) -> String {
        match self {
            ListValue::Text(s) => s,
            ListValue::Numbers(v) => v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
            ListValue::Single(x) => x.to_string(),
        }
    }
}

/// Keys mirror the long flag names with `-` replaced by `_`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub sigma: Option<ListValue>,
    pub lambda: Option<ListValue>,
    pub beta: Option<ListValue>,
    pub x: Option<PathBuf>,
    pub x0: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub network: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub width: Option<usize>,
    pub depth: Option<usize>,
    pub seed: Option<u64>,
    pub tolerance: Option<f64>,
    pub convention: Option<String>,
    pub kind: Option<String>,
    pub suite: Option<String>,
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub record_every: Option<usize>,
    pub grid: Option<usize>,
    pub samples: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("--config: cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("--config: invalid JSON in {}: {e}", path.display())))
    }

    pub fn list_text(value: Option<ListValue>) -> Option<String> {
        value.map(ListValue::into_text)
    }
}

pub fn parse_list(flag: &str, text: &str) -> Result<Vec<f64>, CliError> {
    let values: Result<Vec<f64>, _> = text
        .split(',')
        .map(|t| t.trim())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>())
        .collect();
    match values {
        Ok(v) if !v.is_empty() => Ok(v),
        Ok(_) => Err(CliError::Usage(format!("{flag}: expected a comma-separated list of numbers"))),
        Err(e) => Err(CliError::Usage(format!("{flag}: {e} in {text:?}"))),
    }
}

pub fn positive(flag: &str, value: Option<usize>) -> Result<Option<usize>, CliError> {
    match value {
        Some(0) => Err(CliError::Usage(format!("{flag} must be at least 1, got 0"))),
        v => Ok(v),
    }
}

pub fn required<T>(flag: &str, value: Option<T>) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("{flag} is required")))
}

pub fn existing(flag: &str, path: Option<PathBuf>) -> Result<Option<PathBuf>, CliError> {
    match path {
        Some(p) if !p.is_file() => Err(CliError::Usage(format!("{flag}: no such file {}", p.display()))),
        p => Ok(p),
    }
}
