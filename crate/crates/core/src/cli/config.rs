//! Flat `key = value` configuration files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::CliError;

pub const KEYS: &[&str] = &[
    "model",
    "features",
    "force",
    "scalar",
    "nb_alpha",
    "c",
    "tol",
    "max_iter",
    "sgd_alpha",
    "epochs",
    "sgd_tol",
    "patience",
    "seed",
    "stopwords",
    "lemmas",
    "timestamp",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
    base: PathBuf,
}

impl ConfigFile {
    /// Blank lines and `#` comments are skipped. Keys are case-insensitive,
    /// `-` and `_` are interchangeable, and each key may appear once.
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("config line {}: expected key = value", i + 1))
            })?;
            let key = key.trim().to_ascii_lowercase().replace('-', "_");
            if !KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!(
                    "config line {}: unknown key `{key}`",
                    i + 1
                )));
            }
            if values
                .insert(key.clone(), value.trim().to_string())
                .is_some()
            {
                return Err(CliError::Usage(format!(
                    "config line {}: duplicate key `{key}`",
                    i + 1
                )));
            }
        }
        Ok(ConfigFile {
            values,
            base: base.to_path_buf(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::read(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Usage(format!("config key `{key}`: {e}")))
            })
            .transpose()
    }

    /// Relative paths resolve against the config file's directory.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(|v| self.base.join(v))
    }

    pub fn flag(&self, key: &str) -> Result<bool, CliError> {
        match self.raw(key).map(str::to_ascii_lowercase).as_deref() {
            None | Some("false" | "no" | "0") => Ok(false),
            Some("true" | "yes" | "1") => Ok(true),
            Some(other) => Err(CliError::Usage(format!(
                "config key `{key}`: expected a boolean, got `{other}`"
            ))),
        }
    }
}
