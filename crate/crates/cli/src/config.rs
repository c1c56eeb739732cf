//! Layering of config-file values under command-line flags.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::CliError;

/// Parsed TOML config. Keys at the top level apply to every subcommand; a
/// table named after the subcommand overrides them.
#[derive(Debug, Default)]
pub struct ConfigFile {
    root: toml::Table,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let root = text
            .parse::<toml::Table>()
            .map_err(|e| CliError::usage(format!("cannot parse config {}: {e}", path.display())))?;
        Ok(Self { root })
    }

    fn section(&self, command: &str) -> Value {
        let mut merged = serde_json::Map::new();
        for (key, value) in &self.root {
            if !value.is_table() {
                merged.insert(key.replace('_', "-"), to_json(value));
            }
        }
        if let Some(toml::Value::Table(table)) = self.root.get(command) {
            for (key, value) in table {
                merged.insert(key.replace('_', "-"), to_json(value));
            }
        }
        Value::Object(merged)
    }

    /// Flags that were given win over config values; config values fill the
    /// rest.
    pub fn layer<T: Serialize + DeserializeOwned>(&self, command: &str, flags: &T) -> Result<T, CliError> {
        let Value::Object(mut base) = self.section(command) else {
            unreachable!("section is always an object")
        };
        let flags = serde_json::to_value(flags).map_err(|e| CliError::usage(e.to_string()))?;
        if let Value::Object(given) = flags {
            for (key, value) in given {
                if !value.is_null() {
                    base.insert(key, value);
                }
            }
        }
        serde_json::from_value(Value::Object(base))
            .map_err(|e| CliError::usage(format!("invalid config for {command}: {e}")))
    }
}

fn to_json(value: &toml::Value) -> Value {
    serde_json::to_value(value).unwrap_or(Value::Null)
}
