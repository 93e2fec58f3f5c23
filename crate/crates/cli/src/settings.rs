//! Layered key=value settings: defaults < config file < command-line flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

#[derive(Clone, Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

/// `snake_case` and `kebab-case` spell the same key.
fn normalize(key: &str) -> String {
    key.trim().replace('_', "-")
}

impl Settings {
    /// Flat `key = value` lines; `#` starts a comment.
    fn parse_flat(text: &str, path: &Path) -> Result<Self, CliError> {
        let mut s = Settings::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("{}:{}: expected key=value, got '{raw}'", path.display(), n + 1))
            })?;
            s.set(k, v.trim());
        }
        Ok(s)
    }

    /// A manifest written by an earlier run (its `settings` object), or a
    /// flat key=value file.
    pub fn from_config(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
        if text.trim_start().starts_with('{') {
            let v: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            let obj = v
                .get("settings")
                .and_then(|s| s.as_object())
                .ok_or_else(|| CliError::Usage(format!("{}: no 'settings' object", path.display())))?;
            let mut s = Settings::default();
            for (k, v) in obj {
                let v = v
                    .as_str()
                    .ok_or_else(|| CliError::Usage(format!("{}: setting '{k}' is not a string", path.display())))?;
                s.set(k, v);
            }
            return Ok(s);
        }
        Self::parse_flat(&text, path)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(normalize(key), value.into());
    }

    pub fn set_opt<T: ToString>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.set(key, v.to_string());
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(&normalize(key)).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| CliError::Usage(format!("invalid value '{v}' for '{key}'")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.values
    }
}

/// Comma-separated floats.
pub fn parse_floats(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("invalid number '{v}' in '{s}'")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn later_layers_win() {
        let mut s = Settings::default();
        s.set("max_iters", "10");
        s.set_opt("max-iters", Some(20));
        s.set_opt::<u32>("eta", None);
        assert_eq!(s.get_or::<usize>("max_iters", 0).unwrap(), 20);
        assert_eq!(s.get_or("eta", 0.5).unwrap(), 0.5);
        assert!(s.get::<f64>("max-iters").is_ok());
        s.set("eta", "fast");
        assert!(matches!(s.get::<f64>("eta"), Err(CliError::Usage(_))));
    }

    #[test]
    fn flat_file_with_comments() {
        let s = Settings::parse_flat("# toy run\nmax_iters = 5 # short\n\nmethod=cesp\n", Path::new("x")).unwrap();
        assert_eq!(s.raw("max-iters"), Some("5"));
        assert_eq!(s.raw("method"), Some("cesp"));
        assert!(Settings::parse_flat("eta 0.1", Path::new("x")).is_err());
    }

    #[test]
    fn floats() {
        assert_eq!(parse_floats("-3, -1").unwrap(), vec![-3.0, -1.0]);
        assert!(parse_floats("1,,2").is_err());
    }
}
