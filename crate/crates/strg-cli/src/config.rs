//! Flat key-value run configuration: `key = value` lines, `#` comments,
//! environment overrides via `STRG_`-prefixed variables.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use strg::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct Config {
    map: BTreeMap<String, String>,
}

/// Environment prefix for overrides. Double underscores in the variable
/// name map to dots in the key: `STRG_DATASET__A__TRAJ` overrides
/// `dataset.a.traj`.
pub const ENV_PREFIX: &str = "STRG_";

impl Config {
    pub fn parse(text: &str, origin: &str) -> Result<Config> {
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Format(format!(
                    "{}:{}: expected 'key = value', got '{}'",
                    origin,
                    lineno + 1,
                    line
                )));
            };
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::Format(format!("{}:{}: empty key", origin, lineno + 1)));
            }
            map.insert(key, value.trim().to_string());
        }
        Ok(Config { map })
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        let mut cfg = Config::parse(&text, &path.display().to_string())?;
        cfg.apply_env_overrides();
        Ok(cfg)
    }

    pub fn apply_env_overrides(&mut self) {
        for (var, value) in std::env::vars() {
            if let Some(rest) = var.strip_prefix(ENV_PREFIX) {
                let key = rest.to_ascii_lowercase().replace("__", ".");
                self.map.insert(key, value);
            }
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    pub fn get_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.get(key).unwrap_or(default)
    }

    pub fn get_f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Usage(format!("config key '{}': '{}' is not a number", key, v))),
        }
    }

    pub fn get_usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                Error::Usage(format!("config key '{}': '{}' is not a count", key, v))
            }),
        }
    }

    pub fn get_u64(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                Error::Usage(format!("config key '{}': '{}' is not an integer", key, v))
            }),
        }
    }

    /// Names declared via `dataset.<name>.traj` keys, sorted.
    pub fn dataset_names(&self) -> Vec<String> {
        self.map
            .keys()
            .filter_map(|k| {
                k.strip_prefix("dataset.")
                    .and_then(|rest| rest.strip_suffix(".traj"))
                    .map(str::to_string)
            })
            .collect()
    }

    pub fn dataset_traj(&self, name: &str) -> Result<PathBuf> {
        self.get(&format!("dataset.{}.traj", name))
            .map(PathBuf::from)
            .ok_or_else(|| Error::Usage(format!("config declares no dataset named '{}'", name)))
    }

    pub fn dataset_scene(&self, name: &str) -> Option<PathBuf> {
        self.get(&format!("dataset.{}.scene", name)).map(PathBuf::from)
    }

    /// Deterministic `key = value` snapshot of the effective config.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.map {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}
