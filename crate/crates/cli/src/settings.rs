//! Value resolution: command-line flag, then config file, then default.
//!
//! The config file holds `key = value` lines; `#` starts a comment. A key may
//! be scoped to one command as `command.key`, which wins over the bare key.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;
use std::sync::Mutex;

use crate::error::{CliError, CliResult};

pub const SEED_ENV: &str = "TRIBEKIT_SEED";

#[derive(Debug, Default)]
pub struct Settings {
    command: String,
    values: BTreeMap<String, String>,
    used: Mutex<BTreeSet<String>>,
}

impl Settings {
    pub fn load(path: Option<&Path>, command: &str) -> CliResult<Self> {
        let values = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", p.display())))?;
                parse(&text).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?
            }
            None => BTreeMap::new(),
        };
        Ok(Settings { command: command.to_owned(), values, used: Mutex::default() })
    }

    fn lookup(&self, key: &str) -> Option<(String, &str)> {
        let scoped = format!("{}.{key}", self.command);
        let hit = [scoped, key.to_owned()].into_iter().find(|k| self.values.contains_key(k))?;
        self.used.lock().expect("settings lock").insert(hit.clone());
        let v = self.values[&hit].as_str();
        Some((hit, v))
    }

    /// The flag if given, else the parsed config entry.
    pub fn get<T>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.lookup(key) {
            Some((k, v)) => v.parse().map(Some).map_err(|e| CliError::usage(format!("config key {k}: {e}"))),
            None => Ok(None),
        }
    }

    pub fn or<T>(&self, flag: Option<T>, key: &str, default: T) -> CliResult<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.get(flag, key)?.unwrap_or(default))
    }

    pub fn require<T>(&self, flag: Option<T>, key: &str) -> CliResult<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.get(flag, key)?.ok_or_else(|| CliError::usage(format!("--{key} is required")))
    }

    /// Flag, then config, then `TRIBEKIT_SEED`, then 0.
    pub fn seed(&self, flag: Option<u64>) -> CliResult<u64> {
        if let Some(s) = self.get(flag, "seed")? {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v.trim().parse().map_err(|e| CliError::usage(format!("{SEED_ENV}={v:?}: {e}"))),
            Err(_) => Ok(0),
        }
    }

    /// Keys scoped to this command that it never consulted.
    pub fn unused(&self) -> Vec<String> {
        let used = self.used.lock().expect("settings lock");
        let prefix = format!("{}.", self.command);
        self.values.keys().filter(|k| k.starts_with(&prefix) && !used.contains(*k)).cloned().collect()
    }
}

fn parse(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected key = value", i + 1))?;
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            return Err(format!("line {}: empty key", i + 1));
        }
        out.insert(key, v.trim().to_owned());
    }
    Ok(out)
}

/// Comma-separated list flag value.
#[derive(Clone, Debug, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| p.parse().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(List)
    }
}
