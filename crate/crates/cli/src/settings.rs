//! Flat `key = value` configuration files. Flags given on the command line
//! win over file values, which win over built-in defaults.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::fail::Failure;

/// Every key any subcommand understands. A file may hold keys for several
/// subcommands; each one reads what applies to it.
pub const KEYS: &[&str] = &[
    "pairs",
    "seed",
    "out",
    "resolution",
    "length",
    "corpus",
    "checkpoint",
    "resume",
    "input",
    "epochs",
    "batch_size",
    "lr",
    "weight_decay",
    "eval_every",
    "eval_k",
    "class_balance",
    "group_pairs",
    "level",
    "families",
    "branches",
    "frames",
    "patch",
    "embed_dim",
    "heads",
    "st_blocks",
    "mg_channels",
    "mlp_hidden",
    "protocol",
    "max_segment",
    "alpha",
    "iters",
];

#[derive(Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Failure::usage(format!("config line {}: expected key = value, got {raw:?}", i + 1)));
            };
            let key = k.trim().replace('-', "_");
            if !KEYS.contains(&key.as_str()) {
                return Err(Failure::usage(format!("config line {}: unknown key {:?}", i + 1, k.trim())));
            }
            if values.insert(key, v.trim().to_string()).is_some() {
                return Err(Failure::usage(format!("config line {}: key {:?} given twice", i + 1, k.trim())));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::input(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The flag if given, else the file value.
    pub fn get<T>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, Failure>
    where
        T: FromStr,
        T::Err: Display,
    {
        debug_assert!(KEYS.contains(&key), "unregistered key {key}");
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e| Failure::usage(format!("config key {key} = {v:?}: {e}"))),
        }
    }

    pub fn or<T>(&self, key: &str, flag: Option<T>, default: T) -> Result<T, Failure>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.get(key, flag)?.unwrap_or(default))
    }

    pub fn require<T>(&self, key: &str, flag: Option<T>) -> Result<T, Failure>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.get(key, flag)?.ok_or_else(|| {
            Failure::usage(format!("missing --{} (or `{key} = ...` in the config file)", key.replace('_', "-")))
        })
    }
}
