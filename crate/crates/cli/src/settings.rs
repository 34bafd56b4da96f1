//! Flat `key=value` configuration with command-line overrides.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

/// Every recognised key with its default and a one-line description.
/// `synth.<field>` keys are accepted in addition and passed to the generator.
pub const KEYS: &[(&str, &str, &str)] = &[
    (
        "seed",
        "0",
        "top-level seed; every random stage derives its own seed from it",
    ),
    ("threads", "1", "worker threads for parallel stages"),
    ("collusive_only", "true", "build the network from collusive videos only"),
    (
        "core_mode",
        "weighted",
        "coreness mode for `kcore` (weighted|unweighted)",
    ),
    ("beta", "1", "density exponent of the core index"),
    ("k_const", "1", "proportionality constant of the core index"),
    (
        "sweep_betas",
        "0.5,2",
        "extra exponents whose sweep curves `korse` also writes",
    ),
    (
        "breakage_step",
        "0.05",
        "fraction of nodes removed between breakage checkpoints",
    ),
    ("embedding_dim", "768", "dimension of the built-in stub text embedder"),
    (
        "sfe_cap",
        "200",
        "most recent comments kept per set for similarity features",
    ),
    ("epochs", "300", "classifier training epochs"),
    ("learning_rate", "0.01", "SGD learning rate"),
    ("momentum", "0.9", "SGD momentum"),
    ("batch_size", "32", "mini-batch size"),
    (
        "class_weighted",
        "false",
        "weight training examples inversely to class frequency",
    ),
    ("eval_mode", "balanced", "evaluation protocol (balanced|complete)"),
    ("folds", "10", "cross-validation folds"),
];

pub const SYNTH_PREFIX: &str = "synth.";

fn is_known(key: &str) -> bool {
    key.starts_with(SYNTH_PREFIX) || KEYS.iter().any(|(k, _, _)| *k == key)
}

fn default_of(key: &str) -> Option<&'static str> {
    KEYS.iter().find(|(k, _, _)| *k == key).map(|(_, d, _)| *d)
}

#[derive(Clone, Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    /// Reads the optional config file, then applies `KEY=VALUE` overrides.
    pub fn load(config: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut s = Settings::default();
        if let Some(path) = config {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    CliError::Usage(format!(
                        "{}:{}: expected key=value, got {line:?}",
                        path.display(),
                        i + 1
                    ))
                })?;
                s.set(k.trim(), v.trim())
                    .map_err(|e| CliError::Usage(format!("{}:{}: {e}", path.display(), i + 1)))?;
            }
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {o:?}")))?;
            s.set(k.trim(), v.trim())?;
        }
        Ok(s)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> Result<(), CliError> {
        if !is_known(key) {
            return Err(CliError::Usage(format!("unknown configuration key {key:?}")));
        }
        self.values.insert(key.to_owned(), value.to_string());
        Ok(())
    }

    /// Raw value of `key`, falling back to its default.
    pub fn raw(&self, key: &str) -> Option<String> {
        self.values
            .get(key)
            .cloned()
            .or_else(|| default_of(key).map(str::to_owned))
    }

    pub fn parse<T>(&self, key: &str) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        let raw = self
            .raw(key)
            .ok_or_else(|| CliError::Usage(format!("no value for {key:?}")))?;
        raw.parse()
            .map_err(|e| CliError::Usage(format!("bad value {raw:?} for {key}: {e}")))
    }

    /// Explicitly set `synth.*` entries with the prefix stripped.
    pub fn synth_entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(SYNTH_PREFIX).map(|f| (f, v.as_str())))
    }
}
