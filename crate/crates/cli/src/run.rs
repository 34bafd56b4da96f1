//! Per-command run context and the manifest written next to its outputs.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};

use korse_core::seed;

use crate::error::CliError;
use crate::settings::Settings;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// Every configuration value the command read, defaults included.
    pub config: BTreeMap<String, String>,
    /// SHA-256 of every input file.
    pub inputs: BTreeMap<String, String>,
    /// The top-level seed and each derived stage seed.
    pub seeds: BTreeMap<String, u64>,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
}

pub struct Run<'a> {
    settings: &'a Settings,
    out: PathBuf,
    manifest: RunManifest,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

impl<'a> Run<'a> {
    pub fn new(command: &str, settings: &'a Settings, out: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(out).map_err(|e| CliError::Input(format!("{}: {e}", out.display())))?;
        let mut run = Run {
            settings,
            out: out.to_owned(),
            manifest: RunManifest {
                command: command.to_owned(),
                version: env!("CARGO_PKG_VERSION").to_owned(),
                config: BTreeMap::new(),
                inputs: BTreeMap::new(),
                seeds: BTreeMap::new(),
                outputs: Vec::new(),
            },
        };
        run.seed()?;
        run.get::<usize>("threads")?;
        Ok(run)
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Reads a configuration value and records it in the manifest.
    pub fn get<T>(&mut self, key: &str) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        let v = self.settings.parse(key)?;
        self.manifest
            .config
            .insert(key.to_owned(), self.settings.raw(key).unwrap_or_default());
        Ok(v)
    }

    pub fn settings(&self) -> &Settings {
        self.settings
    }

    pub fn record_config(&mut self, key: String, value: String) {
        self.manifest.config.insert(key, value);
    }

    pub fn seed(&mut self) -> Result<u64, CliError> {
        let s = self.get("seed")?;
        self.manifest.seeds.insert("seed".into(), s);
        Ok(s)
    }

    /// Records the seed derived for `stage`.
    pub fn stage(&mut self, stage: &str) -> Result<u64, CliError> {
        let s = self.seed()?;
        let derived = seed::derive(s, stage);
        self.manifest.seeds.insert(stage.to_owned(), derived);
        Ok(derived)
    }

    /// Checks that `path` exists and records its digest.
    pub fn input(&mut self, path: &Path) -> Result<PathBuf, CliError> {
        if !path.is_file() {
            return Err(CliError::Input(format!(
                "{} does not exist or is not a file",
                path.display()
            )));
        }
        let digest = sha256_file(path)?;
        self.manifest.inputs.insert(path.display().to_string(), digest);
        Ok(path.to_owned())
    }

    /// Records the three record files of a dataset directory.
    pub fn data_dir(&mut self, dir: &Path) -> Result<(), CliError> {
        if !dir.is_dir() {
            return Err(CliError::Input(format!("{} is not a directory", dir.display())));
        }
        for stem in ["comments", "videos", "users"] {
            let found = ["jsonl", "csv"]
                .iter()
                .map(|ext| dir.join(format!("{stem}.{ext}")))
                .find(|p| p.is_file());
            match found {
                Some(p) => {
                    self.input(&p)?;
                }
                None => {
                    return Err(CliError::Input(format!(
                        "{}: no {stem}.jsonl or {stem}.csv",
                        dir.display()
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn write(&mut self, name: &str, body: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let path = self.out.join(name);
        std::fs::write(&path, body).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        self.wrote(name);
        Ok(path)
    }

    /// Records a file written by library code.
    pub fn wrote(&mut self, name: &str) {
        if !self.manifest.outputs.iter().any(|o| o == name) {
            self.manifest.outputs.push(name.to_owned());
        }
    }

    /// Folds another run's record into this one (used by `pipeline`).
    pub fn absorb(&mut self, other: RunManifest) {
        self.manifest.config.extend(other.config);
        self.manifest.inputs.extend(other.inputs);
        self.manifest.seeds.extend(other.seeds);
        for o in other.outputs {
            self.wrote(&o);
        }
        self.wrote(&format!("{}.manifest.json", other.command));
    }

    /// Writes `<command>.manifest.json` and returns the manifest.
    pub fn finish(self) -> Result<RunManifest, CliError> {
        let name = format!("{}.manifest.json", self.manifest.command);
        let path = self.out.join(&name);
        let mut body = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        body.push('\n');
        std::fs::write(&path, body).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Ok(self.manifest)
    }
}
