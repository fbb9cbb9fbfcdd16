//! Training run configuration: built-in defaults, then a `key=value` file,
//! then command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fragnet::arch::ArchKind;
use fragnet::optim::{LrSchedule, TrainPlan};
use fragnet::FragError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn parse(s: &str) -> Result<Self, FragError> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            _ => Err(FragError::Config(format!("unknown precision {s:?} (f32|f64)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub arch: ArchKind,
    pub q: usize,
    /// Inferred from the manifests when absent.
    pub writers: Option<usize>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub plan: TrainPlan,
    pub out: PathBuf,
    pub threads: usize,
    pub precision: Precision,
}

impl RunConfig {
    pub fn defaults(out: PathBuf) -> Self {
        RunConfig {
            arch: ArchKind::FragNet,
            q: 64,
            writers: None,
            train: None,
            test: None,
            plan: TrainPlan::default(),
            out,
            threads: 1,
            precision: Precision::F32,
        }
    }

    /// Applies one setting; keys use the long flag names with `_` or `-`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), FragError> {
        let num = |v: &str| {
            v.parse::<u64>()
                .map_err(|_| FragError::Config(format!("{key} expects a non-negative integer, got {v:?}")))
        };
        match key.replace('-', "_").as_str() {
            "arch" => self.arch = ArchKind::parse(value)?,
            "q" => self.q = num(value)? as usize,
            "writers" => self.writers = Some(num(value)? as usize),
            "train" => self.train = Some(PathBuf::from(value)),
            "test" => self.test = Some(PathBuf::from(value)),
            "epochs" => self.plan.epochs = num(value)? as usize,
            "batch_size" => self.plan.batch_size = num(value)? as usize,
            "lr_schedule" => self.plan.schedule = LrSchedule::parse(value)?,
            "seed" => self.plan.seed = num(value)?,
            "checkpoint_every" => self.plan.checkpoint_every = num(value)? as usize,
            "out" => self.out = PathBuf::from(value),
            "threads" => self.threads = num(value)? as usize,
            "precision" => self.precision = Precision::parse(value)?,
            other => return Err(FragError::Config(format!("unknown setting {other:?}"))),
        }
        Ok(())
    }

    /// Applies a config file. Relative paths inside it are taken relative
    /// to the file.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FragError::Io {
                path: path.to_path_buf(),
                source: e,
            })
            .context("reading config file")?;
        let base = path.parent().unwrap_or(Path::new(""));
        for (key, value) in parse_settings(&text, path)? {
            let value = match key.as_str() {
                "train" | "test" | "out" if Path::new(&value).is_relative() => {
                    base.join(&value).to_string_lossy().into_owned()
                }
                _ => value,
            };
            self.set(&key, &value)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), FragError> {
        if self.arch == ArchKind::FragNet && !fragnet::arch::FRAGMENT_SIZES.contains(&self.q) {
            return Err(FragError::Config(format!("q must be one of 16, 32, 64, got {}", self.q)));
        }
        if self.threads == 0 {
            return Err(FragError::Config("threads must be at least 1".into()));
        }
        if let Some(m) = self.writers {
            if m < 2 {
                return Err(FragError::Config(format!("need at least 2 writers, got {m}")));
            }
        }
        self.plan.validate()
    }
}

/// `key=value` lines; blank lines and `#` comments are ignored.
pub fn parse_settings(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(FragError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "expected key=value".into(),
            }
            .into());
        };
        let key = k.trim().replace('-', "_");
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            bail!(FragError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("{key} set twice"),
            });
        }
    }
    Ok(out)
}
