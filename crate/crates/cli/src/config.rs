//! Run configuration read from TOML, with command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use gbdl::data::GenConfig;
use gbdl::train::{TrainConfig, DEFAULT_PATCH};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Where `gen-data` writes and every later stage reads the dataset.
    pub data_dir: PathBuf,
    /// Checkpoints, logs, pseudo-labels, predictions and reports.
    pub run_dir: PathBuf,
    pub data: GenConfig,
    pub train: TrainConfig,
    pub eval: EvalOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            run_dir: PathBuf::from("run"),
            data: GenConfig::default(),
            train: TrainConfig::default(),
            eval: EvalOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    /// PAvPU patch edge in voxels.
    pub patch: usize,
    /// Entropy threshold in bits; the mean test entropy when absent.
    pub threshold: Option<f64>,
    /// Pass counts timed by `bench-passes`.
    pub bench_passes: Vec<usize>,
    /// Timing repeats per pass count; the fastest is kept.
    pub bench_repeats: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            patch: DEFAULT_PATCH,
            threshold: None,
            bench_passes: vec![1, 2, 4, 8, 16],
            bench_repeats: 3,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1);
            let msg = e.message().trim().replace('\n', " ");
            CliError::Config(match line {
                Some(l) => format!("{origin}:{l}: {msg}"),
                None => format!("{origin}: {msg}"),
            })
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Sets the seed of every RNG stream.
    pub fn set_seed(&mut self, seed: u64) {
        self.data.seed = seed;
        self.train.seed = seed;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let e = &self.eval;
        if e.patch == 0 {
            return Err(CliError::Config("eval.patch must be at least 1".into()));
        }
        if e.bench_passes.is_empty() || e.bench_passes.contains(&0) {
            return Err(CliError::Config("eval.bench_passes must be non-empty and positive".into()));
        }
        if e.bench_repeats == 0 {
            return Err(CliError::Config("eval.bench_repeats must be at least 1".into()));
        }
        if let Some(t) = e.threshold {
            if !(t >= 0.0) {
                return Err(CliError::Config(format!("eval.threshold must be non-negative, got {t}")));
            }
        }
        Ok(())
    }
}
