use std::fs;
use std::path::{Path, PathBuf};

use deadtime_core::model::MAX_BINS;
use deadtime_core::montecarlo::DEFAULT_BURN_IN;
use deadtime_core::spectral::{DEFAULT_MIXING_EPSILON, DEFAULT_STATIONARY_MAX_ITERS, DEFAULT_STATIONARY_TOL};
use deadtime_core::SystemParams;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Evenly spaced values from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Range {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count)
            .map(|k| {
                if k + 1 == self.count {
                    self.max
                } else {
                    self.min + k as f64 * step
                }
            })
            .collect()
    }

    fn validate(&self, name: &str) -> Result<(), CliError> {
        if self.count < 1 {
            return Err(CliError::Config(format!("sweep.{name}.count must be at least 1")));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min >= 0.0 && self.min <= self.max) {
            return Err(CliError::Config(format!(
                "sweep.{name} needs finite 0 <= min <= max (got {}..{})",
                self.min, self.max
            )));
        }
        Ok(())
    }
}

/// Grid over signal and background levels; an absent axis stays at the
/// value in `params`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweep {
    #[serde(rename = "S")]
    pub signal: Option<Range>,
    #[serde(rename = "B")]
    pub background: Option<Range>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub runs: usize,
    pub cycles: u64,
    pub seed: u64,
    pub burn_in: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            runs: 25,
            cycles: 50_000,
            seed: 0,
            burn_in: DEFAULT_BURN_IN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralConfig {
    pub epsilon: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_MIXING_EPSILON,
            tol: DEFAULT_STATIONARY_TOL,
            max_iters: DEFAULT_STATIONARY_MAX_ITERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub repetitions: usize,
    /// Largest size at which the per-element baseline is timed.
    pub baseline_max_n_b: usize,
    /// Minimum duration of one timed sample; short builds are repeated
    /// inside a sample until they reach it.
    pub min_sample_ms: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![32, 64, 128, 256, 512, 1024],
            repetitions: 5,
            baseline_max_n_b: 1024,
            min_sample_ms: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub params: SystemParams,
    pub sweep: Option<Sweep>,
    pub mc: McConfig,
    pub spectral: SpectralConfig,
    pub output: OutputConfig,
    pub bench: BenchConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.params
            .validate()
            .map_err(|e| CliError::Config(format!("params: {e}")))?;
        if let Some(sweep) = &self.sweep {
            if let Some(r) = &sweep.signal {
                r.validate("S")?;
            }
            if let Some(r) = &sweep.background {
                r.validate("B")?;
            }
        }
        if self.mc.runs == 0 || self.mc.cycles == 0 {
            return Err(CliError::Config("mc.runs and mc.cycles must be at least 1".into()));
        }
        if !(self.spectral.epsilon > 0.0) || !(self.spectral.tol > 0.0) || self.spectral.max_iters == 0 {
            return Err(CliError::Config(
                "spectral.epsilon, spectral.tol and spectral.max_iters must be positive".into(),
            ));
        }
        let b = &self.bench;
        if b.sizes.is_empty() || b.sizes.iter().any(|&n| !(2..=MAX_BINS).contains(&n)) {
            return Err(CliError::Config(format!(
                "bench.sizes must be non-empty, each in [2, {MAX_BINS}]"
            )));
        }
        if b.repetitions == 0 || !(b.min_sample_ms >= 0.0) {
            return Err(CliError::Config(
                "bench.repetitions must be at least 1 and bench.min_sample_ms non-negative".into(),
            ));
        }
        Ok(())
    }

    /// `(S, B)` cells of the sweep in row-major order (S outer).
    pub fn cells(&self) -> Vec<(f64, f64)> {
        let sweep = self.sweep.unwrap_or_default();
        let s = sweep.signal.map_or(vec![self.params.signal], |r| r.values());
        let b = sweep.background.map_or(vec![self.params.background], |r| r.values());
        s.iter().flat_map(|&s| b.iter().map(move |&b| (s, b))).collect()
    }
}
