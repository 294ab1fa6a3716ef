//! One TOML file drives every pipeline stage.
//!
//! Every section is optional and falls back to the shipped defaults. Unknown
//! keys are rejected, and the error names the key and its line.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::sha256_hex;
use crate::controllers::{pi_tune_table, MpcConfig, PiParams, PiTuning};
use crate::datagen::{GenerationConfig, SplitFractions};
use crate::error::{Error, Result};
use crate::harness::{BenchmarkConfig, Scenario};
use crate::lstm::{Architecture, TrainConfig};
use crate::plant::PlantParams;

pub const WINDOW_RANGE: std::ops::RangeInclusive<usize> = 2..=12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Past steps fed to the networks (W).
    pub window: usize,
    pub split: SplitFractions,
    pub split_rng_seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            window: 6,
            split: SplitFractions::default(),
            split_rng_seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkbenchConfig {
    pub plant: PlantParams,
    pub generation: GenerationConfig,
    pub dataset: DatasetConfig,
    pub architecture: Architecture,
    pub training: TrainConfig,
    pub scenario: Scenario,
    pub mpc: MpcConfig,
    /// Extra or replacement PI tunings keyed by set-point in µm, e.g. `[pi.240]`.
    pub pi: BTreeMap<String, PiParams>,
    pub benchmark: BenchmarkConfig,
}

impl WorkbenchConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::config(format!("config file {} not found", path.display())),
            _ => Error::Io(e),
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// SHA-256 of the canonical JSON rendering.
    pub fn digest(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes to JSON"))
    }

    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.generation.validate()?;
        if !WINDOW_RANGE.contains(&self.dataset.window) {
            return Err(Error::config(format!(
                "dataset.window must lie in {}..={} (got {})",
                WINDOW_RANGE.start(),
                WINDOW_RANGE.end(),
                self.dataset.window
            )));
        }
        self.dataset.split.validate()?;
        if self.architecture.hidden_sizes.is_empty() || self.architecture.hidden_sizes.contains(&0) {
            return Err(Error::config(
                "architecture.hidden_sizes needs at least one non-zero layer",
            ));
        }
        self.training.validate()?;
        self.scenario.validate()?;
        self.mpc.validate()?;
        self.pi_tuning()?;
        self.benchmark.validate()
    }

    /// Shipped PI table with the `[pi]` entries applied on top.
    pub fn pi_tuning(&self) -> Result<PiTuning> {
        let mut overrides = Vec::with_capacity(self.pi.len());
        for (key, params) in &self.pi {
            let sp: u32 = key
                .parse()
                .map_err(|_| Error::config(format!("pi.{key}: set-point keys must be whole micrometres")))?;
            params.validate().map_err(|e| Error::config(format!("pi.{key}: {e}")))?;
            overrides.push((sp, *params));
        }
        Ok(pi_tune_table().with_overrides(overrides))
    }

    /// Replaces every rng seed with `seed`. Streams stay distinct because each
    /// consumer derives its own sequence from it.
    pub fn reseeded(mut self, seed: u64) -> Self {
        self.generation.rng_seed = seed;
        self.dataset.split_rng_seed = seed;
        self.training.rng_seed = seed;
        self.scenario.rng_seed = seed;
        self.mpc.rng_seed = seed;
        self
    }
}
