use std::fs;
use std::path::{Path, PathBuf};

use lstmc_core::config::WorkbenchConfig;
use lstmc_core::container::sha256_hex;
use lstmc_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DEFAULT_CONFIG: &str = "workbench.toml";

/// `configs/`, `datasets/`, `models/`, `runs/` and `reports/` under one root.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn configs(&self) -> PathBuf {
        self.root.join("configs")
    }

    pub fn datasets(&self) -> PathBuf {
        self.root.join("datasets")
    }

    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn runs(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn default_config(&self) -> PathBuf {
        self.configs().join(DEFAULT_CONFIG)
    }

    pub fn default_dataset(&self) -> PathBuf {
        self.datasets().join("desk")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    /// False for files that embed wall-clock timings.
    pub deterministic: bool,
}

impl Artifact {
    pub fn of(path: &Path, deterministic: bool) -> Result<Self> {
        Ok(Self {
            path: path.display().to_string(),
            sha256: sha256_hex(&fs::read(path)?),
            deterministic,
        })
    }
}

/// Provenance record written next to every artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub code_version: String,
    pub config_digest: String,
    /// Fully resolved, including any `--seed` override.
    pub config: WorkbenchConfig,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    #[serde(default)]
    pub details: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, config: &WorkbenchConfig) -> Self {
        Self {
            command: command.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest: config.digest(),
            config: config.clone(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            details: serde_json::Value::Null,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Reads a TOML config, or the resolved config embedded in a manifest
/// (`.json`), so any artifact can be regenerated from its manifest.
pub fn load_config(path: &Path) -> Result<WorkbenchConfig> {
    if !path.exists() {
        return Err(Error::MissingArtifact {
            path: path.display().to_string(),
            producer: "lstmc init".into(),
        });
    }
    if path.extension().is_some_and(|e| e == "json") {
        let cfg = Manifest::read(path)?.config;
        cfg.validate()?;
        Ok(cfg)
    } else {
        WorkbenchConfig::load(path)
    }
}

/// Fails with the subcommand that produces `path` when it is missing.
pub fn require(path: &Path, producer: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact {
            path: path.display().to_string(),
            producer: producer.to_string(),
        })
    }
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path)?;
    Ok(())
}
