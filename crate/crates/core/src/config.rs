//! Run configuration (TOML). Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::{FeatureSpec, DEFAULT_EMBED_DIM};
use crate::generation::HttpConfig;
use crate::policy::{PolicyError, TrainConfig};
use crate::slo::{builtin_profiles, SloError, SloProfile};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Slo(#[from] SloError),
    #[error(transparent)]
    Train(#[from] PolicyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Sim,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub http: HttpConfig,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self { kind: BackendKind::Sim, http: HttpConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub sample_size: usize,
    pub seed: u64,
    pub max_fail_fraction: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { sample_size: 200, seed: 13, max_fail_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    /// When absent, sized to give 200 eval questions (or half the log when
    /// fewer than 400 questions are logged).
    pub eval_fraction: Option<f64>,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { eval_fraction: None, seed: 17 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub embed_dim: usize,
    pub backend: BackendConfig,
    pub sweep: SweepConfig,
    pub split: SplitConfig,
    pub train: TrainConfig,
    /// Profiles overriding the built-ins by name, or adding new ones.
    pub slo: Vec<SloProfile>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            output_dir: PathBuf::from("out"),
            embed_dim: DEFAULT_EMBED_DIM,
            backend: BackendConfig::default(),
            sweep: SweepConfig::default(),
            split: SplitConfig::default(),
            train: TrainConfig::default(),
            slo: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig =
            toml::from_str(s).map_err(|e| ConfigError::Parse { path: origin.to_string(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let s = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&s, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.embed_dim == 0 {
            return Err(ConfigError::Invalid("embed_dim must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.sweep.max_fail_fraction) {
            return Err(ConfigError::Invalid("sweep.max_fail_fraction must lie in [0, 1]".into()));
        }
        if let Some(f) = self.split.eval_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(ConfigError::Invalid(format!("split.eval_fraction {f} must lie in (0, 1)")));
            }
        }
        if self.backend.http.max_in_flight == 0 {
            return Err(ConfigError::Invalid("backend.http.max_in_flight must be >= 1".into()));
        }
        self.train.validate()?;
        builtin_profiles(&self.slo)?;
        Ok(())
    }

    pub fn profiles(&self) -> Result<Vec<SloProfile>, ConfigError> {
        Ok(builtin_profiles(&self.slo)?)
    }

    pub fn feature_spec(&self) -> FeatureSpec {
        FeatureSpec::new(self.embed_dim)
    }

    /// SHA-256 over the canonical JSON form of the config. Filesystem locations
    /// are left out so the same experiment hashes identically wherever it runs;
    /// corpus content is tracked separately by its own hash.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.corpus = None;
        canonical.output_dir = PathBuf::new();
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
