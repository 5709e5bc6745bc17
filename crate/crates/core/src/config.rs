//! Run configuration: one JSON document with sections `corpus`, `augment`,
//! `split`, `classifier`, `leakage`, and `output`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::MutationConfig;
use crate::classifier::ClassifierConfig;
use crate::corpus::{SchemaMap, SourceFormat};
use crate::metrics::ReportFormat;
use crate::rng::fnv1a64;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Unreadable { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("corpus path {0} does not exist")]
    MissingCorpus(PathBuf),
}

/// Where the input dataset lives and how to read it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSection {
    pub path: PathBuf,
    pub format: Option<SourceFormat>,
    pub schema: SchemaMap,
    /// Closed label set in report order; open (learned, sorted) when absent.
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentSection {
    pub enabled: bool,
    #[serde(flatten)]
    pub mutation: MutationConfig,
}

impl Default for AugmentSection {
    fn default() -> Self {
        Self { enabled: true, mutation: MutationConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSection {
    pub test_fraction: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self { test_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LeakageSection {
    pub window: usize,
    pub threshold: f64,
}

impl Default for LeakageSection {
    fn default() -> Self {
        Self { window: 5, threshold: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub formats: Vec<ReportFormat>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), formats: vec![ReportFormat::Json, ReportFormat::Csv] }
    }
}

/// The full pipeline configuration. All randomness derives from `seed`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub corpus: CorpusSection,
    pub augment: AugmentSection,
    pub split: SplitSection,
    pub classifier: ClassifierConfig,
    pub leakage: LeakageSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Unreadable { path: path.to_path_buf(), source })?;
        let mut config: RunConfig =
            serde_json::from_str(&text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        // Relative corpus paths are resolved against the config file.
        if config.corpus.path.is_relative() {
            if let Some(parent) = path.parent() {
                config.corpus.path = parent.join(&config.corpus.path);
            }
        }
        Ok(config)
    }

    /// Structural checks plus existence of referenced paths.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.corpus.path.exists() {
            return Err(ConfigError::MissingCorpus(self.corpus.path.clone()));
        }
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "split.test_fraction must be in (0, 1), got {}",
                self.split.test_fraction
            )));
        }
        if self.leakage.window == 0 {
            return Err(ConfigError::Invalid("leakage.window must be >= 1".to_string()));
        }
        if !(self.leakage.threshold > 0.0 && self.leakage.threshold <= 1.0) {
            return Err(ConfigError::Invalid(format!(
                "leakage.threshold must be in (0, 1], got {}",
                self.leakage.threshold
            )));
        }
        self.augment
            .mutation
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.classifier
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// FNV-1a-64 hex digest of the canonical JSON form, embedded in
    /// artifacts for reproducibility audits. The output section is excluded:
    /// where artifacts land does not change what the run computes.
    pub fn digest(&self) -> String {
        let mut canon = self.clone();
        canon.output = OutputSection::default();
        let bytes = serde_json::to_vec(&canon).expect("config serialization cannot fail");
        format!("{:016x}", fnv1a64(&bytes))
    }
}
