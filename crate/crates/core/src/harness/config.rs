//! Versioned JSON experiment description. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::eki::EkiConfig;
use crate::graph::LaplacianKind;
use crate::losses::LossSpec;
use crate::models::{ModelSpec, RnnSpec};

use super::HarnessError;

pub const CONFIG_VERSION: u32 = 1;

fn default_epochs() -> usize {
    1
}

fn default_metrics_file() -> PathBuf {
    PathBuf::from("metrics.csv")
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub seed: u64,
    /// Passes over the data (supervised) or EKI iterations (semi-supervised).
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub eki: EkiConfig,
    #[serde(default)]
    pub loss: LossSpec,
    pub task: TaskConfig,
    /// Metrics file name, relative to the output directory.
    #[serde(default = "default_metrics_file")]
    pub metrics_file: PathBuf,
    #[serde(default)]
    pub plots: bool,
    /// Record wall-clock time; disable for byte-identical metric files.
    #[serde(default = "default_true")]
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskConfig {
    Supervised(SupervisedTask),
    SemiSupervised(SsdTask),
    Online(OnlineTask),
}

impl TaskConfig {
    pub fn name(&self) -> &'static str {
        match self {
            TaskConfig::Supervised(_) => "supervised",
            TaskConfig::SemiSupervised(_) => "semi_supervised",
            TaskConfig::Online(_) => "online",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupervisedTask {
    pub data: SupervisedData,
    pub model: ModelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SupervisedData {
    /// IDX image and label files, normalized with training statistics.
    Mnist {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        /// Seeded subsample of the training split.
        #[serde(default)]
        train_subset: Option<usize>,
        #[serde(default)]
        test_subset: Option<usize>,
        /// Expected SHA-256 per file name, checked before parsing.
        #[serde(default)]
        sha256: BTreeMap<String, String>,
    },
    /// Pairs given directly in the config.
    Inline {
        inputs: Vec<Vec<f64>>,
        targets: Vec<Vec<f64>>,
        #[serde(default)]
        test_inputs: Vec<Vec<f64>>,
        #[serde(default)]
        test_targets: Vec<Vec<f64>>,
    },
}

fn default_sigma() -> f64 {
    1.25
}

fn default_alpha() -> f64 {
    1.0
}

fn default_positives() -> usize {
    3
}

fn default_negatives() -> usize {
    2
}

/// Graph-based semi-supervised classification of voting records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsdTask {
    pub records: PathBuf,
    #[serde(default)]
    pub sha256: Option<String>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub tau: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub laplacian: LaplacianKind,
    /// Labeled Democrats (`+1`).
    #[serde(default = "default_positives")]
    pub positives: usize,
    /// Labeled Republicans (`−1`).
    #[serde(default = "default_negatives")]
    pub negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SeriesSource {
    File {
        path: PathBuf,
        #[serde(default)]
        sha256: Option<String>,
    },
    /// `sin(2π t / period)` for `t = 0, …, points − 1`.
    Sine { points: usize, period: f64 },
}

fn default_train_fraction() -> f64 {
    0.8
}

fn default_report_every() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnlineTask {
    pub series: SeriesSource,
    pub model: RnnSpec,
    /// Share of the series used for the online pass; the rest is held out.
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// Steps between metric records; also the rolling-error window.
    #[serde(default = "default_report_every")]
    pub report_every: usize,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: String| Err(HarnessError::Config(m));
        if self.version != CONFIG_VERSION {
            return fail(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            ));
        }
        self.eki.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.loss.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        match &self.task {
            TaskConfig::Online(t) => {
                if !(t.train_fraction > 0.0 && t.train_fraction <= 1.0) {
                    return fail("train_fraction must lie in (0, 1]".into());
                }
                if t.report_every == 0 {
                    return fail("report_every must be positive".into());
                }
            }
            TaskConfig::SemiSupervised(t) if t.positives + t.negatives == 0 => {
                return fail("at least one labeled node is required".into());
            }
            _ => {}
        }
        Ok(())
    }
}
