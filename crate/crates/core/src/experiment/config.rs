use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::enrich::{mock_backend, Backend, BackendRef, Hyperparameters, MockBehavior, Strategy};
use crate::error::{Error, Result};
use crate::eval::DEFAULT_OPERATING_CONFIDENCE;

pub const DEFAULT_FRACTIONS: [f64; 6] = [0.1, 0.2, 0.4, 0.6, 0.8, 1.0];
pub const DEFAULT_JOINT_CAP: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Single,
    CrossDatasetMatrix,
    JointTraining,
    DataFraction,
    Enrichment,
    Incremental,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BackendConfig {
    Command(BackendRef),
    /// In-process mock; see [`MockBehavior`].
    Mock { behavior: MockBehavior },
}

impl BackendConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            BackendConfig::Command(b) => b.validate(),
            BackendConfig::Mock { behavior } => behavior.validate(),
        }
    }

    pub fn instantiate(&self) -> Box<dyn Backend> {
        match self {
            BackendConfig::Command(b) => Box::new(b.clone()),
            BackendConfig::Mock { behavior } => Box::new(mock_backend(behavior.clone())),
        }
    }
}

/// One experiment family run over named datasets.
///
/// Relative paths are resolved against the config file's directory by
/// [`ExperimentConfig::load`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Dataset name to manifest path.
    pub datasets: BTreeMap<String, PathBuf>,
    pub backend: BackendConfig,
    #[serde(default)]
    pub hyperparameters: Hyperparameters,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    /// train/val/test ratios applied to every dataset.
    #[serde(default = "default_split_ratios")]
    pub split_ratios: Vec<f64>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_operating_confidence")]
    pub operating_confidence: f64,
    #[serde(default = "default_pretrained")]
    pub pretrained: String,
    /// Dataset trained and tested on by `single`, `data_fraction`,
    /// `enrichment` and `incremental`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fractions: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_cap: Option<usize>,
    /// Manifest of unlabeled frames for `enrichment` and `incremental`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unlabeled: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategies: Option<Vec<Strategy>>,
    /// Strategy used by `incremental`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub increments: Option<Vec<usize>>,
    #[serde(default = "default_threshold")]
    pub confidence_threshold: f64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub include_empty_auto: bool,
}

fn default_split_ratios() -> Vec<f64> {
    vec![0.7, 0.1, 0.2]
}
fn default_workers() -> usize {
    1
}
fn default_operating_confidence() -> f64 {
    DEFAULT_OPERATING_CONFIDENCE
}
fn default_pretrained() -> String {
    "coco-pretrained".into()
}
fn default_threshold() -> f64 {
    0.5
}
fn default_folds() -> usize {
    5
}

impl ExperimentConfig {
    /// Minimal config of `kind`; kind-specific fields still need filling in.
    pub fn new(kind: ExperimentKind, backend: BackendConfig, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            kind,
            datasets: BTreeMap::new(),
            backend,
            hyperparameters: Hyperparameters::default(),
            seed: 0,
            output_dir: output_dir.into(),
            split_ratios: default_split_ratios(),
            workers: default_workers(),
            operating_confidence: default_operating_confidence(),
            pretrained: default_pretrained(),
            target: None,
            fractions: None,
            joint_cap: None,
            unlabeled: None,
            strategies: None,
            strategy: None,
            increments: None,
            confidence_threshold: default_threshold(),
            folds: default_folds(),
            include_empty_auto: false,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::dataset::write_json(path, self)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.datasets.values_mut().for_each(fix);
        fix(&mut self.output_dir);
        if let Some(u) = self.unlabeled.as_mut() {
            fix(u);
        }
        match &mut self.backend {
            BackendConfig::Command(b) => fix(&mut b.workdir),
            BackendConfig::Mock { behavior: MockBehavior::FixedFile { path } } => fix(path),
            BackendConfig::Mock { .. } => {}
        }
    }

    pub fn fractions(&self) -> Vec<f64> {
        self.fractions.clone().unwrap_or_else(|| DEFAULT_FRACTIONS.to_vec())
    }

    pub fn strategies(&self) -> Vec<Strategy> {
        self.strategies
            .clone()
            .unwrap_or_else(|| vec![Strategy::Baseline, Strategy::Comprehensive, Strategy::Progressive])
    }

    pub fn joint_cap(&self) -> usize {
        self.joint_cap.unwrap_or(DEFAULT_JOINT_CAP)
    }

    /// The `target` dataset name, required by some kinds.
    pub fn target_name(&self) -> Result<&str> {
        let t = self
            .target
            .as_deref()
            .ok_or_else(|| Error::Config(format!("{:?} experiments need a target dataset", self.kind)))?;
        if !self.datasets.contains_key(t) {
            return Err(Error::Config(format!("target {t} is not among the datasets")));
        }
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.datasets.is_empty() {
            return cfg("no datasets configured".into());
        }
        for (name, path) in &self.datasets {
            if !path.is_file() {
                return cfg(format!("manifest of {name} not found at {}", path.display()));
            }
        }
        self.backend.validate()?;
        self.hyperparameters.validate()?;
        if self.workers == 0 {
            return cfg("workers must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.operating_confidence) {
            return cfg("operating_confidence must lie in [0, 1]".into());
        }
        let uses_splits = matches!(
            self.kind,
            ExperimentKind::Single
                | ExperimentKind::CrossDatasetMatrix
                | ExperimentKind::JointTraining
                | ExperimentKind::DataFraction
        );
        if uses_splits {
            if self.split_ratios.len() != 3 {
                return cfg("split_ratios must give train, val and test ratios".into());
            }
            crate::ops::SplitSpec::new(&self.split_ratios, &["train", "val", "test"], self.seed).validate()?;
        }
        match self.kind {
            ExperimentKind::Single => {
                self.target_name()?;
            }
            ExperimentKind::CrossDatasetMatrix | ExperimentKind::JointTraining => {}
            ExperimentKind::DataFraction => {
                self.target_name()?;
                if self.datasets.len() < 2 {
                    return cfg("data_fraction needs the target and at least one other dataset".into());
                }
                let fr = self.fractions();
                if fr.is_empty() || fr.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
                    return cfg("fractions must be a non-empty list of values in (0, 1]".into());
                }
            }
            ExperimentKind::Enrichment | ExperimentKind::Incremental => {
                self.target_name()?;
                let u = self
                    .unlabeled
                    .as_ref()
                    .ok_or_else(|| Error::Config(format!("{:?} needs an unlabeled manifest", self.kind)))?;
                if !u.is_file() {
                    return cfg(format!("unlabeled manifest not found at {}", u.display()));
                }
                self.enrichment_config(self.strategy.unwrap_or(Strategy::Comprehensive)).validate()?;
                if self.kind == ExperimentKind::Enrichment && self.strategies().is_empty() {
                    return cfg("strategies must not be empty".into());
                }
                if self.kind == ExperimentKind::Incremental {
                    if self.strategy == Some(Strategy::Baseline) {
                        return cfg("incremental needs an enriching strategy".into());
                    }
                    match &self.increments {
                        Some(inc) if !inc.is_empty() && inc.windows(2).all(|w| w[0] < w[1]) => {}
                        _ => return cfg("incremental needs a strictly ascending, non-empty increments list".into()),
                    }
                }
            }
        }
        if self.kind == ExperimentKind::JointTraining && self.joint_cap() == 0 {
            return cfg("joint_cap must be positive".into());
        }
        Ok(())
    }

    pub(crate) fn enrichment_config(&self, strategy: Strategy) -> crate::enrich::EnrichmentConfig {
        crate::enrich::EnrichmentConfig {
            strategy,
            confidence_threshold: self.confidence_threshold,
            hyperparameters: self.hyperparameters.clone(),
            seed: self.seed,
            folds: self.folds,
            include_empty_auto: self.include_empty_auto,
            pretrained: self.pretrained.clone(),
            operating_confidence: self.operating_confidence,
            ..Default::default()
        }
    }
}
