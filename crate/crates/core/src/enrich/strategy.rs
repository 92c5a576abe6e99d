use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{auto_label, create_dir, predict_dataset, train_step, Backend, Hyperparameters, Init, ModelRef};
use crate::dataset::write_json;
use crate::dataset::{load_dataset, save_dataset, AnnotationFormat, Dataset, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::eval::{evaluate, MetricsReport, DEFAULT_OPERATING_CONFIDENCE};
use crate::ops::{kfold, merge, split, FoldPlan, SplitSpec};
use crate::rng::SplitMix64;

pub const FOLD_PLAN_FILE: &str = "fold_plan.json";
const POOL_DIR: &str = "auto_pool";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Fine-tune from pretrained weights on labeled frames only.
    Baseline,
    /// Fine-tune from pretrained weights on labeled plus auto-labeled frames.
    Comprehensive,
    /// Fine-tune the baseline model again on labeled plus auto-labeled frames.
    Progressive,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Baseline => "baseline",
            Strategy::Comprehensive => "comprehensive",
            Strategy::Progressive => "progressive",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnrichmentConfig {
    pub strategy: Strategy,
    pub confidence_threshold: f64,
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
    pub folds: usize,
    /// Train on auto-labeled frames that ended up with no objects.
    pub include_empty_auto: bool,
    /// Tag handed to the backend as `{INIT}` for from-pretrained steps.
    pub pretrained: String,
    pub operating_confidence: f64,
    /// Share of the labeled set held out when training the auto-labeling model.
    pub pool_val_fraction: f64,
}

impl Default for EnrichmentConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Comprehensive,
            confidence_threshold: 0.5,
            hyperparameters: Hyperparameters::default(),
            seed: 0,
            folds: 5,
            include_empty_auto: false,
            pretrained: "coco-pretrained".into(),
            operating_confidence: DEFAULT_OPERATING_CONFIDENCE,
            pool_val_fraction: 0.2,
        }
    }
}

impl EnrichmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.confidence_threshold > 0.0 && self.confidence_threshold < 1.0) {
            return Err(Error::Config(format!(
                "confidence threshold must lie in (0, 1), got {}",
                self.confidence_threshold
            )));
        }
        if !(self.pool_val_fraction > 0.0 && self.pool_val_fraction < 1.0) {
            return Err(Error::Config("pool_val_fraction must lie in (0, 1)".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("at least two folds are required".into()));
        }
        self.hyperparameters.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyOutcome {
    pub strategy: Strategy,
    /// Auto-labeled frames added to every fold's training set.
    pub auto_frames: usize,
    pub fold_models: Vec<ModelRef>,
    /// Final-step training set size per fold.
    pub train_sizes: Vec<usize>,
    /// Pooled over the out-of-fold predictions of all folds.
    pub report: MetricsReport,
}

impl StrategyOutcome {
    pub fn lineage_lengths(&self) -> Vec<usize> {
        self.fold_models.iter().map(|m| m.lineage.len()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncrementOutcome {
    pub auto_count: usize,
    pub auto_frame_ids: Vec<String>,
    pub outcome: StrategyOutcome,
}

/// State shared by the strategies of one enrichment run: the labeled set,
/// its persisted fold plan and the lazily built auto-labeled pool.
pub struct EnrichmentSession<'a> {
    labeled: Dataset,
    unlabeled_manifest: PathBuf,
    config: EnrichmentConfig,
    backend: &'a dyn Backend,
    run_dir: PathBuf,
    plan: FoldPlan,
    pool: Option<Dataset>,
}

impl<'a> EnrichmentSession<'a> {
    /// Opens `run_dir`, reusing its fold plan when one is already there.
    pub fn new(
        labeled: Dataset,
        unlabeled_manifest: &Path,
        config: EnrichmentConfig,
        backend: &'a dyn Backend,
        run_dir: &Path,
    ) -> Result<Self> {
        config.validate()?;
        if labeled.frames().iter().any(|f| f.is_auto_labeled() || f.auto_empty) {
            return Err(Error::Integrity(format!("labeled set {} contains auto labels", labeled.name())));
        }
        create_dir(run_dir)?;
        write_json(&run_dir.join("enrichment_config.json"), &config)?;
        let plan_path = run_dir.join(FOLD_PLAN_FILE);
        let plan = if plan_path.is_file() {
            let text = fs::read_to_string(&plan_path).map_err(|e| Error::io(&plan_path, e))?;
            let plan: FoldPlan = serde_json::from_str(&text).map_err(|e| Error::json(&plan_path, e))?;
            if plan.k != config.folds || plan.seed != config.seed {
                return Err(Error::Integrity(format!(
                    "{} was built with k={} seed={}, config asks for k={} seed={}",
                    plan_path.display(),
                    plan.k,
                    plan.seed,
                    config.folds,
                    config.seed
                )));
            }
            plan.check_covers(&labeled)?;
            plan
        } else {
            let plan = kfold(&labeled, config.folds, config.seed)?;
            write_json(&plan_path, &plan)?;
            plan
        };
        Ok(Self {
            labeled,
            unlabeled_manifest: unlabeled_manifest.to_path_buf(),
            config,
            backend,
            run_dir: run_dir.to_path_buf(),
            plan,
            pool: None,
        })
    }

    pub fn fold_plan(&self) -> &FoldPlan {
        &self.plan
    }

    pub fn config(&self) -> &EnrichmentConfig {
        &self.config
    }

    /// The unlabeled set labeled once by a model fine-tuned on a train/val
    /// split of the labeled set. Built on first use and persisted, so every
    /// strategy and increment sees the same pool.
    pub fn auto_pool(&mut self) -> Result<&Dataset> {
        if self.pool.is_none() {
            let pool_dir = self.run_dir.join(POOL_DIR);
            let manifest = pool_dir.join(MANIFEST_FILE);
            let pool = if manifest.is_file() {
                load_dataset(&manifest)?
            } else {
                let spec = SplitSpec::new(
                    &[1.0 - self.config.pool_val_fraction, self.config.pool_val_fraction],
                    &["train", "val"],
                    self.config.seed,
                );
                let parts = split(&self.labeled, &spec)?;
                let model = train_step(
                    self.backend,
                    &Init::Pretrained(self.config.pretrained.clone()),
                    &parts[0],
                    &parts[1],
                    &self.config.hyperparameters,
                    self.config.seed,
                    &pool_dir.join("model_step"),
                )?;
                let pool = auto_label(
                    self.backend,
                    &model,
                    &self.unlabeled_manifest,
                    self.config.confidence_threshold,
                    &pool_dir.join("labeling"),
                )?;
                save_dataset(&pool, &pool_dir, AnnotationFormat::NormalizedText)?;
                pool
            };
            if let Some(id) = pool.frame_ids().find(|id| self.labeled.frame(id).is_some()) {
                return Err(Error::Integrity(format!("frame {id} is both labeled and auto-labeled")));
            }
            self.pool = Some(pool);
        }
        Ok(self.pool.as_ref().expect("pool just built"))
    }

    /// Pool frames eligible for training.
    pub fn training_pool(&mut self) -> Result<Dataset> {
        let include_empty = self.config.include_empty_auto;
        Ok(self.auto_pool()?.filtered(|f| include_empty || !f.auto_empty))
    }

    pub fn run_strategy(&mut self, strategy: Strategy) -> Result<StrategyOutcome> {
        match strategy {
            Strategy::Baseline => self.run(Strategy::Baseline, None, "baseline"),
            s => {
                let auto = self.training_pool()?;
                self.run(s, Some(&auto), s.name())
            }
        }
    }

    /// Runs the configured strategy with nested, seeded subsets of the
    /// training pool of sizes `increments`. A size of 0 is the baseline.
    pub fn incremental(&mut self, increments: &[usize]) -> Result<Vec<IncrementOutcome>> {
        let strategy = self.config.strategy;
        if strategy == Strategy::Baseline {
            return Err(Error::Config("incremental enrichment needs an enriching strategy".into()));
        }
        if increments.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("increments must be strictly ascending".into()));
        }
        let pool = self.training_pool()?;
        if let Some(&last) = increments.last() {
            if last > pool.len() {
                return Err(Error::Config(format!(
                    "increment {last} exceeds the {} usable auto-labeled frames",
                    pool.len()
                )));
            }
        }
        let order = SplitMix64::new(self.config.seed).permutation(pool.len());
        let mut out = Vec::with_capacity(increments.len());
        for &c in increments {
            let chosen: HashSet<&str> = order[..c].iter().map(|&i| pool.frames()[i].frame_id.as_str()).collect();
            let subset = pool.filtered(|f| chosen.contains(f.frame_id.as_str()));
            let tag = format!("incremental_{c}");
            let outcome = if c == 0 {
                self.run(Strategy::Baseline, None, &tag)?
            } else {
                self.run(strategy, Some(&subset), &tag)?
            };
            out.push(IncrementOutcome {
                auto_count: c,
                auto_frame_ids: subset.frame_ids().map(str::to_string).collect(),
                outcome,
            });
        }
        Ok(out)
    }

    fn run(&self, strategy: Strategy, auto: Option<&Dataset>, tag: &str) -> Result<StrategyOutcome> {
        let dir = self.run_dir.join(tag);
        let pretrained = Init::Pretrained(self.config.pretrained.clone());
        let hp = &self.config.hyperparameters;
        let seed = self.config.seed;
        let mut fold_models = Vec::with_capacity(self.plan.k);
        let mut train_sizes = Vec::with_capacity(self.plan.k);
        let mut predictions = Vec::with_capacity(self.labeled.len());
        for fold in 0..self.plan.k {
            let fold_dir = dir.join(format!("fold{fold}"));
            let val = self.plan.validation(&self.labeled, fold);
            let train = self.plan.training(&self.labeled, fold);
            check_validation_purity(&val, auto)?;
            let enriched = |train: &Dataset, auto: &Dataset| {
                merge(&[train.clone(), auto.clone()], &format!("{}_enriched", train.name()))
            };
            let (model, size) = match (strategy, auto) {
                (Strategy::Baseline, _) | (_, None) => {
                    let m = train_step(self.backend, &pretrained, &train, &val, hp, seed, &fold_dir.join("step1"))?;
                    (m, train.len())
                }
                (Strategy::Comprehensive, Some(auto)) => {
                    let ext = enriched(&train, auto)?;
                    let m = train_step(self.backend, &pretrained, &ext, &val, hp, seed, &fold_dir.join("step1"))?;
                    (m, ext.len())
                }
                (Strategy::Progressive, Some(auto)) => {
                    let base = train_step(self.backend, &pretrained, &train, &val, hp, seed, &fold_dir.join("step1"))?;
                    let ext = enriched(&train, auto)?;
                    let m = train_step(self.backend, &Init::Model(base), &ext, &val, hp, seed, &fold_dir.join("step2"))?;
                    (m, ext.len())
                }
            };
            predictions.extend(predict_dataset(self.backend, &model, &val, &fold_dir.join("predict"))?);
            fold_models.push(model);
            train_sizes.push(size);
        }
        let report = evaluate(&self.labeled, &predictions, self.config.operating_confidence)?;
        write_json(&dir.join("metrics.json"), &report.clone().without_curves())?;
        Ok(StrategyOutcome {
            strategy,
            auto_frames: auto.map_or(0, Dataset::len),
            fold_models,
            train_sizes,
            report,
        })
    }
}

/// Validation folds must hold only manually labeled frames that are not
/// also in the auto-labeled training data.
fn check_validation_purity(val: &Dataset, auto: Option<&Dataset>) -> Result<()> {
    if let Some(f) = val.frames().iter().find(|f| f.is_auto_labeled() || f.auto_empty) {
        return Err(Error::Integrity(format!("validation frame {} carries auto labels", f.frame_id)));
    }
    if let Some(auto) = auto {
        if let Some(id) = auto.frame_ids().find(|id| val.frame(id).is_some()) {
            return Err(Error::Integrity(format!("auto-labeled frame {id} leaked into validation")));
        }
    }
    Ok(())
}

/// Runs `config.strategy` once in a fresh or resumed session.
pub fn run_strategy(
    labeled: Dataset,
    unlabeled_manifest: &Path,
    config: EnrichmentConfig,
    backend: &dyn Backend,
    run_dir: &Path,
) -> Result<StrategyOutcome> {
    let strategy = config.strategy;
    EnrichmentSession::new(labeled, unlabeled_manifest, config, backend, run_dir)?.run_strategy(strategy)
}

pub fn incremental_enrichment(
    labeled: Dataset,
    unlabeled_manifest: &Path,
    config: EnrichmentConfig,
    backend: &dyn Backend,
    increments: &[usize],
    run_dir: &Path,
) -> Result<Vec<IncrementOutcome>> {
    EnrichmentSession::new(labeled, unlabeled_manifest, config, backend, run_dir)?.incremental(increments)
}
