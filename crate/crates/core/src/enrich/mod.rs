//! Fine-tuning, auto-labeling and the dataset-enrichment strategies.
//!
//! Every step goes through a [`Backend`]; this module only prepares manifests,
//! keeps model lineage and checks that validation data stays manually labeled.

pub mod backend;
pub mod mock;
mod strategy;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use backend::{Backend, BackendRef, PredictRequest, TrainRequest, TrainSummary};
pub use mock::{mock_backend, mock_command_backend, MockBackend, MockBehavior};
pub use strategy::{
    incremental_enrichment, run_strategy, EnrichmentConfig, EnrichmentSession, IncrementOutcome, Strategy,
    StrategyOutcome, FOLD_PLAN_FILE,
};

use crate::dataset::write_json;
use crate::dataset::{load_dataset, save_dataset, AnnotationFormat, Dataset, GroundTruthObject, IngestWarning};
use crate::error::{Error, Result};
use crate::matching::PredictionSet;
use crate::predictions::read_predictions;

pub const MODEL_REF_FILE: &str = "model_ref.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    pub learning_rate: f64,
    pub batch_size: u32,
    pub epochs: u32,
    pub frozen_blocks: u32,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 8,
            epochs: 30,
            frozen_blocks: 3,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.frozen_blocks == 0 {
            return Err(Error::Config("batch size, epochs and frozen blocks must be positive".into()));
        }
        Ok(())
    }
}

/// One fine-tuning run in a model's history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingStep {
    pub dataset: String,
    pub train_frames: usize,
    pub val_frames: usize,
    pub init: String,
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
    pub summary: TrainSummary,
}

/// A trained model directory and the fine-tuning steps that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRef {
    pub path: PathBuf,
    pub lineage: Vec<TrainingStep>,
}

impl ModelRef {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Init {
    /// Backend-defined pretrained weights, e.g. a COCO checkpoint tag.
    Pretrained(String),
    Model(ModelRef),
}

impl Init {
    fn describe(&self) -> String {
        match self {
            Init::Pretrained(tag) => tag.clone(),
            Init::Model(m) => m.path.to_string_lossy().into_owned(),
        }
    }

    fn lineage(&self) -> &[TrainingStep] {
        match self {
            Init::Pretrained(_) => &[],
            Init::Model(m) => &m.lineage,
        }
    }
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// Fine-tunes from `init` on `train`, validating on `val`.
///
/// Manifests and the model live under `step_dir`; the resulting [`ModelRef`]
/// is also written there as `model_ref.json`.
pub fn train_step(
    backend: &dyn Backend,
    init: &Init,
    train: &Dataset,
    val: &Dataset,
    hyperparameters: &Hyperparameters,
    seed: u64,
    step_dir: &Path,
) -> Result<ModelRef> {
    hyperparameters.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config("training and validation sets must be non-empty".into()));
    }
    let train_ids: HashSet<&str> = train.frame_ids().collect();
    if let Some(id) = val.frame_ids().find(|id| train_ids.contains(id)) {
        return Err(Error::Config(format!("frame {id} is in both training and validation sets")));
    }
    create_dir(step_dir)?;
    let train_manifest = save_dataset(train, &step_dir.join("train"), AnnotationFormat::NormalizedText)?;
    let val_manifest = save_dataset(val, &step_dir.join("val"), AnnotationFormat::NormalizedText)?;
    let out_dir = step_dir.join("model");
    create_dir(&out_dir)?;
    let summary = backend.train(&TrainRequest {
        train_manifest,
        val_manifest,
        init: init.describe(),
        out_dir: out_dir.clone(),
        hyperparameters: hyperparameters.clone(),
        seed,
    })?;
    let mut lineage = init.lineage().to_vec();
    lineage.push(TrainingStep {
        dataset: train.name().to_string(),
        train_frames: train.len(),
        val_frames: val.len(),
        init: init.describe(),
        hyperparameters: hyperparameters.clone(),
        seed,
        summary,
    });
    let model = ModelRef {
        path: crate::dataset::absolute(&out_dir),
        lineage,
    };
    write_json(&step_dir.join(MODEL_REF_FILE), &model)?;
    Ok(model)
}

/// Reads a backend's predictions and checks them against `dataset`:
/// unknown or repeated frame ids are protocol errors, frames the backend
/// skipped get an empty set. Output follows dataset order.
pub fn read_backend_predictions(path: &Path, dataset: &Dataset) -> Result<Vec<PredictionSet>> {
    let sets = read_predictions(path).map_err(|e| Error::Protocol(e.to_string()))?;
    let mut by_id = std::collections::HashMap::with_capacity(sets.len());
    for s in sets {
        if dataset.frame(&s.frame_id).is_none() {
            return Err(Error::Protocol(format!(
                "{}: prediction for unknown frame {}",
                path.display(),
                s.frame_id
            )));
        }
        let id = s.frame_id.clone();
        if by_id.insert(id.clone(), s).is_some() {
            return Err(Error::Protocol(format!("{}: frame {id} predicted twice", path.display())));
        }
    }
    Ok(dataset
        .frames()
        .iter()
        .map(|f| {
            by_id.remove(&f.frame_id).unwrap_or_else(|| PredictionSet {
                frame_id: f.frame_id.clone(),
                detections: Vec::new(),
            })
        })
        .collect())
}

/// Runs the backend's predict step over a manifest already on disk.
pub fn predict_manifest(
    backend: &dyn Backend,
    model: &ModelRef,
    manifest: &Path,
    dataset: &Dataset,
    out_file: &Path,
) -> Result<Vec<PredictionSet>> {
    if let Some(parent) = out_file.parent() {
        create_dir(parent)?;
    }
    backend.predict(&PredictRequest {
        model_dir: model.path.clone(),
        manifest: manifest.to_path_buf(),
        out_file: out_file.to_path_buf(),
    })?;
    read_backend_predictions(out_file, dataset)
}

/// Saves `dataset` under `work_dir` and predicts on it.
pub fn predict_dataset(
    backend: &dyn Backend,
    model: &ModelRef,
    dataset: &Dataset,
    work_dir: &Path,
) -> Result<Vec<PredictionSet>> {
    let manifest = save_dataset(dataset, &work_dir.join("input"), AnnotationFormat::NormalizedText)?;
    predict_manifest(backend, model, &manifest, dataset, &work_dir.join("predictions.ndjson"))
}

/// Labels the frames of `unlabeled_manifest` with `model`, keeping detections
/// whose confidence is at least `threshold` as auto objects.
///
/// Any labels already present in the manifest are replaced. Frames left
/// without objects are kept and flagged `auto_empty`.
pub fn auto_label(
    backend: &dyn Backend,
    model: &ModelRef,
    unlabeled_manifest: &Path,
    threshold: f64,
    out_dir: &Path,
) -> Result<Dataset> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Config(format!("confidence threshold must lie in (0, 1], got {threshold}")));
    }
    let unlabeled = load_dataset(unlabeled_manifest)?;
    let preds = predict_manifest(
        backend,
        model,
        unlabeled_manifest,
        &unlabeled,
        &out_dir.join("predictions.ndjson"),
    )?;
    let mut warnings = Vec::new();
    let frames = unlabeled
        .frames()
        .iter()
        .zip(preds)
        .map(|(f, p)| {
            let mut f = f.clone();
            f.objects = p
                .detections
                .iter()
                .filter(|d| d.confidence >= threshold)
                .filter_map(|d| match d.bbox.clamp_to(f64::from(f.width), f64::from(f.height)) {
                    Some(b) => Some(GroundTruthObject::auto(b, d.confidence)),
                    None => {
                        warnings.push(IngestWarning {
                            frame_id: f.frame_id.clone(),
                            message: format!("detection {:?} lies outside the image", d.bbox),
                        });
                        None
                    }
                })
                .collect();
            f.auto_empty = f.objects.is_empty();
            f
        })
        .collect();
    let mut labeled = unlabeled.with_frames(frames)?;
    for w in warnings {
        log::warn!("{}: {}", w.frame_id, w.message);
        labeled.push_warning(w);
    }
    Ok(labeled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use crate::matching::Detection;
    use crate::predictions::write_predictions;
    use crate::synth::write_fixture_dataset;

    fn pretrained_model(dir: &Path, backend: &dyn Backend, manifest: &Path) -> ModelRef {
        let d = load_dataset(manifest).unwrap();
        let (a, b) = d.frames().split_at(d.len() / 2);
        let train = d.with_frames(a.to_vec()).unwrap();
        let val = d.with_frames(b.to_vec()).unwrap();
        train_step(backend, &Init::Pretrained("coco".into()), &train, &val, &Hyperparameters::default(), 1, dir).unwrap()
    }

    #[test]
    fn hyperparameters_must_be_positive() {
        Hyperparameters::default().validate().unwrap();
        let bad = Hyperparameters { epochs: 0, ..Default::default() };
        assert!(bad.validate().unwrap_err().is_config());
        let bad = Hyperparameters { learning_rate: -1.0, ..Default::default() };
        assert!(bad.validate().unwrap_err().is_config());
    }

    #[test]
    fn train_step_rejects_overlap_and_extends_lineage() {
        let tmp = tempfile::tempdir().unwrap();
        let manifest = write_fixture_dataset(&tmp.path().join("d"), "d", &[1, 1, 2, 2], 3).unwrap();
        let d = load_dataset(&manifest).unwrap();
        let backend = mock_backend(MockBehavior::EchoGt);
        let err = train_step(&backend, &Init::Pretrained("x".into()), &d, &d, &Hyperparameters::default(), 0, tmp.path())
            .unwrap_err();
        assert!(err.is_config());

        let m1 = pretrained_model(&tmp.path().join("s1"), &backend, &manifest);
        assert_eq!(m1.lineage.len(), 1);
        assert_eq!(m1.lineage[0].train_frames, 2);
        assert_eq!(ModelRef::read(&tmp.path().join("s1").join(MODEL_REF_FILE)).unwrap(), m1);
        let train = d.with_frames(d.frames()[..2].to_vec()).unwrap();
        let val = d.with_frames(d.frames()[2..].to_vec()).unwrap();
        let m2 = train_step(&backend, &Init::Model(m1.clone()), &train, &val, &Hyperparameters::default(), 0, &tmp.path().join("s2"))
            .unwrap();
        assert_eq!(m2.lineage.len(), 2);
        assert_eq!(m2.lineage[1].init, m1.path.to_string_lossy());
    }

    #[test]
    fn auto_label_keeps_detections_at_or_above_threshold() {
        let tmp = tempfile::tempdir().unwrap();
        let manifest = write_fixture_dataset(&tmp.path().join("u"), "u", &[0, 0, 0], 3).unwrap();
        let d = load_dataset(&manifest).unwrap();
        let ids: Vec<String> = d.frame_ids().map(str::to_string).collect();
        let b = BBox::new(10.0, 10.0, 50.0, 50.0).unwrap();
        let fixed = tmp.path().join("fixed.ndjson");
        write_predictions(
            &fixed,
            &[
                PredictionSet {
                    frame_id: ids[0].clone(),
                    detections: vec![Detection::new(b, 0.49), Detection::new(b, 0.5), Detection::new(b, 0.9)],
                },
                PredictionSet { frame_id: ids[1].clone(), detections: vec![Detection::new(b, 0.2)] },
            ],
        )
        .unwrap();
        let backend = mock_backend(MockBehavior::FixedFile { path: fixed });
        let model = pretrained_model(&tmp.path().join("m"), &backend, &manifest);
        let out = auto_label(&backend, &model, &manifest, 0.5, &tmp.path().join("al")).unwrap();
        let confs: Vec<f64> = out.frames()[0].objects.iter().map(|o| o.confidence.unwrap()).collect();
        assert_eq!(confs, vec![0.5, 0.9]);
        assert!(out.frames()[0].objects.iter().all(|o| o.source == crate::LabelSource::Auto));
        assert!(!out.frames()[0].auto_empty);
        assert!(out.frames()[1].auto_empty && out.frames()[2].auto_empty);
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn unknown_frame_in_predictions_is_protocol_error() {
        let tmp = tempfile::tempdir().unwrap();
        let manifest = write_fixture_dataset(&tmp.path().join("u"), "u", &[1, 1], 3).unwrap();
        let b = BBox::new(10.0, 10.0, 50.0, 50.0).unwrap();
        let fixed = tmp.path().join("fixed.ndjson");
        write_predictions(&fixed, &[PredictionSet { frame_id: "elsewhere/x".into(), detections: vec![Detection::new(b, 0.9)] }])
            .unwrap();
        let d = load_dataset(&manifest).unwrap();
        assert!(matches!(read_backend_predictions(&fixed, &d), Err(Error::Protocol(_))));
        fs::write(&fixed, "{not json\n").unwrap();
        assert!(matches!(read_backend_predictions(&fixed, &d), Err(Error::Protocol(_))));
    }
}
