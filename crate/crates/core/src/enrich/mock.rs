//! Deterministic stand-in backend for tests and dry runs.
//!
//! The same behaviours are reachable in-process through [`MockBackend`] and
//! as a subprocess through the CLI's hidden `mock-backend` subcommand, so the
//! command protocol can be exercised end to end without a neural detector.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::backend::{read_train_summary, Backend, BackendRef, PredictRequest, TrainRequest, TrainSummary, TRAIN_SUMMARY_FILE};
use crate::dataset::load_dataset;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::matching::{Detection, PredictionSet};
use crate::predictions::{read_predictions, write_predictions};
use crate::rng::{fnv1a, SplitMix64};

pub const MODEL_FILE: &str = "model.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MockBehavior {
    /// Predicts each frame's ground truth at confidence 1.0.
    EchoGt,
    /// Ground truth with each edge moved by up to `noise * 10%` of the box
    /// size and confidence `1 - noise * u`, `u` uniform in [0, 1).
    PerturbGt { noise: f64, seed: u64 },
    /// Replays a predictions file, emitting records in manifest order.
    FixedFile { path: PathBuf },
}

impl MockBehavior {
    pub fn validate(&self) -> Result<()> {
        match self {
            MockBehavior::PerturbGt { noise, .. } if !(0.0..=1.0).contains(noise) => {
                Err(Error::Config(format!("mock noise must lie in [0, 1], got {noise}")))
            }
            _ => Ok(()),
        }
    }

    /// Command-line flags selecting this behaviour on the `mock-backend` subcommand.
    pub fn cli_args(&self) -> String {
        match self {
            MockBehavior::EchoGt => "--behavior echo-gt".into(),
            MockBehavior::PerturbGt { noise, seed } => {
                format!("--behavior perturb-gt --noise {noise} --noise-seed {seed}")
            }
            MockBehavior::FixedFile { path } => format!(
                "--behavior fixed-file --fixed-file {}",
                shell_words::quote(&crate::dataset::absolute(path).to_string_lossy())
            ),
        }
    }
}

/// Subprocess backend that runs `exe mock-backend ...` with the given behaviour.
pub fn mock_command_backend(exe: &Path, behavior: &MockBehavior) -> BackendRef {
    let exe = shell_words::quote(&exe.to_string_lossy()).into_owned();
    let flags = behavior.cli_args();
    BackendRef::new(
        format!(
            "{exe} mock-backend {flags} train --train-manifest {{TRAIN_MANIFEST}} --val-manifest {{VAL_MANIFEST}} \
             --init {{INIT}} --out-dir {{OUT_DIR}} --lr {{LR}} --batch {{BATCH}} --epochs {{EPOCHS}} \
             --frozen {{FROZEN}} --seed {{SEED}}"
        ),
        format!("{exe} mock-backend {flags} predict --model-dir {{MODEL_DIR}} --manifest {{MANIFEST}} --out-file {{OUT_FILE}}"),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct MockBackend {
    pub behavior: MockBehavior,
}

pub fn mock_backend(behavior: MockBehavior) -> MockBackend {
    MockBackend { behavior }
}

#[derive(Serialize, Deserialize)]
struct MockModel {
    behavior: MockBehavior,
    init: String,
    train_frames: usize,
    val_frames: usize,
    seed: u64,
}

/// Body of the mock's train step: checks both manifests load, then writes a
/// model description and a train summary into `out_dir`.
pub fn mock_train(behavior: &MockBehavior, req: &TrainRequest) -> Result<TrainSummary> {
    behavior.validate()?;
    let train = load_dataset(&req.train_manifest)?;
    let val = load_dataset(&req.val_manifest)?;
    fs::create_dir_all(&req.out_dir).map_err(|e| Error::io(&req.out_dir, e))?;
    let model = MockModel {
        behavior: behavior.clone(),
        init: req.init.clone(),
        train_frames: train.len(),
        val_frames: val.len(),
        seed: req.seed,
    };
    let model_path = req.out_dir.join(MODEL_FILE);
    let json = serde_json::to_string_pretty(&model).expect("model serializes");
    fs::write(&model_path, json).map_err(|e| Error::io(&model_path, e))?;
    let summary = TrainSummary {
        epochs_run: req.hyperparameters.epochs,
        final_val_loss: 1.0 / (1.0 + train.len() as f64),
    };
    let summary_path = req.out_dir.join(TRAIN_SUMMARY_FILE);
    let json = serde_json::to_string(&summary).expect("summary serializes");
    fs::write(&summary_path, json).map_err(|e| Error::io(&summary_path, e))?;
    Ok(summary)
}

/// Body of the mock's predict step.
pub fn mock_predict(behavior: &MockBehavior, req: &PredictRequest) -> Result<()> {
    behavior.validate()?;
    let model_path = req.model_dir.join(MODEL_FILE);
    if !model_path.is_file() {
        return Err(Error::Backend(format!("no mock model at {}", model_path.display())));
    }
    let dataset = load_dataset(&req.manifest)?;
    let sets: Vec<PredictionSet> = match behavior {
        MockBehavior::EchoGt => dataset
            .frames()
            .iter()
            .map(|f| PredictionSet {
                frame_id: f.frame_id.clone(),
                detections: f.objects.iter().map(|o| Detection::new(o.bbox, 1.0)).collect(),
            })
            .collect(),
        MockBehavior::PerturbGt { noise, seed } => dataset
            .frames()
            .iter()
            .map(|f| {
                let mut rng = SplitMix64::new(seed ^ fnv1a(f.frame_id.as_bytes()));
                let detections = f
                    .objects
                    .iter()
                    .map(|o| perturb(o.bbox, *noise, f.width, f.height, &mut rng))
                    .collect();
                PredictionSet { frame_id: f.frame_id.clone(), detections }
            })
            .collect(),
        MockBehavior::FixedFile { path } => {
            let mut by_id: HashMap<String, Vec<Detection>> = read_predictions(path)?
                .into_iter()
                .map(|s| (s.frame_id, s.detections))
                .collect();
            dataset
                .frames()
                .iter()
                .map(|f| PredictionSet {
                    frame_id: f.frame_id.clone(),
                    detections: by_id.remove(&f.frame_id).unwrap_or_default(),
                })
                .collect()
        }
    };
    write_predictions(&req.out_file, &sets)
}

fn perturb(b: BBox, noise: f64, width: u32, height: u32, rng: &mut SplitMix64) -> Detection {
    let (w, h) = (b.width(), b.height());
    let mut jitter = |size: f64| noise * 0.1 * size * (2.0 * rng.next_f64() - 1.0);
    let moved = BBox {
        x_min: b.x_min + jitter(w),
        y_min: b.y_min + jitter(h),
        x_max: b.x_max + jitter(w),
        y_max: b.y_max + jitter(h),
    };
    let bbox = moved.clamp_to(f64::from(width), f64::from(height)).unwrap_or(b);
    let confidence = (1.0 - noise * rng.next_f64()).clamp(0.0, 1.0);
    Detection::new(bbox, confidence)
}

impl Backend for MockBackend {
    fn train(&self, req: &TrainRequest) -> Result<TrainSummary> {
        mock_train(&self.behavior, req)?;
        read_train_summary(&req.out_dir)
    }

    fn predict(&self, req: &PredictRequest) -> Result<()> {
        mock_predict(&self.behavior, req)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enrich::Hyperparameters;
    use crate::synth::write_fixture_dataset;

    fn trained(dir: &Path, behavior: &MockBehavior) -> PathBuf {
        let manifest = write_fixture_dataset(&dir.join("d"), "d", &[1, 2, 3], 5).unwrap();
        let req = TrainRequest {
            train_manifest: manifest.clone(),
            val_manifest: manifest.clone(),
            init: "pretrained".into(),
            out_dir: dir.join("model"),
            hyperparameters: Hyperparameters::default(),
            seed: 0,
        };
        let s = mock_backend(behavior.clone()).train(&req).unwrap();
        assert_eq!(s.epochs_run, 30);
        manifest
    }

    #[test]
    fn echo_returns_ground_truth() {
        let tmp = tempfile::tempdir().unwrap();
        let manifest = trained(tmp.path(), &MockBehavior::EchoGt);
        let out = tmp.path().join("p.ndjson");
        mock_backend(MockBehavior::EchoGt)
            .predict(&PredictRequest { model_dir: tmp.path().join("model"), manifest: manifest.clone(), out_file: out.clone() })
            .unwrap();
        let d = load_dataset(&manifest).unwrap();
        let preds = read_predictions(&out).unwrap();
        assert_eq!(preds.len(), 3);
        for (f, p) in d.frames().iter().zip(&preds) {
            assert_eq!(f.frame_id, p.frame_id);
            assert_eq!(f.boxes(), p.detections.iter().map(|d| d.bbox).collect::<Vec<_>>());
            assert!(p.detections.iter().all(|d| d.confidence == 1.0));
        }
    }

    #[test]
    fn zero_noise_perturbation_is_echo() {
        let tmp = tempfile::tempdir().unwrap();
        let manifest = trained(tmp.path(), &MockBehavior::EchoGt);
        let run = |b: MockBehavior, name: &str| {
            let out = tmp.path().join(format!("{name}.ndjson"));
            mock_backend(b)
                .predict(&PredictRequest { model_dir: tmp.path().join("model"), manifest: manifest.clone(), out_file: out.clone() })
                .unwrap();
            fs::read_to_string(out).unwrap()
        };
        assert_eq!(
            run(MockBehavior::EchoGt, "a"),
            run(MockBehavior::PerturbGt { noise: 0.0, seed: 9 }, "b")
        );
        let noisy1 = run(MockBehavior::PerturbGt { noise: 0.5, seed: 9 }, "c");
        let noisy2 = run(MockBehavior::PerturbGt { noise: 0.5, seed: 9 }, "d");
        assert_eq!(noisy1, noisy2);
        assert_ne!(noisy1, run(MockBehavior::EchoGt, "e"));
    }

    #[test]
    fn fixed_file_replays_in_manifest_order() {
        let tmp = tempfile::tempdir().unwrap();
        let manifest = trained(tmp.path(), &MockBehavior::EchoGt);
        let d = load_dataset(&manifest).unwrap();
        let ids: Vec<String> = d.frame_ids().map(str::to_string).collect();
        let fixed = tmp.path().join("fixed.ndjson");
        let b = BBox::new(1.0, 1.0, 5.0, 5.0).unwrap();
        write_predictions(
            &fixed,
            &[
                PredictionSet { frame_id: ids[2].clone(), detections: vec![Detection::new(b, 0.3)] },
                PredictionSet { frame_id: ids[0].clone(), detections: vec![Detection::new(b, 0.7)] },
            ],
        )
        .unwrap();
        let out = tmp.path().join("p.ndjson");
        mock_backend(MockBehavior::FixedFile { path: fixed })
            .predict(&PredictRequest { model_dir: tmp.path().join("model"), manifest, out_file: out.clone() })
            .unwrap();
        let preds = read_predictions(&out).unwrap();
        assert_eq!(preds.iter().map(|p| p.frame_id.clone()).collect::<Vec<_>>(), ids);
        assert_eq!(preds[0].detections[0].confidence, 0.7);
        assert!(preds[1].detections.is_empty());
    }

    #[test]
    fn predict_without_model_fails() {
        let tmp = tempfile::tempdir().unwrap();
        let manifest = write_fixture_dataset(tmp.path(), "d", &[1], 5).unwrap();
        let r = mock_backend(MockBehavior::EchoGt).predict(&PredictRequest {
            model_dir: tmp.path().join("nope"),
            manifest,
            out_file: tmp.path().join("p"),
        });
        assert!(matches!(r, Err(Error::Backend(_))));
    }
}
