use std::path::Path;

use slidedet_core::dataset::{load_dataset, save_dataset, AnnotationFormat};
use slidedet_core::enrich::backend::{Backend, PredictRequest, TrainRequest};
use slidedet_core::enrich::{
    mock_backend, run_strategy, EnrichmentConfig, EnrichmentSession, Hyperparameters, MockBehavior, Strategy,
    StrategyOutcome,
};
use slidedet_core::predictions::read_predictions;
use slidedet_core::synth::write_fixture_dataset;
use slidedet_core::Dataset;

fn fixture(dir: &Path) -> (Dataset, std::path::PathBuf) {
    let counts: Vec<usize> = (0..40).map(|i| 1 + i % 4).collect();
    let l = write_fixture_dataset(&dir.join("lab"), "lab", &counts, 1).unwrap();
    let u = write_fixture_dataset(&dir.join("unl"), "unl", &counts[..30], 2).unwrap();
    (load_dataset(&l).unwrap(), u)
}

fn strip_paths(o: &StrategyOutcome) -> String {
    let mut o = o.clone();
    for m in &mut o.fold_models {
        m.path = Default::default();
        for step in &mut m.lineage {
            step.init = step.init.rsplit('/').take(3).collect::<Vec<_>>().join("/");
        }
    }
    serde_json::to_string(&o).unwrap()
}

#[test]
fn pipeline_is_deterministic_for_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (labeled, unl) = fixture(tmp.path());
    for behavior in [MockBehavior::EchoGt, MockBehavior::PerturbGt { noise: 0.6, seed: 3 }] {
        let backend = mock_backend(behavior);
        let config = EnrichmentConfig { strategy: Strategy::Progressive, seed: 5, ..Default::default() };
        let a = run_strategy(labeled.clone(), &unl, config.clone(), &backend, &tmp.path().join("a")).unwrap();
        let b = run_strategy(labeled.clone(), &unl, config, &backend, &tmp.path().join("b")).unwrap();
        assert_eq!(strip_paths(&a), strip_paths(&b));
        std::fs::remove_dir_all(tmp.path().join("a")).unwrap();
        std::fs::remove_dir_all(tmp.path().join("b")).unwrap();
    }
}

#[test]
fn empty_auto_frames_are_kept_but_not_trained_on_by_default() {
    let tmp = tempfile::tempdir().unwrap();
    let (labeled, unl) = fixture(tmp.path());
    let backend = mock_backend(MockBehavior::PerturbGt { noise: 1.0, seed: 11 });
    let config = EnrichmentConfig { seed: 2, confidence_threshold: 0.7, ..Default::default() };
    let mut s = EnrichmentSession::new(labeled.clone(), &unl, config.clone(), &backend, &tmp.path().join("r")).unwrap();
    let pool = s.auto_pool().unwrap().clone();
    let empty = pool.frames().iter().filter(|f| f.auto_empty).count();
    assert_eq!(pool.len(), 30);
    assert!(empty > 0 && empty < 30, "{empty} empty frames");
    assert!(pool.frames().iter().all(|f| f.auto_empty == f.objects.is_empty()));
    assert_eq!(s.training_pool().unwrap().len(), 30 - empty);

    let inclusive = EnrichmentConfig { include_empty_auto: true, ..config };
    let mut s = EnrichmentSession::new(labeled, &unl, inclusive, &backend, &tmp.path().join("r2")).unwrap();
    assert_eq!(s.training_pool().unwrap().len(), 30);
    let o = s.run_strategy(Strategy::Comprehensive).unwrap();
    assert_eq!(o.train_sizes, vec![32 + 30; 5]);
}

#[test]
fn persisted_pool_is_reused() {
    let tmp = tempfile::tempdir().unwrap();
    let (labeled, unl) = fixture(tmp.path());
    let run = tmp.path().join("r");
    let config = EnrichmentConfig { seed: 2, ..Default::default() };
    let noisy = mock_backend(MockBehavior::PerturbGt { noise: 0.9, seed: 1 });
    let first = EnrichmentSession::new(labeled.clone(), &unl, config.clone(), &noisy, &run)
        .unwrap()
        .auto_pool()
        .unwrap()
        .clone();
    // A different backend would label differently, but the stored pool wins.
    let echo = mock_backend(MockBehavior::EchoGt);
    let second = EnrichmentSession::new(labeled, &unl, config, &echo, &run).unwrap().auto_pool().unwrap().clone();
    assert_eq!(first.frames().len(), second.frames().len());
    for (a, b) in first.frames().iter().zip(second.frames()) {
        assert_eq!(a.frame_id, b.frame_id);
        assert_eq!(a.objects.len(), b.objects.len());
    }
}

#[test]
fn mock_predicts_empty_manifest_as_empty_file() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = Dataset::empty("none");
    let manifest = save_dataset(&empty, &tmp.path().join("empty"), AnnotationFormat::NormalizedText).unwrap();
    let backend = mock_backend(MockBehavior::EchoGt);
    backend
        .train(&TrainRequest {
            train_manifest: manifest.clone(),
            val_manifest: manifest.clone(),
            init: "coco".into(),
            out_dir: tmp.path().join("m"),
            hyperparameters: Hyperparameters { epochs: 1, ..Default::default() },
            seed: 0,
        })
        .unwrap();
    let out = tmp.path().join("p.ndjson");
    backend
        .predict(&PredictRequest { model_dir: tmp.path().join("m"), manifest, out_file: out.clone() })
        .unwrap();
    assert!(read_predictions(&out).unwrap().is_empty());
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "");
}
