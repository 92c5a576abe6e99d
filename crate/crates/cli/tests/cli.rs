use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use slidedet_core::enrich::{mock_command_backend, MockBehavior};
use slidedet_core::experiment::{BackendConfig, ExperimentConfig, ExperimentKind};
use slidedet_core::synth::{write_fixture_dataset, write_slide_dataset};

const EXE: &str = env!("CARGO_BIN_EXE_slidedet");

fn slidedet(args: &[&str]) -> Output {
    Command::new(EXE).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn fixture(dir: &Path, name: &str, n: usize) -> PathBuf {
    let counts: Vec<usize> = (0..n).map(|i| 1 + i % 4).collect();
    write_fixture_dataset(&dir.join(name), name, &counts, 3).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest_len(p: &Path) -> usize {
    slidedet_core::dataset::load_dataset(p).unwrap().len()
}

#[test]
fn split_and_kfold() {
    let tmp = tempfile::tempdir().unwrap();
    let m = fixture(tmp.path(), "d", 1000);
    let out = tmp.path().join("split");
    let o = slidedet(&["split", "--dataset", s(&m), "--seed", "7", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{o:?}");
    assert_eq!(manifest_len(&out.join("train/manifest.json")), 800);
    assert_eq!(manifest_len(&out.join("val/manifest.json")), 200);
    assert!(out.join("split_spec.json").is_file());

    let plan = tmp.path().join("plan.json");
    let o = slidedet(&["kfold", "--dataset", s(&m), "--k", "5", "--seed", "7", "--out", s(&plan)]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("[200, 200, 200, 200, 200]"));

    let o = slidedet(&["split", "--dataset", s(&m), "--ratios", "0.5,0.4", "--names", "a,b", "--out", s(&out)]);
    assert_eq!(code(&o), 1, "ratios not summing to one are a config error");
}

#[test]
fn mock_backend_protocol_and_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let m = fixture(tmp.path(), "d", 12);
    let model = tmp.path().join("model");
    let o = slidedet(&[
        "mock-backend", "train", "--train-manifest", s(&m), "--val-manifest", s(&m), "--init", "coco",
        "--out-dir", s(&model), "--lr", "0.001", "--batch", "8", "--epochs", "4", "--frozen", "3", "--seed", "1",
    ]);
    assert_eq!(code(&o), 0, "{o:?}");
    let summary = fs::read_to_string(model.join("train_summary.json")).unwrap();
    assert!(summary.contains("\"epochs_run\":4"));

    let preds = tmp.path().join("p.ndjson");
    let o = slidedet(&["mock-backend", "predict", "--model-dir", s(&model), "--manifest", s(&m), "--out-file", s(&preds)]);
    assert_eq!(code(&o), 0, "{o:?}");

    let o = slidedet(&["eval", "--dataset", s(&m), "--predictions", s(&preds), "--sweep", "0.25,0.75"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    for k in ["ap50", "ap75", "ap", "precision", "recall", "f1"] {
        assert_eq!(v[k], 1.0, "{k}");
    }
    assert_eq!(v["sweep"].as_array().unwrap().len(), 2);
}

#[test]
fn experiment_over_subprocess_backend() {
    let tmp = tempfile::tempdir().unwrap();
    let backend = mock_command_backend(Path::new(EXE), &MockBehavior::EchoGt);
    let mut c = ExperimentConfig::new(ExperimentKind::CrossDatasetMatrix, BackendConfig::Command(backend), tmp.path().join("out"));
    c.datasets.insert("A".into(), fixture(tmp.path(), "A", 20));
    c.datasets.insert("B".into(), fixture(tmp.path(), "B", 20));
    c.workers = 2;
    let cfg = tmp.path().join("exp.json");
    c.save(&cfg).unwrap();
    let o = slidedet(&["experiment", "run", s(&cfg)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(tmp.path().join("out/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(tmp.path().join("out/report.svg").is_file());
    assert!(tmp.path().join("out/work/job000/train/model/train.stderr.log").is_file());

    let o = slidedet(&["report", s(&tmp.path().join("out/report.json")), "--formats", "csv", "--out", s(&tmp.path().join("again"))]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(tmp.path().join("again/report.csv")).unwrap(), csv);
}

#[test]
fn partial_failure_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let behavior = MockBehavior::FixedFile { path: tmp.path().join("absent.ndjson") };
    let backend = mock_command_backend(Path::new(EXE), &behavior);
    let mut c = ExperimentConfig::new(ExperimentKind::Single, BackendConfig::Command(backend), tmp.path().join("out"));
    c.datasets.insert("A".into(), fixture(tmp.path(), "A", 10));
    c.target = Some("A".into());
    let cfg = tmp.path().join("exp.json");
    c.save(&cfg).unwrap();
    let o = slidedet(&["experiment", "run", s(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cell single:A failed"));
}

#[test]
fn config_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.json");
    fs::write(&cfg, r#"{"kind": "single"}"#).unwrap();
    assert_eq!(code(&slidedet(&["experiment", "run", s(&cfg)])), 1);
    assert_eq!(code(&slidedet(&["no-such-command"])), 1);
    assert_eq!(code(&slidedet(&["--help"])), 0);
}

#[test]
fn autolabel_through_command_backend() {
    let tmp = tempfile::tempdir().unwrap();
    let labeled = fixture(tmp.path(), "lab", 8);
    let unlabeled = fixture(tmp.path(), "unl", 6);
    let backend = BackendConfig::Command(mock_command_backend(Path::new(EXE), &MockBehavior::PerturbGt { noise: 1.0, seed: 2 }));
    let backend_file = tmp.path().join("backend.json");
    fs::write(&backend_file, serde_json::to_string(&backend).unwrap()).unwrap();
    let model = tmp.path().join("model");
    let o = slidedet(&[
        "mock-backend", "train", "--train-manifest", s(&labeled), "--val-manifest", s(&labeled), "--init", "coco",
        "--out-dir", s(&model), "--lr", "0.001", "--batch", "8", "--epochs", "1", "--frozen", "3", "--seed", "1",
    ]);
    assert_eq!(code(&o), 0);
    let out = tmp.path().join("auto");
    let o = slidedet(&[
        "autolabel", "--backend", s(&backend_file), "--model", s(&model), "--unlabeled", s(&unlabeled),
        "--threshold", "0.5", "--out", s(&out.join("ds")),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let d = slidedet_core::dataset::load_dataset(&out.join("ds/manifest.json")).unwrap();
    assert_eq!(d.len(), 6);
    for f in d.frames() {
        assert!(f.objects.iter().all(|o| o.confidence.unwrap() >= 0.5));
        assert_eq!(f.auto_empty, f.objects.is_empty());
    }
}

#[test]
fn curation_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let a = fixture(tmp.path(), "A", 6);
    let b = fixture(tmp.path(), "B", 4);
    let merged = tmp.path().join("merged");
    let o = slidedet(&["merge", "--dataset", s(&a), "--dataset", s(&b), "--name", "AB", "--out", s(&merged), "--format", "coco"]);
    assert_eq!(code(&o), 0, "{o:?}");
    assert_eq!(manifest_len(&merged.join("manifest.json")), 10);

    let excl = tmp.path().join("excl.txt");
    fs::write(&excl, "A/A_00000\n# comment\nB/B_00003\n").unwrap();
    let filtered = tmp.path().join("filtered");
    let o = slidedet(&["filter", "--dataset", s(&merged.join("manifest.json")), "--exclude", s(&excl), "--out", s(&filtered)]);
    assert_eq!(code(&o), 0, "{o:?}");
    assert_eq!(manifest_len(&filtered.join("manifest.json")), 8);

    // Placeholder images are identical, so all but one frame is a duplicate.
    let dd = tmp.path().join("dedup");
    let o = slidedet(&["dedup", "--dataset", s(&a), "--out", s(&dd)]);
    assert_eq!(code(&o), 0, "{o:?}");
    assert_eq!(manifest_len(&dd.join("manifest.json")), 1);
    let audit = fs::read_to_string(dd.join("dedup_audit.csv")).unwrap();
    assert_eq!(audit.lines().count(), 6);
}

#[test]
fn heuristic_detect_on_slides() {
    let tmp = tempfile::tempdir().unwrap();
    let m = write_slide_dataset(&tmp.path().join("slides"), "slides", &[1, 2, 3, 4]).unwrap();
    let preds = tmp.path().join("h.ndjson");
    let o = slidedet(&["heuristic-detect", "--dataset", s(&m), "--out", s(&preds)]);
    assert_eq!(code(&o), 0, "{o:?}");
    let o = slidedet(&["eval", "--dataset", s(&m), "--predictions", s(&preds)]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["ap50"].as_f64().unwrap() >= 0.9);
}
