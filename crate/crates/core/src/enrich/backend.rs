//! File-and-subprocess protocol between the orchestrator and a detector backend.
//!
//! **train**: the train command template is invoked with `{TRAIN_MANIFEST}`
//! `{VAL_MANIFEST}` `{INIT}` `{OUT_DIR}` `{LR}` `{BATCH}` `{EPOCHS}` `{FROZEN}`
//! `{SEED}` substituted. Success means exit status 0 and `OUT_DIR` holding the
//! backend's model state plus [`TRAIN_SUMMARY_FILE`], a JSON document
//! `{"epochs_run": <int>, "final_val_loss": <real>}`.
//!
//! **predict**: the predict command template is invoked with `{MODEL_DIR}`
//! `{MANIFEST}` `{OUT_FILE}` substituted. Success means exit status 0 and
//! `OUT_FILE` holding a predictions file (see [`crate::predictions`]) with
//! unfiltered confidences.
//!
//! Templates are split into arguments with POSIX shell-word rules and run
//! directly, without a shell. Substituted paths are absolute.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::Hyperparameters;
use crate::dataset::absolute;
use crate::error::{Error, Result};

pub const TRAIN_SUMMARY_FILE: &str = "train_summary.json";

pub const TRAIN_PLACEHOLDERS: [&str; 9] = [
    "{TRAIN_MANIFEST}",
    "{VAL_MANIFEST}",
    "{INIT}",
    "{OUT_DIR}",
    "{LR}",
    "{BATCH}",
    "{EPOCHS}",
    "{FROZEN}",
    "{SEED}",
];
pub const PREDICT_PLACEHOLDERS: [&str; 3] = ["{MODEL_DIR}", "{MANIFEST}", "{OUT_FILE}"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs_run: u32,
    pub final_val_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainRequest {
    pub train_manifest: PathBuf,
    pub val_manifest: PathBuf,
    /// Pretrained tag or path of a prior model directory.
    pub init: String,
    pub out_dir: PathBuf,
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct PredictRequest {
    pub model_dir: PathBuf,
    pub manifest: PathBuf,
    pub out_file: PathBuf,
}

/// Anything that can train and predict through the file protocol.
pub trait Backend: Send + Sync {
    fn train(&self, request: &TrainRequest) -> Result<TrainSummary>;
    fn predict(&self, request: &PredictRequest) -> Result<()>;
}

/// Reads and validates the summary a backend left in `out_dir`.
pub fn read_train_summary(out_dir: &Path) -> Result<TrainSummary> {
    let path = out_dir.join(TRAIN_SUMMARY_FILE);
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Protocol(format!("missing train summary {}: {e}", path.display())))?;
    let s: TrainSummary = serde_json::from_str(&text)
        .map_err(|e| Error::Protocol(format!("malformed train summary {}: {e}", path.display())))?;
    if !s.final_val_loss.is_finite() {
        return Err(Error::Protocol(format!("non-finite final_val_loss in {}", path.display())));
    }
    Ok(s)
}

/// A backend reached by running external commands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackendRef {
    pub train_command: String,
    pub predict_command: String,
    #[serde(default = "default_workdir")]
    pub workdir: PathBuf,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_workdir() -> PathBuf {
    PathBuf::from(".")
}

fn default_timeout() -> u64 {
    24 * 3600
}

impl BackendRef {
    pub fn new(train_command: impl Into<String>, predict_command: impl Into<String>) -> Self {
        Self {
            train_command: train_command.into(),
            predict_command: predict_command.into(),
            workdir: default_workdir(),
            timeout_secs: default_timeout(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, template, required) in [
            ("train", &self.train_command, &TRAIN_PLACEHOLDERS[..]),
            ("predict", &self.predict_command, &PREDICT_PLACEHOLDERS[..]),
        ] {
            let missing: Vec<&str> = required.iter().copied().filter(|p| !template.contains(p)).collect();
            if !missing.is_empty() {
                return Err(Error::Config(format!(
                    "{name} command template lacks {}",
                    missing.join(" ")
                )));
            }
            shell_words::split(template)
                .map_err(|e| Error::Config(format!("{name} command template: {e}")))?;
        }
        if self.timeout_secs == 0 {
            return Err(Error::Config("backend timeout must be positive".into()));
        }
        Ok(())
    }

    fn run(&self, template: &str, substitutions: &[(&str, String)], log_dir: &Path, label: &str) -> Result<()> {
        let words = shell_words::split(template)
            .map_err(|e| Error::Config(format!("{label} command template: {e}")))?;
        let args: Vec<String> = words
            .into_iter()
            .map(|w| {
                substitutions
                    .iter()
                    .fold(w, |acc, (key, value)| acc.replace(key, value))
            })
            .collect();
        let (program, rest) = args
            .split_first()
            .ok_or_else(|| Error::Config(format!("{label} command template is empty")))?;

        fs::create_dir_all(log_dir).map_err(|e| Error::io(log_dir, e))?;
        let stdout_path = log_dir.join(format!("{label}.stdout.log"));
        let stderr_path = log_dir.join(format!("{label}.stderr.log"));
        let stdout = fs::File::create(&stdout_path).map_err(|e| Error::io(&stdout_path, e))?;
        let stderr = fs::File::create(&stderr_path).map_err(|e| Error::io(&stderr_path, e))?;

        log::info!("backend {label}: {}", args.join(" "));
        let mut child = Command::new(program)
            .args(rest)
            .current_dir(&self.workdir)
            .stdin(Stdio::null())
            .stdout(stdout)
            .stderr(stderr)
            .spawn()
            .map_err(|e| Error::Backend(format!("cannot start {label} command {program:?}: {e}")))?;

        let deadline = Instant::now() + Duration::from_secs(self.timeout_secs);
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) if Instant::now() >= deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(Error::Backend(format!(
                        "{label} timed out after {}s; stderr tail:\n{}",
                        self.timeout_secs,
                        tail(&stderr_path)
                    )));
                }
                Ok(None) => std::thread::sleep(Duration::from_millis(10)),
                Err(e) => return Err(Error::Backend(format!("waiting on {label}: {e}"))),
            }
        };
        if !status.success() {
            return Err(Error::Backend(format!(
                "{label} exited with {status}; stderr tail:\n{}",
                tail(&stderr_path)
            )));
        }
        Ok(())
    }
}

fn tail(path: &Path) -> String {
    const MAX: usize = 2000;
    let text = fs::read_to_string(path).unwrap_or_default();
    let start = text.len().saturating_sub(MAX);
    let start = (start..text.len()).find(|&i| text.is_char_boundary(i)).unwrap_or(text.len());
    text[start..].to_string()
}

fn abs_str(p: &Path) -> String {
    absolute(p).to_string_lossy().into_owned()
}

impl Backend for BackendRef {
    fn train(&self, req: &TrainRequest) -> Result<TrainSummary> {
        let hp = &req.hyperparameters;
        let init = if Path::new(&req.init).exists() {
            abs_str(Path::new(&req.init))
        } else {
            req.init.clone()
        };
        let subs = [
            ("{TRAIN_MANIFEST}", abs_str(&req.train_manifest)),
            ("{VAL_MANIFEST}", abs_str(&req.val_manifest)),
            ("{INIT}", init),
            ("{OUT_DIR}", abs_str(&req.out_dir)),
            ("{LR}", hp.learning_rate.to_string()),
            ("{BATCH}", hp.batch_size.to_string()),
            ("{EPOCHS}", hp.epochs.to_string()),
            ("{FROZEN}", hp.frozen_blocks.to_string()),
            ("{SEED}", req.seed.to_string()),
        ];
        fs::create_dir_all(&req.out_dir).map_err(|e| Error::io(&req.out_dir, e))?;
        self.run(&self.train_command, &subs, &req.out_dir, "train")?;
        read_train_summary(&req.out_dir)
    }

    fn predict(&self, req: &PredictRequest) -> Result<()> {
        let subs = [
            ("{MODEL_DIR}", abs_str(&req.model_dir)),
            ("{MANIFEST}", abs_str(&req.manifest)),
            ("{OUT_FILE}", abs_str(&req.out_file)),
        ];
        let log_dir = req
            .out_file
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        self.run(&self.predict_command, &subs, &log_dir, "predict")?;
        if !req.out_file.is_file() {
            return Err(Error::Protocol(format!(
                "predict exited 0 but wrote no {}",
                req.out_file.display()
            )));
        }
        Ok(())
    }
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;

    fn script_backend(train: &str, predict: &str, timeout_secs: u64) -> BackendRef {
        BackendRef {
            train_command: format!(
                "sh -c '{train}' train {{TRAIN_MANIFEST}} {{VAL_MANIFEST}} {{INIT}} {{OUT_DIR}} {{LR}} {{BATCH}} {{EPOCHS}} {{FROZEN}} {{SEED}}"
            ),
            predict_command: format!("sh -c '{predict}' predict {{MODEL_DIR}} {{MANIFEST}} {{OUT_FILE}}"),
            workdir: PathBuf::from("."),
            timeout_secs,
        }
    }

    fn train_req(dir: &Path) -> TrainRequest {
        TrainRequest {
            train_manifest: dir.join("train.json"),
            val_manifest: dir.join("val.json"),
            init: "coco-pretrained".into(),
            out_dir: dir.join("out"),
            hyperparameters: Hyperparameters::default(),
            seed: 3,
        }
    }

    #[test]
    fn validates_placeholders() {
        let b = BackendRef::new("train {TRAIN_MANIFEST}", "predict {MODEL_DIR} {MANIFEST} {OUT_FILE}");
        match b.validate() {
            Err(Error::Config(msg)) => assert!(msg.contains("{VAL_MANIFEST}")),
            other => panic!("unexpected {other:?}"),
        }
        script_backend("true", "true", 5).validate().unwrap();
    }

    #[test]
    fn substitutes_and_reads_summary() {
        let tmp = tempfile::tempdir().unwrap();
        // $4 = OUT_DIR, $7 = EPOCHS, $5 = LR
        let b = script_backend(
            r#"echo "$3 $5 $6 $7 $8 $9" > "$4/args.txt"; printf "{\"epochs_run\": %s, \"final_val_loss\": 0.25}" "$7" > "$4/train_summary.json""#,
            "true",
            10,
        );
        let s = b.train(&train_req(tmp.path())).unwrap();
        assert_eq!(s, TrainSummary { epochs_run: 30, final_val_loss: 0.25 });
        let args = fs::read_to_string(tmp.path().join("out/args.txt")).unwrap();
        assert_eq!(args.trim(), "coco-pretrained 0.001 8 30 3 3");
    }

    #[test]
    fn nonzero_exit_captures_stderr() {
        let tmp = tempfile::tempdir().unwrap();
        let b = script_backend("echo boom >&2; exit 3", "true", 10);
        match b.train(&train_req(tmp.path())) {
            Err(Error::Backend(msg)) => assert!(msg.contains("boom"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_summary_is_protocol_error() {
        let tmp = tempfile::tempdir().unwrap();
        let b = script_backend("true", "true", 10);
        assert!(matches!(b.train(&train_req(tmp.path())), Err(Error::Protocol(_))));
    }

    #[test]
    fn timeout_kills_backend() {
        let tmp = tempfile::tempdir().unwrap();
        let b = script_backend("sleep 5", "true", 1);
        let start = Instant::now();
        match b.train(&train_req(tmp.path())) {
            Err(Error::Backend(msg)) => assert!(msg.contains("timed out")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(start.elapsed() < Duration::from_secs(4));
    }

    #[test]
    fn predict_must_write_file() {
        let tmp = tempfile::tempdir().unwrap();
        let b = script_backend("true", "true", 10);
        let req = PredictRequest {
            model_dir: tmp.path().to_path_buf(),
            manifest: tmp.path().join("m.json"),
            out_file: tmp.path().join("p.ndjson"),
        };
        assert!(matches!(b.predict(&req), Err(Error::Protocol(_))));
        let b = script_backend("true", r#": > "$3""#, 10);
        b.predict(&req).unwrap();
    }
}
