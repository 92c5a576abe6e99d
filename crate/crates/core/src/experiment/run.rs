use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, ExperimentKind};
use super::report::{CellResult, ExperimentReport, Fingerprint};
use crate::dataset::{load_dataset, Dataset};
use crate::enrich::{predict_dataset, train_step, Backend, EnrichmentSession, Init, ModelRef, StrategyOutcome};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::ops::{merge, split, SplitSpec};
use crate::rng::SplitMix64;

const WORK_DIR: &str = "work";
pub const REPORT_FILE: &str = "report.json";

struct Splits {
    train: Dataset,
    val: Dataset,
    test: Dataset,
}

/// How a job's model starts training.
enum JobInit<'a> {
    Pretrained,
    Prior(&'a Result<ModelRef>),
}

/// One model trained and then evaluated on each of `tests`.
struct Job<'a> {
    label: String,
    train_source: String,
    variant: Option<String>,
    fraction: Option<f64>,
    init: JobInit<'a>,
    train: Result<Dataset>,
    val: Dataset,
    tests: Vec<(&'a str, &'a Dataset)>,
}

/// Runs every cell of `config`'s experiment and writes `report.json` into
/// the output directory.
///
/// Config problems are returned as errors before any cell runs. Cell
/// failures are recorded in the report. Intermediate files go to
/// `<output_dir>/work`, which is cleared first.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let start = Instant::now();
    let work = config.output_dir.join(WORK_DIR);
    if work.exists() {
        fs::remove_dir_all(&work).map_err(|e| Error::io(&work, e))?;
    }
    fs::create_dir_all(&work).map_err(|e| Error::io(&work, e))?;

    let mut datasets = BTreeMap::new();
    for (name, path) in &config.datasets {
        datasets.insert(name.clone(), load_dataset(path)?.renamed(name.clone()));
    }
    let mut digests: BTreeMap<String, String> =
        datasets.iter().map(|(n, d)| (n.clone(), dataset_digest(d))).collect();
    if let Some(u) = &config.unlabeled {
        digests.insert("unlabeled".into(), dataset_digest(&load_dataset(u)?));
    }

    let backend = config.backend.instantiate();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;

    let cells = match config.kind {
        ExperimentKind::Enrichment | ExperimentKind::Incremental => {
            run_enrichment(config, &datasets, backend.as_ref(), &work)
        }
        _ => {
            let splits = split_all(config, &datasets)?;
            run_grid(config, &splits, backend.as_ref(), &work, &pool)?
        }
    };

    let report = ExperimentReport {
        config: config.clone(),
        cells,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        fingerprint: Fingerprint {
            tool_version: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
            seed: config.seed,
            dataset_digests: digests,
        },
    };
    crate::dataset::write_json(&config.output_dir.join(REPORT_FILE), &report)?;
    Ok(report)
}

/// SHA-256 over the canonical JSON of the frame records followed by every
/// image file's bytes, in frame order.
pub fn dataset_digest(dataset: &Dataset) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(dataset.frames()).expect("frames serialize"));
    for f in dataset.frames() {
        match fs::read(dataset.image_path(f)) {
            Ok(bytes) => h.update(bytes),
            Err(_) => h.update(b"<missing>"),
        }
    }
    hex::encode(h.finalize())
}

fn split_all(config: &ExperimentConfig, datasets: &BTreeMap<String, Dataset>) -> Result<BTreeMap<String, Splits>> {
    let spec = SplitSpec::new(&config.split_ratios, &["train", "val", "test"], config.seed);
    datasets
        .iter()
        .map(|(name, d)| {
            let mut parts = split(d, &spec)?.into_iter();
            let (train, val, test) = (
                parts.next().expect("three parts"),
                parts.next().expect("three parts"),
                parts.next().expect("three parts"),
            );
            Ok((name.clone(), Splits { train, val, test }))
        })
        .collect()
}

/// Seeded subset of `n` frames, kept in dataset order. Smaller `n` with the
/// same seed gives a subset of larger `n`.
fn sample(d: &Dataset, n: usize, seed: u64) -> Dataset {
    let order = SplitMix64::new(seed).permutation(d.len());
    let keep: HashSet<&str> = order[..n.min(d.len())]
        .iter()
        .map(|&i| d.frames()[i].frame_id.as_str())
        .collect();
    d.filtered(|f| keep.contains(f.frame_id.as_str()))
}

fn merge_parts<'a>(parts: impl Iterator<Item = &'a Dataset>, name: &str) -> Result<Dataset> {
    let parts: Vec<Dataset> = parts.cloned().collect();
    merge(&parts, name)
}

fn run_grid(
    config: &ExperimentConfig,
    splits: &BTreeMap<String, Splits>,
    backend: &dyn Backend,
    work: &Path,
    pool: &rayon::ThreadPool,
) -> Result<Vec<CellResult>> {
    let all_tests = || -> Vec<(&str, &Dataset)> { splits.iter().map(|(n, s)| (n.as_str(), &s.test)).collect() };
    let job = |label: String, train_source: &str, train: Result<Dataset>, val: Dataset, tests| Job {
        label,
        train_source: train_source.to_string(),
        variant: None,
        fraction: None,
        init: JobInit::Pretrained,
        train,
        val,
        tests,
    };
    let prior: Result<ModelRef>;
    let mut jobs = Vec::new();
    match config.kind {
        ExperimentKind::Single => {
            let t = config.target_name()?;
            let s = &splits[t];
            jobs.push(job(format!("single:{t}"), t, Ok(s.train.clone()), s.val.clone(), vec![(t, &s.test)]));
        }
        ExperimentKind::CrossDatasetMatrix => {
            for (name, s) in splits {
                jobs.push(job(format!("cross:{name}"), name, Ok(s.train.clone()), s.val.clone(), all_tests()));
            }
        }
        ExperimentKind::JointTraining => {
            let val = merge_parts(splits.values().map(|s| &s.val), "joint_val")?;
            let full = merge_parts(splits.values().map(|s| &s.train), "joint_full");
            jobs.push(job("joint:full".into(), "joint_full", full, val.clone(), all_tests()));
            let cap = config.joint_cap();
            let capped: Vec<Dataset> = splits.values().map(|s| sample(&s.train, cap, config.seed)).collect();
            let capped = merge(&capped, "joint_capped");
            jobs.push(job("joint:capped".into(), "joint_capped", capped, val, all_tests()));
            for (name, s) in splits {
                let mut j = job(format!("joint:baseline:{name}"), name, Ok(s.train.clone()), s.val.clone(), vec![(name.as_str(), &s.test)]);
                j.variant = Some("baseline".into());
                jobs.push(j);
            }
            for j in jobs.iter_mut().take(2) {
                j.variant = Some(j.train_source.trim_start_matches("joint_").to_string());
            }
        }
        ExperimentKind::DataFraction => {
            let t = config.target_name()?;
            let target = &splits[t];
            let others: Vec<&Splits> = splits.iter().filter(|(n, _)| n.as_str() != t).map(|(_, s)| s).collect();
            let other_train = merge_parts(others.iter().map(|s| &s.train), "prior_train");
            let other_val = merge_parts(others.iter().map(|s| &s.val), "prior_val");
            prior = match (other_train, other_val) {
                (Ok(tr), Ok(va)) => train_step(
                    backend,
                    &Init::Pretrained(config.pretrained.clone()),
                    &tr,
                    &va,
                    &config.hyperparameters,
                    config.seed,
                    &work.join("prior"),
                ),
                (Err(e), _) | (_, Err(e)) => Err(e),
            };
            for f in config.fractions() {
                let n = ((f * target.train.len() as f64).round() as usize).max(1);
                let subset = sample(&target.train, n, config.seed);
                for (variant, init) in [("direct", JobInit::Pretrained), ("prior", JobInit::Prior(&prior))] {
                    jobs.push(Job {
                        label: format!("fraction:{f}:{variant}"),
                        train_source: t.to_string(),
                        variant: Some(variant.into()),
                        fraction: Some(f),
                        init,
                        train: Ok(subset.clone()),
                        val: target.val.clone(),
                        tests: vec![(t, &target.test)],
                    });
                }
            }
        }
        ExperimentKind::Enrichment | ExperimentKind::Incremental => unreachable!("handled separately"),
    }
    let results: Vec<Vec<CellResult>> = pool.install(|| {
        jobs.par_iter()
            .enumerate()
            .map(|(i, j)| run_job(config, backend, j, &work.join(format!("job{i:03}"))))
            .collect()
    });
    Ok(results.into_iter().flatten().collect())
}

fn run_job(config: &ExperimentConfig, backend: &dyn Backend, job: &Job<'_>, dir: &Path) -> Vec<CellResult> {
    let mut cells: Vec<CellResult> = job
        .tests
        .iter()
        .map(|(test_name, test)| CellResult {
            id: if job.tests.len() == 1 { job.label.clone() } else { format!("{}:{test_name}", job.label) },
            train_source: job.train_source.clone(),
            test_source: test_name.to_string(),
            variant: job.variant.clone(),
            fraction: job.fraction,
            auto_count: None,
            train_frames: job.train.as_ref().ok().map(Dataset::len),
            test_frames: Some(test.len()),
            lineage_lengths: None,
            metrics: None,
            error: None,
        })
        .collect();
    let fail_all = |cells: &mut Vec<CellResult>, msg: String| {
        log::error!("{}: {msg}", job.label);
        cells.iter_mut().for_each(|c| c.error = Some(msg.clone()));
    };
    let train = match &job.train {
        Ok(t) => t,
        Err(e) => {
            fail_all(&mut cells, e.to_string());
            return cells;
        }
    };
    let init = match &job.init {
        JobInit::Pretrained => Init::Pretrained(config.pretrained.clone()),
        JobInit::Prior(Ok(m)) => Init::Model(m.clone()),
        JobInit::Prior(Err(e)) => {
            fail_all(&mut cells, format!("prior fine-tuning failed: {e}"));
            return cells;
        }
    };
    let train_ids: HashSet<&str> = train.frame_ids().chain(job.val.frame_ids()).collect();
    for (cell, (_, test)) in cells.iter_mut().zip(&job.tests) {
        if let Some(id) = test.frame_ids().find(|id| train_ids.contains(id)) {
            cell.error = Some(Error::Integrity(format!("frame {id} is in both training and test data")).to_string());
        }
    }
    if cells.iter().all(|c| c.error.is_some()) {
        return cells;
    }
    let model = match train_step(backend, &init, train, &job.val, &config.hyperparameters, config.seed, &dir.join("train")) {
        Ok(m) => m,
        Err(e) => {
            fail_all(&mut cells, e.to_string());
            return cells;
        }
    };
    for (i, (cell, (_, test))) in cells.iter_mut().zip(&job.tests).enumerate() {
        if cell.error.is_some() {
            continue;
        }
        cell.lineage_lengths = Some(vec![model.lineage.len()]);
        let outcome = predict_dataset(backend, &model, test, &dir.join(format!("test{i}")))
            .and_then(|p| evaluate(test, &p, config.operating_confidence));
        match outcome {
            Ok(m) => cell.metrics = Some(m),
            Err(e) => cell.error = Some(e.to_string()),
        }
    }
    cells
}

fn run_enrichment(
    config: &ExperimentConfig,
    datasets: &BTreeMap<String, Dataset>,
    backend: &dyn Backend,
    work: &Path,
) -> Vec<CellResult> {
    let target = config.target_name().expect("validated").to_string();
    let labeled = datasets[&target].clone();
    let unlabeled = config.unlabeled.clone().expect("validated");
    let strategy = config.strategy.unwrap_or(crate::enrich::Strategy::Comprehensive);
    let base_cell = |id: String| CellResult {
        id,
        train_source: format!("{target}+auto"),
        test_source: target.clone(),
        variant: None,
        fraction: None,
        auto_count: None,
        train_frames: None,
        test_frames: Some(labeled.len()),
        lineage_lengths: None,
        metrics: None,
        error: None,
    };
    let fill = |mut cell: CellResult, r: Result<StrategyOutcome>| {
        match r {
            Ok(o) => {
                cell.variant = Some(o.strategy.name().into());
                cell.train_frames = o.train_sizes.first().copied();
                cell.lineage_lengths = Some(o.lineage_lengths());
                cell.metrics = Some(o.report);
            }
            Err(e) => cell.error = Some(e.to_string()),
        }
        cell
    };
    let (ids, cells_of): (Vec<String>, Vec<Option<usize>>) = match config.kind {
        ExperimentKind::Enrichment => config
            .strategies()
            .iter()
            .map(|s| (format!("enrichment:{}", s.name()), None))
            .unzip(),
        _ => config
            .increments
            .clone()
            .unwrap_or_default()
            .iter()
            .map(|&c| (format!("incremental:{c}"), Some(c)))
            .unzip(),
    };
    let mut session = match EnrichmentSession::new(
        labeled.clone(),
        &unlabeled,
        config.enrichment_config(strategy),
        backend,
        &work.join("enrichment"),
    ) {
        Ok(s) => s,
        Err(e) => {
            return ids
                .into_iter()
                .map(|id| {
                    let mut cell = base_cell(id);
                    cell.error = Some(e.to_string());
                    cell
                })
                .collect()
        }
    };
    match config.kind {
        ExperimentKind::Enrichment => config
            .strategies()
            .into_iter()
            .zip(ids)
            .map(|(s, id)| {
                let mut cell = base_cell(id);
                cell.variant = Some(s.name().into());
                if s == crate::enrich::Strategy::Baseline {
                    cell.train_source = target.clone();
                }
                let r = session.run_strategy(s);
                if let Ok(o) = &r {
                    cell.auto_count = Some(o.auto_frames);
                }
                fill(cell, r)
            })
            .collect(),
        _ => cells_of
            .into_iter()
            .zip(ids)
            .map(|(c, id)| {
                let c = c.expect("increment count");
                let mut cell = base_cell(id);
                cell.auto_count = Some(c);
                let r = session
                    .incremental(&[c])
                    .and_then(|mut v| v.pop().map(|o| o.outcome).ok_or_else(|| Error::Evaluation("no outcome".into())));
                fill(cell, r)
            })
            .collect(),
    }
}
