use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use slidedet_core::dataset::{load_dataset, save_dataset, AnnotationFormat};
use slidedet_core::enrich::backend::{PredictRequest, TrainRequest};
use slidedet_core::enrich::mock::{mock_predict, mock_train};
use slidedet_core::enrich::{auto_label, Hyperparameters, ModelRef, MockBehavior, MODEL_REF_FILE};
use slidedet_core::eval::{evaluate, operating_sweep, DEFAULT_OPERATING_CONFIDENCE};
use slidedet_core::experiment::{emit_report, run_experiment, BackendConfig, ExperimentConfig, ExperimentReport, ReportFormat};
use slidedet_core::heuristic::{detect_dataset, HeuristicParams};
use slidedet_core::ops::{dedup, exclude_frames, filter_no_object_frames, kfold, merge, parse_exclusion_list, split, write_dedup_audit, SplitSpec, DEFAULT_MAX_HAMMING};
use slidedet_core::predictions::{read_predictions, write_predictions};
use slidedet_core::Dataset;

const EXIT_ERROR: u8 = 1;
const EXIT_PARTIAL: u8 = 2;

#[derive(Parser)]
#[command(name = "slidedet", version, about = "Evaluate, curate and enrich lecture-frame object detection datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score a predictions file against a dataset.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, default_value_t = DEFAULT_OPERATING_CONFIDENCE)]
        operating_confidence: f64,
        /// Also report precision/recall/F1 at these confidences.
        #[arg(long, value_delimiter = ',')]
        sweep: Vec<f64>,
        /// Keep the precision-recall curves in the output.
        #[arg(long)]
        curves: bool,
    },
    /// Seeded split into named parts.
    Split {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.8,0.2")]
        ratios: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "train,val")]
        names: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Write a seeded k-fold plan.
    Kfold {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Concatenate datasets.
    Merge {
        #[arg(long = "dataset", required = true)]
        datasets: Vec<PathBuf>,
        #[arg(long)]
        name: String,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Drop frames without objects or listed in an exclusion file.
    Filter {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        no_object_frames: bool,
        /// File with one frame id per line.
        #[arg(long)]
        exclude: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Remove near-duplicate frames by perceptual hash.
    Dedup {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_HAMMING)]
        max_hamming: u32,
        /// CSV of removals; defaults to dedup_audit.csv in the output directory.
        #[arg(long)]
        audit: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Label unlabeled frames with a trained model.
    Autolabel {
        /// JSON backend config, as in experiment configs.
        #[arg(long)]
        backend: PathBuf,
        /// Model directory or a model_ref.json.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        unlabeled: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run the segmentation and clustering detector.
    HeuristicDetect {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON file with detector parameters; missing fields take defaults.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Experiment grids.
    Experiment {
        #[command(subcommand)]
        action: ExperimentAction,
    },
    /// Re-emit a saved experiment report.
    Report {
        report: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "csv,json,svg_bars")]
        formats: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    #[command(hide = true)]
    MockBackend(MockArgs),
}

#[derive(Subcommand)]
enum ExperimentAction {
    Run {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "csv,json,svg_bars")]
        formats: Vec<String>,
    },
}

#[derive(Args)]
struct OutArgs {
    /// Output directory; a manifest.json is written there.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::NormalizedText)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    NormalizedText,
    Coco,
}

impl From<Format> for AnnotationFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::NormalizedText => AnnotationFormat::NormalizedText,
            Format::Coco => AnnotationFormat::CocoDocument,
        }
    }
}

#[derive(Args)]
struct MockArgs {
    #[arg(long, value_enum, default_value_t = Behavior::EchoGt)]
    behavior: Behavior,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
    #[arg(long)]
    fixed_file: Option<PathBuf>,
    #[command(subcommand)]
    step: MockStep,
}

#[derive(Clone, Copy, ValueEnum)]
enum Behavior {
    EchoGt,
    PerturbGt,
    FixedFile,
}

#[derive(Subcommand)]
enum MockStep {
    Train {
        #[arg(long)]
        train_manifest: PathBuf,
        #[arg(long)]
        val_manifest: PathBuf,
        #[arg(long)]
        init: String,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        lr: f64,
        #[arg(long)]
        batch: u32,
        #[arg(long)]
        epochs: u32,
        #[arg(long)]
        frozen: u32,
        #[arg(long)]
        seed: u64,
    },
    Predict {
        #[arg(long)]
        model_dir: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_file: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_ERROR) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn load(path: &Path) -> Result<Dataset> {
    load_dataset(path).with_context(|| format!("loading {}", path.display()))
}

fn save(d: &Dataset, out: &OutArgs) -> Result<()> {
    let manifest = save_dataset(d, &out.out, out.format.into())?;
    println!("{} frames -> {}", d.len(), manifest.display());
    Ok(())
}

fn parse_formats(names: &[String]) -> Result<Vec<ReportFormat>> {
    Ok(names.iter().map(|s| s.parse()).collect::<slidedet_core::Result<_>>()?)
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Eval { dataset, predictions, operating_confidence, sweep, curves } => {
            let d = load(&dataset)?;
            let p = read_predictions(&predictions)?;
            let report = evaluate(&d, &p, operating_confidence)?;
            let report = if curves { report } else { report.without_curves() };
            let mut out = serde_json::to_value(&report)?;
            if !sweep.is_empty() {
                out["sweep"] = serde_json::to_value(operating_sweep(&d, &p, &sweep)?)?;
            }
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Split { dataset, ratios, names, seed, out } => {
            let d = load(&dataset)?;
            let names: Vec<&str> = names.iter().map(String::as_str).collect();
            let spec = SplitSpec::new(&ratios, &names, seed);
            let parts = split(&d, &spec)?;
            fs::create_dir_all(&out.out)?;
            fs::write(out.out.join("split_spec.json"), serde_json::to_string_pretty(&spec)?)?;
            for (name, part) in names.iter().zip(&parts) {
                let sub = OutArgs { out: out.out.join(name), format: out.format };
                save(part, &sub)?;
            }
        }
        Command::Kfold { dataset, k, seed, out } => {
            let d = load(&dataset)?;
            let plan = kfold(&d, k, seed)?;
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(&out, serde_json::to_string_pretty(&plan)?)?;
            println!("fold sizes {:?} -> {}", plan.fold_sizes(), out.display());
        }
        Command::Merge { datasets, name, out } => {
            let loaded = datasets.iter().map(|p| load(p)).collect::<Result<Vec<_>>>()?;
            save(&merge(&loaded, &name)?, &out)?;
        }
        Command::Filter { dataset, no_object_frames, exclude, out } => {
            let mut d = load(&dataset)?;
            if no_object_frames {
                d = filter_no_object_frames(&d);
            }
            if let Some(path) = exclude {
                let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                let ids = parse_exclusion_list(&text);
                d = exclude_frames(&d, ids.iter().map(String::as_str));
            }
            save(&d, &out)?;
        }
        Command::Dedup { dataset, max_hamming, audit, out } => {
            let d = load(&dataset)?;
            let (kept, removals) = dedup(&d, max_hamming)?;
            save(&kept, &out)?;
            let audit = audit.unwrap_or_else(|| out.out.join("dedup_audit.csv"));
            write_dedup_audit(&audit, &removals)?;
            println!("removed {} near-duplicates, audit -> {}", removals.len(), audit.display());
        }
        Command::Autolabel { backend, model, unlabeled, threshold, out } => {
            let text = fs::read_to_string(&backend).with_context(|| format!("reading {}", backend.display()))?;
            let backend: BackendConfig = serde_json::from_str(&text)
                .map_err(|e| slidedet_core::Error::Config(format!("{}: {e}", backend.display())))?;
            backend.validate()?;
            let model = if model.is_file() {
                ModelRef::read(&model)?
            } else if model.join(MODEL_REF_FILE).is_file() {
                ModelRef::read(&model.join(MODEL_REF_FILE))?
            } else {
                ModelRef { path: model, lineage: Vec::new() }
            };
            let labeled = auto_label(backend.instantiate().as_ref(), &model, &unlabeled, threshold, &out.out.join("autolabel"))?;
            let empty = labeled.frames().iter().filter(|f| f.auto_empty).count();
            save(&labeled, &out)?;
            println!("{empty} frames kept no detection at threshold {threshold}");
        }
        Command::HeuristicDetect { dataset, out, params } => {
            let params: HeuristicParams = match params {
                Some(p) => {
                    let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    serde_json::from_str(&text)
                        .map_err(|e| slidedet_core::Error::Config(format!("{}: {e}", p.display())))?
                }
                None => HeuristicParams::default(),
            };
            let d = load(&dataset)?;
            let preds = detect_dataset(&d, &params)?;
            write_predictions(&out, &preds)?;
            let n: usize = preds.iter().map(|p| p.detections.len()).sum();
            println!("{n} detections on {} frames -> {}", preds.len(), out.display());
        }
        Command::Experiment { action: ExperimentAction::Run { config, formats } } => {
            let formats = parse_formats(&formats)?;
            let config = ExperimentConfig::load(&config)?;
            let report = run_experiment(&config)?;
            for f in emit_report(&report, &formats, &config.output_dir)? {
                println!("{}", f.display());
            }
            return Ok(summarize(&report));
        }
        Command::Report { report, formats, out } => {
            let formats = parse_formats(&formats)?;
            let report = ExperimentReport::read(&report)?;
            for f in emit_report(&report, &formats, &out)? {
                println!("{}", f.display());
            }
        }
        Command::MockBackend(args) => run_mock(args)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn summarize(report: &ExperimentReport) -> ExitCode {
    let failed: Vec<_> = report.failed_cells().collect();
    for c in &failed {
        eprintln!("cell {} failed: {}", c.id, c.error.as_deref().unwrap_or("no metrics"));
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("{} of {} cells failed", failed.len(), report.cells.len());
        ExitCode::from(EXIT_PARTIAL)
    }
}

fn run_mock(args: MockArgs) -> Result<()> {
    let behavior = match args.behavior {
        Behavior::EchoGt => MockBehavior::EchoGt,
        Behavior::PerturbGt => MockBehavior::PerturbGt { noise: args.noise, seed: args.noise_seed },
        Behavior::FixedFile => match args.fixed_file {
            Some(path) => MockBehavior::FixedFile { path },
            None => bail!("--behavior fixed-file needs --fixed-file"),
        },
    };
    match args.step {
        MockStep::Train { train_manifest, val_manifest, init, out_dir, lr, batch, epochs, frozen, seed } => {
            let hyperparameters = Hyperparameters { learning_rate: lr, batch_size: batch, epochs, frozen_blocks: frozen };
            mock_train(&behavior, &TrainRequest { train_manifest, val_manifest, init, out_dir, hyperparameters, seed })?;
        }
        MockStep::Predict { model_dir, manifest, out_file } => {
            mock_predict(&behavior, &PredictRequest { model_dir, manifest, out_file })?;
        }
    }
    Ok(())
}
