use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::eval::MetricsReport;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub id: String,
    pub train_source: String,
    pub test_source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auto_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_frames: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_frames: Option<usize>,
    /// Length of the final model's lineage, per fold for cross-validated cells.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lineage_lengths: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CellResult {
    pub fn is_ok(&self) -> bool {
        self.error.is_none() && self.metrics.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub tool_version: String,
    pub seed: u64,
    /// SHA-256 of each dataset's frames and images.
    pub dataset_digests: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub cells: Vec<CellResult>,
    pub wall_clock_secs: f64,
    pub fingerprint: Fingerprint,
}

impl ExperimentReport {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn failed_cells(&self) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(|c| !c.is_ok())
    }

    pub fn has_failures(&self) -> bool {
        self.failed_cells().next().is_some()
    }

    pub fn cell(&self, id: &str) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.id == id)
    }

    /// JSON of everything except wall-clock time and fingerprint, for
    /// comparing replays.
    pub fn replay_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("wall_clock_secs");
            obj.remove("fingerprint");
        }
        serde_json::to_string_pretty(&v).expect("value serializes")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
    SvgBars,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "svg_bars" | "svg-bars" | "svg" => Ok(ReportFormat::SvgBars),
            other => Err(Error::Config(format!("unknown report format {other:?}"))),
        }
    }
}

const CSV_HEADER: [&str; 18] = [
    "id",
    "train_source",
    "test_source",
    "variant",
    "fraction",
    "auto_count",
    "train_frames",
    "test_frames",
    "status",
    "ap50",
    "ap75",
    "ap",
    "precision",
    "recall",
    "f1",
    "n_ground_truth",
    "n_detections",
    "error",
];

/// Writes the report in each requested format into `out_dir` and returns
/// the files written.
pub fn emit_report(report: &ExperimentReport, formats: &[ReportFormat], out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut formats = formats.to_vec();
    formats.sort();
    formats.dedup();
    let mut written = Vec::new();
    for f in formats {
        let path = match f {
            ReportFormat::Csv => {
                let p = out_dir.join("report.csv");
                write_csv(report, &p)?;
                p
            }
            ReportFormat::Json => {
                let p = out_dir.join("report.json");
                crate::dataset::write_json(&p, report)?;
                p
            }
            ReportFormat::SvgBars => {
                let p = out_dir.join("report.svg");
                fs::write(&p, render_svg(report)).map_err(|e| Error::io(&p, e))?;
                p
            }
        };
        written.push(path);
    }
    Ok(written)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_csv(report: &ExperimentReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    w.write_record(CSV_HEADER)?;
    for c in &report.cells {
        let m = c.metrics.as_ref();
        let metric = |f: fn(&MetricsReport) -> f64| m.map(|m| format!("{:.6}", f(m))).unwrap_or_default();
        w.write_record([
            c.id.clone(),
            c.train_source.clone(),
            c.test_source.clone(),
            opt(c.variant.clone()),
            opt(c.fraction),
            opt(c.auto_count),
            opt(c.train_frames),
            opt(c.test_frames),
            if c.is_ok() { "ok".into() } else { "failed".into() },
            metric(|m| m.ap50),
            metric(|m| m.ap75),
            metric(|m| m.ap),
            metric(|m| m.precision),
            metric(|m| m.recall),
            metric(|m| m.f1),
            opt(m.map(|m| m.n_ground_truth)),
            opt(m.map(|m| m.n_detections)),
            opt(c.error.clone()),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Grouped bar chart: one group per cell, AP50 and AP bars.
pub(crate) fn render_svg(report: &ExperimentReport) -> String {
    const GROUP_W: f64 = 56.0;
    const BAR_W: f64 = 20.0;
    const PLOT_H: f64 = 200.0;
    const LEFT: f64 = 40.0;
    const TOP: f64 = 30.0;
    let n = report.cells.len();
    let width = LEFT + GROUP_W * n.max(1) as f64 + 20.0;
    let height = TOP + PLOT_H + 120.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(
        s,
        r##"<text x="{LEFT}" y="14">AP50 (dark) and AP (light) per cell</text>"##
    );
    for tick in 0..=4 {
        let v = f64::from(tick) * 0.25;
        let y = TOP + PLOT_H * (1.0 - v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/><text x="4" y="{}">{v:.2}</text>"##,
            width - 20.0,
            y + 3.0
        );
    }
    for (i, c) in report.cells.iter().enumerate() {
        let x0 = LEFT + GROUP_W * i as f64 + 6.0;
        match &c.metrics {
            Some(m) if c.error.is_none() => {
                for (k, (v, color)) in [(m.ap50, "#1f4e79"), (m.ap, "#8fb8de")].into_iter().enumerate() {
                    let h = PLOT_H * v.clamp(0.0, 1.0);
                    let _ = writeln!(
                        s,
                        r#"<rect x="{:.1}" y="{:.3}" width="{BAR_W}" height="{h:.3}" fill="{color}"><title>{}: {v:.4}</title></rect>"#,
                        x0 + BAR_W * k as f64,
                        TOP + PLOT_H - h,
                        escape(&c.id)
                    );
                }
            }
            _ => {
                let _ = writeln!(
                    s,
                    r##"<text x="{:.1}" y="{}" fill="#b00">failed</text>"##,
                    x0,
                    TOP + PLOT_H - 4.0
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text transform="translate({:.1},{}) rotate(60)">{}</text>"#,
            x0 + 4.0,
            TOP + PLOT_H + 10.0,
            escape(&c.id)
        );
    }
    s.push_str("</svg>\n");
    s
}
