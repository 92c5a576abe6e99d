//! Single-class detection metrics: AP at fixed IoU thresholds, AP averaged
//! over IoU 0.50:0.05:0.95, and precision/recall/F1 at an operating confidence.
//!
//! Detections are pooled across all frames (not macro-averaged per frame),
//! each frame keeps at most [`MAX_DETECTIONS_PER_IMAGE`] detections by
//! descending confidence, and AP is 101-point interpolated.

pub mod oracle;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::matching::{confidence_order, match_detections, Detection, PredictionSet};

pub const MAX_DETECTIONS_PER_IMAGE: usize = 100;
pub const DEFAULT_OPERATING_CONFIDENCE: f64 = 0.5;
pub const RECALL_LEVELS: usize = 101;

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn iou_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

/// Raw precision/recall after each pooled detection, by descending confidence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub iou_threshold: f64,
    pub points: Vec<PrPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ap50: f64,
    pub ap75: f64,
    pub ap: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub operating_confidence: f64,
    pub n_images: usize,
    pub n_ground_truth: usize,
    pub n_detections: usize,
    /// One curve per IoU threshold in [`iou_thresholds`] order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curves: Vec<PrCurve>,
}

impl MetricsReport {
    pub fn without_curves(mut self) -> Self {
        self.curves.clear();
        self
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Per-frame detections aligned with the dataset's frame order, capped and
/// sorted by descending confidence.
struct Aligned<'a> {
    dataset: &'a Dataset,
    detections: Vec<Vec<Detection>>,
}

fn align<'a>(dataset: &'a Dataset, predictions: &[PredictionSet]) -> Result<Aligned<'a>> {
    let index: HashMap<&str, usize> = dataset.frame_ids().enumerate().map(|(i, id)| (id, i)).collect();
    let mut detections: Vec<Option<Vec<Detection>>> = vec![None; dataset.len()];
    for set in predictions {
        let &i = index
            .get(set.frame_id.as_str())
            .ok_or_else(|| Error::Evaluation(format!("unknown frame_id {}", set.frame_id)))?;
        if detections[i].is_some() {
            return Err(Error::Evaluation(format!("duplicate prediction set for {}", set.frame_id)));
        }
        let order = confidence_order(&set.detections);
        detections[i] = Some(
            order
                .into_iter()
                .take(MAX_DETECTIONS_PER_IMAGE)
                .map(|k| set.detections[k])
                .collect(),
        );
    }
    Ok(Aligned {
        dataset,
        detections: detections.into_iter().map(Option::unwrap_or_default).collect(),
    })
}

impl Aligned<'_> {
    fn n_ground_truth(&self) -> usize {
        self.dataset.stats().n_objects
    }

    fn n_detections(&self) -> usize {
        self.detections.iter().map(Vec::len).sum()
    }

    fn curve(&self, iou_threshold: f64) -> PrCurve {
        // (confidence, is_tp) in pool order: frame order, then per-frame rank.
        let mut pooled: Vec<(f64, bool)> = Vec::with_capacity(self.n_detections());
        for (frame, dets) in self.dataset.frames().iter().zip(&self.detections) {
            let m = match_detections(&frame.boxes(), dets, iou_threshold);
            let tp = m.true_positive_flags(dets.len());
            pooled.extend(dets.iter().zip(tp).map(|(d, t)| (d.confidence, t)));
        }
        pooled.sort_by(|a, b| b.0.total_cmp(&a.0));

        let n_gt = self.n_ground_truth() as f64;
        let mut tp = 0usize;
        let mut points = Vec::with_capacity(pooled.len());
        for (k, &(_, is_tp)) in pooled.iter().enumerate() {
            tp += usize::from(is_tp);
            points.push(PrPoint {
                recall: if n_gt > 0.0 { tp as f64 / n_gt } else { 0.0 },
                precision: tp as f64 / (k + 1) as f64,
            });
        }
        PrCurve {
            iou_threshold,
            points,
        }
    }

    fn operating_point(&self, iou_threshold: f64, min_confidence: f64) -> (f64, f64) {
        let mut tp = 0usize;
        let mut n = 0usize;
        for (frame, dets) in self.dataset.frames().iter().zip(&self.detections) {
            let kept: Vec<Detection> = dets.iter().filter(|d| d.confidence >= min_confidence).copied().collect();
            n += kept.len();
            tp += match_detections(&frame.boxes(), &kept, iou_threshold).pairs.len();
        }
        let precision = if n > 0 { tp as f64 / n as f64 } else { 0.0 };
        let n_gt = self.n_ground_truth();
        let recall = if n_gt > 0 { tp as f64 / n_gt as f64 } else { 0.0 };
        (precision, recall)
    }
}

/// Precision/recall curve at one IoU threshold. Frames without a prediction
/// set count as having no detections.
pub fn pr_curve(dataset: &Dataset, predictions: &[PredictionSet], iou_threshold: f64) -> Result<PrCurve> {
    Ok(align(dataset, predictions)?.curve(iou_threshold))
}

/// 101-point interpolated AP: the mean over recall levels `r = 0.00..=1.00`
/// of the highest precision reached at any recall `>= r`.
pub fn average_precision(curve: &PrCurve) -> f64 {
    let n = curve.points.len();
    if n == 0 {
        return 0.0;
    }
    let mut envelope: Vec<f64> = curve.points.iter().map(|p| p.precision).collect();
    for i in (0..n - 1).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut sum = 0.0;
    let mut ptr = 0;
    for level in 0..RECALL_LEVELS {
        let r = level as f64 / 100.0;
        while ptr < n && curve.points[ptr].recall < r {
            ptr += 1;
        }
        if ptr == n {
            break;
        }
        sum += envelope[ptr];
    }
    sum / RECALL_LEVELS as f64
}

/// Full metrics report. P/R/F1 use IoU 0.50 and only detections with
/// confidence `>= operating_confidence`.
pub fn evaluate(dataset: &Dataset, predictions: &[PredictionSet], operating_confidence: f64) -> Result<MetricsReport> {
    if !(0.0..=1.0).contains(&operating_confidence) {
        return Err(Error::Config(format!(
            "operating confidence {operating_confidence} outside [0, 1]"
        )));
    }
    let aligned = align(dataset, predictions)?;
    let thresholds = iou_thresholds();
    let curves: Vec<PrCurve> = thresholds.iter().map(|&t| aligned.curve(t)).collect();
    let aps: Vec<f64> = curves.iter().map(average_precision).collect();
    let (precision, recall) = aligned.operating_point(0.5, operating_confidence);
    Ok(MetricsReport {
        ap50: aps[0],
        ap75: aps[5],
        ap: aps.iter().sum::<f64>() / aps.len() as f64,
        precision,
        recall,
        f1: f1_score(precision, recall),
        operating_confidence,
        n_images: dataset.len(),
        n_ground_truth: aligned.n_ground_truth(),
        n_detections: aligned.n_detections(),
        curves,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub confidence: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// P/R/F1 at IoU 0.50 for several operating confidences, so the sensitivity of
/// F1 to the chosen cutoff can be reported alongside the headline number.
pub fn operating_sweep(
    dataset: &Dataset,
    predictions: &[PredictionSet],
    confidences: &[f64],
) -> Result<Vec<OperatingPoint>> {
    let aligned = align(dataset, predictions)?;
    Ok(confidences
        .iter()
        .map(|&c| {
            let (p, r) = aligned.operating_point(0.5, c);
            OperatingPoint {
                confidence: c,
                precision: p,
                recall: r,
                f1: f1_score(p, r),
            }
        })
        .collect())
}
