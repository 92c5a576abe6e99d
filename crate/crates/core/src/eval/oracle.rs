//! Brute-force reference evaluator for small instances.
//!
//! Shares no code with the production path: it has its own overlap
//! arithmetic, selection-sort ordering, prefix-count precision/recall and a
//! direct scan over the 101 recall levels. Used to cross-check
//! [`super::evaluate`].

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::matching::PredictionSet;

use super::{MetricsReport, PrCurve, PrPoint, DEFAULT_OPERATING_CONFIDENCE};

pub const MAX_ORACLE_GT: usize = 5;
pub const MAX_ORACLE_DETECTIONS: usize = 8;

fn overlap(a: &BBox, b: &BBox) -> f64 {
    let left = if a.x_min > b.x_min { a.x_min } else { b.x_min };
    let right = if a.x_max < b.x_max { a.x_max } else { b.x_max };
    let top = if a.y_min > b.y_min { a.y_min } else { b.y_min };
    let bottom = if a.y_max < b.y_max { a.y_max } else { b.y_max };
    if right <= left || bottom <= top {
        return 0.0;
    }
    let inter = (right - left) * (bottom - top);
    let area_a = (a.x_max - a.x_min) * (a.y_max - a.y_min);
    let area_b = (b.x_max - b.x_min) * (b.y_max - b.y_min);
    inter / (area_a + area_b - inter)
}

/// Indices by descending confidence via repeated selection; the earliest
/// index wins among equal confidences.
fn selection_order(conf: &[f64]) -> Vec<usize> {
    let mut used = vec![false; conf.len()];
    let mut order = Vec::with_capacity(conf.len());
    for _ in 0..conf.len() {
        let mut pick: Option<usize> = None;
        for i in 0..conf.len() {
            if used[i] {
                continue;
            }
            match pick {
                None => pick = Some(i),
                Some(p) if conf[i] > conf[p] => pick = Some(i),
                _ => {}
            }
        }
        let p = pick.expect("unused index remains");
        used[p] = true;
        order.push(p);
    }
    order
}

/// One pooled detection: confidence, pool position and TP flag per IoU threshold.
struct Entry {
    confidence: f64,
    tp: [bool; 10],
    tp_at_50: bool,
}

fn thresholds() -> [f64; 10] {
    let mut t = [0.0; 10];
    let mut k = 0;
    let mut pct = 50;
    while pct <= 95 {
        t[k] = pct as f64 / 100.0;
        k += 1;
        pct += 5;
    }
    t
}

fn greedy_flags(gt: &[BBox], boxes: &[BBox], thr: f64) -> Vec<bool> {
    let mut taken = vec![false; gt.len()];
    let mut flags = vec![false; boxes.len()];
    for (d, bx) in boxes.iter().enumerate() {
        let mut best_g = usize::MAX;
        let mut best_v = -1.0;
        for (g, gbox) in gt.iter().enumerate() {
            let v = overlap(bx, gbox);
            if !taken[g] && v >= thr && v > best_v {
                best_v = v;
                best_g = g;
            }
        }
        if best_g != usize::MAX {
            taken[best_g] = true;
            flags[d] = true;
        }
    }
    flags
}

/// Interpolated AP by scanning every point for every recall level.
fn scan_ap(points: &[PrPoint]) -> f64 {
    let mut total = 0.0;
    for level in 0..=100 {
        let r = level as f64 / 100.0;
        let mut best = 0.0f64;
        for p in points {
            if p.recall >= r && p.precision > best {
                best = p.precision;
            }
        }
        total += best;
    }
    total / 101.0
}

pub fn oracle_evaluate(dataset: &Dataset, predictions: &[PredictionSet]) -> Result<MetricsReport> {
    oracle_evaluate_at(dataset, predictions, DEFAULT_OPERATING_CONFIDENCE)
}

pub fn oracle_evaluate_at(
    dataset: &Dataset,
    predictions: &[PredictionSet],
    operating_confidence: f64,
) -> Result<MetricsReport> {
    let thr = thresholds();
    let mut entries: Vec<Entry> = Vec::new();
    let mut n_gt = 0usize;
    let mut op_tp = 0usize;
    let mut op_n = 0usize;

    for set in predictions {
        if !dataset.frame_ids().any(|id| id == set.frame_id) {
            return Err(Error::Evaluation(format!("unknown frame_id {}", set.frame_id)));
        }
        if predictions.iter().filter(|s| s.frame_id == set.frame_id).count() > 1 {
            return Err(Error::Evaluation(format!("duplicate prediction set for {}", set.frame_id)));
        }
    }

    for frame in dataset.frames() {
        let gt: Vec<BBox> = frame.objects.iter().map(|o| o.bbox).collect();
        if gt.len() > MAX_ORACLE_GT {
            return Err(Error::OracleRefused(format!(
                "{} has {} ground-truth boxes (limit {MAX_ORACLE_GT})",
                frame.frame_id,
                gt.len()
            )));
        }
        n_gt += gt.len();
        let Some(set) = predictions.iter().find(|s| s.frame_id == frame.frame_id) else {
            continue;
        };
        if set.detections.len() > MAX_ORACLE_DETECTIONS {
            return Err(Error::OracleRefused(format!(
                "{} has {} detections (limit {MAX_ORACLE_DETECTIONS})",
                frame.frame_id,
                set.detections.len()
            )));
        }
        let conf: Vec<f64> = set.detections.iter().map(|d| d.confidence).collect();
        let order = selection_order(&conf);
        let boxes: Vec<BBox> = order.iter().map(|&i| set.detections[i].bbox).collect();
        let per_thr: Vec<Vec<bool>> = thr.iter().map(|&t| greedy_flags(&gt, &boxes, t)).collect();
        for (rank, &i) in order.iter().enumerate() {
            let mut tp = [false; 10];
            for t in 0..10 {
                tp[t] = per_thr[t][rank];
            }
            entries.push(Entry {
                confidence: conf[i],
                tp,
                tp_at_50: tp[0],
            });
        }

        let kept: Vec<BBox> = order
            .iter()
            .filter(|&&i| conf[i] >= operating_confidence)
            .map(|&i| set.detections[i].bbox)
            .collect();
        op_n += kept.len();
        op_tp += greedy_flags(&gt, &kept, 0.5).iter().filter(|&&f| f).count();
    }

    // Stable descending insertion sort over the pool.
    for i in 1..entries.len() {
        let mut j = i;
        while j > 0 && entries[j - 1].confidence < entries[j].confidence {
            entries.swap(j - 1, j);
            j -= 1;
        }
    }

    let mut curves = Vec::with_capacity(10);
    let mut aps = [0.0f64; 10];
    for t in 0..10 {
        let mut points = Vec::with_capacity(entries.len());
        for k in 1..=entries.len() {
            let tp_count = entries[..k].iter().filter(|e| e.tp[t]).count();
            points.push(PrPoint {
                recall: if n_gt == 0 { 0.0 } else { tp_count as f64 / n_gt as f64 },
                precision: tp_count as f64 / k as f64,
            });
        }
        aps[t] = scan_ap(&points);
        curves.push(PrCurve {
            iou_threshold: thr[t],
            points,
        });
    }
    debug_assert!(entries.iter().all(|e| e.tp_at_50 == e.tp[0]));

    let precision = if op_n == 0 { 0.0 } else { op_tp as f64 / op_n as f64 };
    let recall = if n_gt == 0 { 0.0 } else { op_tp as f64 / n_gt as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let mut ap_sum = 0.0;
    for a in aps {
        ap_sum += a;
    }

    Ok(MetricsReport {
        ap50: aps[0],
        ap75: aps[5],
        ap: ap_sum / 10.0,
        precision,
        recall,
        f1,
        operating_confidence,
        n_images: dataset.len(),
        n_ground_truth: n_gt,
        n_detections: entries.len(),
        curves,
    })
}
