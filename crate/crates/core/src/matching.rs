//! Confidence-ordered greedy matching of detections to ground truth.

use serde::{Deserialize, Serialize};

use crate::geometry::{iou, BBox};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(flatten)]
    pub bbox: BBox,
    pub confidence: f64,
}

impl Detection {
    pub fn new(bbox: BBox, confidence: f64) -> Self {
        Self { bbox, confidence }
    }
}

/// All detections for one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub frame_id: String,
    pub detections: Vec<Detection>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchedPair {
    pub detection: usize,
    pub ground_truth: usize,
    pub iou: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    /// In processing order (descending confidence).
    pub pairs: Vec<MatchedPair>,
    /// False positives, ascending index.
    pub unmatched_detections: Vec<usize>,
    /// False negatives, ascending index.
    pub unmatched_ground_truth: Vec<usize>,
    pub iou_threshold: f64,
}

impl MatchResult {
    /// Per-detection flag: true when the detection was matched.
    pub fn true_positive_flags(&self, n_detections: usize) -> Vec<bool> {
        let mut flags = vec![false; n_detections];
        for p in &self.pairs {
            flags[p.detection] = true;
        }
        flags
    }
}

/// Detection indices sorted by descending confidence; ties keep input order.
pub fn confidence_order(detections: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[b].confidence.total_cmp(&detections[a].confidence));
    order
}

/// Greedy COCO-convention matching.
///
/// Detections are visited by descending confidence (ties: input order). Each
/// claims the still-unmatched ground truth with the highest IoU, provided that
/// IoU is at least `iou_threshold`; equal IoUs go to the lowest ground-truth
/// index.
pub fn match_detections(ground_truth: &[BBox], detections: &[Detection], iou_threshold: f64) -> MatchResult {
    let mut gt_taken = vec![false; ground_truth.len()];
    let mut det_matched = vec![false; detections.len()];
    let mut pairs = Vec::new();

    for d in confidence_order(detections) {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in ground_truth.iter().enumerate() {
            if gt_taken[g] {
                continue;
            }
            let v = iou(&detections[d].bbox, gt);
            if v < iou_threshold {
                continue;
            }
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, v)) = best {
            gt_taken[g] = true;
            det_matched[d] = true;
            pairs.push(MatchedPair {
                detection: d,
                ground_truth: g,
                iou: v,
            });
        }
    }

    MatchResult {
        pairs,
        unmatched_detections: (0..detections.len()).filter(|&i| !det_matched[i]).collect(),
        unmatched_ground_truth: (0..ground_truth.len()).filter(|&i| !gt_taken[i]).collect(),
        iou_threshold,
    }
}
