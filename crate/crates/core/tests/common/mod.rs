#![allow(dead_code)]

use slidedet_core::rng::SplitMix64;
use slidedet_core::{BBox, Dataset, Detection, FrameRecord, GroundTruthObject, PredictionSet};

pub const CANVAS: u32 = 200;

pub struct SceneLimits {
    pub max_frames: usize,
    pub max_gt: usize,
    pub max_dets: usize,
}

pub const SMALL: SceneLimits = SceneLimits { max_frames: 20, max_gt: 5, max_dets: 8 };

fn random_box(rng: &mut SplitMix64) -> BBox {
    let w = 5.0 + rng.next_f64() * 60.0;
    let h = 5.0 + rng.next_f64() * 60.0;
    let x = rng.next_f64() * (f64::from(CANVAS) - w);
    let y = rng.next_f64() * (f64::from(CANVAS) - h);
    BBox::new(x, y, x + w, y + h).unwrap()
}

fn jittered(b: BBox, rng: &mut SplitMix64) -> BBox {
    let (w, h) = (b.width(), b.height());
    let mut j = |s: f64| (rng.next_f64() * 2.0 - 1.0) * 0.3 * s;
    let moved = BBox { x_min: b.x_min + j(w), y_min: b.y_min + j(h), x_max: b.x_max + j(w), y_max: b.y_max + j(h) };
    moved.clamp_to(f64::from(CANVAS), f64::from(CANVAS)).unwrap_or(b)
}

/// Random frames with GT boxes and detections, many of them near some GT
/// and some with tied confidences.
pub fn random_scene(seed: u64, limits: &SceneLimits) -> (Dataset, Vec<PredictionSet>) {
    const GRID: [f64; 6] = [0.2, 0.4, 0.5, 0.6, 0.8, 1.0];
    let mut rng = SplitMix64::new(seed);
    let n_frames = 1 + rng.bounded(limits.max_frames as u64) as usize;
    let mut frames = Vec::new();
    let mut preds = Vec::new();
    for i in 0..n_frames {
        let n_gt = rng.bounded(limits.max_gt as u64 + 1) as usize;
        let gt: Vec<BBox> = (0..n_gt).map(|_| random_box(&mut rng)).collect();
        let n_det = rng.bounded(limits.max_dets as u64 + 1) as usize;
        let dets = (0..n_det)
            .map(|_| {
                let b = if !gt.is_empty() && rng.next_f64() < 0.6 {
                    jittered(gt[rng.bounded(gt.len() as u64) as usize], &mut rng)
                } else {
                    random_box(&mut rng)
                };
                let c = if rng.next_f64() < 0.3 { GRID[rng.bounded(6) as usize] } else { rng.next_f64() };
                Detection::new(b, c)
            })
            .collect();
        let f = FrameRecord::new("scene", format!("f{i:03}.png"), CANVAS, CANVAS)
            .with_objects(gt.into_iter().map(GroundTruthObject::manual).collect());
        preds.push(PredictionSet { frame_id: f.frame_id.clone(), detections: dets });
        frames.push(f);
    }
    (Dataset::new("scene", ".", frames).unwrap(), preds)
}

pub fn max_coordinate_error(a: &Dataset, b: &Dataset) -> f64 {
    let mut worst: f64 = 0.0;
    for (fa, fb) in a.frames().iter().zip(b.frames()) {
        for (oa, ob) in fa.objects.iter().zip(&fb.objects) {
            for (x, y) in [
                (oa.bbox.x_min, ob.bbox.x_min),
                (oa.bbox.y_min, ob.bbox.y_min),
                (oa.bbox.x_max, ob.bbox.x_max),
                (oa.bbox.y_max, ob.bbox.y_max),
            ] {
                worst = worst.max((x - y).abs() / f64::from(fa.width.max(fa.height)));
            }
        }
    }
    worst
}

/// Same frame ids, order and object counts.
pub fn same_shape(a: &Dataset, b: &Dataset) -> bool {
    a.len() == b.len()
        && a.frames()
            .iter()
            .zip(b.frames())
            .all(|(x, y)| x.frame_id == y.frame_id && x.objects.len() == y.objects.len())
}
