use super::segment::{Entity, HISTOGRAM_BINS};
use super::HeuristicParams;
use crate::geometry::BBox;
use crate::matching::Detection;

struct Cluster {
    bbox: BBox,
    pixels: usize,
    /// Pixel-weighted histogram sum; divide by `pixels` to normalize.
    hist: [f64; HISTOGRAM_BINS],
}

impl Cluster {
    fn similarity(&self, other: &Cluster) -> f64 {
        let (na, nb) = (self.pixels as f64, other.pixels as f64);
        self.hist
            .iter()
            .zip(&other.hist)
            .map(|(a, b)| (a / na).min(b / nb))
            .sum()
    }
}

fn canonical_order(a: &Entity, b: &Entity) -> std::cmp::Ordering {
    let key = |e: &Entity| [e.bbox.x_min, e.bbox.y_min, e.bbox.x_max, e.bbox.y_max];
    let (ka, kb) = (key(a), key(b));
    ka.iter()
        .zip(&kb)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
        .then(a.pixel_count.cmp(&b.pixel_count))
}

/// Agglomerative merging on spatial proximity and color similarity.
///
/// Repeatedly merges the pair of clusters with the smallest box gap among
/// pairs whose gap is at most `merge_gap_px` and whose histogram intersection
/// is at least `color_sim_min`. Ties go to the lowest index pair. Entities
/// are first put in a canonical geometric order, so the result does not depend
/// on input order. Each surviving cluster becomes a detection on its union
/// box with confidence `min(1, coverage + 0.25)`.
pub fn cluster_entities(entities: &[Entity], params: &HeuristicParams, merge_gap_px: f64) -> Vec<Detection> {
    let mut sorted: Vec<&Entity> = entities.iter().collect();
    sorted.sort_by(|a, b| canonical_order(a, b));

    let mut clusters: Vec<Cluster> = sorted
        .iter()
        .map(|e| Cluster {
            bbox: e.bbox,
            pixels: e.pixel_count,
            hist: std::array::from_fn(|i| e.histogram[i] * e.pixel_count as f64),
        })
        .collect();

    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let gap = clusters[i].bbox.gap(&clusters[j].bbox);
                if gap > merge_gap_px || best.is_some_and(|(g, _, _)| gap >= g) {
                    continue;
                }
                if clusters[i].similarity(&clusters[j]) >= params.color_sim_min {
                    best = Some((gap, i, j));
                }
            }
        }
        let Some((_, i, j)) = best else { break };
        let other = clusters.remove(j);
        let c = &mut clusters[i];
        c.bbox = c.bbox.union(&other.bbox);
        c.pixels += other.pixels;
        for (a, b) in c.hist.iter_mut().zip(other.hist) {
            *a += b;
        }
    }

    clusters
        .into_iter()
        .map(|c| {
            let coverage = c.pixels as f64 / c.bbox.area();
            Detection::new(c.bbox, (coverage + 0.25).clamp(0.0, 1.0))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solid(x0: f64, y0: f64, x1: f64, y1: f64, bin: usize) -> Entity {
        let bbox = BBox::new(x0, y0, x1, y1).unwrap();
        let mut histogram = [0.0; HISTOGRAM_BINS];
        for c in 0..3 {
            histogram[c * 8 + (bin + c) % 8] = 1.0 / 3.0;
        }
        Entity {
            bbox,
            pixel_count: bbox.area() as usize,
            mean_color: [0.0; 3],
            histogram,
        }
    }

    #[test]
    fn single_entity_is_identity() {
        let e = solid(10.0, 10.0, 30.0, 40.0, 2);
        let d = cluster_entities(std::slice::from_ref(&e), &HeuristicParams::default(), 16.0);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].bbox, e.bbox);
        assert_eq!(d[0].confidence, 1.0);
    }

    #[test]
    fn close_same_color_merge() {
        let a = solid(0.0, 0.0, 20.0, 20.0, 1);
        let b = solid(25.0, 0.0, 45.0, 20.0, 1);
        let d = cluster_entities(&[a, b], &HeuristicParams::default(), 16.0);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].bbox, BBox::new(0.0, 0.0, 45.0, 20.0).unwrap());
        // coverage 800 / 900
        assert!((d[0].confidence - 1.0).abs() < 1e-12);
    }

    #[test]
    fn close_different_color_stay_apart() {
        let a = solid(0.0, 0.0, 20.0, 20.0, 1);
        let b = solid(25.0, 0.0, 45.0, 20.0, 5);
        assert_eq!(cluster_entities(&[a, b], &HeuristicParams::default(), 16.0).len(), 2);
    }

    #[test]
    fn far_same_color_stay_apart() {
        let a = solid(0.0, 0.0, 20.0, 20.0, 1);
        let b = solid(60.0, 0.0, 80.0, 20.0, 1);
        assert_eq!(cluster_entities(&[a, b], &HeuristicParams::default(), 16.0).len(), 2);
    }

    #[test]
    fn sparse_cluster_has_lower_confidence() {
        let a = solid(0.0, 0.0, 10.0, 10.0, 1);
        let b = solid(0.0, 20.0, 10.0, 30.0, 1);
        let c = solid(20.0, 0.0, 30.0, 10.0, 1);
        let d = cluster_entities(&[a, b, c], &HeuristicParams::default(), 16.0);
        assert_eq!(d.len(), 1);
        // 300 px over a 30x30 box
        assert!((d[0].confidence - (300.0 / 900.0 + 0.25)).abs() < 1e-12);
    }

    #[test]
    fn order_invariant() {
        let es = vec![
            solid(0.0, 0.0, 10.0, 10.0, 1),
            solid(14.0, 0.0, 24.0, 10.0, 1),
            solid(28.0, 0.0, 38.0, 10.0, 3),
            solid(100.0, 100.0, 120.0, 120.0, 1),
        ];
        let mut rev = es.clone();
        rev.reverse();
        let p = HeuristicParams::default();
        assert_eq!(cluster_entities(&es, &p, 16.0), cluster_entities(&rev, &p, 16.0));
    }
}
