use image::{GrayImage, Luma, RgbImage};
use imageproc::region_labelling::{connected_components, Connectivity};

use super::{Color, HeuristicParams};
use crate::geometry::BBox;

/// 8 bins for each of R, G and B, concatenated.
pub const HISTOGRAM_BINS: usize = 24;

/// A connected foreground component.
#[derive(Clone, Debug, PartialEq)]
pub struct Entity {
    /// Pixel-edge box: a component covering columns `x0..=x1` spans `[x0, x1 + 1)`.
    pub bbox: BBox,
    pub pixel_count: usize,
    pub mean_color: Color,
    /// Normalized so all 24 bins sum to one.
    pub histogram: [f64; HISTOGRAM_BINS],
}

#[derive(Clone)]
struct Accum {
    x0: u32,
    y0: u32,
    x1: u32,
    y1: u32,
    count: u64,
    sums: [u64; 3],
    hist: [u64; HISTOGRAM_BINS],
}

/// Foreground = farther than `bg_tolerance` from `bg` in RGB space, grouped
/// into 8-connected components. Components smaller than `min_area` pixels
/// are discarded. Output order follows the labelling's raster order.
pub fn segment_entities(image: &RgbImage, bg: Color, params: &HeuristicParams) -> Vec<Entity> {
    let (w, h) = image.dimensions();
    let tol2 = params.bg_tolerance * params.bg_tolerance;
    let mask = GrayImage::from_fn(w, h, |x, y| {
        let p = image.get_pixel(x, y).0;
        let d2: f64 = (0..3).map(|c| (f64::from(p[c]) - bg[c]).powi(2)).sum();
        Luma([if d2 > tol2 { 255 } else { 0 }])
    });
    let labels = connected_components(&mask, Connectivity::Eight, Luma([0u8]));

    let mut acc: Vec<Option<Accum>> = Vec::new();
    for (x, y, label) in labels.enumerate_pixels() {
        let l = label.0[0] as usize;
        if l == 0 {
            continue;
        }
        if acc.len() <= l {
            acc.resize(l + 1, None);
        }
        let p = image.get_pixel(x, y).0;
        let a = acc[l].get_or_insert(Accum {
            x0: x,
            y0: y,
            x1: x,
            y1: y,
            count: 0,
            sums: [0; 3],
            hist: [0; HISTOGRAM_BINS],
        });
        a.x0 = a.x0.min(x);
        a.y0 = a.y0.min(y);
        a.x1 = a.x1.max(x);
        a.y1 = a.y1.max(y);
        a.count += 1;
        for c in 0..3 {
            a.sums[c] += u64::from(p[c]);
            a.hist[c * 8 + usize::from(p[c] / 32)] += 1;
        }
    }

    acc.into_iter()
        .flatten()
        .filter(|a| a.count as usize >= params.min_area)
        .map(|a| {
            let n = a.count as f64;
            let total = 3.0 * n;
            Entity {
                bbox: BBox {
                    x_min: f64::from(a.x0),
                    y_min: f64::from(a.y0),
                    x_max: f64::from(a.x1 + 1),
                    y_max: f64::from(a.y1 + 1),
                },
                pixel_count: a.count as usize,
                mean_color: [a.sums[0] as f64 / n, a.sums[1] as f64 / n, a.sums[2] as f64 / n],
                histogram: std::array::from_fn(|i| a.hist[i] as f64 / total),
            }
        })
        .collect()
}
