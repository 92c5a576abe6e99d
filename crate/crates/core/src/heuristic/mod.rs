//! Neural-free baseline detector.
//!
//! Pipeline: estimate the slide background from the border ring, segment
//! foreground pixels into 8-connected entities, drop text-like entities, then
//! agglomeratively merge entities that are both close together and similar
//! in color.
//!
//! All parameter defaults are engineering choices tuned on the synthetic
//! slide suite in [`crate::synth`].

mod background;
mod cluster;
mod segment;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::matching::{Detection, PredictionSet};

pub use background::estimate_background;
pub use cluster::cluster_entities;
pub use segment::{segment_entities, Entity, HISTOGRAM_BINS};

pub type Color = [f64; 3];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeuristicParams {
    /// Euclidean RGB distance beyond which a pixel is foreground.
    pub bg_tolerance: f64,
    /// Minimum component size in pixels.
    pub min_area: usize,
    /// Minimum width/height ratio of a text-like entity.
    pub text_aspect_min: f64,
    /// Maximum height of a text-like entity as a fraction of image height.
    pub text_height_max: f64,
    /// Maximum merge gap as a fraction of the image diagonal.
    pub merge_gap: f64,
    /// Minimum histogram intersection for two clusters to merge.
    pub color_sim_min: f64,
}

impl Default for HeuristicParams {
    fn default() -> Self {
        Self {
            bg_tolerance: 12.0,
            min_area: 64,
            text_aspect_min: 4.0,
            text_height_max: 0.035,
            merge_gap: 0.02,
            color_sim_min: 0.5,
        }
    }
}

impl HeuristicParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.bg_tolerance,
            self.text_aspect_min,
            self.text_height_max,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.min_area == 0 {
            return Err(Error::Config(format!("heuristic parameters must be positive: {self:?}")));
        }
        if !(self.merge_gap.is_finite() && self.merge_gap >= 0.0) {
            return Err(Error::Config(format!("merge_gap {} must be non-negative", self.merge_gap)));
        }
        if !(0.0..=1.0).contains(&self.color_sim_min) {
            return Err(Error::Config(format!(
                "color_sim_min {} outside [0, 1]",
                self.color_sim_min
            )));
        }
        Ok(())
    }

    /// `merge_gap` in pixels for an image of the given size.
    pub fn merge_gap_px(&self, width: u32, height: u32) -> f64 {
        self.merge_gap * f64::from(width).hypot(f64::from(height))
    }
}

/// Inclusive on both thresholds.
pub fn classify_text_like(entity: &Entity, image_height: u32, params: &HeuristicParams) -> bool {
    let h = entity.bbox.height();
    h <= params.text_height_max * f64::from(image_height) && entity.bbox.width() / h >= params.text_aspect_min
}

/// Full pipeline on one image.
pub fn detect(image: &RgbImage, params: &HeuristicParams) -> Result<Vec<Detection>> {
    params.validate()?;
    if image.width() == 0 || image.height() == 0 {
        return Ok(Vec::new());
    }
    let bg = estimate_background(image);
    let entities: Vec<Entity> = segment_entities(image, bg, params)
        .into_iter()
        .filter(|e| !classify_text_like(e, image.height(), params))
        .collect();
    let dets = cluster_entities(&entities, params, params.merge_gap_px(image.width(), image.height()));
    debug_assert!(dets
        .iter()
        .all(|d| d.bbox.within(f64::from(image.width()), f64::from(image.height()))));
    Ok(dets)
}

/// Runs [`detect`] on every frame of a dataset, in parallel, returning
/// prediction sets in dataset order.
pub fn detect_dataset(dataset: &Dataset, params: &HeuristicParams) -> Result<Vec<PredictionSet>> {
    use rayon::prelude::*;
    dataset
        .frames()
        .par_iter()
        .map(|f| {
            let path = dataset.image_path(f);
            let img = image::open(&path)
                .map_err(|source| Error::Image { path, source })?
                .to_rgb8();
            let mut detections = detect(&img, params)?;
            // Scale back if the stored frame size differs from the decoded image.
            let (sx, sy) = (
                f64::from(f.width) / f64::from(img.width().max(1)),
                f64::from(f.height) / f64::from(img.height().max(1)),
            );
            if sx != 1.0 || sy != 1.0 {
                for d in &mut detections {
                    let b = d.bbox;
                    d.bbox = BBox {
                        x_min: b.x_min * sx,
                        y_min: b.y_min * sy,
                        x_max: b.x_max * sx,
                        y_max: b.y_max * sy,
                    };
                }
            }
            Ok(PredictionSet {
                frame_id: f.frame_id.clone(),
                detections,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn entity(w: f64, h: f64) -> Entity {
        Entity {
            bbox: BBox::new(0.0, 0.0, w, h).unwrap(),
            pixel_count: (w * h) as usize,
            mean_color: [0.0; 3],
            histogram: [1.0 / 24.0; HISTOGRAM_BINS],
        }
    }

    #[test]
    fn text_like_rule() {
        let p = HeuristicParams::default();
        assert!(classify_text_like(&entity(120.0, 6.0), 480, &p));
        assert!(!classify_text_like(&entity(100.0, 100.0), 480, &p));
        // Exactly at both thresholds: height 0.035 * 800 = 28, aspect 4.
        assert!(classify_text_like(&entity(112.0, 28.0), 800, &p));
        assert!(!classify_text_like(&entity(111.9, 28.0), 800, &p));
    }

    #[test]
    fn blank_slide_has_no_detections() {
        let img = RgbImage::from_pixel(320, 240, Rgb([250, 250, 250]));
        assert!(detect(&img, &HeuristicParams::default()).unwrap().is_empty());
    }

    #[test]
    fn invalid_params() {
        let p = HeuristicParams {
            color_sim_min: 1.5,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = HeuristicParams {
            merge_gap: -0.01,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = HeuristicParams {
            merge_gap: 0.0,
            ..Default::default()
        };
        assert!(p.validate().is_ok());
    }
}
