//! Axis-aligned boxes in absolute pixel corner form and intersection over union.

use serde::{Deserialize, Serialize};

/// Axis-aligned rectangle `(x_min, y_min, x_max, y_max)` in absolute pixels.
///
/// A valid box has finite coordinates and strictly positive width and height.
/// Normalized center form only appears at I/O boundaries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    /// Returns `None` unless all coordinates are finite and the area is positive.
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Option<Self> {
        let b = Self {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        b.is_valid().then_some(b)
    }

    /// From COCO-style `[x, y, w, h]`.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Option<Self> {
        Self::new(x, y, x + w, y + h)
    }

    pub fn is_valid(&self) -> bool {
        [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite())
            && self.x_max > self.x_min
            && self.y_max > self.y_min
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn to_xywh(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.width(), self.height()]
    }

    /// Clamp into `[0, width] x [0, height]`; `None` if nothing with positive area remains.
    pub fn clamp_to(&self, width: f64, height: f64) -> Option<Self> {
        Self::new(
            self.x_min.clamp(0.0, width),
            self.y_min.clamp(0.0, height),
            self.x_max.clamp(0.0, width),
            self.y_max.clamp(0.0, height),
        )
    }

    pub fn within(&self, width: f64, height: f64) -> bool {
        self.x_min >= 0.0 && self.y_min >= 0.0 && self.x_max <= width && self.y_max <= height
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }

    /// Smallest box containing both.
    pub fn union(&self, other: &Self) -> Self {
        Self {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }

    pub fn intersection_area(&self, other: &Self) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Euclidean distance between the closest edges; zero when the boxes touch or overlap.
    pub fn gap(&self, other: &Self) -> f64 {
        let dx = (other.x_min - self.x_max).max(self.x_min - other.x_max).max(0.0);
        let dy = (other.y_min - self.y_max).max(self.y_min - other.y_max).max(0.0);
        dx.hypot(dy)
    }
}

/// Intersection over union of two valid boxes, in `[0, 1]`.
///
/// The computation is symmetric in its arguments, so `iou(a, b) == iou(b, a)`
/// holds bit-for-bit.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}
