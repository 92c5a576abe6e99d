//! The one-object-per-line normalized text format: `cls xc yc w h`.

use crate::error::AnnotationError;
use crate::geometry::BBox;

use super::GroundTruthObject;

const RANGE_TOLERANCE: f64 = 1e-6;
const FIELDS: [&str; 4] = ["x_center", "y_center", "width", "height"];

/// Parses one `cls xc yc w h` line against a `width` x `height` image.
///
/// The class index is checked to be a number and then discarded. The result is
/// a manual label clamped to the image.
pub fn parse_normalized_annotation(
    line: &str,
    width: u32,
    height: u32,
) -> Result<GroundTruthObject, AnnotationError> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 5 {
        return Err(AnnotationError::FieldCount(tokens.len()));
    }
    let class: f64 = tokens[0].parse().map_err(|_| AnnotationError::Number {
        field: "class",
        token: tokens[0].to_string(),
    })?;
    if !class.is_finite() || class < 0.0 {
        return Err(AnnotationError::Number {
            field: "class",
            token: tokens[0].to_string(),
        });
    }
    let mut v = [0.0f64; 4];
    for (i, tok) in tokens[1..].iter().enumerate() {
        let x: f64 = tok.parse().map_err(|_| AnnotationError::Number {
            field: FIELDS[i],
            token: tok.to_string(),
        })?;
        if !x.is_finite() || !(-RANGE_TOLERANCE..=1.0 + RANGE_TOLERANCE).contains(&x) {
            return Err(AnnotationError::Range {
                field: FIELDS[i],
                value: x,
            });
        }
        v[i] = x;
    }
    let [xc, yc, w, h] = v;
    let (fw, fh) = (f64::from(width), f64::from(height));
    let raw = BBox {
        x_min: (xc - w / 2.0) * fw,
        y_min: (yc - h / 2.0) * fh,
        x_max: (xc + w / 2.0) * fw,
        y_max: (yc + h / 2.0) * fh,
    };
    raw.clamp_to(fw, fh)
        .map(GroundTruthObject::manual)
        .ok_or(AnnotationError::Degenerate)
}

/// Emits `0 xc yc w h` with six decimals.
pub fn format_normalized_annotation(bbox: &BBox, width: u32, height: u32) -> String {
    let (fw, fh) = (f64::from(width), f64::from(height));
    let xc = (bbox.x_min + bbox.x_max) / 2.0 / fw;
    let yc = (bbox.y_min + bbox.y_max) / 2.0 / fh;
    let w = bbox.width() / fw;
    let h = bbox.height() / fh;
    format!("0 {xc:.6} {yc:.6} {w:.6} {h:.6}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_frame() {
        let o = parse_normalized_annotation("0 0.5 0.5 1.0 1.0", 640, 480).unwrap();
        assert_eq!(o.bbox, BBox::new(0.0, 0.0, 640.0, 480.0).unwrap());
    }

    #[test]
    fn arithmetic_example() {
        let o = parse_normalized_annotation("0 0.5 0.5 0.25 0.5", 400, 200).unwrap();
        assert_eq!(o.bbox, BBox::new(150.0, 50.0, 250.0, 150.0).unwrap());
    }

    #[test]
    fn class_is_discarded() {
        let a = parse_normalized_annotation("3 0.5 0.5 0.25 0.5", 400, 200).unwrap();
        let b = parse_normalized_annotation("0 0.5 0.5 0.25 0.5", 400, 200).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn four_fields_is_an_error() {
        assert_eq!(
            parse_normalized_annotation("0 0.5 0.5 0.25", 400, 200),
            Err(AnnotationError::FieldCount(4))
        );
    }

    #[test]
    fn out_of_range() {
        assert!(matches!(
            parse_normalized_annotation("0 1.2 0.5 0.25 0.5", 400, 200),
            Err(AnnotationError::Range { field: "x_center", .. })
        ));
        // Within tolerance is accepted.
        assert!(parse_normalized_annotation("0 1.0000005 0.5 0.25 0.5", 400, 200).is_ok());
    }

    #[test]
    fn overflow_is_clamped() {
        let o = parse_normalized_annotation("0 0.95 0.5 0.2 0.2", 100, 100).unwrap();
        assert_eq!(o.bbox.x_max, 100.0);
        assert!((o.bbox.x_min - 85.0).abs() < 1e-9);
    }

    #[test]
    fn zero_width_is_degenerate() {
        assert_eq!(
            parse_normalized_annotation("0 0.5 0.5 0.0 0.5", 400, 200),
            Err(AnnotationError::Degenerate)
        );
    }

    #[test]
    fn not_a_number() {
        assert!(matches!(
            parse_normalized_annotation("0 0.5 abc 0.25 0.5", 400, 200),
            Err(AnnotationError::Number { field: "y_center", .. })
        ));
    }

    proptest! {
        #[test]
        fn well_formed_lines_parse_in_bounds(
            xc in 0.0..=1.0f64, yc in 0.0..=1.0f64,
            w in 1e-3..=1.0f64, h in 1e-3..=1.0f64,
            width in 1u32..4000, height in 1u32..4000,
        ) {
            let line = format!("0 {xc} {yc} {w} {h}");
            let o = parse_normalized_annotation(&line, width, height);
            // Degenerate only when the box falls entirely off one edge after clamping,
            // which cannot happen for w, h > 0 and a center inside the image.
            let o = o.unwrap();
            prop_assert!(o.bbox.within(f64::from(width), f64::from(height)));
        }
    }
}
