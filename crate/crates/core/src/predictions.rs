//! Newline-delimited predictions file shared by evaluation and the backend protocol.
//!
//! Each line is one frame:
//! `{"frame_id": "...", "detections": [{"x_min": .., "y_min": .., "x_max": .., "y_max": .., "confidence": ..}]}`
//! in absolute pixels, UTF-8.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matching::PredictionSet;

pub fn parse_predictions(text: &str, origin: &Path) -> Result<Vec<PredictionSet>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let set: PredictionSet = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        for d in &set.detections {
            if !d.bbox.is_valid() || !(0.0..=1.0).contains(&d.confidence) {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    msg: format!("invalid detection {d:?}"),
                });
            }
        }
        out.push(set);
    }
    Ok(out)
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionSet>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_predictions(&text, path)
}

pub fn render_predictions(sets: &[PredictionSet]) -> String {
    let mut s = String::new();
    for set in sets {
        s.push_str(&serde_json::to_string(set).expect("prediction sets always serialize"));
        s.push('\n');
    }
    s
}

pub fn write_predictions(path: &Path, sets: &[PredictionSet]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(render_predictions(sets).as_bytes())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use crate::matching::Detection;

    #[test]
    fn line_format() {
        let sets = vec![PredictionSet {
            frame_id: "d/a".into(),
            detections: vec![Detection::new(BBox::new(1.0, 2.0, 3.5, 4.0).unwrap(), 0.75)],
        }];
        let text = render_predictions(&sets);
        assert_eq!(
            text,
            "{\"frame_id\":\"d/a\",\"detections\":[{\"x_min\":1.0,\"y_min\":2.0,\"x_max\":3.5,\"y_max\":4.0,\"confidence\":0.75}]}\n"
        );
        assert_eq!(parse_predictions(&text, Path::new("p")).unwrap(), sets);
    }

    #[test]
    fn empty_file_has_no_records() {
        assert!(parse_predictions("", Path::new("p")).unwrap().is_empty());
    }

    #[test]
    fn bad_line_reports_position() {
        let text = "{\"frame_id\":\"a\",\"detections\":[]}\nnot json\n";
        match parse_predictions(text, Path::new("p")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_out_of_range_confidence() {
        let text = "{\"frame_id\":\"a\",\"detections\":[{\"x_min\":0,\"y_min\":0,\"x_max\":1,\"y_max\":1,\"confidence\":1.5}]}";
        assert!(parse_predictions(text, Path::new("p")).is_err());
    }
}
