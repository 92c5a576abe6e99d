//! Manifest-driven loading and saving of datasets.
//!
//! A manifest is a JSON document listing frames with paths relative to the
//! manifest's directory:
//!
//! ```json
//! {
//!   "name": "LVVO_1k",
//!   "frames": [
//!     {"frame_id": "LVVO_1k/f0001", "image_path": "images/f0001.png",
//!      "width": 1280, "height": 720, "annotation_path": "labels/f0001.txt"}
//!   ]
//! }
//! ```
//!
//! With `"format": "coco_document"` the per-frame `annotation_path` is unused
//! and objects come from the document named by `coco_annotations`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::annotation::{format_normalized_annotation, parse_normalized_annotation};
use super::coco::{CocoAnnotation, CocoCategory, CocoDocument, CocoImage};
use super::{Dataset, FrameRecord, GroundTruthObject, IngestWarning, LabelSource};
use crate::error::{AnnotationError, Error, Result};
use crate::geometry::BBox;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationFormat {
    #[default]
    NormalizedText,
    CocoDocument,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    #[serde(default)]
    pub format: AnnotationFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coco_annotations: Option<PathBuf>,
    pub frames: Vec<ManifestFrame>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestFrame {
    pub frame_id: String,
    pub image_path: PathBuf,
    pub width: u32,
    pub height: u32,
    /// Absent for unlabeled frames.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation_path: Option<PathBuf>,
    /// Defaults to the manifest name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub auto_empty: bool,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

/// Loads every frame listed in a manifest, clamping boxes to image bounds.
///
/// Boxes that have no area after clamping are dropped and recorded in
/// [`Dataset::warnings`].
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = Manifest::read(manifest_path)?;
    let root = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let root = if root.as_os_str().is_empty() {
        PathBuf::from(".")
    } else {
        root
    };

    let mut warnings = Vec::new();
    let coco = match manifest.format {
        AnnotationFormat::CocoDocument => {
            let rel = manifest.coco_annotations.as_ref().ok_or_else(|| {
                Error::Config(format!(
                    "{}: coco_document manifest needs coco_annotations",
                    manifest_path.display()
                ))
            })?;
            let path = root.join(rel);
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let doc: CocoDocument = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
            Some(index_coco(doc))
        }
        AnnotationFormat::NormalizedText => None,
    };

    let mut frames = Vec::with_capacity(manifest.frames.len());
    for mf in &manifest.frames {
        if mf.width == 0 || mf.height == 0 {
            return Err(Error::Load {
                frame_id: mf.frame_id.clone(),
                msg: "width and height must be positive".into(),
            });
        }
        let image = root.join(&mf.image_path);
        if !image.is_file() {
            return Err(Error::Load {
                frame_id: mf.frame_id.clone(),
                msg: format!("missing image file {}", image.display()),
            });
        }
        let objects = match (&coco, &mf.annotation_path) {
            (Some(index), _) => {
                let anns = index
                    .get(&mf.frame_id)
                    .or_else(|| index.get(&mf.image_path.to_string_lossy().into_owned()))
                    .cloned()
                    .unwrap_or_default();
                objects_from_coco(mf, &anns, &mut warnings)
            }
            (None, Some(rel)) => read_normalized_file(&root.join(rel), mf, &mut warnings)?,
            (None, None) => Vec::new(),
        };
        frames.push(FrameRecord {
            frame_id: mf.frame_id.clone(),
            image_path: mf.image_path.clone(),
            width: mf.width,
            height: mf.height,
            objects,
            origin: mf.origin.clone().unwrap_or_else(|| manifest.name.clone()),
            auto_empty: mf.auto_empty,
        });
    }

    let mut dataset = Dataset::new(manifest.name, root, frames)?;
    for w in warnings {
        log::warn!("{}: {}", w.frame_id, w.message);
        dataset.push_warning(w);
    }
    Ok(dataset)
}

fn index_coco(doc: CocoDocument) -> HashMap<String, Vec<CocoAnnotation>> {
    let keys: HashMap<u64, String> = doc
        .images
        .iter()
        .map(|im| (im.id, im.frame_id.clone().unwrap_or_else(|| im.file_name.clone())))
        .collect();
    let mut out: HashMap<String, Vec<CocoAnnotation>> = HashMap::new();
    for im in &doc.images {
        out.entry(keys[&im.id].clone()).or_default();
    }
    for ann in doc.annotations {
        if let Some(key) = keys.get(&ann.image_id) {
            out.entry(key.clone()).or_default().push(ann);
        }
    }
    out
}

fn objects_from_coco(
    mf: &ManifestFrame,
    anns: &[CocoAnnotation],
    warnings: &mut Vec<IngestWarning>,
) -> Vec<GroundTruthObject> {
    let (w, h) = (f64::from(mf.width), f64::from(mf.height));
    let mut out = Vec::with_capacity(anns.len());
    for ann in anns {
        let [x, y, bw, bh] = ann.bbox;
        let raw = BBox {
            x_min: x,
            y_min: y,
            x_max: x + bw,
            y_max: y + bh,
        };
        match raw.clamp_to(w, h) {
            Some(b) => out.push(match ann.score {
                Some(s) => GroundTruthObject::auto(b, s),
                None => GroundTruthObject::manual(b),
            }),
            None => warnings.push(IngestWarning {
                frame_id: mf.frame_id.clone(),
                message: format!("annotation {} dropped: no area inside the image", ann.id),
            }),
        }
    }
    out
}

/// Lines with a sixth field carry the confidence of an auto-generated label.
fn read_normalized_file(
    path: &Path,
    mf: &ManifestFrame,
    warnings: &mut Vec<IngestWarning>,
) -> Result<Vec<GroundTruthObject>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Load {
        frame_id: mf.frame_id.clone(),
        msg: format!("cannot read annotation file {}: {e}", path.display()),
    })?;
    let mut out = Vec::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim();
        if line.is_empty() {
            continue;
        }
        let annotation_err = |source| Error::Annotation {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let (body, confidence) = if tokens.len() == 6 {
            let c: f64 = tokens[5].parse().map_err(|_| {
                annotation_err(AnnotationError::Number {
                    field: "confidence",
                    token: tokens[5].to_string(),
                })
            })?;
            if !(0.0..=1.0).contains(&c) {
                return Err(annotation_err(AnnotationError::Range {
                    field: "confidence",
                    value: c,
                }));
            }
            (tokens[..5].join(" "), Some(c))
        } else {
            (line.to_string(), None)
        };
        match parse_normalized_annotation(&body, mf.width, mf.height) {
            Ok(mut obj) => {
                if let Some(c) = confidence {
                    obj = GroundTruthObject::auto(obj.bbox, c);
                }
                out.push(obj);
            }
            Err(AnnotationError::Degenerate) => warnings.push(IngestWarning {
                frame_id: mf.frame_id.clone(),
                message: format!("{}:{}: box dropped, no area after clamping", path.display(), i + 1),
            }),
            Err(e) => return Err(annotation_err(e)),
        }
    }
    Ok(out)
}

fn label_file_name(index: usize, frame_id: &str) -> String {
    let safe: String = frame_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect();
    format!("{index:06}_{safe}.txt")
}

/// Writes annotations and a manifest into `out_dir` and returns the manifest path.
///
/// Image paths are rewritten relative to `out_dir`; images are not copied.
pub fn save_dataset(dataset: &Dataset, out_dir: &Path, format: AnnotationFormat) -> Result<PathBuf> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let frames = dataset.rebased_frames(out_dir);

    let mut manifest = Manifest {
        name: dataset.name().to_string(),
        format,
        coco_annotations: None,
        frames: Vec::with_capacity(frames.len()),
    };

    match format {
        AnnotationFormat::NormalizedText => {
            let labels = out_dir.join("labels");
            fs::create_dir_all(&labels).map_err(|e| Error::io(&labels, e))?;
            for (i, f) in frames.iter().enumerate() {
                let rel = PathBuf::from("labels").join(label_file_name(i, &f.frame_id));
                let mut body = String::new();
                for o in &f.objects {
                    body.push_str(&format_normalized_annotation(&o.bbox, f.width, f.height));
                    if let (LabelSource::Auto, Some(c)) = (o.source, o.confidence) {
                        body.push(' ');
                        body.push_str(&c.to_string());
                    }
                    body.push('\n');
                }
                let path = out_dir.join(&rel);
                fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
                manifest.frames.push(manifest_frame(f, dataset.name(), Some(rel)));
            }
        }
        AnnotationFormat::CocoDocument => {
            let mut doc = CocoDocument {
                categories: vec![CocoCategory::visual_object()],
                ..Default::default()
            };
            let mut next_ann = 1u64;
            for (i, f) in frames.iter().enumerate() {
                let image_id = i as u64 + 1;
                doc.images.push(CocoImage {
                    id: image_id,
                    file_name: f.image_path.to_string_lossy().into_owned(),
                    width: f.width,
                    height: f.height,
                    frame_id: Some(f.frame_id.clone()),
                });
                for o in &f.objects {
                    doc.annotations.push(CocoAnnotation {
                        id: next_ann,
                        image_id,
                        category_id: 1,
                        bbox: o.bbox.to_xywh(),
                        area: o.bbox.area(),
                        iscrowd: 0,
                        score: o.confidence,
                    });
                    next_ann += 1;
                }
                manifest.frames.push(manifest_frame(f, dataset.name(), None));
            }
            let rel = PathBuf::from("annotations.json");
            write_json(&out_dir.join(&rel), &doc)?;
            manifest.coco_annotations = Some(rel);
        }
    }

    let path = out_dir.join(MANIFEST_FILE);
    write_json(&path, &manifest)?;
    Ok(path)
}

fn manifest_frame(f: &FrameRecord, dataset_name: &str, annotation_path: Option<PathBuf>) -> ManifestFrame {
    ManifestFrame {
        frame_id: f.frame_id.clone(),
        image_path: f.image_path.clone(),
        width: f.width,
        height: f.height,
        annotation_path,
        origin: (f.origin != dataset_name).then(|| f.origin.clone()),
        auto_empty: f.auto_empty,
    }
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
