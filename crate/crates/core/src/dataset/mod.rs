//! Canonical data model for frames, boxes, annotations and datasets.

mod annotation;
mod coco;
mod manifest;
mod stats;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

pub use annotation::{format_normalized_annotation, parse_normalized_annotation};
pub use coco::{CocoAnnotation, CocoCategory, CocoDocument, CocoImage, COCO_CATEGORY_NAME};
pub use manifest::{load_dataset, save_dataset, AnnotationFormat, Manifest, ManifestFrame, MANIFEST_FILE};
pub(crate) use manifest::write_json;
pub use stats::{compute_stats, BucketCounts, DatasetStats};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Manual,
    Auto,
}

/// One annotated object. `confidence` is present exactly when `source` is `Auto`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthObject {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub source: LabelSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl GroundTruthObject {
    pub fn manual(bbox: BBox) -> Self {
        Self {
            bbox,
            source: LabelSource::Manual,
            confidence: None,
        }
    }

    pub fn auto(bbox: BBox, confidence: f64) -> Self {
        Self {
            bbox,
            source: LabelSource::Auto,
            confidence: Some(confidence),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_id: String,
    /// Relative to the owning dataset's root directory.
    pub image_path: PathBuf,
    pub width: u32,
    pub height: u32,
    pub objects: Vec<GroundTruthObject>,
    /// Name of the dataset the frame was first loaded from.
    pub origin: String,
    /// Set by auto-labeling when every detection fell below the confidence threshold.
    #[serde(default)]
    pub auto_empty: bool,
}

impl FrameRecord {
    pub fn new(
        origin: impl Into<String>,
        image_path: impl Into<PathBuf>,
        width: u32,
        height: u32,
    ) -> Self {
        let origin = origin.into();
        let image_path = image_path.into();
        Self {
            frame_id: frame_id_for(&origin, &image_path),
            image_path,
            width,
            height,
            objects: Vec::new(),
            origin,
            auto_empty: false,
        }
    }

    pub fn with_objects(mut self, objects: Vec<GroundTruthObject>) -> Self {
        self.objects = objects;
        self
    }

    pub fn boxes(&self) -> Vec<BBox> {
        self.objects.iter().map(|o| o.bbox).collect()
    }

    pub fn is_auto_labeled(&self) -> bool {
        self.objects.iter().any(|o| o.source == LabelSource::Auto)
    }
}

/// `<origin>/<image file stem>`.
pub fn frame_id_for(origin: &str, image_path: &Path) -> String {
    let stem = image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    format!("{origin}/{stem}")
}

/// Something dropped or repaired during ingest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestWarning {
    pub frame_id: String,
    pub message: String,
}

/// An ordered collection of frames. Statistics are recomputed whenever the
/// frame list changes, so `stats()` is always consistent with `frames()`.
#[derive(Clone, Debug)]
pub struct Dataset {
    name: String,
    root: PathBuf,
    frames: Vec<FrameRecord>,
    stats: DatasetStats,
    warnings: Vec<IngestWarning>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.frames == other.frames
    }
}

impl Dataset {
    /// Builds a dataset, rejecting duplicate frame ids and out-of-bounds boxes.
    pub fn new(name: impl Into<String>, root: impl Into<PathBuf>, frames: Vec<FrameRecord>) -> Result<Self> {
        let name = name.into();
        check_frames(&frames)?;
        let stats = compute_stats_of(&frames);
        Ok(Self {
            name,
            root: root.into(),
            frames,
            stats,
            warnings: Vec::new(),
        })
    }

    pub fn empty(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            root: PathBuf::from("."),
            frames: Vec::new(),
            stats: DatasetStats::default(),
            warnings: Vec::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Directory that frame `image_path`s are relative to.
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn frames(&self) -> &[FrameRecord] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<FrameRecord> {
        self.frames
    }

    pub fn stats(&self) -> &DatasetStats {
        &self.stats
    }

    pub fn warnings(&self) -> &[IngestWarning] {
        &self.warnings
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, frame_id: &str) -> Option<&FrameRecord> {
        self.frames.iter().find(|f| f.frame_id == frame_id)
    }

    pub fn frame_ids(&self) -> impl Iterator<Item = &str> {
        self.frames.iter().map(|f| f.frame_id.as_str())
    }

    /// Absolute-or-root-relative path of a frame's image.
    pub fn image_path(&self, frame: &FrameRecord) -> PathBuf {
        self.root.join(&frame.image_path)
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// New dataset with the same name and root but a different frame list.
    pub fn with_frames(&self, frames: Vec<FrameRecord>) -> Result<Self> {
        let mut d = Dataset::new(self.name.clone(), self.root.clone(), frames)?;
        d.warnings = self.warnings.clone();
        Ok(d)
    }

    /// Keeps frames for which `keep` returns true, preserving order.
    pub fn filtered(&self, mut keep: impl FnMut(&FrameRecord) -> bool) -> Self {
        let frames: Vec<_> = self.frames.iter().filter(|f| keep(f)).cloned().collect();
        let stats = compute_stats_of(&frames);
        Self {
            name: self.name.clone(),
            root: self.root.clone(),
            frames,
            stats,
            warnings: self.warnings.clone(),
        }
    }

    /// Re-roots every image path so it stays valid relative to `new_root`.
    pub(crate) fn rebased_frames(&self, new_root: &Path) -> Vec<FrameRecord> {
        if self.root == new_root {
            return self.frames.clone();
        }
        let abs_root = absolute(&self.root);
        let abs_new = absolute(new_root);
        self.frames
            .iter()
            .map(|f| {
                let mut f = f.clone();
                let abs_img = abs_root.join(&f.image_path);
                f.image_path = pathdiff::diff_paths(&abs_img, &abs_new).unwrap_or(abs_img);
                f
            })
            .collect()
    }

    pub(crate) fn push_warning(&mut self, w: IngestWarning) {
        self.warnings.push(w);
    }
}

pub(crate) fn absolute(p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        std::env::current_dir()
            .map(|c| c.join(p))
            .unwrap_or_else(|_| p.to_path_buf())
    }
}

fn check_frames(frames: &[FrameRecord]) -> Result<()> {
    let mut seen = HashSet::with_capacity(frames.len());
    for f in frames {
        if !seen.insert(f.frame_id.as_str()) {
            return Err(Error::Integrity(format!("duplicate frame_id {}", f.frame_id)));
        }
        if f.width == 0 || f.height == 0 {
            return Err(Error::Integrity(format!("frame {} has zero size", f.frame_id)));
        }
        let (w, h) = (f64::from(f.width), f64::from(f.height));
        for o in &f.objects {
            if !o.bbox.is_valid() || !o.bbox.within(w, h) {
                return Err(Error::Integrity(format!(
                    "frame {}: box {:?} outside {}x{}",
                    f.frame_id, o.bbox, f.width, f.height
                )));
            }
            if (o.source == LabelSource::Auto) != o.confidence.is_some() {
                return Err(Error::Integrity(format!(
                    "frame {}: confidence must be present exactly for auto labels",
                    f.frame_id
                )));
            }
        }
    }
    Ok(())
}

fn compute_stats_of(frames: &[FrameRecord]) -> DatasetStats {
    stats::stats_from_counts(frames.iter().map(|f| f.objects.len()))
}
