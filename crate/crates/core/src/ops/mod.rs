//! Dataset-level protocols: seeded ratio splits, k-fold plans, merging,
//! filtering and near-duplicate removal.

mod dedup;
mod phash;
mod split;

use std::collections::HashSet;

use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub use dedup::{dedup, dedup_hashes, hash_dataset, write_dedup_audit, DedupRemoval, DEFAULT_MAX_HAMMING};
pub use phash::{hamming, perceptual_hash};
pub use split::{kfold, largest_remainder_sizes, split, FoldPlan, SplitSpec};

/// Concatenates datasets in order. Frame ids are already namespaced by
/// origin, so a collision means the same frame was supplied twice.
pub fn merge(datasets: &[Dataset], name: &str) -> Result<Dataset> {
    let first = datasets
        .first()
        .ok_or_else(|| Error::Config("merge needs at least one dataset".into()))?;
    if datasets.len() == 1 {
        return Ok(first.clone().renamed(name));
    }
    let root = crate::dataset::absolute(first.root());
    let mut seen = HashSet::new();
    let mut frames = Vec::with_capacity(datasets.iter().map(Dataset::len).sum());
    for d in datasets {
        for f in d.rebased_frames(&root) {
            if !seen.insert(f.frame_id.clone()) {
                return Err(Error::Integrity(format!(
                    "frame_id {} appears in more than one merged dataset",
                    f.frame_id
                )));
            }
            frames.push(f);
        }
    }
    Dataset::new(name, root, frames)
}

/// Drops frames that carry no annotated object.
pub fn filter_no_object_frames(dataset: &Dataset) -> Dataset {
    dataset.filtered(|f| !f.objects.is_empty())
}

/// Drops frames listed in a manual exclusion list (e.g. purely textual slides).
pub fn exclude_frames<'a>(dataset: &Dataset, frame_ids: impl IntoIterator<Item = &'a str>) -> Dataset {
    let ids: HashSet<&str> = frame_ids.into_iter().collect();
    dataset.filtered(|f| !ids.contains(f.frame_id.as_str()))
}

/// Reads an exclusion list: one frame id per line, `#` starts a comment.
pub fn parse_exclusion_list(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}
