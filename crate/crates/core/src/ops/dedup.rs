//! Near-duplicate removal by difference-hash distance.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

use super::phash::{hamming, perceptual_hash};

pub const DEFAULT_MAX_HAMMING: u32 = 10;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupRemoval {
    pub kept_id: String,
    pub removed_id: String,
    pub distance: u32,
}

/// Hashes every frame image, in parallel, in dataset order.
pub fn hash_dataset(dataset: &Dataset) -> Result<Vec<u64>> {
    dataset
        .frames()
        .par_iter()
        .map(|f| {
            let path = dataset.image_path(f);
            let img = image::open(&path).map_err(|source| Error::Image { path, source })?;
            Ok(perceptual_hash(&img.to_rgb8()))
        })
        .collect()
}

/// Sequential kept-set scan over precomputed hashes.
///
/// Returns the kept indices and, for each removed index, the earliest kept
/// index within `max_hamming` and its distance.
pub fn dedup_hashes(hashes: &[u64], max_hamming: u32) -> (Vec<usize>, Vec<(usize, usize, u32)>) {
    let mut kept: Vec<usize> = Vec::new();
    let mut removed = Vec::new();
    for (i, &h) in hashes.iter().enumerate() {
        match kept.iter().find_map(|&k| {
            let d = hamming(hashes[k], h);
            (d <= max_hamming).then_some((k, d))
        }) {
            Some((k, d)) => removed.push((k, i, d)),
            None => kept.push(i),
        }
    }
    (kept, removed)
}

/// Removes frames whose hash lies within `max_hamming` of an already kept
/// frame. The earliest frame of a near-duplicate group wins.
pub fn dedup(dataset: &Dataset, max_hamming: u32) -> Result<(Dataset, Vec<DedupRemoval>)> {
    let hashes = hash_dataset(dataset)?;
    let (_, removed) = dedup_hashes(&hashes, max_hamming);
    let frames = dataset.frames();
    let mut drop = vec![false; frames.len()];
    let audit = removed
        .iter()
        .map(|&(k, r, d)| {
            drop[r] = true;
            DedupRemoval {
                kept_id: frames[k].frame_id.clone(),
                removed_id: frames[r].frame_id.clone(),
                distance: d,
            }
        })
        .collect();
    let mut idx = 0;
    let out = dataset.filtered(|_| {
        let keep = !drop[idx];
        idx += 1;
        keep
    });
    Ok((out, audit))
}

/// CSV audit log with header `kept_id,removed_id,distance`.
pub fn write_dedup_audit(path: &Path, removals: &[DedupRemoval]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["kept_id", "removed_id", "distance"])?;
    for r in removals {
        w.write_record([r.kept_id.as_str(), r.removed_id.as_str(), &r.distance.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_compares_against_kept_set_only() {
        // A=0, B differs from A by 6 bits, C differs from B by 6 and from A by 12.
        let a = 0u64;
        let b = 0b11_1111u64;
        let c = 0b1111_1111_1111u64;
        let (kept, removed) = dedup_hashes(&[a, b, c], 10);
        assert_eq!(kept, vec![0, 2]);
        assert_eq!(removed, vec![(0, 1, 6)]);

        // With a looser threshold C falls within reach of A as well.
        let (kept, removed) = dedup_hashes(&[a, b, c], 12);
        assert_eq!(kept, vec![0]);
        assert_eq!(removed, vec![(0, 1, 6), (0, 2, 12)]);
    }

    #[test]
    fn identical_hashes() {
        let (kept, removed) = dedup_hashes(&[42, 42], 0);
        assert_eq!(kept, vec![0]);
        assert_eq!(removed, vec![(0, 1, 0)]);
    }

    #[test]
    fn idempotent_on_hashes() {
        let hashes = [0u64, 1, 3, 0xFF00, 0xFF01, u64::MAX, 0x0F0F_0F0F];
        let (kept, _) = dedup_hashes(&hashes, 4);
        let again: Vec<u64> = kept.iter().map(|&i| hashes[i]).collect();
        let (kept2, removed2) = dedup_hashes(&again, 4);
        assert_eq!(kept2.len(), again.len());
        assert!(removed2.is_empty());
    }

    #[test]
    fn audit_csv() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("audit.csv");
        write_dedup_audit(
            &p,
            &[DedupRemoval {
                kept_id: "d/a".into(),
                removed_id: "d/b".into(),
                distance: 3,
            }],
        )
        .unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "kept_id,removed_id,distance\nd/a,d/b,3\n");
    }
}
