use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FrameRecord};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Named ratio split, e.g. `[0.8, 0.2]` as `["train", "val"]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratios: Vec<f64>,
    pub seed: u64,
    pub names: Vec<String>,
}

impl SplitSpec {
    pub fn new(ratios: &[f64], names: &[&str], seed: u64) -> Self {
        Self {
            ratios: ratios.to_vec(),
            seed,
            names: names.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// 80/20 train/validation.
    pub fn train_val(seed: u64) -> Self {
        Self::new(&[0.8, 0.2], &["train", "val"], seed)
    }

    /// 70/10/20 train/validation/test.
    pub fn train_val_test(seed: u64) -> Self {
        Self::new(&[0.7, 0.1, 0.2], &["train", "val", "test"], seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ratios.is_empty() {
            return Err(Error::Config("split needs at least one ratio".into()));
        }
        if self.ratios.len() != self.names.len() {
            return Err(Error::Config(format!(
                "{} ratios but {} names",
                self.ratios.len(),
                self.names.len()
            )));
        }
        if self.ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::Config(format!("ratios must be positive: {:?}", self.ratios)));
        }
        let sum: f64 = self.ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("ratios sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `n` items by `ratios`.
///
/// Each part gets `floor(n * ratio)`; leftover items go to the largest
/// fractional remainders, ties to the earlier part.
pub fn largest_remainder_sizes(n: usize, ratios: &[f64]) -> Vec<usize> {
    // Guard against 0.7 * 1000 = 699.999...
    const EPS: f64 = 1e-9;
    let quotas: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| (q + EPS).floor() as usize).collect();
    let mut assigned: usize = sizes.iter().sum();
    while assigned > n {
        // Only reachable when the ratios sum to slightly more than one.
        let i = sizes.iter().rposition(|&s| s > 0).expect("assigned > 0");
        sizes[i] -= 1;
        assigned -= 1;
    }
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    let rem = |i: usize| (quotas[i] - sizes[i] as f64).max(0.0);
    order.sort_by(|&a, &b| rem(b).total_cmp(&rem(a)).then(a.cmp(&b)));
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

/// Seeded ratio split. Frames are assigned by a SplitMix64 Fisher-Yates
/// permutation; each output keeps the input's relative frame order.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<Vec<Dataset>> {
    spec.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("cannot split an empty dataset".into()));
    }
    let n = dataset.len();
    let sizes = largest_remainder_sizes(n, &spec.ratios);
    let perm = SplitMix64::new(spec.seed).permutation(n);

    let mut part_of = vec![0usize; n];
    let mut start = 0;
    for (part, &size) in sizes.iter().enumerate() {
        for &i in &perm[start..start + size] {
            part_of[i] = part;
        }
        start += size;
    }

    let mut buckets: Vec<Vec<FrameRecord>> = vec![Vec::new(); sizes.len()];
    for (i, f) in dataset.frames().iter().enumerate() {
        buckets[part_of[i]].push(f.clone());
    }
    buckets
        .into_iter()
        .zip(&spec.names)
        .map(|(frames, name)| Ok(dataset.with_frames(frames)?.renamed(format!("{}_{name}", dataset.name()))))
        .collect()
}

/// Seeded assignment of frames to `k` validation folds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignments: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignments.values() {
            sizes[f] += 1;
        }
        sizes
    }

    pub fn fold_of(&self, frame_id: &str) -> Option<usize> {
        self.assignments.get(frame_id).copied()
    }

    /// Checks that the plan covers exactly the dataset's frames.
    pub fn check_covers(&self, dataset: &Dataset) -> Result<()> {
        let ids: HashSet<&str> = dataset.frame_ids().collect();
        if ids.len() != self.assignments.len() || !self.assignments.keys().all(|k| ids.contains(k.as_str())) {
            return Err(Error::Integrity(format!(
                "fold plan does not cover dataset {} exactly",
                dataset.name()
            )));
        }
        if self.assignments.values().any(|&f| f >= self.k) {
            return Err(Error::Integrity("fold index out of range".into()));
        }
        Ok(())
    }

    /// Frames assigned to `fold`, in dataset order.
    pub fn validation(&self, dataset: &Dataset, fold: usize) -> Dataset {
        dataset
            .filtered(|f| self.fold_of(&f.frame_id) == Some(fold))
            .renamed(format!("{}_fold{fold}_val", dataset.name()))
    }

    /// Every frame not assigned to `fold`, in dataset order.
    pub fn training(&self, dataset: &Dataset, fold: usize) -> Dataset {
        dataset
            .filtered(|f| self.fold_of(&f.frame_id) != Some(fold))
            .renamed(format!("{}_fold{fold}_train", dataset.name()))
    }
}

/// Balanced k-fold plan: permutation position `p` goes to fold `p mod k`,
/// so fold sizes differ by at most one.
pub fn kfold(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config(format!("k must be at least 2, got {k}")));
    }
    if k > dataset.len() {
        return Err(Error::Config(format!(
            "k = {k} exceeds the {} frames of {}",
            dataset.len(),
            dataset.name()
        )));
    }
    let perm = SplitMix64::new(seed).permutation(dataset.len());
    let frames = dataset.frames();
    let assignments = perm
        .iter()
        .enumerate()
        .map(|(pos, &i)| (frames[i].frame_id.clone(), pos % k))
        .collect();
    Ok(FoldPlan { k, seed, assignments })
}
