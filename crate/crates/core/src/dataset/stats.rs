use serde::{Deserialize, Serialize};

use super::Dataset;

/// Frame counts in the object-count buckets `0-1`, `2-3` and `>=4`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketCounts {
    pub zero_to_one: usize,
    pub two_to_three: usize,
    pub four_plus: usize,
}

impl BucketCounts {
    pub fn total(&self) -> usize {
        self.zero_to_one + self.two_to_three + self.four_plus
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_images: usize,
    pub n_objects: usize,
    /// Zero for an empty dataset.
    pub objects_per_image: f64,
    pub distribution: BucketCounts,
}

impl DatasetStats {
    /// Bucket shares in percent, `[0-1, 2-3, >=4]`. All zero for an empty dataset.
    pub fn percentages(&self) -> [f64; 3] {
        if self.n_images == 0 {
            return [0.0; 3];
        }
        let n = self.n_images as f64;
        let d = &self.distribution;
        [
            100.0 * d.zero_to_one as f64 / n,
            100.0 * d.two_to_three as f64 / n,
            100.0 * d.four_plus as f64 / n,
        ]
    }
}

pub fn compute_stats(dataset: &Dataset) -> DatasetStats {
    stats_from_counts(dataset.frames().iter().map(|f| f.objects.len()))
}

pub(crate) fn stats_from_counts(counts: impl Iterator<Item = usize>) -> DatasetStats {
    let mut s = DatasetStats::default();
    for c in counts {
        s.n_images += 1;
        s.n_objects += c;
        match c {
            0 | 1 => s.distribution.zero_to_one += 1,
            2 | 3 => s.distribution.two_to_three += 1,
            _ => s.distribution.four_plus += 1,
        }
    }
    if s.n_images > 0 {
        s.objects_per_image = s.n_objects as f64 / s.n_images as f64;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_counted() {
        let s = stats_from_counts([0usize, 5].into_iter());
        assert_eq!(
            s.distribution,
            BucketCounts {
                zero_to_one: 1,
                two_to_three: 0,
                four_plus: 1
            }
        );
        assert_eq!(s.objects_per_image, 2.5);
    }

    #[test]
    fn empty_is_zero() {
        let s = stats_from_counts(std::iter::empty());
        assert_eq!(s, DatasetStats::default());
        assert_eq!(s.percentages(), [0.0; 3]);
    }

    proptest! {
        #[test]
        fn buckets_partition_images(counts in proptest::collection::vec(0usize..9, 1..300)) {
            let s = stats_from_counts(counts.iter().copied());
            prop_assert_eq!(s.distribution.total(), s.n_images);
            let p = s.percentages();
            prop_assert!((p.iter().sum::<f64>() - 100.0).abs() < 0.01);
            prop_assert!((s.objects_per_image - s.n_objects as f64 / s.n_images as f64).abs() < 1e-12);
        }
    }
}
