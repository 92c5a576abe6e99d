use std::collections::BTreeMap;

use image::RgbImage;

use super::Color;

/// Border-ring thickness: 2% of each dimension, at least one pixel.
fn ring_thickness(len: u32) -> u32 {
    ((f64::from(len) * 0.02).ceil() as u32).clamp(1, len)
}

/// Modal color of the outer 2% border ring.
///
/// Ring pixels are quantized to 16 levels per channel; the most populated
/// bin wins (ties go to the darker bin, by channel-sum then lexicographic
/// order) and the result is the mean color of the pixels in that bin.
pub fn estimate_background(image: &RgbImage) -> Color {
    let (w, h) = image.dimensions();
    if w == 0 || h == 0 {
        return [0.0; 3];
    }
    let (tx, ty) = (ring_thickness(w), ring_thickness(h));
    // bin -> (count, channel sums)
    let mut bins: BTreeMap<[u8; 3], (u64, [u64; 3])> = BTreeMap::new();
    for y in 0..h {
        for x in 0..w {
            let on_ring = x < tx || x >= w - tx || y < ty || y >= h - ty;
            if !on_ring {
                continue;
            }
            let p = image.get_pixel(x, y).0;
            let entry = bins.entry([p[0] / 16, p[1] / 16, p[2] / 16]).or_insert((0, [0; 3]));
            entry.0 += 1;
            for c in 0..3 {
                entry.1[c] += u64::from(p[c]);
            }
        }
    }
    let (_, (count, sums)) = bins
        .iter()
        .max_by(|(ka, (ca, _)), (kb, (cb, _))| {
            let sum = |k: &[u8; 3]| k.iter().map(|&v| u32::from(v)).sum::<u32>();
            ca.cmp(cb)
                .then_with(|| sum(kb).cmp(&sum(ka)))
                .then_with(|| kb.cmp(ka))
        })
        .expect("ring is non-empty");
    let n = *count as f64;
    [sums[0] as f64 / n, sums[1] as f64 / n, sums[2] as f64 / n]
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    #[test]
    fn uniform_white() {
        let img = RgbImage::from_pixel(100, 80, Rgb([255, 255, 255]));
        assert_eq!(estimate_background(&img), [255.0, 255.0, 255.0]);
    }

    #[test]
    fn border_dominates_centered_chart() {
        let mut img = RgbImage::from_pixel(200, 150, Rgb([255, 255, 255]));
        for y in 20..130 {
            for x in 20..180 {
                img.put_pixel(x, y, Rgb([20, 30, 40]));
            }
        }
        assert_eq!(estimate_background(&img), [255.0, 255.0, 255.0]);
    }

    #[test]
    fn tie_goes_to_darker_bin() {
        // Left half black, right half white, even width: the ring splits evenly.
        let img = RgbImage::from_fn(100, 100, |x, _| if x < 50 { Rgb([0, 0, 0]) } else { Rgb([255, 255, 255]) });
        assert_eq!(estimate_background(&img), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn majority_wins() {
        let img = RgbImage::from_fn(100, 100, |x, _| if x < 40 { Rgb([0, 0, 0]) } else { Rgb([255, 255, 255]) });
        assert_eq!(estimate_background(&img), [255.0, 255.0, 255.0]);
    }

    #[test]
    fn refines_to_bin_mean() {
        // Two shades in the same 16-level bin average out.
        let img = RgbImage::from_fn(50, 50, |x, y| if (x + y) % 2 == 0 { Rgb([240, 240, 240]) } else { Rgb([242, 242, 242]) });
        let bg = estimate_background(&img);
        assert!(bg.iter().all(|&c| (240.0..=242.0).contains(&c)));
        assert!((bg[0] - 241.0).abs() < 0.1);
    }
}
