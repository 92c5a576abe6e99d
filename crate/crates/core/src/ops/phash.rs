//! 64-bit difference hash.
//!
//! The image is converted to integer luma (`299 R + 587 G + 114 B`), reduced
//! to 9x8 cells by exact area averaging, and bit `8 * row + col` (counted
//! from the least significant bit) is set when cell `(row, col)` is darker
//! than cell `(row, col + 1)`. Everything is integer arithmetic, so the hash
//! is identical on every platform.

use image::RgbImage;

const COLS: u64 = 9;
const ROWS: u64 = 8;

/// Overlap, in scaled units, between source pixel `p` (spanning
/// `[p * cells, (p + 1) * cells)`) and output cell `c` (spanning
/// `[c * len, (c + 1) * len)`).
fn coverage(p: u64, c: u64, len: u64, cells: u64) -> u64 {
    let lo = (p * cells).max(c * len);
    let hi = ((p + 1) * cells).min((c + 1) * len);
    hi.saturating_sub(lo)
}

/// Cell sums weighted by exact overlap. Every cell has the same total weight
/// (`width * height` in scaled units), so sums compare like means.
fn cell_sums(image: &RgbImage) -> [[u128; COLS as usize]; ROWS as usize] {
    let (w, h) = (u64::from(image.width()), u64::from(image.height()));
    let mut sums = [[0u128; COLS as usize]; ROWS as usize];
    for y in 0..h {
        let r0 = y * ROWS / h;
        let r1 = (((y + 1) * ROWS).div_ceil(h)).min(ROWS);
        for x in 0..w {
            let px = image.get_pixel(x as u32, y as u32).0;
            let luma = 299 * u64::from(px[0]) + 587 * u64::from(px[1]) + 114 * u64::from(px[2]);
            let c0 = x * COLS / w;
            let c1 = (((x + 1) * COLS).div_ceil(w)).min(COLS);
            for r in r0..r1 {
                let wy = coverage(y, r, h, ROWS);
                if wy == 0 {
                    continue;
                }
                for c in c0..c1 {
                    let wx = coverage(x, c, w, COLS);
                    sums[r as usize][c as usize] += u128::from(luma * wx * wy);
                }
            }
        }
    }
    sums
}

/// Difference hash of an RGB image. A constant image hashes to zero.
pub fn perceptual_hash(image: &RgbImage) -> u64 {
    if image.width() == 0 || image.height() == 0 {
        return 0;
    }
    let sums = cell_sums(image);
    let mut hash = 0u64;
    for (r, row) in sums.iter().enumerate() {
        for c in 0..(COLS as usize - 1) {
            if row[c] < row[c + 1] {
                hash |= 1 << (r * 8 + c);
            }
        }
    }
    hash
}

pub fn hamming(a: u64, b: u64) -> u32 {
    (a ^ b).count_ones()
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    #[test]
    fn constant_image_hashes_to_zero() {
        for (w, h) in [(1, 1), (7, 5), (640, 480), (1001, 17)] {
            let img = RgbImage::from_pixel(w, h, Rgb([123, 45, 67]));
            assert_eq!(perceptual_hash(&img), 0, "{w}x{h}");
        }
    }

    #[test]
    fn horizontal_ramp_sets_every_bit() {
        let img = RgbImage::from_fn(90, 40, |x, _| {
            let v = (x * 255 / 89) as u8;
            Rgb([v, v, v])
        });
        assert_eq!(perceptual_hash(&img), u64::MAX);
    }

    #[test]
    fn reversed_ramp_sets_no_bit() {
        let img = RgbImage::from_fn(90, 40, |x, _| {
            let v = 255 - (x * 255 / 89) as u8;
            Rgb([v, v, v])
        });
        assert_eq!(perceptual_hash(&img), 0);
    }

    #[test]
    fn coverage_weights_sum_to_cell_area() {
        for (len, cells) in [(7u64, 9u64), (100, 9), (13, 8), (8, 8)] {
            for c in 0..cells {
                let total: u64 = (0..len).map(|p| coverage(p, c, len, cells)).sum();
                assert_eq!(total, len);
            }
        }
    }

    #[test]
    fn self_distance_is_zero() {
        let img = RgbImage::from_fn(64, 48, |x, y| Rgb([(x * 3) as u8, (y * 5) as u8, ((x ^ y) * 7) as u8]));
        assert_eq!(hamming(perceptual_hash(&img), perceptual_hash(&img)), 0);
    }
}
