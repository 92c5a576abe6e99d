//! Deterministic synthetic fixtures: rendered slides with known object boxes,
//! and on-disk datasets with prescribed per-frame object counts.

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use crate::dataset::{save_dataset, AnnotationFormat, Dataset, FrameRecord, GroundTruthObject};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::rng::SplitMix64;

pub const SLIDE_WIDTH: u32 = 640;
pub const SLIDE_HEIGHT: u32 = 480;

/// Chart colors chosen so any two share at most one 32-level channel bin,
/// which keeps their histogram intersection at or below 1/3.
pub const PALETTE: [[u8; 3]; 6] = [
    [200, 40, 40],
    [40, 70, 200],
    [40, 160, 70],
    [230, 140, 20],
    [130, 50, 180],
    [20, 150, 160],
];

const TEXT_COLOR: [u8; 3] = [60, 60, 60];

pub struct SyntheticSlide {
    pub image: RgbImage,
    /// Tight boxes of every rendered chart-like region.
    pub boxes: Vec<BBox>,
}

struct Painter<'a> {
    img: &'a mut RgbImage,
    bounds: Option<(u32, u32, u32, u32)>,
}

impl Painter<'_> {
    fn put(&mut self, x: u32, y: u32, c: [u8; 3]) {
        self.img.put_pixel(x, y, Rgb(c));
        self.bounds = Some(match self.bounds {
            None => (x, y, x, y),
            Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
        });
    }

    fn rect(&mut self, x0: u32, y0: u32, x1: u32, y1: u32, c: [u8; 3]) {
        for y in y0..y1 {
            for x in x0..x1 {
                self.put(x, y, c);
            }
        }
    }

    fn ellipse(&mut self, cx: f64, cy: f64, rx: f64, ry: f64, c: [u8; 3]) {
        let (x0, x1) = ((cx - rx).floor() as u32, (cx + rx).ceil() as u32);
        let (y0, y1) = ((cy - ry).floor() as u32, (cy + ry).ceil() as u32);
        for y in y0..y1 {
            for x in x0..x1 {
                let dx = (f64::from(x) + 0.5 - cx) / rx;
                let dy = (f64::from(y) + 0.5 - cy) / ry;
                if dx * dx + dy * dy <= 1.0 {
                    self.put(x, y, c);
                }
            }
        }
    }

    fn take_box(&mut self) -> Option<BBox> {
        self.bounds.take().map(|(x0, y0, x1, y1)| BBox {
            x_min: f64::from(x0),
            y_min: f64::from(y0),
            x_max: f64::from(x1 + 1),
            y_max: f64::from(y1 + 1),
        })
    }
}

fn range(rng: &mut SplitMix64, lo: u32, hi: u32) -> u32 {
    lo + rng.bounded(u64::from(hi - lo + 1)) as u32
}

fn background(rng: &mut SplitMix64) -> [u8; 3] {
    let base = range(rng, 236, 255) as u8;
    [base, base, range(rng, 228, 255) as u8]
}

/// Draws one chart-like region inside `(x0, y0, w, h)`.
fn draw_region(p: &mut Painter<'_>, rng: &mut SplitMix64, x0: u32, y0: u32, w: u32, h: u32, color: [u8; 3]) {
    match rng.bounded(3) {
        0 => {
            // Bar chart: separated bars, bottom aligned.
            let n = range(rng, 4, 7);
            let bar_w = range(rng, 10, 22);
            let gap = range(rng, 4, 9);
            let n = n.min((w + gap) / (bar_w + gap)).max(1);
            let bottom = y0 + h;
            for i in 0..n {
                let bar_h = range(rng, 24, h);
                let x = x0 + i * (bar_w + gap);
                p.rect(x, bottom - bar_h, x + bar_w, bottom, color);
            }
        }
        1 => {
            // Table-like grid of filled cells.
            let rows = range(rng, 2, 4);
            let cols = range(rng, 2, 4);
            let gap = range(rng, 3, 6);
            let cell_w = ((w - (cols - 1) * gap) / cols).min(64);
            let cell_h = ((h - (rows - 1) * gap) / rows).clamp(20, 40);
            for r in 0..rows {
                for c in 0..cols {
                    let x = x0 + c * (cell_w + gap);
                    let y = y0 + r * (cell_h + gap);
                    if y + cell_h <= y0 + h {
                        p.rect(x, y, x + cell_w, y + cell_h, color);
                    }
                }
            }
        }
        _ => {
            // Illustration: an ellipse overlapping a block.
            let rx = f64::from(w) / 4.0;
            let ry = f64::from(h) / 2.0 - 1.0;
            let cx = f64::from(x0) + rx + 1.0;
            let cy = f64::from(y0) + f64::from(h) / 2.0;
            p.ellipse(cx, cy, rx, ry, color);
            let bx0 = (cx as u32).max(x0);
            p.rect(bx0, y0 + h / 4, x0 + w, y0 + 3 * h / 4, color);
        }
    }
}

/// Renders a 640x480 slide with `n_regions` (1..=4) chart-like regions of
/// distinct colors, one per quadrant of the content area, plus a few title
/// text strips.
pub fn render_slide(seed: u64, n_regions: usize) -> SyntheticSlide {
    assert!((1..=4).contains(&n_regions), "1 to 4 regions");
    let mut rng = SplitMix64::new(seed);
    let bg = background(&mut rng);
    let mut image = RgbImage::from_pixel(SLIDE_WIDTH, SLIDE_HEIGHT, Rgb(bg));
    let mut painter = Painter {
        img: &mut image,
        bounds: None,
    };

    // Title and subtitle strips: thin and wide, filtered as text.
    let mut y = 10;
    for _ in 0..range(&mut rng, 1, 2) {
        let len = range(&mut rng, 120, 400);
        let h = range(&mut rng, 6, 10);
        painter.rect(40, y, 40 + len, y + h, TEXT_COLOR);
        y += h + 6;
    }
    painter.bounds = None;

    let mut colors: Vec<usize> = (0..PALETTE.len()).collect();
    rng.shuffle(&mut colors);
    let mut quadrants: Vec<u32> = (0..4).collect();
    rng.shuffle(&mut quadrants);

    let mut boxes = Vec::with_capacity(n_regions);
    for (k, &q) in quadrants.iter().take(n_regions).enumerate() {
        let (qx, qy) = ((q % 2) * 320, 48 + (q / 2) * 216);
        let margin = 24;
        let w = range(&mut rng, 120, 320 - 2 * margin);
        let h = range(&mut rng, 80, 216 - 2 * margin);
        let x0 = qx + margin + range(&mut rng, 0, 320 - 2 * margin - w);
        let y0 = qy + margin + range(&mut rng, 0, 216 - 2 * margin - h);
        draw_region(&mut painter, &mut rng, x0, y0, w, h, PALETTE[colors[k]]);
        boxes.push(painter.take_box().expect("region paints pixels"));
    }
    SyntheticSlide { image, boxes }
}

/// A slide with a uniform background and nothing else.
pub fn blank_slide(seed: u64) -> RgbImage {
    let mut rng = SplitMix64::new(seed);
    RgbImage::from_pixel(SLIDE_WIDTH, SLIDE_HEIGHT, Rgb(background(&mut rng)))
}

/// Per-frame object counts matching the filtered 1000-frame manual split of
/// the lecture-video dataset: 1000 frames, 1580 objects, bucket shares
/// 63.9% / 30.7% / 5.4%. Shuffled with `seed`.
pub fn lvvo_1k_counts(seed: u64) -> Vec<usize> {
    let mut counts = Vec::with_capacity(1000);
    counts.extend(std::iter::repeat_n(1, 639));
    counts.extend(std::iter::repeat_n(2, 196));
    counts.extend(std::iter::repeat_n(3, 111));
    counts.extend(std::iter::repeat_n(4, 54));
    SplitMix64::new(seed).shuffle(&mut counts);
    counts
}

/// Builds an in-memory dataset rooted at `root` with random non-overlapping-ish
/// boxes, `counts[i]` objects on frame `i`. Image files are not written.
pub fn boxes_dataset(name: &str, root: &Path, counts: &[usize], seed: u64) -> Result<Dataset> {
    let mut rng = SplitMix64::new(seed);
    let frames = counts
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let objects = (0..n)
                .map(|k| {
                    // One column per object keeps boxes apart.
                    let col_w = f64::from(SLIDE_WIDTH) / n as f64;
                    let x0 = col_w * k as f64 + rng.next_f64() * col_w * 0.2;
                    let w = col_w * (0.3 + 0.5 * rng.next_f64());
                    let y0 = rng.next_f64() * 200.0;
                    let h = 40.0 + rng.next_f64() * 200.0;
                    GroundTruthObject::manual(BBox::new(x0, y0, x0 + w, y0 + h).expect("positive size"))
                })
                .collect();
            FrameRecord::new(name, format!("images/{name}_{i:05}.png"), SLIDE_WIDTH, SLIDE_HEIGHT).with_objects(objects)
        })
        .collect();
    Dataset::new(name, root, frames)
}

/// Writes a 1x1 placeholder PNG for every frame of `dataset` under its root.
pub fn write_placeholder_images(dataset: &Dataset) -> Result<()> {
    let png = placeholder_png();
    for f in dataset.frames() {
        let p = dataset.image_path(f);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&p, &png).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

fn placeholder_png() -> Vec<u8> {
    let img = RgbImage::from_pixel(1, 1, Rgb([255, 255, 255]));
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)
        .expect("in-memory PNG encoding");
    buf.into_inner()
}

/// Materializes a dataset with placeholder images and normalized-text labels
/// under `dir`, returning the manifest path.
pub fn write_fixture_dataset(dir: &Path, name: &str, counts: &[usize], seed: u64) -> Result<PathBuf> {
    let d = boxes_dataset(name, dir, counts, seed)?;
    write_placeholder_images(&d)?;
    save_dataset(&d, dir, AnnotationFormat::NormalizedText)
}

/// Writes rendered slides as PNGs plus a manifest whose labels are the
/// rendered boxes.
pub fn write_slide_dataset(dir: &Path, name: &str, seeds: &[u64]) -> Result<PathBuf> {
    let images = dir.join("images");
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let mut frames = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let n = 1 + (seed % 4) as usize;
        let slide = render_slide(seed, n);
        let rel = PathBuf::from("images").join(format!("slide_{seed:04}.png"));
        let path = dir.join(&rel);
        slide
            .image
            .save(&path)
            .map_err(|source| Error::Image { path: path.clone(), source })?;
        frames.push(
            FrameRecord::new(name, rel, SLIDE_WIDTH, SLIDE_HEIGHT)
                .with_objects(slide.boxes.into_iter().map(GroundTruthObject::manual).collect()),
        );
    }
    let d = Dataset::new(name, dir, frames)?;
    save_dataset(&d, dir, AnnotationFormat::NormalizedText)
}
