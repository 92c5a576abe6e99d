use slidedet_core::heuristic::{detect, HeuristicParams};
use slidedet_core::synth::{render_slide, SLIDE_HEIGHT, SLIDE_WIDTH};
use slidedet_core::iou;

#[test]
fn detection_is_deterministic_and_in_bounds() {
    let params = HeuristicParams::default();
    for seed in 200..212 {
        let slide = render_slide(seed, 1 + (seed % 4) as usize);
        let a = detect(&slide.image, &params).unwrap();
        let b = detect(&slide.image.clone(), &params).unwrap();
        assert_eq!(a, b);
        for d in &a {
            assert!(d.bbox.within(f64::from(SLIDE_WIDTH), f64::from(SLIDE_HEIGHT)), "{:?}", d.bbox);
            assert!((0.0..=1.0).contains(&d.confidence));
        }
    }
}

#[test]
fn each_region_is_found_once() {
    let params = HeuristicParams::default();
    for seed in 300..316 {
        let slide = render_slide(seed, 1 + (seed % 4) as usize);
        let dets = detect(&slide.image, &params).unwrap();
        assert_eq!(dets.len(), slide.boxes.len(), "seed {seed}");
        for gt in &slide.boxes {
            let best = dets.iter().map(|d| iou(&d.bbox, gt)).fold(0.0, f64::max);
            assert!(best > 0.8, "seed {seed}: best IoU {best}");
        }
    }
}

#[test]
fn huge_gap_with_no_colour_requirement_merges_everything() {
    let params = HeuristicParams { merge_gap: 2.0, color_sim_min: 0.0, ..Default::default() };
    for seed in 400..406 {
        let slide = render_slide(seed, 4);
        assert_eq!(detect(&slide.image, &params).unwrap().len(), 1, "seed {seed}");
    }
}
