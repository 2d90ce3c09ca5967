mod oracles;

use proptest::prelude::*;
use reefforge_core::evalbench::{
    average_precision, iou, map_report, match_detections, Detection, EvalConfig, GroundTruth, PixelBox,
};
use reefforge_core::rng::SeededRng;
use serde::Deserialize;

fn rect(rng: &mut SeededRng) -> PixelBox {
    let (w, h) = (rng.uniform(5.0, 40.0), rng.uniform(5.0, 40.0));
    let (x, y) = (rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0));
    PixelBox {
        x_min: x,
        y_min: y,
        x_max: x + w,
        y_max: y + h,
    }
}

fn jitter(rng: &mut SeededRng, b: &PixelBox) -> PixelBox {
    let (w, h) = (b.x_max - b.x_min, b.y_max - b.y_min);
    let dx = rng.uniform(-0.3, 0.3) * w;
    let dy = rng.uniform(-0.3, 0.3) * h;
    let sx = rng.uniform(0.8, 1.25);
    let sy = rng.uniform(0.8, 1.25);
    PixelBox {
        x_min: b.x_min + dx,
        y_min: b.y_min + dy,
        x_max: b.x_min + dx + w * sx,
        y_max: b.y_min + dy + h * sy,
    }
}

/// Up to five images with up to six boxes each; confidences are often
/// tied to exercise the ordering rule.
fn random_instance(seed: u64) -> (Vec<Detection>, Vec<GroundTruth>) {
    let mut rng = SeededRng::new(seed);
    let images = 1 + rng.below(5) as usize;
    let mut dets = Vec::new();
    let mut gts = Vec::new();
    for i in 0..images {
        let id = format!("img{i}");
        let n_gt = rng.below(7) as usize;
        let img_gts: Vec<PixelBox> = (0..n_gt).map(|_| rect(&mut rng)).collect();
        for g in &img_gts {
            gts.push(GroundTruth {
                image_id: id.clone(),
                rect: *g,
                class_id: 0,
            });
        }
        for _ in 0..rng.below(7) {
            let b = if !img_gts.is_empty() && rng.unit() < 0.65 {
                let g = img_gts[rng.below(img_gts.len() as u64) as usize];
                jitter(&mut rng, &g)
            } else {
                rect(&mut rng)
            };
            let confidence = if rng.unit() < 0.5 {
                (1 + rng.below(10)) as f64 / 10.0
            } else {
                rng.unit()
            };
            dets.push(Detection {
                image_id: id.clone(),
                rect: b,
                confidence,
                class_id: 0,
            });
        }
    }
    if gts.is_empty() {
        gts.push(GroundTruth {
            image_id: "img0".into(),
            rect: rect(&mut rng),
            class_id: 0,
        });
    }
    (dets, gts)
}

#[test]
fn map_equals_exhaustive_reference() {
    for seed in 0..200u64 {
        let (dets, gts) = random_instance(seed);
        let rep = map_report(&dets, &gts, &EvalConfig::default()).unwrap();
        let (m50, m5095) = oracles::reference_map(&dets, &gts, 300);
        assert!((rep.map50 - m50).abs() <= 1e-9, "seed {seed}: {} vs {m50}", rep.map50);
        assert!((rep.map50_95 - m5095).abs() <= 1e-9, "seed {seed}: {} vs {m5095}", rep.map50_95);
    }
}

#[derive(Deserialize)]
struct Expected {
    ap: Vec<f64>,
    map50: f64,
    map50_95: f64,
}

#[derive(Deserialize)]
struct Fixture {
    detections: Vec<Detection>,
    ground_truth: Vec<GroundTruth>,
    expected: Expected,
}

#[test]
fn frozen_fixture_values() {
    let f: Fixture = serde_json::from_str(include_str!("../fixtures/eval_small.json")).unwrap();
    let rep = map_report(&f.detections, &f.ground_truth, &EvalConfig::default()).unwrap();
    for (got, want) in rep.per_threshold_ap.values().zip(&f.expected.ap) {
        assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
    }
    assert!((rep.map50 - f.expected.map50).abs() <= 1e-9);
    assert!((rep.map50_95 - f.expected.map50_95).abs() <= 1e-9);
    let (m50, m5095) = oracles::reference_map(&f.detections, &f.ground_truth, 300);
    assert!((m50 - f.expected.map50).abs() <= 1e-9);
    assert!((m5095 - f.expected.map50_95).abs() <= 1e-9);
    assert_eq!(rep.counts.true_positives, 3);
    assert_eq!(rep.counts.false_positives, 1);
    assert_eq!(rep.counts.false_negatives, 0);
}

#[test]
fn iou_matches_pixel_count() {
    // integer boxes: count covered unit cells directly
    let cells = |b: &PixelBox| {
        let mut v = Vec::new();
        for y in b.y_min as i32..b.y_max as i32 {
            for x in b.x_min as i32..b.x_max as i32 {
                v.push((x, y));
            }
        }
        v
    };
    let mut rng = SeededRng::new(3);
    for _ in 0..200 {
        let mut r = || {
            let (x, y) = (rng.below(20) as f64, rng.below(20) as f64);
            let (w, h) = (1 + rng.below(10), 1 + rng.below(10));
            PixelBox {
                x_min: x,
                y_min: y,
                x_max: x + w as f64,
                y_max: y + h as f64,
            }
        };
        let (a, b) = (r(), r());
        let (ca, cb) = (cells(&a), cells(&b));
        let inter = ca.iter().filter(|c| cb.contains(c)).count() as f64;
        let want = inter / (ca.len() as f64 + cb.len() as f64 - inter);
        assert!((iou(&a, &b).unwrap() - want).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn ap_in_unit_interval_and_bounded_average(seed in any::<u64>()) {
        let (dets, gts) = random_instance(seed);
        let rep = map_report(&dets, &gts, &EvalConfig::default()).unwrap();
        let max = rep.per_threshold_ap.values().cloned().fold(0.0, f64::max);
        prop_assert!(rep.per_threshold_ap.values().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!(rep.map50_95 <= max + 1e-12);
        prop_assert_eq!(rep.map50, rep.per_threshold_ap["0.50"]);
    }

    #[test]
    fn removing_false_positive_never_lowers_ap(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let (dets, gts) = random_instance(seed);
        // detections overlapping no ground truth at IoU 0.5 are false positives in any order
        let fps: Vec<usize> = (0..dets.len())
            .filter(|&i| {
                gts.iter()
                    .filter(|g| g.image_id == dets[i].image_id)
                    .all(|g| iou(&dets[i].rect, &g.rect).unwrap() < 0.5)
            })
            .collect();
        prop_assume!(!fps.is_empty());
        let ap = average_precision(&match_detections(&dets, &gts, 0.5, 300).unwrap()).unwrap();
        let mut fewer = dets.clone();
        fewer.remove(fps[pick.index(fps.len())]);
        let ap2 = average_precision(&match_detections(&fewer, &gts, 0.5, 300).unwrap()).unwrap();
        prop_assert!(ap2 >= ap - 1e-12, "{} -> {}", ap, ap2);
    }

    #[test]
    fn input_permutation_does_not_matter_with_distinct_scores(seed in any::<u64>(), shuffle_seed in any::<u64>()) {
        let (mut dets, gts) = random_instance(seed);
        let n = dets.len() as f64;
        for (k, d) in dets.iter_mut().enumerate() {
            d.confidence = (k as f64 + 1.0) / (n + 1.0);
        }
        let base = map_report(&dets, &gts, &EvalConfig::default()).unwrap();
        SeededRng::new(shuffle_seed).shuffle(&mut dets);
        let shuffled = map_report(&dets, &gts, &EvalConfig::default()).unwrap();
        prop_assert_eq!(base, shuffled);
    }
}
