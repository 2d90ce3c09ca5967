mod oracles;

use proptest::prelude::*;
use reefforge_core::rng::SeededRng;
use reefforge_core::splinecore::{basis, basis_functions, BSplineCurve2D, KnotVector};

use nalgebra::Point2;

/// Non-decreasing knots with occasional repeats, long enough for `degree`.
fn random_knots(rng: &mut SeededRng, degree: usize) -> Vec<f64> {
    let len = 2 * degree + 2 + rng.below(8) as usize;
    let mut t = rng.uniform(-5.0, 5.0);
    let mut knots = Vec::with_capacity(len);
    for _ in 0..len {
        knots.push(t);
        if rng.unit() > 0.2 {
            t += rng.uniform(0.01, 2.0);
        }
    }
    knots
}

/// Valid domain `[u_k, u_{len-k-1})`, or `None` if it is empty.
fn domain(knots: &[f64], k: usize) -> Option<(f64, f64)> {
    let (a, b) = (knots[k], knots[knots.len() - k - 1]);
    (b > a).then_some((a, b))
}

#[test]
fn partition_of_unity_random_knots() {
    let mut rng = SeededRng::new(2024);
    let mut checked = 0;
    while checked < 100 {
        let base = random_knots(&mut rng, 5);
        for k in 0..=5 {
            let knots = &base[..];
            let Some((a, b)) = domain(knots, k) else { continue };
            let kv = KnotVector::new(knots.to_vec()).unwrap();
            for j in 0..1000 {
                let t = a + (b - a) * j as f64 / 1000.0;
                let sum: f64 = basis_functions(k, t, &kv).unwrap().iter().sum();
                assert!((sum - 1.0).abs() < 1e-9, "k={k} t={t} sum={sum} knots={knots:?}");
            }
        }
        checked += 1;
    }
}

#[test]
fn uniform_cubic_matches_closed_form() {
    let kv = KnotVector::uniform(12).unwrap();
    for i in 0..8 {
        for step in 0..=440 {
            let t = step as f64 / 40.0;
            let got = basis(i, 3, t, &kv).unwrap();
            let want = oracles::uniform_cubic(t - i as f64);
            assert!((got - want).abs() < 1e-12, "i={i} t={t}: {got} vs {want}");
        }
    }
    for (t, want) in [(0.0, 0.0), (1.0, 1.0 / 6.0), (2.0, 2.0 / 3.0), (3.0, 1.0 / 6.0), (4.0, 0.0)] {
        assert!((basis(0, 3, t, &kv).unwrap() - want).abs() < 1e-12);
    }
}

#[test]
fn clamped_curve_hits_end_points() {
    let pts = vec![
        Point2::new(0.0, 0.0),
        Point2::new(1.0, 2.0),
        Point2::new(3.0, 2.5),
        Point2::new(4.0, 0.5),
        Point2::new(6.0, 1.0),
    ];
    let c = BSplineCurve2D::clamped(pts.clone(), 3).unwrap();
    let (a, b) = c.domain();
    assert!((c.eval(a).unwrap() - pts[0]).norm() < 1e-12);
    assert!((c.eval(b).unwrap() - pts[4]).norm() < 1e-12);
}

proptest! {
    #[test]
    fn recursion_matches_table(seed in any::<u64>(), k in 0usize..=5, frac in 0.0f64..1.0) {
        let mut rng = SeededRng::new(seed);
        let knots = random_knots(&mut rng, k);
        prop_assume!(domain(&knots, k).is_some());
        let (a, b) = domain(&knots, k).unwrap();
        let t = a + (b - a) * frac;
        let kv = KnotVector::new(knots.clone()).unwrap();
        let table = basis_functions(k, t, &kv).unwrap();
        for (i, &v) in table.iter().enumerate() {
            let r = basis(i, k, t, &kv).unwrap();
            prop_assert!((v - r).abs() < 1e-12);
            prop_assert!(v >= -1e-15);
        }
    }

    #[test]
    fn local_support(seed in any::<u64>(), k in 0usize..=4, frac in 0.0f64..1.0) {
        let mut rng = SeededRng::new(seed);
        let knots = random_knots(&mut rng, k);
        let kv = KnotVector::new(knots.clone()).unwrap();
        let t = knots[0] + (knots[knots.len() - 1] - knots[0]) * frac;
        for i in 0..knots.len() - k - 1 {
            if t < knots[i] || t > knots[i + k + 1] {
                prop_assert_eq!(basis(i, k, t, &kv).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn curve_stays_in_control_hull_box(
        pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 4..10),
        frac in 0.0f64..=1.0,
    ) {
        let pts: Vec<Point2<f64>> = pts.into_iter().map(|(x, y)| Point2::new(x, y)).collect();
        let c = BSplineCurve2D::clamped(pts.clone(), 3).unwrap();
        let (a, b) = c.domain();
        let p = c.eval(a + (b - a) * frac).unwrap();
        let min_x = pts.iter().map(|q| q.x).fold(f64::INFINITY, f64::min);
        let max_x = pts.iter().map(|q| q.x).fold(f64::NEG_INFINITY, f64::max);
        let min_y = pts.iter().map(|q| q.y).fold(f64::INFINITY, f64::min);
        let max_y = pts.iter().map(|q| q.y).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(p.x >= min_x - 1e-9 && p.x <= max_x + 1e-9);
        prop_assert!(p.y >= min_y - 1e-9 && p.y <= max_y + 1e-9);
    }
}
