use std::time::Duration;

use reefforge_core::evalbench::{bench, render_tables, ReportInput};

fn fixture() -> ReportInput {
    serde_json::from_str(include_str!("../fixtures/detector_tables.json")).unwrap()
}

#[test]
fn sleeper_runner_timing() {
    let frames = vec![(); 12];
    let rep = bench(&frames, 2, |_| {
        std::thread::sleep(Duration::from_millis(100));
        Ok::<(), String>(())
    })
    .unwrap();
    assert!((rep.inference_ms.mean - 100.0).abs() <= 10.0, "{:?}", rep);
    assert!((rep.pipeline_hz - 10.0).abs() <= 1.0, "{:?}", rep);
    assert!(rep.check_invariant());
    assert_eq!((rep.frame_count, rep.warmup_count), (12, 2));
}

#[test]
fn single_measured_frame_has_no_spread() {
    let frames = vec![(); 3];
    let rep = bench(&frames, 2, |_| {
        std::thread::sleep(Duration::from_millis(5));
        Ok::<(), String>(())
    })
    .unwrap();
    let s = rep.inference_ms;
    assert_eq!(s.mean, s.median);
    assert_eq!(s.mean, s.p95);
    assert!(rep.check_invariant());
}

#[test]
fn detector_table_rows_verbatim() {
    let f = fixture();
    let t = render_tables(&f.models, None).unwrap();
    for row in [
        "YOLOv10-N, 54.9, 9.2, 0.458, 0.234",
        "YOLOv10-S, 71.0, 8.9, 0.557, 0.314",
        "YOLOv10-M, 158.1, 4.8, 0.642, 0.468",
        "YOLOv10-B, 214.8, 3.8, 0.645, 0.416",
        "YOLOv10-L, 264.1, 3.2, 0.657, 0.430",
        "YOLOv10-X, 375.2, 2.3, 0.642, 0.424",
    ] {
        assert!(t.text.lines().any(|l| l == row), "missing {row}");
    }
    assert!(t.ablation_csv.is_none());
    assert!(!t.text.contains("(S)"));
}

#[test]
fn ablation_rows_verbatim() {
    let f = fixture();
    let t = render_tables(&f.models, f.ablation.as_ref()).unwrap();
    for row in [
        "YOLOv10-B (S) 0.645/0.416 vs (R) 0.639/0.472",
        "YOLOv10-L (S) 0.657/0.430 vs (R) 0.638/0.478",
        "YOLOv10-X (S) 0.642/0.424 vs (R) 0.630/0.480",
    ] {
        assert!(t.text.lines().any(|l| l == row), "missing {row}");
    }
    let csv = t.ablation_csv.unwrap();
    assert!(csv.lines().any(|l| l == "YOLOv10-L,0.657,0.430,0.638,0.478"));
    // rendering twice is byte-identical
    assert_eq!(render_tables(&f.models, f.ablation.as_ref()).unwrap().detectors_csv, t.detectors_csv);
}

#[test]
fn fixture_rows_respect_throughput_bound() {
    for r in fixture().models {
        assert!(r.frequency_hz <= 1000.0 / r.inference_ms, "{}", r.model);
    }
}
