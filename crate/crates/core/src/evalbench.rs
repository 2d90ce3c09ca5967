//! Detection scoring and detector timing.
//!
//! AP uses the COCO convention: a single global confidence sweep, a precision
//! envelope that is non-increasing in recall, and the mean of the envelope
//! sampled at the 101 recall levels `0.00, 0.01, ..., 1.00`. Evaluation is
//! class-agnostic.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MAX_DET: usize = 300;
pub const RECALL_POINTS: usize = 101;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid evaluation input: {0}")]
    Validation(String),
    #[error("average precision is undefined without ground truth")]
    UndefinedMetric,
    #[error("runner failed on frame {frame}: {message}")]
    Runner { frame: usize, message: String },
}

/// Pixel-space rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl PixelBox {
    pub fn validate(&self) -> Result<(), EvalError> {
        let ok = [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite())
            && self.x_min < self.x_max
            && self.y_min < self.y_max;
        if ok {
            Ok(())
        } else {
            Err(EvalError::Validation(format!("degenerate rectangle {self:?}")))
        }
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }
}

pub fn iou(a: &PixelBox, b: &PixelBox) -> Result<f64, EvalError> {
    a.validate()?;
    b.validate()?;
    Ok(iou_unchecked(a, b))
}

fn iou_unchecked(a: &PixelBox, b: &PixelBox) -> f64 {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    #[serde(flatten)]
    pub rect: PixelBox,
    pub confidence: f64,
    #[serde(default)]
    pub class_id: u32,
}

impl Detection {
    pub fn validate(&self) -> Result<(), EvalError> {
        self.rect.validate()?;
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(EvalError::Validation(format!(
                "confidence {} outside [0, 1] on image {}",
                self.confidence, self.image_id
            )));
        }
        Ok(())
    }
}

/// Ground-truth box. Accepts the prediction schema; any `confidence` field
/// is ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub image_id: String,
    #[serde(flatten)]
    pub rect: PixelBox,
    #[serde(default)]
    pub class_id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchRecord {
    pub confidence: f64,
    pub true_positive: bool,
}

/// Per-image matches, images in id order and detections in the order they
/// were considered.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    pub records: Vec<MatchRecord>,
    pub num_gt: usize,
}

impl MatchResult {
    pub fn true_positives(&self) -> usize {
        self.records.iter().filter(|r| r.true_positive).count()
    }

    pub fn false_positives(&self) -> usize {
        self.records.len() - self.true_positives()
    }

    pub fn false_negatives(&self) -> usize {
        self.num_gt - self.true_positives()
    }
}

fn by_confidence_desc(a: &f64, b: &f64) -> std::cmp::Ordering {
    b.total_cmp(a)
}

fn match_image(dets: &[&Detection], gts: &[&GroundTruth], threshold: f64, max_det: usize) -> Vec<MatchRecord> {
    let mut order: Vec<&Detection> = dets.to_vec();
    order.sort_by(|a, b| by_confidence_desc(&a.confidence, &b.confidence));
    order.truncate(max_det);
    let mut taken = vec![false; gts.len()];
    order
        .into_iter()
        .map(|d| {
            let mut best: Option<(usize, f64)> = None;
            for (j, g) in gts.iter().enumerate() {
                if taken[j] {
                    continue;
                }
                let v = iou_unchecked(&d.rect, &g.rect);
                if v >= threshold && best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((j, v));
                }
            }
            if let Some((j, _)) = best {
                taken[j] = true;
            }
            MatchRecord {
                confidence: d.confidence,
                true_positive: best.is_some(),
            }
        })
        .collect()
}

fn validate_inputs(dets: &[Detection], gts: &[GroundTruth]) -> Result<(), EvalError> {
    for d in dets {
        d.validate()?;
    }
    for g in gts {
        g.rect.validate()?;
    }
    Ok(())
}

/// Greedy per-image matching. Detections are ranked by confidence (stable
/// for ties), cut to `max_det`, and each takes the unmatched ground truth
/// with the highest IoU at or above `iou_threshold`.
pub fn match_detections(
    dets: &[Detection],
    gts: &[GroundTruth],
    iou_threshold: f64,
    max_det: usize,
) -> Result<MatchResult, EvalError> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(EvalError::Validation(format!("IoU threshold {iou_threshold} outside (0, 1]")));
    }
    validate_inputs(dets, gts)?;
    let groups = group_by_image(dets, gts);
    let per_image: Vec<Vec<MatchRecord>> = groups
        .par_iter()
        .map(|(_, (d, g))| match_image(d, g, iou_threshold, max_det))
        .collect();
    Ok(MatchResult {
        records: per_image.into_iter().flatten().collect(),
        num_gt: gts.len(),
    })
}

type ImageGroups<'a> = Vec<(&'a str, (Vec<&'a Detection>, Vec<&'a GroundTruth>))>;

fn group_by_image<'a>(dets: &'a [Detection], gts: &'a [GroundTruth]) -> ImageGroups<'a> {
    let mut map: BTreeMap<&str, (Vec<&Detection>, Vec<&GroundTruth>)> = BTreeMap::new();
    for d in dets {
        map.entry(&d.image_id).or_default().0.push(d);
    }
    for g in gts {
        map.entry(&g.image_id).or_default().1.push(g);
    }
    map.into_iter().collect()
}

/// 101-point interpolated AP over all images.
pub fn average_precision(result: &MatchResult) -> Result<f64, EvalError> {
    if result.num_gt == 0 {
        return Err(EvalError::UndefinedMetric);
    }
    let mut records = result.records.clone();
    records.sort_by(|a, b| by_confidence_desc(&a.confidence, &b.confidence));
    let n_gt = result.num_gt as f64;
    let mut recall = Vec::with_capacity(records.len());
    let mut precision = Vec::with_capacity(records.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for r in &records {
        if r.true_positive {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / n_gt);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let mut sum = 0.0;
    let mut idx = 0;
    for j in 0..RECALL_POINTS {
        let level = j as f64 / (RECALL_POINTS - 1) as f64;
        while idx < recall.len() && recall[idx] < level {
            idx += 1;
        }
        if idx < recall.len() {
            sum += precision[idx];
        }
    }
    Ok(sum / RECALL_POINTS as f64)
}

/// The ten COCO thresholds `0.50, 0.55, ..., 0.95`.
pub fn iou_thresholds() -> [f64; 10] {
    std::array::from_fn(|j| (50 + 5 * j) as f64 / 100.0)
}

fn threshold_key(t: f64) -> String {
    format!("{t:.2}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub max_det: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            max_det: DEFAULT_MAX_DET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Keyed by threshold formatted with two decimals (`"0.50"`).
    pub per_threshold_ap: BTreeMap<String, f64>,
    pub map50: f64,
    pub map50_95: f64,
    /// At IoU 0.5 and confidence > 0.
    pub counts: MatchCounts,
    pub config_echo: serde_json::Value,
}

pub fn map_report(dets: &[Detection], gts: &[GroundTruth], config: &EvalConfig) -> Result<EvalReport, EvalError> {
    let mut per_threshold_ap = BTreeMap::new();
    let mut aps = Vec::with_capacity(10);
    let mut counts = None;
    for t in iou_thresholds() {
        let m = match_detections(dets, gts, t, config.max_det)?;
        let ap = average_precision(&m)?;
        if counts.is_none() {
            let tp = m.records.iter().filter(|r| r.true_positive && r.confidence > 0.0).count();
            let fp = m.records.iter().filter(|r| !r.true_positive && r.confidence > 0.0).count();
            counts = Some(MatchCounts {
                true_positives: tp,
                false_positives: fp,
                false_negatives: m.num_gt - tp,
            });
        }
        per_threshold_ap.insert(threshold_key(t), ap);
        aps.push(ap);
    }
    Ok(EvalReport {
        map50: aps[0],
        map50_95: aps.iter().sum::<f64>() / aps.len() as f64,
        per_threshold_ap,
        counts: counts.expect("ten thresholds"),
        config_echo: serde_json::json!({
            "max_det": config.max_det,
            "iou_thresholds": iou_thresholds(),
            "recall_points": RECALL_POINTS,
            "class_agnostic": true,
        }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
}

impl LatencyStats {
    /// Median averages the two middle values for even counts; p95 is the
    /// nearest-rank value.
    pub fn from_samples(samples_ms: &[f64]) -> Option<Self> {
        if samples_ms.is_empty() {
            return None;
        }
        let mut s = samples_ms.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 {
            s[n / 2]
        } else {
            (s[n / 2 - 1] + s[n / 2]) / 2.0
        };
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        Some(Self {
            mean: s.iter().sum::<f64>() / n as f64,
            median,
            p95: s[rank - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub inference_ms: LatencyStats,
    pub pipeline_hz: f64,
    pub frame_count: usize,
    pub warmup_count: usize,
}

impl BenchReport {
    /// End-to-end throughput cannot beat pure inference.
    pub fn check_invariant(&self) -> bool {
        self.pipeline_hz <= (1000.0 / self.inference_ms.mean) * (1.0 + 1e-9)
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

/// Times `runner` over `frames`. The first `warmup` frames run but are not
/// measured. Throughput is measured frames over the wall-clock time of the
/// measured span, which includes any per-frame overhead outside `runner`.
pub fn bench<T, E, F>(frames: &[T], warmup: usize, mut runner: F) -> Result<BenchReport, EvalError>
where
    F: FnMut(&T) -> Result<(), E>,
    E: std::fmt::Display,
{
    if frames.len() <= warmup {
        return Err(EvalError::Validation(format!(
            "need more frames ({}) than warmup ({warmup})",
            frames.len()
        )));
    }
    let fail = |frame: usize, e: E| EvalError::Runner {
        frame,
        message: e.to_string(),
    };
    for (i, f) in frames[..warmup].iter().enumerate() {
        runner(f).map_err(|e| fail(i, e))?;
    }
    let mut samples = Vec::with_capacity(frames.len() - warmup);
    let span = Instant::now();
    for (i, f) in frames.iter().enumerate().skip(warmup) {
        let t = Instant::now();
        runner(f).map_err(|e| fail(i, e))?;
        samples.push(ms(t.elapsed()));
    }
    let wall = span.elapsed().as_secs_f64();
    let report = BenchReport {
        inference_ms: LatencyStats::from_samples(&samples).expect("at least one measured frame"),
        pipeline_hz: samples.len() as f64 / wall,
        frame_count: frames.len(),
        warmup_count: warmup,
    };
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub model: String,
    pub inference_ms: f64,
    pub frequency_hz: f64,
    pub map50: f64,
    pub map50_95: f64,
}

impl TableRow {
    pub fn from_reports(model: &str, eval: &EvalReport, bench: &BenchReport) -> Self {
        Self {
            model: model.to_string(),
            inference_ms: bench.inference_ms.mean,
            frequency_hz: bench.pipeline_hz,
            map50: eval.map50,
            map50_95: eval.map50_95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub model: String,
    pub map50: f64,
    pub map50_95: f64,
}

/// Paired results with (`synthetic`) and without (`real`) synthetic data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ablation {
    pub synthetic: Vec<AblationRow>,
    pub real: Vec<AblationRow>,
}

/// Input document for `render_tables`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportInput {
    pub models: Vec<TableRow>,
    #[serde(default)]
    pub ablation: Option<Ablation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedTables {
    pub text: String,
    pub detectors_csv: String,
    pub ablation_csv: Option<String>,
}

fn pair_ablation(ab: &Ablation) -> Result<Vec<(&AblationRow, &AblationRow)>, EvalError> {
    let keys = |rows: &[AblationRow]| -> Result<Vec<String>, EvalError> {
        let mut k: Vec<String> = rows.iter().map(|r| r.model.clone()).collect();
        k.sort();
        if k.windows(2).any(|w| w[0] == w[1]) {
            return Err(EvalError::Validation("duplicate model in ablation".into()));
        }
        Ok(k)
    };
    if keys(&ab.synthetic)? != keys(&ab.real)? {
        return Err(EvalError::Validation(
            "ablation model sets differ between (S) and (R)".into(),
        ));
    }
    Ok(ab
        .synthetic
        .iter()
        .map(|s| (s, ab.real.iter().find(|r| r.model == s.model).expect("same key set")))
        .collect())
}

/// Formats the detector comparison and, when given, the with/without
/// synthetic-data comparison. Rows keep input order.
pub fn render_tables(rows: &[TableRow], ablation: Option<&Ablation>) -> Result<RenderedTables, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::Validation("no models to report".into()));
    }
    let mut text = String::from("Detector comparison\nmodel, inference_ms, frequency_hz, map50, map50_95\n");
    let mut detectors_csv = String::from("model,inference_ms,frequency_hz,map50,map50_95\n");
    for r in rows {
        let cells = format!(
            "{:.1}, {:.1}, {:.3}, {:.3}",
            r.inference_ms, r.frequency_hz, r.map50, r.map50_95
        );
        let _ = writeln!(text, "{}, {}", r.model, cells);
        let _ = writeln!(detectors_csv, "{},{}", r.model, cells.replace(", ", ","));
    }
    let mut ablation_csv = None;
    if let Some(ab) = ablation {
        let pairs = pair_ablation(ab)?;
        text.push_str("\nWith (S) and without (R) synthetic data\n");
        let mut csv = String::from("model,map50_s,map50_95_s,map50_r,map50_95_r\n");
        for (s, r) in pairs {
            let _ = writeln!(
                text,
                "{} (S) {:.3}/{:.3} vs (R) {:.3}/{:.3}",
                s.model, s.map50, s.map50_95, r.map50, r.map50_95
            );
            let _ = writeln!(
                csv,
                "{},{:.3},{:.3},{:.3},{:.3}",
                s.model, s.map50, s.map50_95, r.map50, r.map50_95
            );
        }
        ablation_csv = Some(csv);
    }
    Ok(RenderedTables {
        text,
        detectors_csv,
        ablation_csv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn r(x0: f64, y0: f64, x1: f64, y1: f64) -> PixelBox {
        PixelBox {
            x_min: x0,
            y_min: y0,
            x_max: x1,
            y_max: y1,
        }
    }

    fn det(img: &str, b: PixelBox, c: f64) -> Detection {
        Detection {
            image_id: img.into(),
            rect: b,
            confidence: c,
            class_id: 0,
        }
    }

    fn gt(img: &str, b: PixelBox) -> GroundTruth {
        GroundTruth {
            image_id: img.into(),
            rect: b,
            class_id: 0,
        }
    }

    #[test]
    fn iou_examples() {
        let a = r(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &r(20.0, 20.0, 30.0, 30.0)).unwrap(), 0.0);
        assert_eq!(iou(&a, &r(10.0, 0.0, 20.0, 10.0)).unwrap(), 0.0);
        assert_abs_diff_eq!(iou(&a, &r(5.0, 5.0, 15.0, 15.0)).unwrap(), 25.0 / 175.0, epsilon = 1e-15);
        assert!(iou(&a, &r(1.0, 1.0, 1.0, 5.0)).is_err());
    }

    #[test]
    fn single_match_and_duplicates() {
        let g = vec![gt("a", r(0.0, 0.0, 10.0, 10.0))];
        let d = vec![det("a", r(0.0, 0.0, 10.0, 6.0), 0.9)];
        let m = match_detections(&d, &g, 0.5, 300).unwrap();
        assert_eq!((m.true_positives(), m.false_positives(), m.false_negatives()), (1, 0, 0));

        let d = vec![det("a", r(0.0, 0.0, 10.0, 9.0), 0.4), det("a", r(0.0, 0.0, 10.0, 10.0), 0.8)];
        let m = match_detections(&d, &g, 0.5, 300).unwrap();
        assert_eq!(m.records[0], MatchRecord { confidence: 0.8, true_positive: true });
        assert_eq!(m.records[1], MatchRecord { confidence: 0.4, true_positive: false });
    }

    #[test]
    fn max_det_drops_lowest_confidence() {
        let g = vec![gt("a", r(0.0, 0.0, 10.0, 10.0))];
        let mut d: Vec<Detection> = (0..300)
            .map(|i| det("a", r(100.0 + i as f64, 0.0, 101.0 + i as f64, 1.0), 0.5 + i as f64 / 1000.0))
            .collect();
        d.push(det("a", r(0.0, 0.0, 10.0, 10.0), 0.01));
        let m = match_detections(&d, &g, 0.5, 300).unwrap();
        assert_eq!(m.records.len(), 300);
        assert_eq!(m.true_positives(), 0);
        let m = match_detections(&d, &g, 0.5, 301).unwrap();
        assert_eq!(m.true_positives(), 1);
    }

    #[test]
    fn ap_edge_cases() {
        let g = vec![gt("a", r(0.0, 0.0, 10.0, 10.0)), gt("b", r(0.0, 0.0, 5.0, 5.0))];
        let perfect: Vec<Detection> = g.iter().map(|g| det(&g.image_id, g.rect, 1.0)).collect();
        let rep = map_report(&perfect, &g, &EvalConfig::default()).unwrap();
        assert_eq!(rep.map50, 1.0);
        assert_eq!(rep.map50_95, 1.0);
        assert_eq!(rep.per_threshold_ap.len(), 10);
        assert_eq!(rep.per_threshold_ap["0.50"], rep.map50);

        let rep = map_report(&[], &g, &EvalConfig::default()).unwrap();
        assert!(rep.per_threshold_ap.values().all(|&v| v == 0.0));
        assert_eq!(rep.counts.false_negatives, 2);

        assert!(matches!(
            average_precision(&MatchResult::default()),
            Err(EvalError::UndefinedMetric)
        ));
    }

    #[test]
    fn ap_hand_computed() {
        // Ranked TP, FP, TP with 2 GTs: recall 0.5 at precision 1, recall 1
        // at precision 2/3. Envelope gives 51 levels at 1 and 50 at 2/3.
        let m = MatchResult {
            records: vec![
                MatchRecord { confidence: 0.9, true_positive: true },
                MatchRecord { confidence: 0.8, true_positive: false },
                MatchRecord { confidence: 0.7, true_positive: true },
            ],
            num_gt: 2,
        };
        let expected = (51.0 + 50.0 * 2.0 / 3.0) / 101.0;
        assert_abs_diff_eq!(average_precision(&m).unwrap(), expected, epsilon = 1e-15);
    }

    #[test]
    fn invalid_detections_rejected() {
        let g = vec![gt("a", r(0.0, 0.0, 10.0, 10.0))];
        assert!(match_detections(&[det("a", r(0.0, 0.0, 1.0, 1.0), 1.5)], &g, 0.5, 300).is_err());
        assert!(match_detections(&[], &g, 0.0, 300).is_err());
    }

    #[test]
    fn latency_stats() {
        let s = LatencyStats::from_samples(&[5.0]).unwrap();
        assert_eq!((s.mean, s.median, s.p95), (5.0, 5.0, 5.0));
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        let s = LatencyStats::from_samples(&v).unwrap();
        assert_eq!(s.mean, 10.5);
        assert_eq!(s.median, 10.5);
        assert_eq!(s.p95, 19.0);
        assert!(LatencyStats::from_samples(&[]).is_none());
    }

    #[test]
    fn bench_counts_and_errors() {
        let frames = vec![(); 5];
        let rep = bench(&frames, 4, |_| Ok::<(), String>(())).unwrap();
        assert_eq!(rep.frame_count, 5);
        assert_eq!(rep.warmup_count, 4);
        assert_eq!(rep.inference_ms.mean, rep.inference_ms.median);
        assert!(bench(&frames, 5, |_| Ok::<(), String>(())).is_err());
        let mut n = 0;
        let err = bench(&frames, 1, |_| {
            n += 1;
            if n == 3 { Err("boom") } else { Ok(()) }
        })
        .unwrap_err();
        assert!(matches!(err, EvalError::Runner { frame: 2, .. }));
    }

    #[test]
    fn tables_render() {
        let rows = vec![TableRow {
            model: "YOLOv10-N".into(),
            inference_ms: 54.9,
            frequency_hz: 9.2,
            map50: 0.458,
            map50_95: 0.234,
        }];
        let t = render_tables(&rows, None).unwrap();
        assert!(t.text.contains("YOLOv10-N, 54.9, 9.2, 0.458, 0.234\n"));
        assert!(t.detectors_csv.ends_with("YOLOv10-N,54.9,9.2,0.458,0.234\n"));
        assert!(t.ablation_csv.is_none());
        assert!(!t.text.contains("(S)"));
        assert!(render_tables(&[], None).is_err());

        let ab = Ablation {
            synthetic: vec![AblationRow { model: "A".into(), map50: 0.5, map50_95: 0.3 }],
            real: vec![AblationRow { model: "B".into(), map50: 0.5, map50_95: 0.3 }],
        };
        assert!(render_tables(&rows, Some(&ab)).is_err());
    }
}
