//! Detection labels, dataset mixing and trainer configuration.
//!
//! Boxes are derived from instance masks with the pixel-edge convention: a
//! box covering inclusive pixel columns `x_min..=x_max` spans
//! `[x_min, x_max + 1)` in continuous image coordinates.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsutil::write_atomic;
use crate::kvtext;
use crate::rasterizer::InstanceMask;
use crate::rng::{SeededRng, PRNG_ID};

pub const DEFAULT_MIN_PIXELS: u64 = 25;
pub const DEFAULT_REAL_TRAIN_FRAC: f64 = 0.30;
pub const OYSTER_CLASS: u32 = 0;
const CONTAINMENT_TOL: f64 = 1e-9;
/// Six-decimal label text can push a tight box edge just past the border.
const PARSE_TOL: f64 = 1e-6;
const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid dataset input: {0}")]
    Validation(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}: unreadable image: {message}")]
    Image { path: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Normalized YOLO box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub class_id: u32,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(class_id: u32, cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, DatasetError> {
        let b = Self { class_id, cx, cy, w, h };
        b.check(CONTAINMENT_TOL).map_err(DatasetError::Validation)?;
        Ok(b)
    }

    fn check(&self, tol: f64) -> Result<(), String> {
        let vals = [self.cx, self.cy, self.w, self.h];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err("box values must be finite".into());
        }
        for (name, v) in [("cx", self.cx), ("cy", self.cy)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} = {v} outside [0, 1]"));
            }
        }
        for (name, v) in [("w", self.w), ("h", self.h)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(format!("{name} = {v} outside (0, 1]"));
            }
        }
        for (name, c, s) in [("x", self.cx, self.w), ("y", self.cy, self.h)] {
            if c - s / 2.0 < -tol || c + s / 2.0 > 1.0 + tol {
                return Err(format!("box extends outside the image along {name}"));
            }
        }
        Ok(())
    }

    /// Pulls edges that six-decimal rounding pushed past the border back onto it.
    fn clipped(&self) -> Self {
        let clip = |c: f64, s: f64| {
            let (lo, hi) = ((c - s / 2.0).max(0.0), (c + s / 2.0).min(1.0));
            ((lo + hi) / 2.0, hi - lo)
        };
        let (cx, w) = clip(self.cx, self.w);
        let (cy, h) = clip(self.cy, self.h);
        Self { cx, cy, w, h, ..*self }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        self.check(CONTAINMENT_TOL).map_err(DatasetError::Validation)
    }

    /// `(x_min, y_min, x_max, y_max)` in continuous pixel coordinates.
    pub fn to_pixels(&self, width: u32, height: u32) -> [f64; 4] {
        let (w, h) = (width as f64, height as f64);
        [
            (self.cx - self.w / 2.0) * w,
            (self.cy - self.h / 2.0) * h,
            (self.cx + self.w / 2.0) * w,
            (self.cy + self.h / 2.0) * h,
        ]
    }

    pub fn to_yolo_line(&self) -> String {
        format!(
            "{} {:.6} {:.6} {:.6} {:.6}\n",
            self.class_id, self.cx, self.cy, self.w, self.h
        )
    }
}

/// Inclusive pixel extent and visible pixel count of one instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelExtent {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
    pub pixels: u64,
}

impl PixelExtent {
    pub fn to_box(&self, class_id: u32, width: u32, height: u32) -> BoundingBox {
        let (w, h) = (width as f64, height as f64);
        BoundingBox {
            class_id,
            cx: (self.x_min + self.x_max + 1) as f64 / (2.0 * w),
            cy: (self.y_min + self.y_max + 1) as f64 / (2.0 * h),
            w: (self.x_max - self.x_min + 1) as f64 / w,
            h: (self.y_max - self.y_min + 1) as f64 / h,
        }
    }
}

pub fn instance_extents(mask: &InstanceMask) -> BTreeMap<u32, PixelExtent> {
    let mut out: BTreeMap<u32, PixelExtent> = BTreeMap::new();
    let w = mask.width as usize;
    if w == 0 {
        return out;
    }
    for (y, row) in mask.data.chunks_exact(w).enumerate() {
        let y = y as u32;
        for (x, &id) in row.iter().enumerate() {
            if id == 0 {
                continue;
            }
            let x = x as u32;
            out.entry(id)
                .and_modify(|e| {
                    e.x_min = e.x_min.min(x);
                    e.x_max = e.x_max.max(x);
                    e.y_max = y;
                    e.pixels += 1;
                })
                .or_insert(PixelExtent {
                    x_min: x,
                    y_min: y,
                    x_max: x,
                    y_max: y,
                    pixels: 1,
                });
        }
    }
    out
}

/// Tight boxes for every instance with at least `min_pixels` visible pixels,
/// ordered by instance id.
pub fn mask_to_boxes(mask: &InstanceMask, min_pixels: u64) -> Vec<BoundingBox> {
    instance_extents(mask)
        .values()
        .filter(|e| e.pixels >= min_pixels)
        .map(|e| e.to_box(OYSTER_CLASS, mask.width, mask.height))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Real,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledImage {
    pub image_path: PathBuf,
    pub width: u32,
    pub height: u32,
    pub boxes: Vec<BoundingBox>,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_ref: Option<String>,
}

impl LabeledImage {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let name = self.image_path.display();
        if self.width == 0 || self.height == 0 {
            return Err(DatasetError::Validation(format!("{name}: zero image size")));
        }
        if self.source == Source::Synthetic && self.scene_ref.is_none() {
            return Err(DatasetError::Validation(format!("{name}: synthetic entry without scene_ref")));
        }
        for b in &self.boxes {
            b.check(CONTAINMENT_TOL)
                .map_err(|m| DatasetError::Validation(format!("{name}: {m}")))?;
        }
        Ok(())
    }

    /// Label file name: the image file stem with a `.txt` extension.
    pub fn label_file_name(&self) -> String {
        let stem = self
            .image_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        format!("{stem}.txt")
    }
}

pub fn format_yolo_labels(boxes: &[BoundingBox]) -> String {
    boxes.iter().map(BoundingBox::to_yolo_line).collect()
}

/// Writes `dir/<image stem>.txt` and returns its path.
pub fn write_yolo_labels(entry: &LabeledImage, dir: &Path) -> Result<PathBuf, DatasetError> {
    for b in &entry.boxes {
        b.validate()?;
    }
    let path = dir.join(entry.label_file_name());
    write_atomic(&path, format_yolo_labels(&entry.boxes).as_bytes()).map_err(io_err(&path))?;
    Ok(path)
}

/// Parses YOLO label text; `origin` names the source in error messages.
pub fn parse_yolo_labels(text: &str, origin: &str) -> Result<Vec<BoundingBox>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let parse_err = |message: String| DatasetError::Parse {
            path: origin.to_string(),
            line: i + 1,
            message,
        };
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(parse_err(format!("expected 5 fields, found {}", fields.len())));
        }
        let class_id: u32 = fields[0]
            .parse()
            .map_err(|_| parse_err(format!("bad class id {:?}", fields[0])))?;
        let mut v = [0.0; 4];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            *slot = f.parse().map_err(|_| parse_err(format!("bad number {f:?}")))?;
        }
        let b = BoundingBox {
            class_id,
            cx: v[0],
            cy: v[1],
            w: v[2],
            h: v[3],
        };
        b.check(PARSE_TOL).map_err(parse_err)?;
        out.push(b.clipped());
    }
    Ok(out)
}

pub fn read_yolo_labels(path: &Path) -> Result<Vec<BoundingBox>, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_yolo_labels(&text, &path.display().to_string())
}

/// Loads `dir/images/*.{png,jpg,jpeg}` (sorted by name) with labels from
/// `dir/labels/<stem>.txt`. A missing label file means no objects.
pub fn load_labeled_dir(dir: &Path, source: Source) -> Result<Vec<LabeledImage>, DatasetError> {
    let images_dir = dir.join("images");
    let labels_dir = dir.join("labels");
    let mut paths: Vec<PathBuf> = fs::read_dir(&images_dir)
        .map_err(io_err(&images_dir))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io_err(&images_dir))?;
    paths.retain(|p| {
        p.extension()
            .map(|e| IMAGE_EXTENSIONS.contains(&e.to_string_lossy().to_ascii_lowercase().as_str()))
            .unwrap_or(false)
    });
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for image_path in paths {
        let (width, height) = image::image_dimensions(&image_path).map_err(|e| DatasetError::Image {
            path: image_path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut entry = LabeledImage {
            image_path,
            width,
            height,
            boxes: Vec::new(),
            source,
            scene_ref: None,
        };
        let label_path = labels_dir.join(entry.label_file_name());
        if label_path.exists() {
            entry.boxes = read_yolo_labels(&label_path)?;
        }
        if source == Source::Synthetic {
            entry.scene_ref = entry.image_path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        out.push(entry);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(flatten)]
    pub image: LabeledImage,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub tool_version: String,
    pub prng: String,
    pub seed: u64,
    pub real_train_frac: f64,
    pub config_echo: serde_json::Value,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if !(0.0..=1.0).contains(&self.real_train_frac) {
            return Err(DatasetError::Validation(format!(
                "real_train_frac {} outside [0, 1]",
                self.real_train_frac
            )));
        }
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            e.image.validate()?;
            if e.split == Split::Test && e.image.source != Source::Real {
                return Err(DatasetError::Validation(format!(
                    "{}: synthetic entry in the test split",
                    e.image.image_path.display()
                )));
            }
            if !seen.insert(&e.image.image_path) {
                return Err(DatasetError::Validation(format!(
                    "{}: listed twice",
                    e.image.image_path.display()
                )));
            }
        }
        Ok(())
    }

    pub fn split_entries(&self, split: Split) -> impl Iterator<Item = &LabeledImage> {
        self.entries.iter().filter(move |e| e.split == split).map(|e| &e.image)
    }

    pub fn count(&self, split: Split, source: Source) -> usize {
        self.split_entries(split).filter(|e| e.source == source).count()
    }
}

/// Number of real images that go to training: `floor(frac * n)`, with a
/// small slack so products like `0.3 * 10` land on the integer.
pub fn real_train_count(frac: f64, n: usize) -> usize {
    ((frac * n as f64) + 1e-9).floor().min(n as f64) as usize
}

/// Puts a seeded-shuffle subset of `real` plus every synthetic entry into
/// train and the remaining real entries into test. Entries keep their input
/// order (real first) in the manifest.
pub fn mix_split(
    real: Vec<LabeledImage>,
    synth: Vec<LabeledImage>,
    real_train_frac: f64,
    seed: u64,
) -> Result<DatasetManifest, DatasetError> {
    if !(0.0..=1.0).contains(&real_train_frac) {
        return Err(DatasetError::Validation(format!(
            "real_train_frac {real_train_frac} outside [0, 1]"
        )));
    }
    if let Some(e) = real.iter().find(|e| e.source != Source::Real) {
        return Err(DatasetError::Validation(format!(
            "{}: expected a real entry",
            e.image_path.display()
        )));
    }
    if let Some(e) = synth.iter().find(|e| e.source != Source::Synthetic) {
        return Err(DatasetError::Validation(format!(
            "{}: expected a synthetic entry",
            e.image_path.display()
        )));
    }
    let k = real_train_count(real_train_frac, real.len());
    let mut order: Vec<usize> = (0..real.len()).collect();
    SeededRng::stream(seed, "split", 0).shuffle(&mut order);
    let mut split = vec![Split::Test; real.len()];
    for &i in &order[..k] {
        split[i] = Split::Train;
    }
    let entries = real
        .into_iter()
        .zip(split)
        .map(|(image, split)| ManifestEntry { image, split })
        .chain(synth.into_iter().map(|image| ManifestEntry {
            image,
            split: Split::Train,
        }))
        .collect();
    let manifest = DatasetManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        prng: PRNG_ID.to_string(),
        seed,
        real_train_frac,
        config_echo: serde_json::Value::Null,
        entries,
    };
    manifest.validate()?;
    Ok(manifest)
}

/// Hyperparameters and dataset paths handed to the external trainer.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub epochs: u32,
    pub lr0: f64,
    pub scheduler: String,
    pub optimizer: String,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch: u32,
    pub imgsz: u32,
    pub close_mosaic: u32,
    pub mosaic: f64,
    pub augment: String,
    pub erasing: f64,
    pub val_iou: f64,
    pub max_det: u32,
    pub nc: u32,
    pub names: String,
    pub path: String,
    pub train: String,
    pub val: String,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            lr0: 0.01,
            scheduler: "cosine".into(),
            optimizer: "Adam".into(),
            momentum: 0.937,
            weight_decay: 0.0005,
            batch: 16,
            imgsz: 640,
            close_mosaic: 10,
            mosaic: 1.0,
            augment: "randaugment".into(),
            erasing: 0.4,
            val_iou: 0.7,
            max_det: 300,
            nc: 1,
            names: "oyster".into(),
            path: ".".into(),
            train: "train.txt".into(),
            val: "test.txt".into(),
        }
    }
}

impl TrainingConfig {
    pub fn to_text(&self) -> String {
        // `{:?}` keeps a decimal point on whole floats (`1.0`, not `1`).
        kvtext::format([
            ("epochs", self.epochs.to_string()),
            ("lr0", format!("{:?}", self.lr0)),
            ("scheduler", self.scheduler.clone()),
            ("optimizer", self.optimizer.clone()),
            ("momentum", format!("{:?}", self.momentum)),
            ("weight_decay", format!("{:?}", self.weight_decay)),
            ("batch", self.batch.to_string()),
            ("imgsz", self.imgsz.to_string()),
            ("close_mosaic", self.close_mosaic.to_string()),
            ("mosaic", format!("{:?}", self.mosaic)),
            ("augment", self.augment.clone()),
            ("erasing", format!("{:?}", self.erasing)),
            ("val_iou", format!("{:?}", self.val_iou)),
            ("max_det", self.max_det.to_string()),
            ("nc", self.nc.to_string()),
            ("names", self.names.clone()),
            ("path", self.path.clone()),
            ("train", self.train.clone()),
            ("val", self.val.clone()),
        ])
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, DatasetError> {
        let map = kvtext::parse_map(text).map_err(|e| DatasetError::Parse {
            path: origin.to_string(),
            line: e.line,
            message: e.message,
        })?;
        let get = |k: &str| {
            map.get(k).ok_or_else(|| DatasetError::Parse {
                path: origin.to_string(),
                line: 0,
                message: format!("missing key {k:?}"),
            })
        };
        fn num<T: std::str::FromStr>(origin: &str, k: &str, v: &str) -> Result<T, DatasetError> {
            v.parse().map_err(|_| DatasetError::Parse {
                path: origin.to_string(),
                line: 0,
                message: format!("bad value for {k}: {v:?}"),
            })
        }
        Ok(Self {
            epochs: num(origin, "epochs", get("epochs")?)?,
            lr0: num(origin, "lr0", get("lr0")?)?,
            scheduler: get("scheduler")?.clone(),
            optimizer: get("optimizer")?.clone(),
            momentum: num(origin, "momentum", get("momentum")?)?,
            weight_decay: num(origin, "weight_decay", get("weight_decay")?)?,
            batch: num(origin, "batch", get("batch")?)?,
            imgsz: num(origin, "imgsz", get("imgsz")?)?,
            close_mosaic: num(origin, "close_mosaic", get("close_mosaic")?)?,
            mosaic: num(origin, "mosaic", get("mosaic")?)?,
            augment: get("augment")?.clone(),
            erasing: num(origin, "erasing", get("erasing")?)?,
            val_iou: num(origin, "val_iou", get("val_iou")?)?,
            max_det: num(origin, "max_det", get("max_det")?)?,
            nc: num(origin, "nc", get("nc")?)?,
            names: get("names")?.clone(),
            path: get("path")?.clone(),
            train: get("train")?.clone(),
            val: get("val")?.clone(),
        })
    }
}

fn image_list<'a>(entries: impl Iterator<Item = &'a LabeledImage>) -> String {
    entries.map(|e| format!("{}\n", e.image_path.display())).collect()
}

/// Writes the trainer config to `out` plus `train.txt` and `test.txt`
/// image lists beside it.
pub fn emit_training_config(manifest: &DatasetManifest, out: &Path) -> Result<TrainingConfig, DatasetError> {
    manifest.validate()?;
    let dir = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let cfg = TrainingConfig {
        path: dir.display().to_string(),
        ..TrainingConfig::default()
    };
    let train = dir.join(&cfg.train);
    write_atomic(&train, image_list(manifest.split_entries(Split::Train)).as_bytes()).map_err(io_err(&train))?;
    let test = dir.join(&cfg.val);
    write_atomic(&test, image_list(manifest.split_entries(Split::Test)).as_bytes()).map_err(io_err(&test))?;
    write_atomic(out, cfg.to_text().as_bytes()).map_err(io_err(out))?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn entry(name: &str, source: Source) -> LabeledImage {
        LabeledImage {
            image_path: PathBuf::from(name),
            width: 640,
            height: 480,
            boxes: vec![],
            source,
            scene_ref: (source == Source::Synthetic).then(|| name.to_string()),
        }
    }

    fn pool(prefix: &str, n: usize, source: Source) -> Vec<LabeledImage> {
        (0..n).map(|i| entry(&format!("{prefix}{i:05}.png"), source)).collect()
    }

    #[test]
    fn rounded_border_box_parses_inside() {
        let b = &parse_yolo_labels("0 0.910156 0.926042 0.110937 0.147917\n", "t").unwrap()[0];
        b.validate().unwrap();
        assert!(b.cy + b.h / 2.0 <= 1.0);
        assert!((b.cy - 0.926042).abs() < 1e-6 && (b.h - 0.147917).abs() < 1e-6);
    }

    #[test]
    fn box_from_filled_block() {
        let mut mask = InstanceMask::background(100, 100);
        for y in 30..=40 {
            for x in 10..=20 {
                mask.data[y * 100 + x] = 7;
            }
        }
        let boxes = mask_to_boxes(&mask, DEFAULT_MIN_PIXELS);
        assert_eq!(boxes.len(), 1);
        let b = boxes[0];
        assert_eq!(b.class_id, 0);
        assert_abs_diff_eq!(b.cx, 0.155, epsilon = 1e-12);
        assert_abs_diff_eq!(b.cy, 0.355, epsilon = 1e-12);
        assert_abs_diff_eq!(b.w, 0.11, epsilon = 1e-12);
        assert_abs_diff_eq!(b.h, 0.11, epsilon = 1e-12);
    }

    #[test]
    fn empty_and_small_instances() {
        let mut mask = InstanceMask::background(20, 20);
        assert!(mask_to_boxes(&mask, DEFAULT_MIN_PIXELS).is_empty());
        for x in 0..10 {
            mask.data[x] = 3;
        }
        assert!(mask_to_boxes(&mask, 25).is_empty());
        assert_eq!(mask_to_boxes(&mask, 10).len(), 1);
    }

    #[test]
    fn full_image_box_is_valid() {
        let mask = InstanceMask {
            width: 8,
            height: 4,
            data: vec![1; 32],
        };
        let b = mask_to_boxes(&mask, 1)[0];
        assert_eq!((b.cx, b.cy, b.w, b.h), (0.5, 0.5, 1.0, 1.0));
        b.validate().unwrap();
    }

    #[test]
    fn yolo_line_format() {
        let b = BoundingBox::new(0, 0.5, 0.5, 0.25, 0.1).unwrap();
        assert_eq!(b.to_yolo_line(), "0 0.500000 0.500000 0.250000 0.100000\n");
    }

    #[test]
    fn yolo_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut e = entry("img_a.png", Source::Real);
        e.boxes = vec![
            BoundingBox::new(0, 0.123456789, 0.5, 0.2, 0.3).unwrap(),
            BoundingBox::new(0, 0.9, 0.1, 0.2, 0.2).unwrap(),
        ];
        let path = write_yolo_labels(&e, dir.path()).unwrap();
        assert_eq!(path.file_name().unwrap(), "img_a.txt");
        let back = read_yolo_labels(&path).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in e.boxes.iter().zip(&back) {
            assert_eq!(a.class_id, b.class_id);
            assert_abs_diff_eq!(a.cx, b.cx, epsilon = 1e-6);
            assert_abs_diff_eq!(a.cy, b.cy, epsilon = 1e-6);
            assert_abs_diff_eq!(a.w, b.w, epsilon = 1e-6);
            assert_abs_diff_eq!(a.h, b.h, epsilon = 1e-6);
        }
    }

    #[test]
    fn malformed_lines_report_line_number() {
        let err = parse_yolo_labels("0 0.5 0.5 0.1 0.1\n0 1.5 0.5 0.1 0.1\n", "x.txt").unwrap_err();
        match err {
            DatasetError::Parse { line, ref message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("cx"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_yolo_labels("0 0.5 0.5 0.1\n", "x.txt").unwrap_err();
        assert!(matches!(err, DatasetError::Parse { line: 1, .. }));
        let err = parse_yolo_labels("a 0.5 0.5 0.1 0.1\n", "x.txt").unwrap_err();
        assert!(matches!(err, DatasetError::Parse { line: 1, .. }));
    }

    #[test]
    fn rejects_boxes_outside_image() {
        assert!(BoundingBox::new(0, 0.05, 0.5, 0.2, 0.1).is_err());
        assert!(BoundingBox::new(0, 0.5, 0.5, 0.0, 0.1).is_err());
        assert!(BoundingBox::new(0, 0.5, 0.5, 0.1, 1.1).is_err());
    }

    #[test]
    fn protocol_split_counts() {
        let m = mix_split(pool("r", 2025, Source::Real), pool("s", 4000, Source::Synthetic), 0.30, 1).unwrap();
        assert_eq!(m.count(Split::Train, Source::Real), 607);
        assert_eq!(m.count(Split::Test, Source::Real), 1418);
        assert_eq!(m.count(Split::Train, Source::Synthetic), 4000);
        assert_eq!(m.count(Split::Test, Source::Synthetic), 0);
        assert_eq!(m.split_entries(Split::Train).count(), 4607);
    }

    #[test]
    fn split_is_seed_determined() {
        let a = mix_split(pool("r", 50, Source::Real), vec![], 0.3, 9).unwrap();
        let b = mix_split(pool("r", 50, Source::Real), vec![], 0.3, 9).unwrap();
        let c = mix_split(pool("r", 50, Source::Real), vec![], 0.3, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.entries, c.entries);
    }

    #[test]
    fn split_edges_and_errors() {
        assert_eq!(real_train_count(0.3, 10), 3);
        assert_eq!(real_train_count(1.0, 7), 7);
        assert_eq!(real_train_count(0.0, 7), 0);
        assert!(mix_split(vec![], vec![], 1.5, 0).is_err());
        assert!(mix_split(pool("s", 1, Source::Synthetic), vec![], 0.3, 0).is_err());
        let mut bad = entry("s.png", Source::Synthetic);
        bad.scene_ref = None;
        assert!(mix_split(vec![], vec![bad], 0.3, 0).is_err());
    }

    #[test]
    fn training_config_contents_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = mix_split(pool("r", 10, Source::Real), pool("s", 2, Source::Synthetic), 0.3, 4).unwrap();
        let out = dir.path().join("train_config.yaml");
        let cfg = emit_training_config(&m, &out).unwrap();
        let text = fs::read_to_string(&out).unwrap();
        for line in [
            "epochs: 300",
            "lr0: 0.01",
            "max_det: 300",
            "val_iou: 0.7",
            "momentum: 0.937",
            "weight_decay: 0.0005",
            "batch: 16",
            "imgsz: 640",
            "close_mosaic: 10",
            "mosaic: 1.0",
            "erasing: 0.4",
            "scheduler: cosine",
            "augment: randaugment",
        ] {
            assert!(text.lines().any(|l| l == line), "missing {line}");
        }
        assert_eq!(TrainingConfig::parse(&text, "cfg").unwrap(), cfg);
        let train = fs::read_to_string(dir.path().join("train.txt")).unwrap();
        let test = fs::read_to_string(dir.path().join("test.txt")).unwrap();
        assert_eq!(train.lines().count(), 5);
        assert_eq!(test.lines().count(), 7);
    }

    #[test]
    fn manifest_json_round_trip() {
        let m = mix_split(pool("r", 5, Source::Real), pool("s", 2, Source::Synthetic), 0.4, 2).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: DatasetManifest = serde_json::from_str(&json).unwrap();
        assert_eq!(m, back);
    }
}
