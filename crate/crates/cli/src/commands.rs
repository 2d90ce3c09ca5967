//! One function per subcommand.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;
use std::time::Duration;

use rayon::prelude::*;
use reefforge_core::datasetkit::{
    emit_training_config, load_labeled_dir, mask_to_boxes, mix_split, parse_yolo_labels, write_yolo_labels,
    LabeledImage, Source, Split,
};
use reefforge_core::evalbench::{
    bench, map_report, render_tables, BenchReport, Detection, EvalConfig, EvalReport, GroundTruth, PixelBox,
    ReportInput, TableRow,
};
use reefforge_core::fsutil::{sha256_hex, write_atomic};
use reefforge_core::rasterizer::{
    decode_mask_png, depth_file_name, encode_depth_png, encode_mask_png, encode_png_rgb, mask_file_name,
    preview_file_name, render, RenderConfig,
};
use reefforge_core::rng::{derive_seed, PRNG_ID};
use reefforge_core::scenegen::{build_scene, SceneDocument};
use reefforge_core::synthclient::{
    build_request_with, select_references, synthesize, HttpBackend, MockBackend, RetryPolicy, SynthError,
    SynthesisBackend, BACKEND_URL_ENV,
};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::manifest::{
    read_json, write_json, GenerateManifest, Header, RunManifest, SceneEntry, SynthEntry, SynthFailure,
    SynthManifest, MANIFEST_NAME,
};

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

fn write_file(out: &Path, rel: &str, bytes: &[u8]) -> Result<String, CliError> {
    let path = out.join(rel);
    write_atomic(&path, bytes).map_err(CliError::io(&path))?;
    Ok(sha256_hex(bytes))
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(CliError::io(path))
}

fn stage<'a, E: Into<CliError>>(id: &'a str, seed: u64, stage: &'static str) -> impl FnOnce(E) -> CliError + 'a {
    move |e| e.into().at(id, seed, stage)
}

pub fn scene_id(index: usize) -> String {
    format!("scene_{index:05}")
}

fn generate_one(cfg: &PipelineConfig, index: usize) -> Result<SceneEntry, CliError> {
    let id = &scene_id(index);
    let seed = derive_seed(cfg.seed, "scene", index as u64);
    let (placement, camera) = build_scene(seed, &cfg.scene).map_err(stage(id, seed, "placement"))?;
    let output = render(&placement, &camera, &RenderConfig::default(), id).map_err(stage(id, seed, "render"))?;
    let depth = encode_depth_png(&output.depth, cfg.synth.max_depth_m, cfg.synth.depth_polarity)
        .map_err(stage(id, seed, "encode"))?;
    let (mask, _) = encode_mask_png(&output.mask).map_err(stage(id, seed, "encode"))?;
    let preview = encode_png_rgb(output.preview.as_ref().expect("preview enabled")).map_err(stage(id, seed, "encode"))?;
    let oysters = placement.instances.len();
    let doc = SceneDocument {
        scene_id: id.clone(),
        seed,
        prng: PRNG_ID.into(),
        placement,
        camera,
        config: serde_json::to_value(&cfg.scene).expect("scene config serializes"),
    };
    let mut json = serde_json::to_vec_pretty(&doc).expect("scene serializes");
    json.push(b'\n');

    let entry = SceneEntry {
        scene_id: id.clone(),
        seed,
        oysters,
        scene: format!("scenes/{id}.json"),
        depth: format!("renders/{}", depth_file_name(id)),
        mask: format!("renders/{}", mask_file_name(id)),
        preview: format!("renders/{}", preview_file_name(id)),
        width: doc.camera.width,
        height: doc.camera.height,
        sha256: BTreeMap::new(),
    };
    let mut sha = BTreeMap::new();
    for (rel, bytes) in [
        (&entry.scene, &json),
        (&entry.depth, &depth),
        (&entry.mask, &mask),
        (&entry.preview, &preview),
    ] {
        sha.insert(rel.clone(), write_file(&cfg.out, rel, bytes).map_err(stage(id, seed, "write"))?);
    }
    eprintln!("generate: {id} ({oysters} oysters)");
    Ok(SceneEntry { sha256: sha, ..entry })
}

pub fn generate(cfg: &PipelineConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.out).map_err(CliError::io(&cfg.out))?;
    let results: Vec<Result<SceneEntry, CliError>> =
        (0..cfg.scenes).into_par_iter().map(|i| generate_one(cfg, i)).collect();
    let scenes = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let manifest = GenerateManifest {
        header: Header::new("generate", cfg),
        scenes,
    };
    write_json(&cfg.out.join(MANIFEST_NAME), &manifest)?;
    eprintln!("generate: wrote {} scenes to {}", manifest.scenes.len(), cfg.out.display());
    Ok(())
}

pub struct SynthArgs {
    pub scenes_dir: PathBuf,
    pub real_dir: Option<PathBuf>,
    pub mock: bool,
    pub backend: Option<String>,
    pub fail_fast: bool,
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut paths = Vec::new();
    for e in fs::read_dir(dir).map_err(CliError::io(dir))? {
        let p = e.map_err(CliError::io(dir))?.path();
        let ext = p.extension().map(|e| e.to_string_lossy().to_ascii_lowercase());
        if ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            paths.push(p);
        }
    }
    paths.sort();
    Ok(paths)
}

fn synth_one(
    cfg: &PipelineConfig,
    args: &SynthArgs,
    pool: &[PathBuf],
    backend: &dyn SynthesisBackend,
    index: usize,
    scene: &SceneEntry,
) -> Result<SynthEntry, CliError> {
    let id = &scene.scene_id;
    let seed = derive_seed(cfg.seed, "synth", index as u64);
    let depth = read_file(&args.scenes_dir.join(&scene.depth)).map_err(stage(id, seed, "read"))?;
    let mask_png = read_file(&args.scenes_dir.join(&scene.mask)).map_err(stage(id, seed, "read"))?;
    let picks = select_references(pool.len(), seed).map_err(stage(id, seed, "request"))?;
    let request = build_request_with(
        depth,
        mask_png,
        id,
        pool.len(),
        |i| fs::read(&pool[i]).map_err(|e| SynthError::Validation(format!("{}: {e}", pool[i].display()))),
        &cfg.synth,
        seed,
    )
    .map_err(stage(id, seed, "request"))?;
    let policy = RetryPolicy::default();
    let result = synthesize(&request, backend, &policy).map_err(stage(id, seed, "synthesize"))?;

    // labels come from the exact mask bytes the backend was conditioned on
    let mask = decode_mask_png(&request.mask_png).map_err(stage(id, seed, "label"))?;
    let image_rel = format!("images/{id}.png");
    let entry = LabeledImage {
        image_path: PathBuf::from(&image_rel),
        width: mask.width,
        height: mask.height,
        boxes: mask_to_boxes(&mask, cfg.min_pixels),
        source: Source::Synthetic,
        scene_ref: Some(result.scene_ref.clone()),
    };
    let mut sha = BTreeMap::new();
    sha.insert(image_rel.clone(), write_file(&cfg.out, &image_rel, &result.image).map_err(stage(id, seed, "write"))?);
    let label_path = write_yolo_labels(&entry, &cfg.out.join("labels")).map_err(stage(id, seed, "write"))?;
    let label_rel = format!("labels/{}", entry.label_file_name());
    sha.insert(label_rel.clone(), sha256_hex(&read_file(&label_path).map_err(stage(id, seed, "write"))?));
    eprintln!("synth: {id} ({} boxes)", entry.boxes.len());
    Ok(SynthEntry {
        scene_ref: result.scene_ref,
        seed,
        image: image_rel,
        label: label_rel,
        boxes: entry.boxes.len(),
        references: picks
            .iter()
            .map(|&i| pool[i].file_name().unwrap_or_default().to_string_lossy().into_owned())
            .collect(),
        request_digest: result.request_digest,
        backend_id: result.backend_id,
        sha256: sha,
    })
}

pub fn synth(cfg: &PipelineConfig, args: &SynthArgs) -> Result<(), CliError> {
    let gen: GenerateManifest = read_json(&args.scenes_dir.join(MANIFEST_NAME))?;
    let real_dir = args
        .real_dir
        .clone()
        .ok_or_else(|| CliError::Validation("synth needs --real-dir with reference images".into()))?;
    let pool = list_images(&real_dir.join("images"))?;
    select_references(pool.len(), 0)?;

    let (backend, backend_name): (Box<dyn SynthesisBackend>, String) = if args.mock {
        (Box::new(MockBackend::default()), "mock".into())
    } else {
        let url = args
            .backend
            .clone()
            .or_else(|| std::env::var(BACKEND_URL_ENV).ok().filter(|s| !s.is_empty()))
            .or_else(|| cfg.backend_url.clone())
            .ok_or_else(|| {
                CliError::Validation(format!("no backend: pass --backend, set {BACKEND_URL_ENV}, or use --mock"))
            })?;
        let b = HttpBackend::new(&url, Duration::from_secs_f64(cfg.timeout_s))?;
        (Box::new(b), url)
    };

    fs::create_dir_all(cfg.out.join("images")).map_err(CliError::io(&cfg.out))?;
    let lanes = cfg.synth_concurrency.min(rayon::current_num_threads()).max(1);
    let lane_pool = rayon::ThreadPoolBuilder::new()
        .num_threads(lanes)
        .build()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let run = |i: usize, s: &SceneEntry| synth_one(cfg, args, &pool, backend.as_ref(), i, s);
    let outcomes: Vec<Result<SynthEntry, CliError>> = lane_pool.install(|| {
        if args.fail_fast {
            match gen.scenes.par_iter().enumerate().map(|(i, s)| run(i, s)).collect::<Result<Vec<_>, _>>() {
                Ok(v) => v.into_iter().map(Ok).collect(),
                Err(e) => vec![Err(e)],
            }
        } else {
            gen.scenes.par_iter().enumerate().map(|(i, s)| run(i, s)).collect()
        }
    });
    if args.fail_fast {
        if let Some(Err(_)) = outcomes.first() {
            return outcomes.into_iter().next().expect("one outcome").map(|_| ());
        }
    }

    let mut results = Vec::new();
    let mut failures = Vec::new();
    let mut first_error = None;
    for (scene, outcome) in gen.scenes.iter().zip(outcomes) {
        match outcome {
            Ok(r) => results.push(r),
            Err(e) => {
                eprintln!("synth: {e}");
                failures.push(SynthFailure {
                    scene_ref: scene.scene_id.clone(),
                    error: e.to_string(),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    let manifest = SynthManifest {
        header: Header::new("synth", cfg),
        scenes_dir: args.scenes_dir.display().to_string(),
        real_dir: real_dir.display().to_string(),
        backend: backend_name,
        results,
        failures,
    };
    write_json(&cfg.out.join(MANIFEST_NAME), &manifest)?;
    eprintln!(
        "synth: {} succeeded, {} failed",
        manifest.results.len(),
        manifest.failures.len()
    );
    match first_error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

pub fn mix(cfg: &PipelineConfig, real_dir: &Path, synth_dir: &Path) -> Result<(), CliError> {
    let absolute = |d: &Path| d.canonicalize().map_err(CliError::io(d));
    let real = load_labeled_dir(&absolute(real_dir)?, Source::Real)?;
    let synth = load_labeled_dir(&absolute(synth_dir)?, Source::Synthetic)?;
    let mut manifest = mix_split(real, synth, cfg.real_train_frac, cfg.seed)?;
    manifest.config_echo = serde_json::json!({
        "tool": "reefforge",
        "command": "mix",
        "config": cfg.echo(),
        "real_dir": real_dir.display().to_string(),
        "synth_dir": synth_dir.display().to_string(),
    });
    fs::create_dir_all(&cfg.out).map_err(CliError::io(&cfg.out))?;
    write_json(&cfg.out.join(MANIFEST_NAME), &manifest)?;
    emit_training_config(&manifest, &cfg.out.join("train_config.yaml"))?;
    let train = manifest.split_entries(Split::Train).count();
    let test = manifest.split_entries(Split::Test).count();
    println!("train {train} (real {}, synthetic {})", manifest.count(Split::Train, Source::Real), manifest.count(Split::Train, Source::Synthetic));
    println!("test {test}");
    Ok(())
}

pub struct EvalArgs {
    pub predictions: Option<PathBuf>,
    pub pred_dir: Option<PathBuf>,
    pub gt_json: Option<PathBuf>,
    pub gt_dir: Option<PathBuf>,
    pub gt_labels: Option<PathBuf>,
    pub sizes: Option<PathBuf>,
}

fn stem(p: &Path) -> String {
    p.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

fn labeled_to_rects(entries: &[LabeledImage]) -> Vec<(String, PixelBox)> {
    entries
        .iter()
        .flat_map(|e| {
            let id = stem(&e.image_path);
            e.boxes.iter().map(move |b| {
                let [x_min, y_min, x_max, y_max] = b.to_pixels(e.width, e.height);
                (
                    id.clone(),
                    PixelBox {
                        x_min,
                        y_min,
                        x_max,
                        y_max,
                    },
                )
            })
        })
        .collect()
}

fn labels_with_sizes(labels: &Path, sizes: &Path) -> Result<Vec<LabeledImage>, CliError> {
    let sizes: BTreeMap<String, [u32; 2]> = read_json(sizes)?;
    let mut files: Vec<PathBuf> = fs::read_dir(labels)
        .map_err(CliError::io(labels))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(CliError::io(labels))?;
    files.retain(|p| p.extension().is_some_and(|e| e == "txt"));
    files.sort();
    let mut out = Vec::new();
    for f in files {
        let id = stem(&f);
        let [width, height] = *sizes
            .get(&id)
            .ok_or_else(|| CliError::Validation(format!("{}: no size for image {id:?}", f.display())))?;
        let text = fs::read_to_string(&f).map_err(CliError::io(&f))?;
        out.push(LabeledImage {
            image_path: PathBuf::from(format!("{id}.png")),
            width,
            height,
            boxes: parse_yolo_labels(&text, &f.display().to_string())?,
            source: Source::Real,
            scene_ref: None,
        });
    }
    Ok(out)
}

pub fn eval(cfg: &PipelineConfig, args: &EvalArgs) -> Result<(), CliError> {
    let gts: Vec<GroundTruth> = match (&args.gt_json, &args.gt_dir, &args.gt_labels) {
        (Some(p), None, None) => read_json(p)?,
        (None, Some(d), None) => labeled_to_rects(&load_labeled_dir(d, Source::Real)?)
            .into_iter()
            .map(|(image_id, rect)| GroundTruth {
                image_id,
                rect,
                class_id: 0,
            })
            .collect(),
        (None, None, Some(l)) => {
            let sizes = args
                .sizes
                .as_ref()
                .ok_or_else(|| CliError::Validation("--gt-labels needs --sizes".into()))?;
            labeled_to_rects(&labels_with_sizes(l, sizes)?)
                .into_iter()
                .map(|(image_id, rect)| GroundTruth {
                    image_id,
                    rect,
                    class_id: 0,
                })
                .collect()
        }
        _ => return Err(CliError::Validation("give exactly one of --gt-json, --gt-dir, --gt-labels".into())),
    };
    let dets: Vec<Detection> = match (&args.predictions, &args.pred_dir) {
        (Some(p), None) => read_json(p)?,
        (None, Some(d)) => labeled_to_rects(&load_labeled_dir(d, Source::Real)?)
            .into_iter()
            .map(|(image_id, rect)| Detection {
                image_id,
                rect,
                confidence: 1.0,
                class_id: 0,
            })
            .collect(),
        _ => return Err(CliError::Validation("give exactly one of --predictions, --pred-dir".into())),
    };
    let report = map_report(&dets, &gts, &EvalConfig { max_det: cfg.max_det })?;
    fs::create_dir_all(&cfg.out).map_err(CliError::io(&cfg.out))?;
    write_json(&cfg.out.join("eval_report.json"), &report)?;
    let mut inputs = BTreeMap::new();
    for (k, v) in [
        ("predictions", &args.predictions),
        ("pred_dir", &args.pred_dir),
        ("gt_json", &args.gt_json),
        ("gt_dir", &args.gt_dir),
        ("gt_labels", &args.gt_labels),
        ("sizes", &args.sizes),
    ] {
        if let Some(p) = v {
            inputs.insert(k.to_string(), serde_json::json!(p.display().to_string()));
        }
    }
    write_json(
        &cfg.out.join(MANIFEST_NAME),
        &RunManifest {
            header: Header::new("eval", cfg),
            inputs,
            outputs: BTreeMap::from([("report".into(), "eval_report.json".into())]),
        },
    )?;
    println!("map50 {:.6} map50_95 {:.6}", report.map50, report.map50_95);
    println!(
        "tp {} fp {} fn {}",
        report.counts.true_positives, report.counts.false_positives, report.counts.false_negatives
    );
    Ok(())
}

pub struct BenchArgs {
    pub runner: String,
    pub frames: usize,
    pub frames_dir: Option<PathBuf>,
    pub warmup: usize,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchFile {
    pub per_model: BTreeMap<String, BenchReport>,
}

enum Runner {
    Sleep(Duration),
    Exec(String),
}

fn parse_runner(spec: &str) -> Result<Runner, CliError> {
    match spec.split_once(':') {
        Some(("sleep", ms)) => {
            let ms: f64 = ms
                .parse()
                .map_err(|_| CliError::Validation(format!("bad sleep duration in {spec:?}")))?;
            if !(ms >= 0.0 && ms.is_finite()) {
                return Err(CliError::Validation(format!("bad sleep duration in {spec:?}")));
            }
            Ok(Runner::Sleep(Duration::from_secs_f64(ms / 1000.0)))
        }
        Some(("exec", prog)) if !prog.is_empty() => Ok(Runner::Exec(prog.to_string())),
        _ => Err(CliError::Validation(format!(
            "runner must be sleep:MILLISECONDS or exec:PROGRAM, got {spec:?}"
        ))),
    }
}

pub fn bench_cmd(cfg: &PipelineConfig, args: &BenchArgs) -> Result<(), CliError> {
    let runner = parse_runner(&args.runner)?;
    let frames: Vec<String> = match &args.frames_dir {
        Some(d) => list_images(d)?.iter().map(|p| p.display().to_string()).collect(),
        None => (0..args.frames).map(|i| i.to_string()).collect(),
    };
    let report = bench(&frames, args.warmup, |frame: &String| match &runner {
        Runner::Sleep(d) => {
            std::thread::sleep(*d);
            Ok(())
        }
        Runner::Exec(prog) => {
            let status = Process::new(prog).arg(frame).status().map_err(|e| format!("{prog}: {e}"))?;
            if status.success() {
                Ok(())
            } else {
                Err(format!("{prog} exited with {status}"))
            }
        }
    })?;
    if !report.check_invariant() {
        eprintln!("bench: warning: throughput exceeds the inverse mean latency");
    }
    fs::create_dir_all(&cfg.out).map_err(CliError::io(&cfg.out))?;
    let file = BenchFile {
        per_model: BTreeMap::from([(args.model.clone(), report.clone())]),
    };
    write_json(&cfg.out.join("bench_report.json"), &file)?;
    write_json(
        &cfg.out.join(MANIFEST_NAME),
        &RunManifest {
            header: Header::new("bench", cfg),
            inputs: BTreeMap::from([
                ("runner".into(), serde_json::json!(args.runner)),
                ("model".into(), serde_json::json!(args.model)),
                ("frames".into(), serde_json::json!(frames.len())),
                ("warmup".into(), serde_json::json!(args.warmup)),
            ]),
            outputs: BTreeMap::from([("report".into(), "bench_report.json".into())]),
        },
    )?;
    println!(
        "{}: inference_ms mean {:.3} median {:.3} p95 {:.3}, pipeline_hz {:.3}",
        args.model, report.inference_ms.mean, report.inference_ms.median, report.inference_ms.p95, report.pipeline_hz
    );
    Ok(())
}

/// `NAME=EVAL_JSON,BENCH_JSON`
fn parse_entry(spec: &str) -> Result<TableRow, CliError> {
    let bad = || CliError::Validation(format!("entry must be NAME=EVAL_JSON,BENCH_JSON, got {spec:?}"));
    let (name, files) = spec.split_once('=').ok_or_else(bad)?;
    let (eval_path, bench_path) = files.split_once(',').ok_or_else(bad)?;
    let eval: EvalReport = read_json(Path::new(eval_path))?;
    let bench: BenchFile = read_json(Path::new(bench_path))?;
    let b = bench
        .per_model
        .get(name)
        .or_else(|| (bench.per_model.len() == 1).then(|| bench.per_model.values().next()).flatten())
        .ok_or_else(|| CliError::Validation(format!("{bench_path}: no timing for model {name:?}")))?;
    Ok(TableRow::from_reports(name, &eval, b))
}

pub fn report(cfg: &PipelineConfig, input: Option<&Path>, entries: &[String]) -> Result<(), CliError> {
    let mut doc = match input {
        Some(p) => read_json::<ReportInput>(p)?,
        None => ReportInput {
            models: Vec::new(),
            ablation: None,
        },
    };
    for e in entries {
        doc.models.push(parse_entry(e)?);
    }
    let tables = render_tables(&doc.models, doc.ablation.as_ref())?;
    fs::create_dir_all(&cfg.out).map_err(CliError::io(&cfg.out))?;
    let mut outputs = BTreeMap::new();
    write_file(&cfg.out, "tables.txt", tables.text.as_bytes())?;
    outputs.insert("text".to_string(), "tables.txt".to_string());
    write_file(&cfg.out, "detectors.csv", tables.detectors_csv.as_bytes())?;
    outputs.insert("detectors".into(), "detectors.csv".into());
    if let Some(csv) = &tables.ablation_csv {
        write_file(&cfg.out, "ablation.csv", csv.as_bytes())?;
        outputs.insert("ablation".into(), "ablation.csv".into());
    }
    let mut inputs = BTreeMap::new();
    if let Some(p) = input {
        inputs.insert("input".to_string(), serde_json::json!(p.display().to_string()));
    }
    if !entries.is_empty() {
        inputs.insert("entries".to_string(), serde_json::json!(entries));
    }
    write_json(
        &cfg.out.join(MANIFEST_NAME),
        &RunManifest {
            header: Header::new("report", cfg),
            inputs,
            outputs,
        },
    )?;
    print!("{}", tables.text);
    Ok(())
}
