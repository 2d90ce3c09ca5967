//! `reefforge`: scene generation, synthesis, dataset mixing, evaluation,
//! benchmarking and reporting for synthetic oyster detection data.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{BenchArgs, EvalArgs, SynthArgs};
use crate::config::PipelineConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "reefforge", version, about = "Synthetic oyster detection dataset pipeline")]
struct Cli {
    /// Flat `key: value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 uses every core). Never changes outputs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Place oysters, render depth maps and instance masks.
    Generate {
        /// Number of scenes.
        #[arg(long)]
        scenes: Option<usize>,
    },
    /// Turn rendered scenes into photoreal images with labels.
    Synth {
        /// Output directory of a previous `generate` run.
        #[arg(long)]
        scenes_dir: PathBuf,
        /// Real dataset root holding `images/` used as style references.
        #[arg(long)]
        real_dir: Option<PathBuf>,
        /// Use the built-in deterministic backend.
        #[arg(long, conflicts_with = "backend")]
        mock: bool,
        /// Synthesis service URL.
        #[arg(long)]
        backend: Option<String>,
        /// Stop at the first failed scene.
        #[arg(long)]
        fail_fast: bool,
    },
    /// Split real and synthetic data and emit a trainer configuration.
    Mix {
        /// Real dataset root (`images/`, `labels/`).
        #[arg(long)]
        real_dir: PathBuf,
        /// Synthetic dataset root (`images/`, `labels/`).
        #[arg(long)]
        synth_dir: PathBuf,
        /// Fraction of real images placed in train.
        #[arg(long)]
        frac: Option<f64>,
    },
    /// Compute mAP@0.5 and mAP@0.5:0.95.
    Eval {
        /// Detections as a JSON array.
        #[arg(long, conflicts_with = "pred_dir")]
        predictions: Option<PathBuf>,
        /// Detections as a YOLO dataset root (confidence 1).
        #[arg(long)]
        pred_dir: Option<PathBuf>,
        /// Ground truth as a JSON array.
        #[arg(long)]
        gt_json: Option<PathBuf>,
        /// Ground truth as a YOLO dataset root.
        #[arg(long)]
        gt_dir: Option<PathBuf>,
        /// Ground truth as a directory of YOLO label files.
        #[arg(long, requires = "sizes")]
        gt_labels: Option<PathBuf>,
        /// JSON object mapping image id to `[width, height]`.
        #[arg(long)]
        sizes: Option<PathBuf>,
        /// Detections kept per image.
        #[arg(long)]
        max_det: Option<usize>,
    },
    /// Time a detector runner per frame.
    Bench {
        /// `sleep:MILLISECONDS` or `exec:PROGRAM` (called with the frame path).
        #[arg(long)]
        runner: String,
        /// Number of frames when no directory is given.
        #[arg(long, default_value_t = 100)]
        frames: usize,
        /// Directory of frames passed to the runner.
        #[arg(long)]
        frames_dir: Option<PathBuf>,
        /// Leading frames excluded from timing.
        #[arg(long, default_value_t = 10)]
        warmup: usize,
        /// Model name recorded in the report.
        #[arg(long, default_value = "model")]
        model: String,
    },
    /// Render the detector comparison and ablation tables.
    Report {
        /// Table input JSON (`models`, optional `ablation`).
        #[arg(long)]
        input: Option<PathBuf>,
        /// `NAME=EVAL_JSON,BENCH_JSON`, repeatable.
        #[arg(long = "entry")]
        entries: Vec<String>,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        cfg.apply_text(&text, &path.display().to_string())?;
    } else {
        cfg.apply_text("", "defaults")?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    match &cli.command {
        Command::Generate { scenes: Some(n) } => cfg.scenes = *n,
        Command::Mix { frac: Some(f), .. } => cfg.real_train_frac = *f,
        Command::Eval { max_det: Some(m), .. } => cfg.max_det = *m,
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(&cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Generate { .. } => commands::generate(&cfg),
        Command::Synth {
            scenes_dir,
            real_dir,
            mock,
            backend,
            fail_fast,
        } => commands::synth(
            &cfg,
            &SynthArgs {
                scenes_dir,
                real_dir,
                mock,
                backend,
                fail_fast,
            },
        ),
        Command::Mix { real_dir, synth_dir, .. } => commands::mix(&cfg, &real_dir, &synth_dir),
        Command::Eval {
            predictions,
            pred_dir,
            gt_json,
            gt_dir,
            gt_labels,
            sizes,
            ..
        } => commands::eval(
            &cfg,
            &EvalArgs {
                predictions,
                pred_dir,
                gt_json,
                gt_dir,
                gt_labels,
                sizes,
            },
        ),
        Command::Bench {
            runner,
            frames,
            frames_dir,
            warmup,
            model,
        } => commands::bench_cmd(
            &cfg,
            &BenchArgs {
                runner,
                frames,
                frames_dir,
                warmup,
                model,
            },
        ),
        Command::Report { input, entries } => commands::report(&cfg, input.as_deref(), &entries),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
