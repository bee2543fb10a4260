//! The `softseg` command line: generate → fuse → train → evaluate.
//!
//! Exit codes: 0 success, 1 runtime or I/O failure, 2 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{
    generate_synthetic, load_dataset, write_json, write_raster, write_report, CaseEvaluation, Dataset, EvalReport,
    RasterFile, ShapeFamily, Split, SynthConfig,
};
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::mask::{fuse_mean, threshold, variance_map};
use crate::metrics::{ged_squared_deterministic, parse_threshold_range, threshold_sweep};
use crate::nn::{
    check_params, load_checkpoint, predict, save_checkpoint, train_with, EpochRecord, Sample, TinyUNetConfig,
    TrainConfig,
};

/// Threshold at which GED is evaluated.
pub const GED_THRESHOLD: f64 = 0.5;

#[derive(Debug, Parser)]
#[command(name = "softseg", version, about = "Soft-label fusion, segmentation metrics and a toy U-Net trainer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic multi-annotator dataset and its manifest.
    GenData(GenDataArgs),
    /// Fuse each case's annotations into a soft label and a variance map.
    Fuse(FuseArgs),
    /// Train a U-Net on the fused soft labels.
    Train(TrainArgs),
    /// Threshold-sweep and GED evaluation of a checkpoint.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 48)]
    pub cases: usize,
    #[arg(long, default_value_t = 5)]
    pub annotators: usize,
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of trailing cases tagged for validation.
    #[arg(long, default_value_t = 8)]
    pub val_cases: usize,
    #[arg(long, value_enum, default_value_t = FamilyArg::Ellipse)]
    pub family: FamilyArg,
    #[arg(long, default_value_t = SynthConfig::default().boundary_noise)]
    pub boundary_noise: f64,
    #[arg(long, default_value_t = SynthConfig::default().bias_scale)]
    pub bias_scale: f64,
    #[arg(long, default_value_t = SynthConfig::default().image_noise)]
    pub image_noise: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    Ellipse,
    Blob,
}

impl From<FamilyArg> for ShapeFamily {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Ellipse => ShapeFamily::Ellipse,
            FamilyArg::Blob => ShapeFamily::Blob,
        }
    }
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LossArg {
    Ce,
    Dice,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Ce => LossKind::CrossEntropy,
            LossArg::Dice => LossKind::Dice,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Checkpoint path; `<out>.json` and `<out>.history.csv` are written beside it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    #[arg(long, value_parser = parse_epochs)]
    pub epochs: Option<usize>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON training config; flags given on the command line override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub no_augment: bool,
    #[arg(long)]
    pub vflip_prob: Option<f64>,
    #[arg(long)]
    pub base_channels: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub quiet: bool,
}

fn parse_epochs(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("epochs must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    All,
    Train,
    Val,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Inclusive `start:stop:step` range.
    #[arg(long, default_value = "0.1:0.9:0.1")]
    pub thresholds: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    pub split: SplitArg,
    /// Recorded in the report; defaults to the checkpoint's training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Model config JSON; defaults to `<checkpoint>.json`.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

/// Training config file: the trainer settings plus the model shape.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainFile {
    pub model: TinyUNetConfig,
    pub train: TrainConfig,
}

/// Written beside every checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub manifest: String,
    pub model: TinyUNetConfig,
    pub train: TrainConfig,
    pub param_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedCase {
    pub id: String,
    pub annotators: usize,
    pub fused: String,
    pub variance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuseMeta {
    pub seed: Option<u64>,
    pub manifest: String,
    pub cases: Vec<FusedCase>,
}

pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    with_suffix(checkpoint, ".json")
}

pub fn history_path(checkpoint: &Path) -> PathBuf {
    with_suffix(checkpoint, ".history.csv")
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    s.into()
}

fn utf8(path: &Path) -> String {
    path.to_string_lossy().into_owned()
}

pub fn cmd_gen_data(args: &GenDataArgs) -> Result<PathBuf> {
    let cfg = SynthConfig {
        size: args.size,
        cases: args.cases,
        annotators: args.annotators,
        val_cases: args.val_cases.min(args.cases.saturating_sub(1)),
        family: args.family.into(),
        boundary_noise: args.boundary_noise,
        bias_scale: args.bias_scale,
        image_noise: args.image_noise,
        seed: args.seed,
    };
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    Ok(generate_synthetic(&cfg, &args.out)?.manifest)
}

pub fn cmd_fuse(args: &FuseArgs) -> Result<FuseMeta> {
    let ds = load_dataset(&args.manifest)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let mut cases = Vec::with_capacity(ds.cases.len());
    for case in &ds.cases {
        let fused = fuse_mean(&case.annotations);
        let (w, h) = fused.shape();
        let fused_name = format!("{}_fused.sseg", case.id);
        let var_name = format!("{}_variance.sseg", case.id);
        write_raster(&args.out.join(&fused_name), &RasterFile::from_values(w, h, fused.values()))?;
        write_raster(&args.out.join(&var_name), &RasterFile::from_values(w, h, &variance_map(&fused)))?;
        cases.push(FusedCase { id: case.id.clone(), annotators: case.annotations.len(), fused: fused_name, variance: var_name });
    }
    let meta = FuseMeta { seed: ds.manifest.seed, manifest: utf8(&args.manifest), cases };
    write_json(&args.out.join("fuse.json"), &meta)?;
    Ok(meta)
}

fn resolve_train_config(args: &TrainArgs) -> Result<TrainFile> {
    let mut file: TrainFile = match &args.config {
        Some(p) => crate::dataio::read_json(p)?,
        None => TrainFile::default(),
    };
    if let Some(l) = args.loss {
        file.train.loss = l.into();
    }
    if let Some(e) = args.epochs {
        file.train.epochs = e;
    }
    if let Some(b) = args.batch {
        file.train.batch_size = b as usize;
    }
    if let Some(s) = args.seed {
        file.train.seed = s;
    }
    if args.no_augment {
        file.train.augment.enabled = false;
    }
    if let Some(v) = args.vflip_prob {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidArgument(format!("--vflip-prob {v} outside [0, 1]")));
        }
        file.train.augment.vflip_prob = v;
    }
    if let Some(c) = args.base_channels {
        file.model.base_channels = c;
    }
    if let Some(d) = args.depth {
        file.model.depth = d;
    }
    file.train.validate()?;
    file.model.validate()?;
    Ok(file)
}

fn samples(cases: &[&crate::dataio::Case]) -> Vec<Sample> {
    cases.iter().map(|c| c.to_sample()).collect()
}

fn history_csv(path: &Path, history: &[EpochRecord]) -> Result<Vec<u8>> {
    let wrap = |e: csv::Error| Error::Csv { path: path.into(), source: e };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "lr", "train_loss", "val_loss", "val_mae", "val_saturation", "val_dsc_mean", "val_dsc_std"])
        .map_err(wrap)?;
    for r in history {
        let mut row = vec![r.epoch.to_string(), r.lr.to_string(), r.train_loss.to_string()];
        match r.val {
            Some(v) => row.extend(
                [v.loss, v.mean_abs_error, v.saturation, v.dsc_mean, v.dsc_std].iter().map(f64::to_string),
            ),
            None => row.extend(std::iter::repeat(String::new()).take(5)),
        }
        w.write_record(&row).map_err(wrap)?;
    }
    w.into_inner().map_err(|e| Error::io(path, e.into_error()))
}

pub fn cmd_train(args: &TrainArgs) -> Result<Vec<EpochRecord>> {
    let cfg = resolve_train_config(args)?;
    let ds = load_dataset(&args.manifest)?;
    let model = TinyUNetConfig { input_channels: ds.cases[0].image.channels(), ..cfg.model };
    let train_set = samples(&ds.train_cases());
    let val_set = samples(&ds.val_cases());

    let quiet = args.quiet;
    let outcome = train_with(&train_set, &val_set, &model, &cfg.train, |r| {
        if !quiet {
            match r.val {
                Some(v) => eprintln!(
                    "epoch {:>3}  lr {:.5}  train {:.4}  val {:.4}  mae {:.4}  sat {:.4}",
                    r.epoch + 1,
                    r.lr,
                    r.train_loss,
                    v.loss,
                    v.mean_abs_error,
                    v.saturation
                ),
                None => eprintln!("epoch {:>3}  lr {:.5}  train {:.4}", r.epoch + 1, r.lr, r.train_loss),
            }
        }
    })?;

    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    save_checkpoint(&args.out, &outcome.params)?;
    let meta = CheckpointMeta {
        seed: cfg.train.seed,
        manifest: utf8(&args.manifest),
        model,
        train: cfg.train,
        param_count: model.param_count(),
    };
    write_json(&sidecar_path(&args.out), &meta)?;
    let hist = history_path(&args.out);
    crate::dataio::atomic_write(&hist, &history_csv(&hist, &outcome.history)?)?;
    Ok(outcome.history)
}

fn eval_cases(ds: &Dataset, split: SplitArg) -> Vec<&crate::dataio::Case> {
    match split {
        SplitArg::All => ds.cases.iter().collect(),
        SplitArg::Train => ds.split(Split::Train).collect(),
        SplitArg::Val => ds.split(Split::Val).collect(),
    }
}

/// Rayon pool honouring `SOFTSEG_THREADS`; defaults to all cores.
fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var("SOFTSEG_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::InvalidArgument(format!("SOFTSEG_THREADS={v:?} is not a thread count")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport> {
    let thresholds = parse_threshold_range(&args.thresholds)?;
    let meta_path = args.model.clone().unwrap_or_else(|| sidecar_path(&args.checkpoint));
    let params = load_checkpoint(&args.checkpoint)?;
    let meta: CheckpointMeta = crate::dataio::read_json(&meta_path)?;
    check_params(&meta.model, &params).map_err(|e| {
        Error::ShapeMismatch(format!("checkpoint {} does not match model config {}: {e}", args.checkpoint.display(), meta_path.display()))
    })?;

    let ds = load_dataset(&args.manifest)?;
    let cases = eval_cases(&ds, args.split);
    if cases.is_empty() {
        return Err(Error::InvalidArgument(format!("manifest {} has no cases in the requested split", args.manifest.display())));
    }

    let evaluated: Vec<CaseEvaluation> = thread_pool()?.install(|| {
        cases
            .par_iter()
            .map(|case| {
                let pred = predict(&meta.model, &params, &case.image)?;
                let gt = fuse_mean(&case.annotations);
                let sweep = threshold_sweep(&pred, &gt, &thresholds)?;
                let ged = ged_squared_deterministic(&case.annotations, &threshold(&pred, GED_THRESHOLD)?)?;
                Ok(CaseEvaluation { id: case.id.clone(), sweep, ged })
            })
            .collect::<Result<_>>()
    })?;

    let report = EvalReport::new(
        Some(args.seed.unwrap_or(meta.seed)),
        Some(utf8(&args.checkpoint)),
        thresholds,
        evaluated,
    )?;
    write_report(&args.out, &report)?;
    Ok(report)
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(a) => {
            let manifest = cmd_gen_data(a)?;
            println!("{}", manifest.display());
        }
        Command::Fuse(a) => {
            let meta = cmd_fuse(a)?;
            println!("fused {} cases into {}", meta.cases.len(), a.out.display());
        }
        Command::Train(a) => {
            let history = cmd_train(a)?;
            println!("trained {} epochs, checkpoint {}", history.len(), a.out.display());
        }
        Command::Eval(a) => {
            let r = cmd_eval(a)?;
            let s = &r.summary;
            println!("cases {}  thresholds {}", r.cases.len(), r.thresholds.len());
            println!("dsc  {:.4} ± {:.4}", s.dsc.mean, s.dsc.std);
            println!("iou  {:.4} ± {:.4}", s.iou.mean, s.iou.std);
            match s.hd95 {
                Some(h) => println!("hd95 {:.4} ± {:.4}  ({} undefined)", h.mean, h.std, s.hd95_skipped),
                None => println!("hd95 undefined ({} entries)", s.hd95_skipped),
            }
            println!("d2_ged {:.4}", r.ged_summary.d2_ged.mean);
        }
    }
    Ok(())
}

/// Entry point for the binary.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
