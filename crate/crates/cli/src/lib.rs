//! Subcommand definitions and their implementations for the `landmark-sr` binary.

pub mod config;
pub mod grid;

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use landmark_sr::bench::{measure_latency, DEFAULT_PASSES, DEFAULT_WARMUP};
use landmark_sr::checkpoint::{load_checkpoint, CheckpointMeta};
use landmark_sr::data::{
    self, degrade, load_rgb, make_splits, parse_celeba_partition, save_rgb, write_heatmaps, Dataset,
    DatasetLayout, SplitManifest, SplitSpec, HR_SIZE,
};
use landmark_sr::features::FeatureExtractor;
use landmark_sr::heatmap::{parse_detections_jsonl, to_detections_jsonl};
use landmark_sr::losses::{FeatureLossContext, HeatNorm, LpipsCalibration};
use landmark_sr::metrics::{ImageMetrics, MetricReport};
use landmark_sr::model::{layer_report_tsv, ModelConfig, UNet};
use landmark_sr::synth::{template_detections, write_synthetic_dataset};
use landmark_sr::trainer::{train, OutputDir};
use landmark_sr::{Error, ErrorClass, Result, Scalar};
use serde::{Deserialize, Serialize};

use crate::config::{resolve_seed, Precision, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "landmark-sr", version, about = "Detection-prior guided 8x face super-resolution")]
pub struct Cli {
    /// Global seed; wins over LANDMARK_SR_SEED and any config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Print progress at debug level.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Render procedural faces with exact detections (hr/ + detections.jsonl).
    Synth(SynthArgs),
    /// Write template-based detections for every image in an HR directory.
    SynthDetections(SynthDetectionsArgs),
    /// Build 16-bit importance heatmaps from a detections file.
    Heatmaps(HeatmapsArgs),
    /// Split image ids into train / val / test.
    Split(SplitArgs),
    /// Train the network.
    Train(TrainArgs),
    /// Score a checkpoint (or the interpolation baseline) on a split.
    Eval(EvalArgs),
    /// Super-resolve one image or a directory of images.
    Infer(InferArgs),
    /// Time repeated forward passes on a fixed 1x3x16x16 input.
    Bench(BenchArgs),
    /// Per-layer parameter and MAC table as TSV.
    Count(CountArgs),
    /// Labelled side-by-side strip of images.
    CompareGrid(CompareGridArgs),
    /// Re-run a command from its run manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthArgs {
    /// Dataset root to create.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub count: usize,
    /// Also render heatmaps into {out}/heatmaps.
    #[arg(long)]
    pub heatmaps: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDetectionsArgs {
    #[arg(long)]
    pub hr: PathBuf,
    /// Output JSONL file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapsArgs {
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub hr_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitArgs {
    /// Dataset root whose hr/*.png ids are split.
    #[arg(long, required_unless_present = "celeba_partition")]
    pub root: Option<PathBuf>,
    /// Comma separated train,val,test ratios.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["counts", "celeba_partition"])]
    pub ratios: Option<Vec<f64>>,
    /// Comma separated train,val,test counts.
    #[arg(long, value_delimiter = ',', conflicts_with = "celeba_partition")]
    pub counts: Option<Vec<usize>>,
    /// CelebA list_eval_partition.txt; reproduces the official split.
    #[arg(long)]
    pub celeba_partition: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainOverrides {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lambda_perc: Option<f64>,
    #[arg(long)]
    pub lambda_heat: Option<f64>,
    #[arg(long)]
    pub lambda_lpips: Option<f64>,
    /// as_printed or weighted_mean.
    #[arg(long)]
    pub heat_norm: Option<String>,
    #[arg(long)]
    pub refinement_blocks: Option<usize>,
    /// Narrow the network: schedule width*[1,2,4,8], refinement width `width`.
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub mixed_precision: bool,
    /// Use every id in the split manifest instead of the desk-scale subset.
    #[arg(long)]
    pub full: bool,
    #[arg(long, value_enum)]
    pub precision: Option<Precision>,
    #[arg(long)]
    pub extractor_weights: Option<PathBuf>,
    #[arg(long)]
    pub calibration: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub root: PathBuf,
    #[arg(long)]
    pub splits: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub root: PathBuf,
    #[arg(long)]
    pub splits: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitName,
    /// Checkpoint weights; omit together with --baseline to score plain interpolation.
    #[arg(long, required_unless_present = "baseline")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, conflicts_with = "checkpoint")]
    pub baseline: bool,
    /// Evaluate every id instead of the desk-scale subset.
    #[arg(long)]
    pub full: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// A PNG/JPEG file or a directory of them.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Inputs are 128x128 HR images; degrade them first.
    #[arg(long)]
    pub from_hr: bool,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchArgs {
    #[arg(long, default_value_t = DEFAULT_PASSES)]
    pub passes: usize,
    #[arg(long, default_value_t = DEFAULT_WARMUP)]
    pub warmup: usize,
    #[arg(long, default_value = "cpu")]
    pub device: String,
    #[arg(long)]
    pub refinement_blocks: Option<usize>,
    /// Time a trained checkpoint instead of a freshly built network.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "f32")]
    pub precision: Precision,
    /// JSON report file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountArgs {
    #[arg(long)]
    pub refinement_blocks: Option<usize>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// TSV file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareGridArgs {
    /// Panel images, left to right.
    #[arg(long, num_args = 1.., required = true)]
    pub panels: Vec<PathBuf>,
    /// One label per panel; file stems when omitted.
    #[arg(long, num_args = 1..)]
    pub labels: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// Everything needed to re-run a command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub invocation: Command,
    /// Config after file loading and flag overrides, with defaults filled in.
    pub config: Option<RunConfig>,
    pub seed: Option<u64>,
    pub code_version: String,
    pub timestamp_unix: u64,
}

pub const MANIFEST_NAME: &str = "run_manifest.json";

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::invalid_config(format!("{}: {e}", path.display())))
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::SynthDetections(_) => "synth-detections",
            Command::Heatmaps(_) => "heatmaps",
            Command::Split(_) => "split",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Infer(_) => "infer",
            Command::Bench(_) => "bench",
            Command::Count(_) => "count",
            Command::CompareGrid(_) => "compare-grid",
            Command::Replay(_) => "replay",
        }
    }
}

/// Seed and config either resolved from files, env and flags, or taken verbatim from a manifest.
struct Context {
    seed_flag: Option<u64>,
    preset: Option<(Option<RunConfig>, Option<u64>)>,
}

impl Context {
    fn config(&self, file: Option<&Path>, apply: impl FnOnce(&mut RunConfig) -> Result<()>) -> Result<RunConfig> {
        if let Some((Some(cfg), _)) = &self.preset {
            return Ok(cfg.clone());
        }
        let mut cfg = RunConfig::load(file)?;
        cfg.seed = resolve_seed(self.seed_flag, cfg.seed)?;
        cfg.train.seed = cfg.seed;
        apply(&mut cfg)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn seed(&self, fallback: u64) -> Result<u64> {
        if let Some((_, Some(s))) = &self.preset {
            return Ok(*s);
        }
        resolve_seed(self.seed_flag, fallback)
    }
}

fn write_manifest(path: &Path, cmd: &Command, config: Option<&RunConfig>, seed: Option<u64>) -> Result<()> {
    let m = RunManifest {
        command: cmd.name().to_string(),
        invocation: cmd.clone(),
        config: config.cloned(),
        seed,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, serde_json::to_string_pretty(&m)? + "\n").map_err(|e| Error::io(path, e))
}

/// `report.json` -> `report.json.run.json`, for commands whose output is one file.
fn sibling_manifest(file: &Path) -> PathBuf {
    let mut name = file.file_name().unwrap_or_default().to_os_string();
    name.push(".run.json");
    file.with_file_name(name)
}

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Context {
        seed_flag: cli.seed,
        preset: None,
    };
    execute(&cli.command, &ctx)
}

fn execute(cmd: &Command, ctx: &Context) -> Result<()> {
    match cmd {
        Command::Synth(a) => synth(cmd, a, ctx),
        Command::SynthDetections(a) => synth_detections(cmd, a, ctx),
        Command::Heatmaps(a) => heatmaps(cmd, a, ctx),
        Command::Split(a) => split(cmd, a, ctx),
        Command::Train(a) => {
            let cfg = ctx.config(a.config.as_deref(), |c| apply_train_overrides(c, &a.overrides))?;
            match cfg.precision {
                Precision::F32 => train_cmd::<f32>(cmd, a, &cfg),
                Precision::F64 => train_cmd::<f64>(cmd, a, &cfg),
            }
        }
        Command::Eval(a) => eval(cmd, a, ctx),
        Command::Infer(a) => infer(cmd, a),
        Command::Bench(a) => bench(cmd, a, ctx),
        Command::Count(a) => count(cmd, a, ctx),
        Command::CompareGrid(a) => {
            grid::compare_grid(&a.panels, &a.labels, &a.out)?;
            write_manifest(&sibling_manifest(&a.out), cmd, None, None)
        }
        Command::Replay(a) => {
            let m = RunManifest::load(&a.manifest)?;
            if matches!(m.invocation, Command::Replay(_)) {
                return Err(Error::invalid_config("a replay manifest cannot replay itself"));
            }
            let replay_ctx = Context {
                seed_flag: None,
                preset: Some((m.config.clone(), m.seed)),
            };
            execute(&m.invocation, &replay_ctx)
        }
    }
}

fn synth(cmd: &Command, a: &SynthArgs, ctx: &Context) -> Result<()> {
    let cfg = ctx.config(a.config.as_deref(), |_| Ok(()))?;
    let ids = write_synthetic_dataset(&a.out, a.count, cfg.seed)?;
    if a.heatmaps {
        let layout = DatasetLayout::new(&a.out);
        let text = read_text(&layout.detections_path())?;
        write_heatmaps(&parse_detections_jsonl(&text)?, &layout.hr_dir(), &layout.heatmap_dir(), &cfg.heatmap)?;
    }
    log::info!("wrote {} synthetic faces to {}", ids.len(), a.out.display());
    write_manifest(&a.out.join(MANIFEST_NAME), cmd, Some(&cfg), Some(cfg.seed))
}

fn synth_detections(cmd: &Command, a: &SynthDetectionsArgs, ctx: &Context) -> Result<()> {
    let seed = ctx.seed(0)?;
    let layout_ids = list_images(&a.hr)?;
    let records: Vec<_> = layout_ids
        .iter()
        .enumerate()
        .map(|(i, p)| template_detections(&stem(p), seed, i as u64))
        .collect();
    write_text(&a.out, &to_detections_jsonl(&records)?)?;
    write_manifest(&sibling_manifest(&a.out), cmd, None, Some(seed))
}

fn heatmaps(cmd: &Command, a: &HeatmapsArgs, ctx: &Context) -> Result<()> {
    let cfg = ctx.config(a.config.as_deref(), |_| Ok(()))?;
    let text = read_text(&a.detections)?;
    let records = parse_detections_jsonl(&text)?;
    let index = write_heatmaps(&records, &a.hr_dir, &a.out, &cfg.heatmap)?;
    log::info!("wrote {} heatmaps to {}", index.files.len(), a.out.display());
    write_manifest(&a.out.join(MANIFEST_NAME), cmd, Some(&cfg), None)
}

fn split(cmd: &Command, a: &SplitArgs, ctx: &Context) -> Result<()> {
    let cfg = ctx.config(a.config.as_deref(), |_| Ok(()))?;
    let mut manifest = if let Some(p) = &a.celeba_partition {
        parse_celeba_partition(&read_text(p)?)?
    } else {
        let root = a.root.as_ref().expect("clap requires --root here");
        let ids = DatasetLayout::new(root).list_ids()?;
        let spec = match (&a.ratios, &a.counts) {
            (_, Some(c)) => SplitSpec::Counts(three(c, "--counts")?),
            (Some(r), None) => SplitSpec::Ratios(three(r, "--ratios")?),
            (None, None) => SplitSpec::Ratios([0.8, 0.1, 0.1]),
        };
        make_splits(&ids, spec, cfg.seed)?
    };
    manifest.degradation = cfg.degradation.clone();
    manifest.save(&a.out)?;
    log::info!(
        "split {} / {} / {}",
        manifest.counts.train,
        manifest.counts.val,
        manifest.counts.test
    );
    write_manifest(&sibling_manifest(&a.out), cmd, Some(&cfg), Some(cfg.seed))
}

fn three<V: Copy>(v: &[V], flag: &str) -> Result<[V; 3]> {
    <[V; 3]>::try_from(v)
        .map_err(|_| Error::invalid_input(format!("{flag} takes train,val,test (got {} values)", v.len())))
}

fn apply_train_overrides(c: &mut RunConfig, o: &TrainOverrides) -> Result<()> {
    if let Some(w) = o.width {
        let blocks = c.model.refinement_blocks;
        c.model = ModelConfig::narrow(w, blocks);
    }
    if let Some(b) = o.refinement_blocks {
        c.model.refinement_blocks = b;
    }
    if let Some(v) = o.epochs {
        c.train.max_epochs = v;
    }
    if let Some(v) = o.batch_size {
        c.train.batch_size = v;
    }
    if let Some(v) = o.lr {
        c.train.lr = v;
    }
    if let Some(v) = o.lambda_perc {
        c.loss.lambda_perc = v;
    }
    if let Some(v) = o.lambda_heat {
        c.loss.lambda_heat = v;
    }
    if let Some(v) = o.lambda_lpips {
        c.loss.lambda_lpips = v;
    }
    if let Some(v) = &o.heat_norm {
        c.loss.heatmap.heat_norm = v.parse::<HeatNorm>()?;
    }
    if o.mixed_precision {
        c.train.mixed_precision = true;
    }
    if o.full {
        c.subset = None;
    }
    if let Some(p) = o.precision {
        c.precision = p;
    }
    if let Some(p) = &o.extractor_weights {
        c.extractor.weights = Some(p.clone());
    }
    if let Some(p) = &o.calibration {
        c.calibration = Some(p.clone());
    }
    Ok(())
}

fn load_splits(path: &Path, cfg: &RunConfig) -> Result<SplitManifest> {
    let m = SplitManifest::load(path)?;
    Ok(match cfg.subset {
        Some(s) => m.truncated(s.train, s.val, s.test),
        None => m,
    })
}

fn feature_nets<T: Scalar>(cfg: &RunConfig) -> Result<(FeatureExtractor<T>, LpipsCalibration<T>)> {
    let fx = match &cfg.extractor.weights {
        Some(p) => FeatureExtractor::load(p)?,
        None => FeatureExtractor::seeded(cfg.extractor.widths, cfg.extractor.seed),
    };
    let cal = match &cfg.calibration {
        Some(p) => LpipsCalibration::load(p)?,
        None => LpipsCalibration::uniform(&fx),
    };
    let layers: Vec<&str> = cfg.loss.perceptual_layers.iter().map(String::as_str).collect();
    cal.check(&fx, &layers)?;
    Ok((fx, cal))
}

#[derive(Serialize)]
struct TrainSummary {
    best_epoch: usize,
    best_score: f64,
    epochs_run: usize,
    stopped_early: bool,
    train_images: usize,
    val_images: usize,
    baseline_val_psnr: f64,
    final_val_psnr: f64,
    params: usize,
}

fn train_cmd<T: Scalar>(cmd: &Command, a: &TrainArgs, cfg: &RunConfig) -> Result<()> {
    let splits = load_splits(&a.splits, cfg)?;
    let layout = DatasetLayout::new(&a.root);
    let degradation = splits.degradation.clone();
    let train_set: Dataset<T> = Dataset::load(&layout, &splits.train, &degradation)?;
    let val_set: Dataset<T> = Dataset::load(&layout, &splits.val, &degradation)?;
    let (fx, cal) = feature_nets::<T>(cfg)?;
    let mut net = UNet::<T>::build(&cfg.model, cfg.seed)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    write_manifest(&a.out.join(MANIFEST_NAME), cmd, Some(cfg), Some(cfg.seed))?;
    log::info!(
        "training {} params on {} images ({} val)",
        net.param_count(),
        train_set.len(),
        val_set.len()
    );
    let out = OutputDir { dir: a.out.clone() };
    let features = FeatureLossContext {
        extractor: &fx,
        calibration: &cal,
    };
    let outcome = train(
        &mut net,
        &train_set,
        &val_set,
        &cfg.loss,
        &cfg.train,
        features,
        &degradation,
        Some(&out),
    )?;
    let mut baseline = 0.0;
    for s in &val_set.samples {
        let up = net.interpolate_input(&s.lr).clamp(-T::one(), T::one());
        baseline += landmark_sr::metrics::psnr(&up.to_unit_range(), &s.hr.to_unit_range(), 1.0)?
            .min(landmark_sr::metrics::PSNR_CAP_DB);
    }
    let summary = TrainSummary {
        best_epoch: outcome.best_epoch,
        best_score: outcome.best_score,
        epochs_run: outcome.history.len(),
        stopped_early: outcome.stopped_early,
        train_images: train_set.len(),
        val_images: val_set.len(),
        baseline_val_psnr: baseline / val_set.len() as f64,
        final_val_psnr: outcome.history.last().map(|r| r.val_psnr).unwrap_or(f64::NAN),
        params: net.param_count(),
    };
    write_text(&a.out.join("summary.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))
}

fn eval(cmd: &Command, a: &EvalArgs, ctx: &Context) -> Result<()> {
    let cfg = ctx.config(a.config.as_deref(), |c| {
        if a.full {
            c.subset = None;
        }
        Ok(())
    })?;
    let splits = load_splits(&a.splits, &cfg)?;
    let ids = match a.split {
        SplitName::Train => &splits.train,
        SplitName::Val => &splits.val,
        SplitName::Test => &splits.test,
    };
    let (net, degradation): (Option<UNet<f32>>, _) = match &a.checkpoint {
        Some(p) => {
            let (net, meta): (UNet<f32>, CheckpointMeta) = load_checkpoint(p)?;
            (Some(net), meta.degradation)
        }
        None => (None, splits.degradation.clone()),
    };
    let layout = DatasetLayout::new(&a.root);
    let mut rows = Vec::with_capacity(ids.len());
    for id in ids {
        let hr: landmark_sr::Tensor32 = load_rgb(layout.hr_path(id))?;
        if hr.shape() != (3, HR_SIZE, HR_SIZE) {
            return Err(Error::data(format!("`{id}` is not {HR_SIZE}x{HR_SIZE}")));
        }
        let lr = degrade(&hr, &degradation)?;
        let pred = match &net {
            Some(n) => n.infer(&lr)?,
            None => data::upscale_reference(&lr, &degradation)?.clamp(-1.0, 1.0),
        };
        rows.push(ImageMetrics::compute(id.clone(), &pred, &hr, cfg.color_space)?);
    }
    let report = MetricReport::from_images(rows, cfg.color_space);
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    report.save(a.out.join("metrics.csv"), a.out.join("metrics.json"))?;
    log::info!(
        "{} images: psnr {:.3} ssim {:.4} ms-ssim {:.4}",
        report.count,
        report.mean.psnr_db,
        report.mean.ssim,
        report.mean.ms_ssim
    );
    write_manifest(&a.out.join(MANIFEST_NAME), cmd, Some(&cfg), Some(cfg.seed))
}

fn infer(cmd: &Command, a: &InferArgs) -> Result<()> {
    let (net, meta): (UNet<f32>, CheckpointMeta) = load_checkpoint(&a.checkpoint)?;
    let inputs = if a.input.is_dir() {
        list_images(&a.input)?
    } else if a.input.exists() {
        vec![a.input.clone()]
    } else {
        return Err(Error::data(format!("input {} does not exist", a.input.display())));
    };
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let n = net.config().input_size;
    for path in &inputs {
        let img: landmark_sr::Tensor32 = load_rgb(path)?;
        let lr = if a.from_hr {
            degrade(&img, &meta.degradation)?
        } else {
            img
        };
        if lr.shape() != (3, n, n) {
            return Err(Error::invalid_input(format!(
                "{} is {}x{}; expected {n}x{n} (or {HR_SIZE}x{HR_SIZE} with --from-hr)",
                path.display(),
                lr.width(),
                lr.height()
            )));
        }
        save_rgb(a.out.join(format!("{}.png", stem(path))), &net.infer(&lr)?)?;
    }
    log::info!("wrote {} images to {}", inputs.len(), a.out.display());
    write_manifest(&a.out.join(MANIFEST_NAME), cmd, None, None)
}

fn bench(cmd: &Command, a: &BenchArgs, ctx: &Context) -> Result<()> {
    if a.device != "cpu" {
        return Err(Error::invalid_config(format!(
            "device `{}` is not available; this build runs on cpu only",
            a.device
        )));
    }
    let cfg = ctx.config(a.config.as_deref(), |c| {
        if let Some(b) = a.refinement_blocks {
            c.model.refinement_blocks = b;
        }
        Ok(())
    })?;
    let report = match a.precision {
        Precision::F32 => bench_with::<f32>(a, &cfg)?,
        Precision::F64 => bench_with::<f64>(a, &cfg)?,
    };
    let json = serde_json::to_string_pretty(&report)? + "\n";
    match &a.out {
        Some(p) => {
            write_text(p, &json)?;
            write_manifest(&sibling_manifest(p), cmd, Some(&cfg), Some(cfg.seed))
        }
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn bench_with<T: Scalar>(a: &BenchArgs, cfg: &RunConfig) -> Result<landmark_sr::bench::BenchReport> {
    let net = match &a.checkpoint {
        Some(p) => load_checkpoint::<T>(p)?.0,
        None => UNet::<T>::build(&cfg.model, cfg.seed)?,
    };
    measure_latency(&net, a.passes, a.warmup, &a.device)
}

fn count(cmd: &Command, a: &CountArgs, ctx: &Context) -> Result<()> {
    let cfg = ctx.config(a.config.as_deref(), |c| {
        if let Some(b) = a.refinement_blocks {
            c.model.refinement_blocks = b;
        }
        Ok(())
    })?;
    let tsv = layer_report_tsv(&cfg.model)?;
    match &a.out {
        Some(p) => {
            write_text(p, &tsv)?;
            write_manifest(&sibling_manifest(p), cmd, Some(&cfg), None)
        }
        None => {
            print!("{tsv}");
            Ok(())
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::data(format!("missing file {}", path.display())));
    }
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn stem(p: &Path) -> String {
    p.file_stem().and_then(|s| s.to_str()).unwrap_or("image").to_string()
}

/// Sorted PNG/JPEG files in `dir`.
fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::data(format!("{} is not a directory", dir.display())));
    }
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Validation => 1,
        ErrorClass::Data => 2,
    }
}

/// Single-line JSON description of an error for stderr.
pub fn error_json(e: &Error) -> String {
    let class = match e.class() {
        ErrorClass::Validation => "validation",
        ErrorClass::Data => "data",
    };
    serde_json::json!({ "error": e.kind(), "class": class, "message": e.to_string() }).to_string()
}
