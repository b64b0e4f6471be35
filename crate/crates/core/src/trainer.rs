//! Training loop: Adam, plateau LR reduction, capped-metric early stopping.
//!
//! Everything that draws randomness is seeded from `TrainConfig::seed`, and all
//! reductions run in a fixed order, so two runs with the same inputs produce
//! identical history files.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{save_checkpoint, CheckpointMeta};
use crate::data::{save_rgb, Dataset, DegradationConfig};
use crate::error::{Error, Result};
use crate::losses::{
    lpips_loss, total_loss_with_grad, weighted_abs_error, FeatureLossContext, LossBreakdown, LossConfig,
};
use crate::metrics::{ms_ssim, psnr, ssim, PSNR_CAP_DB};
use crate::model::{Gradients, UNet};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::weights::TensorStore;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    pub factor: f64,
    pub patience_epochs: usize,
    pub min_lr: f64,
    /// Absolute improvement a score must make to reset the patience counter.
    pub threshold: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            factor: 0.5,
            patience_epochs: 3,
            min_lr: 1e-6,
            threshold: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EarlyStopConfig {
    pub psnr_cap_db: f64,
    pub ssim_cap: f64,
    pub lpips_weight: f64,
    pub patience_epochs: usize,
}

impl Default for EarlyStopConfig {
    fn default() -> Self {
        Self {
            psnr_cap_db: 26.0,
            ssim_cap: 0.72,
            lpips_weight: 1.0,
            patience_epochs: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub betas: (f64, f64),
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub scheduler: SchedulerConfig,
    pub early_stop: EarlyStopConfig,
    pub max_epochs: usize,
    pub seed: u64,
    pub mixed_precision: bool,
    pub val_dump_every: usize,
    /// Validation images per dump grid.
    pub val_dump_count: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            lr: 1e-4,
            betas: (0.9, 0.999),
            adam_eps: 1e-8,
            weight_decay: 0.0,
            scheduler: SchedulerConfig::default(),
            early_stop: EarlyStopConfig::default(),
            max_epochs: 50,
            seed: 0,
            mixed_precision: false,
            val_dump_every: 5,
            val_dump_count: 4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid_config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad(format!("lr must be > 0, got {}", self.lr));
        }
        let (b1, b2) = self.betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return bad(format!("betas must lie in [0, 1), got {:?}", self.betas));
        }
        let s = &self.scheduler;
        if !(s.factor > 0.0 && s.factor < 1.0) || s.min_lr < 0.0 || s.threshold < 0.0 {
            return bad("scheduler needs 0 < factor < 1, min_lr >= 0, threshold >= 0".into());
        }
        let e = &self.early_stop;
        if !(e.psnr_cap_db.is_finite() && e.psnr_cap_db > 0.0 && e.ssim_cap.is_finite() && e.ssim_cap > 0.0) {
            return bad("early-stop caps must be finite and positive".into());
        }
        if !(e.lpips_weight >= 0.0) || self.weight_decay < 0.0 {
            return bad("lpips_weight and weight_decay must be >= 0".into());
        }
        Ok(())
    }
}

/// Composite validation score, lower is better. PSNR and SSIM stop counting once they reach their caps.
pub fn early_stop_score(psnr_db: f64, ssim: f64, lpips: f64, cfg: &EarlyStopConfig) -> f64 {
    -psnr_db.min(cfg.psnr_cap_db) / cfg.psnr_cap_db - ssim.min(cfg.ssim_cap) / cfg.ssim_cap
        + cfg.lpips_weight * lpips
}

/// Reduce-on-plateau learning-rate schedule over a lower-is-better score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub best: Option<f64>,
    pub bad_epochs: usize,
    cfg: SchedulerConfig,
}

impl PlateauScheduler {
    pub fn new(lr: f64, cfg: SchedulerConfig) -> Self {
        Self {
            lr,
            best: None,
            bad_epochs: 0,
            cfg,
        }
    }

    /// Records one epoch's score and returns the learning rate for the next epoch.
    pub fn step(&mut self, score: f64) -> f64 {
        match self.best {
            Some(b) if !(score < b - self.cfg.threshold) => self.bad_epochs += 1,
            _ => {
                self.best = Some(score);
                self.bad_epochs = 0;
            }
        }
        if self.bad_epochs >= self.cfg.patience_epochs {
            self.lr = (self.lr * self.cfg.factor).max(self.cfg.min_lr);
            self.bad_epochs = 0;
        }
        self.lr
    }
}

/// Adam with optional L2 weight decay folded into the gradient.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(net: &UNet<T>, cfg: &TrainConfig) -> Self {
        let zeros: Vec<Vec<T>> = net.param_slices().map(|s| vec![T::zero(); s.len()]).collect();
        Self {
            beta1: cfg.betas.0,
            beta2: cfg.betas.1,
            eps: cfg.adam_eps,
            weight_decay: cfg.weight_decay,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn update(&mut self, net: &mut UNet<T>, grads: &Gradients<T>, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        let step_size = T::of(lr / bc1);
        let inv_bc2 = T::of(1.0 / bc2);
        let eps = T::of(self.eps);
        let wd = T::of(self.weight_decay);
        for (((p, g), m), v) in net
            .param_slices_mut()
            .zip(grads.slices())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            for i in 0..p.len() {
                let gi = g[i] + wd * p[i];
                m[i] = b1 * m[i] + one_b1 * gi;
                v[i] = b2 * v[i] + one_b2 * gi * gi;
                p[i] -= step_size * m[i] / ((v[i] * inv_bc2).sqrt() + eps);
            }
        }
    }

    pub fn to_store(&self) -> TensorStore<T> {
        let mut s = TensorStore::new();
        for (i, (m, v)) in self.m.iter().zip(&self.v).enumerate() {
            s.insert(format!("m.{i:04}"), vec![m.len()], m.clone());
            s.insert(format!("v.{i:04}"), vec![v.len()], v.clone());
        }
        s.metadata.insert("step".into(), self.step.to_string());
        s
    }
}

/// One line of the history log. Skipped loss terms are left empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub lr: f64,
    pub train_total: f64,
    pub train_pixel: f64,
    pub train_perceptual: Option<f64>,
    pub train_heat: Option<f64>,
    pub train_lpips: Option<f64>,
    pub val_psnr: f64,
    pub val_ssim: f64,
    pub val_ms_ssim: f64,
    pub val_lpips: f64,
    pub val_heat_err: f64,
    pub score: f64,
    pub best_score: f64,
}

pub fn history_csv(rows: &[HistoryRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::data(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::data(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Mean validation metrics for one epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub psnr: f64,
    pub ssim: f64,
    pub ms_ssim: f64,
    pub lpips: f64,
    pub heat_err: f64,
}

/// Validation metrics of `net` on `data`, computed on clamped predictions.
pub fn validate<T: Scalar>(
    net: &UNet<T>,
    data: &Dataset<T>,
    loss_cfg: &LossConfig,
    features: FeatureLossContext<'_, T>,
) -> Result<ValidationSummary> {
    let layers: Vec<&str> = loss_cfg.perceptual_layers.iter().map(String::as_str).collect();
    let mut s = ValidationSummary::default();
    for sample in &data.samples {
        let pred = net.infer(&sample.lr)?;
        let (a, b) = (pred.to_unit_range(), sample.hr.to_unit_range());
        s.psnr += psnr(&a, &b, 1.0)?.min(PSNR_CAP_DB);
        s.ssim += ssim(&a, &b)?;
        s.ms_ssim += ms_ssim(&a, &b)?;
        s.lpips += lpips_loss(&pred, &sample.hr, features.extractor, features.calibration, &layers)?
            .to_f64_lossy();
        s.heat_err += weighted_abs_error(&pred, &sample.hr, &sample.heat, &loss_cfg.heatmap)?.to_f64_lossy();
    }
    let n = data.len().max(1) as f64;
    s.psnr /= n;
    s.ssim /= n;
    s.ms_ssim /= n;
    s.lpips /= n;
    s.heat_err /= n;
    Ok(s)
}

/// Seeded per-epoch visiting order.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

pub struct TrainOutcome<T> {
    pub history: Vec<HistoryRow>,
    pub best_epoch: usize,
    pub best_score: f64,
    pub best: UNet<T>,
    pub stopped_early: bool,
}

/// Where training artifacts go; `None` keeps everything in memory.
#[derive(Clone, Debug)]
pub struct OutputDir {
    pub dir: PathBuf,
}

impl OutputDir {
    pub fn history(&self) -> PathBuf {
        self.dir.join("history.csv")
    }

    pub fn best(&self) -> PathBuf {
        self.dir.join("best.safetensors")
    }

    pub fn last(&self) -> PathBuf {
        self.dir.join("last.safetensors")
    }

    pub fn dump(&self, epoch: usize) -> PathBuf {
        self.dir.join("val_dumps").join(format!("epoch_{epoch:03}.png"))
    }
}

#[derive(Default)]
struct TermSums {
    total: f64,
    pixel: f64,
    perceptual: Option<f64>,
    heat: Option<f64>,
    lpips: Option<f64>,
}

impl TermSums {
    fn add(&mut self, b: &LossBreakdown) {
        let acc = |slot: &mut Option<f64>, v: Option<f64>| {
            if let Some(v) = v {
                *slot = Some(slot.unwrap_or(0.0) + v);
            }
        };
        self.total += b.total;
        self.pixel += b.pixel;
        acc(&mut self.perceptual, b.perceptual);
        acc(&mut self.heat, b.heat);
        acc(&mut self.lpips, b.lpips);
    }
}

#[allow(clippy::too_many_arguments)]
pub fn train<T: Scalar>(
    net: &mut UNet<T>,
    train_data: &Dataset<T>,
    val_data: &Dataset<T>,
    loss_cfg: &LossConfig,
    cfg: &TrainConfig,
    features: FeatureLossContext<'_, T>,
    degradation: &DegradationConfig,
    out: Option<&OutputDir>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    loss_cfg.validate()?;
    if train_data.is_empty() || val_data.is_empty() {
        return Err(Error::invalid_input("training and validation sets must be non-empty"));
    }
    if let Some(o) = out {
        std::fs::create_dir_all(&o.dir).map_err(|e| Error::io(&o.dir, e))?;
    }
    let ctx = loss_cfg.needs_features().then_some(features);
    net.set_half_activations(cfg.mixed_precision);

    let mut adam = Adam::new(net, cfg);
    let mut sched = PlateauScheduler::new(cfg.lr, cfg.scheduler.clone());
    let mut lr = cfg.lr;
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, 0usize, net.clone());
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        let order = epoch_order(train_data.len(), cfg.seed, epoch);
        let mut sums = TermSums::default();
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads = Gradients::zeros_like(net);
            let inv = T::of(1.0 / batch.len() as f64);
            for &i in batch {
                let s = &train_data.samples[i];
                let (pred, tape) = net.forward_train(&s.lr)?;
                let (terms, mut d) = total_loss_with_grad(&pred, &s.hr, &s.heat, loss_cfg, ctx)?;
                if !terms.total.is_finite() || d.data().iter().any(|v| !v.is_finite()) {
                    let ids: Vec<&str> = batch.iter().map(|&j| train_data.samples[j].id.as_str()).collect();
                    return Err(diverged(out, epoch, batch_no, &ids, &s.id, &terms));
                }
                d.data_mut().iter_mut().for_each(|v| *v *= inv);
                net.backward(&tape, &d, &mut grads);
                sums.add(&terms);
            }
            if !grads.is_finite() {
                let ids: Vec<&str> = batch.iter().map(|&j| train_data.samples[j].id.as_str()).collect();
                return Err(diverged(out, epoch, batch_no, &ids, "<gradient>", &LossBreakdown {
                    total: f64::NAN,
                    pixel: f64::NAN,
                    perceptual: None,
                    heat: None,
                    lpips: None,
                }));
            }
            adam.update(net, &grads, lr);
        }

        let n = train_data.len() as f64;
        let v = validate(net, val_data, loss_cfg, features)?;
        let score = early_stop_score(v.psnr, v.ssim, v.lpips, &cfg.early_stop);
        let improved = score < best.0;
        if improved {
            best = (score, epoch, net.clone());
            since_best = 0;
        } else {
            since_best += 1;
        }
        history.push(HistoryRow {
            epoch,
            lr,
            train_total: sums.total / n,
            train_pixel: sums.pixel / n,
            train_perceptual: sums.perceptual.map(|x| x / n),
            train_heat: sums.heat.map(|x| x / n),
            train_lpips: sums.lpips.map(|x| x / n),
            val_psnr: v.psnr,
            val_ssim: v.ssim,
            val_ms_ssim: v.ms_ssim,
            val_lpips: v.lpips,
            val_heat_err: v.heat_err,
            score,
            best_score: best.0,
        });
        log::info!(
            "epoch {epoch}: loss {:.5} val psnr {:.3} ssim {:.4} lpips {:.4} score {:.5} lr {lr:e}",
            sums.total / n,
            v.psnr,
            v.ssim,
            v.lpips,
            score
        );

        if let Some(o) = out {
            let meta = |e: usize, s: f64, opt: Option<String>| CheckpointMeta {
                model: net.config().clone(),
                degradation: degradation.clone(),
                seed: cfg.seed,
                epoch: e,
                score: Some(s),
                optimizer_state: opt,
            };
            write_text(&o.history(), &history_csv(&history)?)?;
            if improved {
                save_checkpoint(&o.best(), net, &meta(epoch, score, None))?;
            }
            let opt_name = "last.optim.safetensors".to_string();
            adam.to_store().save(o.dir.join(&opt_name))?;
            save_checkpoint(&o.last(), net, &meta(epoch, score, Some(opt_name)))?;
            if cfg.val_dump_every > 0 && epoch % cfg.val_dump_every == 0 {
                dump_grid(&o.dump(epoch), net, val_data, cfg.val_dump_count)?;
            }
        }

        lr = sched.step(score);
        if since_best >= cfg.early_stop.patience_epochs {
            stopped_early = true;
            log::info!("early stop after epoch {epoch}; best epoch {}", best.1);
            break;
        }
    }
    net.set_half_activations(false);
    let (best_score, best_epoch, mut best_net) = best;
    best_net.set_half_activations(false);
    Ok(TrainOutcome {
        history,
        best_epoch,
        best_score,
        best: best_net,
        stopped_early,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn diverged(
    out: Option<&OutputDir>,
    epoch: usize,
    batch: usize,
    ids: &[&str],
    culprit: &str,
    terms: &LossBreakdown,
) -> Error {
    let report = serde_json::json!({
        "epoch": epoch,
        "batch": batch,
        "batch_ids": ids,
        "offending_id": culprit,
        "loss": {
            "total": terms.total.to_string(),
            "pixel": terms.pixel.to_string(),
            "perceptual": terms.perceptual.map(|v| v.to_string()),
            "heat": terms.heat.map(|v| v.to_string()),
            "lpips": terms.lpips.map(|v| v.to_string()),
        },
    });
    if let Some(o) = out {
        let path = o.dir.join("diverged.json");
        if let Err(e) = std::fs::write(&path, report.to_string() + "\n") {
            log::error!("could not write {}: {e}", path.display());
        }
    }
    Error::Diverged(format!(
        "non-finite loss at epoch {epoch}, batch {batch}, image `{culprit}`"
    ))
}

/// Rows of (interpolated LR, prediction, HR) for the first `count` validation images.
pub fn dump_grid<T: Scalar>(path: &Path, net: &UNet<T>, data: &Dataset<T>, count: usize) -> Result<()> {
    let rows: Vec<[Tensor<T>; 3]> = data
        .samples
        .iter()
        .take(count.max(1))
        .map(|s| Ok([net.interpolate_input(&s.lr), net.infer(&s.lr)?, s.hr.clone()]))
        .collect::<Result<_>>()?;
    let tile = rows[0][0].height();
    let grid = Tensor::from_fn(3, tile * rows.len(), tile * 3, |c, y, x| {
        rows[y / tile][x / tile].get(c, y % tile, x % tile)
    });
    save_rgb(path, &grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheduler_traces() {
        let mut s = PlateauScheduler::new(1e-3, SchedulerConfig::default());
        for i in 0..10 {
            assert_eq!(s.step(-(i as f64)), 1e-3);
        }
        let mut s = PlateauScheduler::new(1e-3, SchedulerConfig::default());
        s.step(1.0);
        assert_eq!(s.step(1.0), 1e-3);
        assert_eq!(s.step(1.0), 1e-3);
        assert_eq!(s.step(1.0), 5e-4);
        assert_eq!(s.step(1.0), 5e-4);

        let mut s = PlateauScheduler::new(1e-6, SchedulerConfig::default());
        for _ in 0..10 {
            assert_eq!(s.step(0.0), 1e-6);
        }
    }

    #[test]
    fn score_truncation() {
        let cfg = EarlyStopConfig::default();
        let s25 = early_stop_score(25.0, 0.5, 0.1, &cfg);
        let s27 = early_stop_score(27.0, 0.5, 0.1, &cfg);
        let s30 = early_stop_score(30.0, 0.5, 0.1, &cfg);
        assert!(s27 < s25);
        assert_eq!(s27, s30);
        let a = early_stop_score(40.0, 0.9, 0.2, &cfg);
        let b = early_stop_score(30.0, 0.8, 0.2, &cfg);
        assert_eq!(a, b);
        assert!((a - (-2.0 + 0.2)).abs() < 1e-12);
    }

    #[test]
    fn epoch_order_is_seeded_permutation() {
        let a = epoch_order(10, 1, 1);
        assert_eq!(a, epoch_order(10, 1, 1));
        assert_ne!(a, epoch_order(10, 1, 2));
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            batch_size: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            lr: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
