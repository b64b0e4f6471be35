//! Reconstruction losses and their gradients with respect to the prediction.
//!
//! Every loss has a `*_with_grad` form returning `(value, d value / d pred)`.
//! Images are CHW tensors in `[-1, 1]`; heatmaps are `H x W` grids in `[0, 1]`
//! broadcast over the colour channels.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, TapFeatures, DEFAULT_TAPS};
use crate::scalar::Scalar;
use crate::tensor::{Grid, Tensor};
use crate::weights::TensorStore;

/// How the weighted absolute error is normalized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatNorm {
    /// `(1/N) * sum(w |e|) / sum(w)`.
    #[default]
    AsPrinted,
    /// `sum(w |e|) / sum(w)`.
    WeightedMean,
}

impl std::str::FromStr for HeatNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "as_printed" => Ok(Self::AsPrinted),
            "weighted_mean" => Ok(Self::WeightedMean),
            other => Err(Error::invalid_config(format!("unknown heat_norm `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatmapLossConfig {
    pub gamma: f64,
    pub floor: f64,
    pub heat_norm: HeatNorm,
}

impl Default for HeatmapLossConfig {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            floor: 0.1,
            heat_norm: HeatNorm::AsPrinted,
        }
    }
}

impl HeatmapLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 1.0) || !self.gamma.is_finite() {
            return Err(Error::invalid_config(format!("gamma must be > 1, got {}", self.gamma)));
        }
        if !(self.floor > 0.0 && self.floor <= 1.0) {
            return Err(Error::invalid_config(format!("floor must lie in (0, 1], got {}", self.floor)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub lambda_perc: f64,
    pub lambda_heat: f64,
    pub lambda_lpips: f64,
    pub heatmap: HeatmapLossConfig,
    pub perceptual_layers: Vec<String>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_perc: 0.05,
            lambda_heat: 1.0,
            lambda_lpips: 0.05,
            heatmap: HeatmapLossConfig::default(),
            perceptual_layers: DEFAULT_TAPS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_perc", self.lambda_perc),
            ("lambda_heat", self.lambda_heat),
            ("lambda_lpips", self.lambda_lpips),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid_config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if (self.lambda_perc > 0.0 || self.lambda_lpips > 0.0) && self.perceptual_layers.is_empty() {
            return Err(Error::invalid_config("perceptual_layers is empty"));
        }
        self.heatmap.validate()
    }

    fn layers(&self) -> Vec<&str> {
        self.perceptual_layers.iter().map(String::as_str).collect()
    }

    pub fn needs_features(&self) -> bool {
        self.lambda_perc > 0.0 || self.lambda_lpips > 0.0
    }
}

/// `w = floor + (1 - floor) * H^gamma`.
pub fn heatmap_weights<T: Scalar>(h: &Grid<T>, cfg: &HeatmapLossConfig) -> Result<Grid<T>> {
    cfg.validate()?;
    let (floor, gamma) = (T::of(cfg.floor), T::of(cfg.gamma));
    Ok(h.map(|v| floor + (T::one() - floor) * v.max(T::zero()).powf(gamma)))
}

fn check_pair<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<()> {
    pred.ensure_shape(target, "prediction vs target")
}

fn check_heat<T: Scalar>(pred: &Tensor<T>, h: &Grid<T>) -> Result<()> {
    if (h.width(), h.height()) != (pred.width(), pred.height()) {
        return Err(Error::invalid_input(format!(
            "heatmap is {}x{}, image is {}x{}",
            h.width(),
            h.height(),
            pred.width(),
            pred.height()
        )));
    }
    Ok(())
}

pub fn heatmap_loss<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    h: &Grid<T>,
    cfg: &HeatmapLossConfig,
) -> Result<T> {
    Ok(heatmap_loss_with_grad(pred, target, h, cfg)?.0)
}

/// Heatmap-weighted absolute error. The weight grid is shared by all channels.
pub fn heatmap_loss_with_grad<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    h: &Grid<T>,
    cfg: &HeatmapLossConfig,
) -> Result<(T, Tensor<T>)> {
    check_pair(pred, target)?;
    check_heat(pred, h)?;
    let w = heatmap_weights(h, cfg)?;
    let channels = pred.channels();
    let n = pred.len();
    let w_sum = w.sum() * T::of(channels as f64);
    let scale = match cfg.heat_norm {
        HeatNorm::AsPrinted => T::one() / T::of(n as f64),
        HeatNorm::WeightedMean => T::one(),
    } / w_sum;

    let mut num = T::zero();
    let mut grad = Tensor::zeros(channels, pred.height(), pred.width());
    for c in 0..channels {
        let (p, t) = (pred.plane(c), target.plane(c));
        let g = grad.plane_mut(c);
        for i in 0..p.len() {
            let e = p[i] - t[i];
            let wi = w.data()[i];
            num += wi * e.abs();
            g[i] = if e > T::zero() {
                wi * scale
            } else if e < T::zero() {
                -wi * scale
            } else {
                T::zero()
            };
        }
    }
    Ok((num * scale, grad))
}

/// Per-image mean of `w |e|` over `sum w`, independent of `heat_norm`; used for reporting.
pub fn weighted_abs_error<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    h: &Grid<T>,
    cfg: &HeatmapLossConfig,
) -> Result<T> {
    let cfg = HeatmapLossConfig {
        heat_norm: HeatNorm::WeightedMean,
        ..cfg.clone()
    };
    heatmap_loss(pred, target, h, &cfg)
}

pub fn pixel_mse<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<T> {
    Ok(pixel_mse_with_grad(pred, target)?.0)
}

pub fn pixel_mse_with_grad<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    check_pair(pred, target)?;
    let n = T::of(pred.len() as f64);
    let two_over_n = T::of(2.0) / n;
    let mut sum = T::zero();
    let grad: Vec<T> = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let e = p - t;
            sum += e * e;
            e * two_over_n
        })
        .collect();
    let (c, h, w) = pred.shape();
    Ok((sum / n, Tensor::from_vec(c, h, w, grad)?))
}

/// Sum over taps of the mean squared feature difference.
fn perceptual_from_features<T: Scalar>(
    fp: &TapFeatures<T>,
    ft: &TapFeatures<T>,
) -> (T, TapFeatures<T>) {
    let mut total = T::zero();
    let mut grads = TapFeatures::new();
    for (name, a) in fp {
        let b = &ft[name];
        let n = T::of(a.len() as f64);
        let mut sum = T::zero();
        let g = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| {
                let e = x - y;
                sum += e * e;
                T::of(2.0) * e / n
            })
            .collect();
        total += sum / n;
        let (c, h, w) = a.shape();
        grads.insert(name.clone(), Tensor::from_vec(c, h, w, g).expect("shape"));
    }
    (total, grads)
}

pub fn perceptual_loss<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    fx: &FeatureExtractor<T>,
    layers: &[&str],
) -> Result<T> {
    check_pair(pred, target)?;
    let fp = fx.forward(pred, layers)?;
    let ft = fx.forward(target, layers)?;
    Ok(perceptual_from_features(&fp, &ft).0)
}

pub fn perceptual_loss_with_grad<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    fx: &FeatureExtractor<T>,
    layers: &[&str],
) -> Result<(T, Tensor<T>)> {
    check_pair(pred, target)?;
    let (fp, tape) = fx.forward_train(pred, layers)?;
    let ft = fx.forward(target, layers)?;
    let (v, g) = perceptual_from_features(&fp, &ft);
    Ok((v, fx.backward(&tape, &g)))
}

/// Per-channel weights for each LPIPS tap.
#[derive(Clone, Debug, PartialEq)]
pub struct LpipsCalibration<T> {
    pub weights: BTreeMap<String, Vec<T>>,
}

pub const LPIPS_EPS: f64 = 1e-10;

impl<T: Scalar> LpipsCalibration<T> {
    /// All-ones weights on every tap of `fx`.
    pub fn uniform(fx: &FeatureExtractor<T>) -> Self {
        Self {
            weights: fx
                .taps()
                .into_iter()
                .map(|(name, c)| (name, vec![T::one(); c]))
                .collect(),
        }
    }

    pub fn check(&self, fx: &FeatureExtractor<T>, layers: &[&str]) -> Result<()> {
        let taps: BTreeMap<String, usize> = fx.taps().into_iter().collect();
        for layer in layers {
            let w = self
                .weights
                .get(*layer)
                .ok_or_else(|| Error::invalid_config(format!("no LPIPS calibration for `{layer}`")))?;
            let c = taps
                .get(*layer)
                .ok_or_else(|| Error::invalid_config(format!("extractor has no tap point `{layer}`")))?;
            if w.len() != *c {
                return Err(Error::invalid_config(format!(
                    "LPIPS calibration for `{layer}` has {} channels, extractor has {c}",
                    w.len()
                )));
            }
            if w.iter().any(|v| !(*v >= T::zero())) {
                return Err(Error::invalid_config(format!("negative LPIPS weight in `{layer}`")));
            }
        }
        Ok(())
    }

    pub fn to_store(&self) -> TensorStore<T> {
        let mut store = TensorStore::new();
        for (name, w) in &self.weights {
            store.insert(format!("lpips.{name}"), vec![w.len()], w.clone());
        }
        store
    }

    pub fn from_store(store: &TensorStore<T>) -> Result<Self> {
        let weights = store
            .tensors
            .iter()
            .filter_map(|(k, t)| k.strip_prefix("lpips.").map(|n| (n.to_string(), t.data.clone())))
            .collect::<BTreeMap<_, _>>();
        if weights.is_empty() {
            return Err(Error::Weights("calibration file holds no `lpips.*` tensors".into()));
        }
        Ok(Self { weights })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_store().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_store(&TensorStore::load(path)?)
    }
}

/// Unit-normalizes each pixel's channel vector; returns the normalized tensor and norms.
fn unit_normalize<T: Scalar>(f: &Tensor<T>) -> (Tensor<T>, Vec<T>) {
    let (c, h, w) = f.shape();
    let hw = h * w;
    let eps = T::of(LPIPS_EPS);
    let mut norms = vec![T::zero(); hw];
    for ch in 0..c {
        for (n, &v) in norms.iter_mut().zip(f.plane(ch)) {
            *n += v * v;
        }
    }
    norms.iter_mut().for_each(|n| *n = n.sqrt());
    let mut out = f.clone();
    for ch in 0..c {
        for (v, &n) in out.plane_mut(ch).iter_mut().zip(&norms) {
            *v /= n + eps;
        }
    }
    (out, norms)
}

/// Pulls a gradient on the unit-normalized features back to the raw features.
fn unit_normalize_backward<T: Scalar>(f: &Tensor<T>, norms: &[T], du: &Tensor<T>) -> Tensor<T> {
    let (c, _, _) = f.shape();
    let eps = T::of(LPIPS_EPS);
    let mut dot = vec![T::zero(); norms.len()];
    for ch in 0..c {
        for ((d, &g), &v) in dot.iter_mut().zip(du.plane(ch)).zip(f.plane(ch)) {
            *d += g * v;
        }
    }
    let mut df = du.clone();
    for ch in 0..c {
        let fv = f.plane(ch);
        for (i, g) in df.plane_mut(ch).iter_mut().enumerate() {
            let n = norms[i];
            let ne = n + eps;
            let mut v = *g / ne;
            if n > T::zero() {
                v -= fv[i] * dot[i] / (n * ne * ne);
            }
            *g = v;
        }
    }
    df
}

/// Sum over taps of the spatial mean of `sum_c w_c (u_c - v_c)^2` on unit-normalized features.
fn lpips_from_features<T: Scalar>(
    fp: &TapFeatures<T>,
    ft: &TapFeatures<T>,
    calib: &LpipsCalibration<T>,
) -> (T, TapFeatures<T>) {
    let mut total = T::zero();
    let mut grads = TapFeatures::new();
    for (name, a) in fp {
        let wts = &calib.weights[name];
        let (ua, na) = unit_normalize(a);
        let (ub, _) = unit_normalize(&ft[name]);
        let hw = T::of(a.plane_len() as f64);
        let mut du = Tensor::zeros(a.channels(), a.height(), a.width());
        let mut sum = T::zero();
        for (ch, &wc) in wts.iter().enumerate() {
            let g = du.plane_mut(ch);
            for (i, (&x, &y)) in ua.plane(ch).iter().zip(ub.plane(ch)).enumerate() {
                let e = x - y;
                sum += wc * e * e;
                g[i] = T::of(2.0) * wc * e / hw;
            }
        }
        total += sum / hw;
        grads.insert(name.clone(), unit_normalize_backward(a, &na, &du));
    }
    (total, grads)
}

pub fn lpips_loss<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    fx: &FeatureExtractor<T>,
    calib: &LpipsCalibration<T>,
    layers: &[&str],
) -> Result<T> {
    check_pair(pred, target)?;
    calib.check(fx, layers)?;
    let fp = fx.forward(pred, layers)?;
    let ft = fx.forward(target, layers)?;
    Ok(lpips_from_features(&fp, &ft, calib).0)
}

pub fn lpips_loss_with_grad<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    fx: &FeatureExtractor<T>,
    calib: &LpipsCalibration<T>,
    layers: &[&str],
) -> Result<(T, Tensor<T>)> {
    check_pair(pred, target)?;
    calib.check(fx, layers)?;
    let (fp, tape) = fx.forward_train(pred, layers)?;
    let ft = fx.forward(target, layers)?;
    let (v, g) = lpips_from_features(&fp, &ft, calib);
    Ok((v, fx.backward(&tape, &g)))
}

/// Frozen networks the feature losses need.
#[derive(Clone, Copy, Debug)]
pub struct FeatureLossContext<'a, T> {
    pub extractor: &'a FeatureExtractor<T>,
    pub calibration: &'a LpipsCalibration<T>,
}

/// Unweighted loss terms; `None` when the term's weight is zero and it was skipped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub pixel: f64,
    pub perceptual: Option<f64>,
    pub heat: Option<f64>,
    pub lpips: Option<f64>,
}

pub fn total_loss<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    h: &Grid<T>,
    cfg: &LossConfig,
    ctx: Option<FeatureLossContext<'_, T>>,
) -> Result<LossBreakdown> {
    Ok(total_loss_impl(pred, target, h, cfg, ctx, false)?.0)
}

/// `L_pix + l_perc L_perc + l_heat L_heat + l_lpips L_lpips` and its gradient.
pub fn total_loss_with_grad<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    h: &Grid<T>,
    cfg: &LossConfig,
    ctx: Option<FeatureLossContext<'_, T>>,
) -> Result<(LossBreakdown, Tensor<T>)> {
    let (b, g) = total_loss_impl(pred, target, h, cfg, ctx, true)?;
    Ok((b, g.expect("gradient requested")))
}

fn total_loss_impl<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    h: &Grid<T>,
    cfg: &LossConfig,
    ctx: Option<FeatureLossContext<'_, T>>,
    want_grad: bool,
) -> Result<(LossBreakdown, Option<Tensor<T>>)> {
    cfg.validate()?;
    let (pixel, mut grad) = pixel_mse_with_grad(pred, target)?;
    let mut total = pixel;
    let mut out = LossBreakdown {
        total: 0.0,
        pixel: pixel.to_f64_lossy(),
        perceptual: None,
        heat: None,
        lpips: None,
    };

    if cfg.lambda_heat > 0.0 {
        let (v, g) = heatmap_loss_with_grad(pred, target, h, &cfg.heatmap)?;
        let lam = T::of(cfg.lambda_heat);
        total += lam * v;
        axpy(&mut grad, lam, &g);
        out.heat = Some(v.to_f64_lossy());
    }

    if cfg.needs_features() {
        let ctx = ctx.ok_or_else(|| {
            Error::invalid_config("perceptual or LPIPS weight is set but no feature extractor was given")
        })?;
        let layers = cfg.layers();
        if cfg.lambda_lpips > 0.0 {
            ctx.calibration.check(ctx.extractor, &layers)?;
        }
        let (fp, tape) = if want_grad {
            let (f, t) = ctx.extractor.forward_train(pred, &layers)?;
            (f, Some(t))
        } else {
            (ctx.extractor.forward(pred, &layers)?, None)
        };
        let ft = ctx.extractor.forward(target, &layers)?;
        let mut tap_grads: Option<TapFeatures<T>> = None;
        let mut accumulate = |g: TapFeatures<T>, lam: T| match tap_grads.as_mut() {
            None => {
                let mut g = g;
                g.values_mut().for_each(|t| *t = t.map(|v| v * lam));
                tap_grads = Some(g);
            }
            Some(acc) => {
                for (k, t) in g {
                    axpy(acc.get_mut(&k).expect("same taps"), lam, &t);
                }
            }
        };
        if cfg.lambda_perc > 0.0 {
            let (v, g) = perceptual_from_features(&fp, &ft);
            let lam = T::of(cfg.lambda_perc);
            total += lam * v;
            accumulate(g, lam);
            out.perceptual = Some(v.to_f64_lossy());
        }
        if cfg.lambda_lpips > 0.0 {
            let (v, g) = lpips_from_features(&fp, &ft, ctx.calibration);
            let lam = T::of(cfg.lambda_lpips);
            total += lam * v;
            accumulate(g, lam);
            out.lpips = Some(v.to_f64_lossy());
        }
        if let (Some(tape), Some(tg)) = (tape, tap_grads) {
            grad.add_assign(&ctx.extractor.backward(&tape, &tg));
        }
    }
    out.total = total.to_f64_lossy();
    Ok((out, want_grad.then_some(grad)))
}

fn axpy<T: Scalar>(y: &mut Tensor<T>, a: T, x: &Tensor<T>) {
    for (yv, &xv) in y.data_mut().iter_mut().zip(x.data()) {
        *yv += a * xv;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::VggWidths;

    #[test]
    fn weight_map_values() {
        let cfg = HeatmapLossConfig::default();
        let h = Grid::from_vec(3, 1, vec![0.0f64, 0.5, 1.0]).unwrap();
        let w = heatmap_weights(&h, &cfg).unwrap();
        assert!((w.data()[0] - 0.1).abs() < 1e-15);
        assert!((w.data()[1] - 0.325).abs() < 1e-15);
        assert!((w.data()[2] - 1.0).abs() < 1e-15);
        let bad = HeatmapLossConfig { gamma: 1.0, ..cfg.clone() };
        assert!(heatmap_weights(&h, &bad).is_err());
        let bad = HeatmapLossConfig { floor: 0.0, ..cfg };
        assert!(heatmap_weights(&h, &bad).is_err());
    }

    #[test]
    fn toy_two_by_two() {
        // |e| = [[1,0],[0,0]], w = [[1,.1],[.1,.1]]
        let pred = Tensor::from_vec(1, 2, 2, vec![1.0f64, 0.0, 0.0, 0.0]).unwrap();
        let target = Tensor::zeros(1, 2, 2);
        let h = Grid::from_vec(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let mut cfg = HeatmapLossConfig {
            heat_norm: HeatNorm::WeightedMean,
            ..Default::default()
        };
        let v = heatmap_loss(&pred, &target, &h, &cfg).unwrap();
        assert!((v - 1.0 / 1.3).abs() < 1e-12);
        cfg.heat_norm = HeatNorm::AsPrinted;
        let v = heatmap_loss(&pred, &target, &h, &cfg).unwrap();
        assert!((v - 1.0 / 1.3 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = Tensor::<f32>::zeros(3, 4, 4);
        let b = Tensor::<f32>::zeros(3, 4, 5);
        assert!(matches!(pixel_mse(&a, &b), Err(Error::InvalidInput(_))));
        let h = Grid::zeros(5, 4);
        assert!(matches!(
            heatmap_loss(&a, &a, &h, &HeatmapLossConfig::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn total_skips_zero_weight_terms() {
        let fx = FeatureExtractor::<f64>::seeded(VggWidths([2, 2, 2]), 1);
        let cal = LpipsCalibration::uniform(&fx);
        let a = Tensor::from_fn(3, 8, 8, |c, y, x| ((c + y * x) as f64 * 0.3).sin() * 0.5);
        let b = a.map(|v| v * 0.7);
        let h = Grid::filled(8, 8, 0.5);
        let cfg = LossConfig {
            lambda_perc: 0.0,
            lambda_heat: 0.0,
            lambda_lpips: 0.0,
            ..Default::default()
        };
        let r = total_loss(&a, &b, &h, &cfg, None).unwrap();
        assert_eq!(r.total, pixel_mse(&a, &b).unwrap());
        assert_eq!((r.perceptual, r.heat, r.lpips), (None, None, None));
        let ctx = FeatureLossContext {
            extractor: &fx,
            calibration: &cal,
        };
        let full = total_loss(&a, &b, &h, &LossConfig::default(), Some(ctx)).unwrap();
        assert!(full.perceptual.is_some() && full.lpips.is_some() && full.heat.is_some());
        assert!(total_loss(&a, &b, &h, &LossConfig::default(), None).is_err());
    }

    #[test]
    fn calibration_mismatch_and_roundtrip() {
        let fx = FeatureExtractor::<f32>::seeded(VggWidths([2, 3, 4]), 1);
        let mut cal = LpipsCalibration::uniform(&fx);
        cal.check(&fx, &DEFAULT_TAPS).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cal.safetensors");
        cal.save(&p).unwrap();
        assert_eq!(LpipsCalibration::<f32>::load(&p).unwrap(), cal);
        cal.weights.insert("conv2_2".into(), vec![1.0; 5]);
        assert!(matches!(cal.check(&fx, &DEFAULT_TAPS), Err(Error::InvalidConfig(_))));
    }
}
