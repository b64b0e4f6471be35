//! Importance heatmaps built from facial-component detections.
//!
//! Every detection box is cropped from the high-resolution target, turned
//! into an edge map (Scharr magnitude fused with Canny by pixelwise max),
//! blurred, renormalized, shaped by a radial fade and scaled by a class
//! weight. Contributions are summed over the image and divided by the
//! global maximum.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Grid, Tensor};

/// The nine facial-component prompt classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Eyes,
    Eyebrows,
    Mouth,
    Nose,
    NoseTip,
    Chin,
    Ears,
    Face,
    Head,
}

impl Label {
    pub const ALL: [Label; 9] = [
        Label::Eyes,
        Label::Eyebrows,
        Label::Mouth,
        Label::Nose,
        Label::NoseTip,
        Label::Chin,
        Label::Ears,
        Label::Face,
        Label::Head,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Eyes => "eyes",
            Label::Eyebrows => "eyebrows",
            Label::Mouth => "mouth",
            Label::Nose => "nose",
            Label::NoseTip => "nose_tip",
            Label::Chin => "chin",
            Label::Ears => "ears",
            Label::Face => "face",
            Label::Head => "head",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        Label::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == norm)
            .ok_or_else(|| Error::data(format!("unknown detection label `{s}`")))
    }
}

/// Half-open pixel box `[x1, x2) x [y1, y2)` in the high-resolution frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[i64; 4]", into = "[i64; 4]")]
pub struct BBox {
    pub x1: i64,
    pub y1: i64,
    pub x2: i64,
    pub y2: i64,
}

impl From<[i64; 4]> for BBox {
    fn from(v: [i64; 4]) -> Self {
        BBox {
            x1: v[0],
            y1: v[1],
            x2: v[2],
            y2: v[3],
        }
    }
}

impl From<BBox> for [i64; 4] {
    fn from(b: BBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

impl BBox {
    pub fn new(x1: i64, y1: i64, x2: i64, y2: i64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> i64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> i64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> i64 {
        self.width().max(0) * self.height().max(0)
    }

    pub fn validate(&self, frame_w: usize, frame_h: usize) -> Result<()> {
        let ok = 0 <= self.x1
            && self.x1 < self.x2
            && self.x2 <= frame_w as i64
            && 0 <= self.y1
            && self.y1 < self.y2
            && self.y2 <= frame_h as i64;
        if ok {
            Ok(())
        } else {
            Err(Error::data(format!(
                "bbox {:?} outside {}x{} frame",
                <[i64; 4]>::from(*self),
                frame_w,
                frame_h
            )))
        }
    }
}

/// One detector hit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: String,
    pub label: Label,
    pub confidence: f64,
    pub bbox: BBox,
}

/// One line of the detections JSON-lines file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageDetections {
    pub image_id: String,
    pub detections: Vec<DetectionEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionEntry {
    #[serde(deserialize_with = "deserialize_label")]
    pub label: Label,
    pub confidence: f64,
    pub bbox: BBox,
}

fn deserialize_label<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Label, D::Error> {
    let s = String::deserialize(d)?;
    s.parse().map_err(serde::de::Error::custom)
}

impl ImageDetections {
    pub fn records(&self) -> Vec<DetectionRecord> {
        self.detections
            .iter()
            .map(|d| DetectionRecord {
                image_id: self.image_id.clone(),
                label: d.label,
                confidence: d.confidence,
                bbox: d.bbox,
            })
            .collect()
    }

    pub fn validate(&self, frame_w: usize, frame_h: usize) -> Result<()> {
        for d in &self.detections {
            if !(0.0..=1.0).contains(&d.confidence) {
                return Err(Error::data(format!(
                    "{}: confidence {} outside [0, 1]",
                    self.image_id, d.confidence
                )));
            }
            d.bbox
                .validate(frame_w, frame_h)
                .map_err(|e| Error::data(format!("{}: {e}", self.image_id)))?;
        }
        Ok(())
    }
}

/// Parses a detections JSON-lines document. Blank lines are ignored.
pub fn parse_detections_jsonl(text: &str) -> Result<Vec<ImageDetections>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::data(format!("detections line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn to_detections_jsonl(records: &[ImageDetections]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fade {
    /// `exp(-2 (x^2 + y^2))`: emphasizes the middle of small features.
    CenterFade,
    /// `1 - exp(-(x^2 + y^2) / (2 sigma^2))`: emphasizes outlines of large regions.
    ContourFade,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatmapConfig {
    pub blur_kernel: usize,
    pub blur_sigma: f64,
    pub inverse_fade_sigma: f64,
    pub class_weights: BTreeMap<Label, f64>,
    pub fade_assignment: BTreeMap<Label, Fade>,
    pub canny_low: f64,
    pub canny_high: f64,
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        use Label::*;
        let class_weights = [
            (Eyes, 4.5),
            (Eyebrows, 4.0),
            (Mouth, 4.0),
            (Nose, 4.0),
            (NoseTip, 3.0),
            (Chin, 4.0),
            (Ears, 4.0),
            (Face, 4.0),
            (Head, 2.0),
        ]
        .into_iter()
        .collect();
        let fade_assignment = Label::ALL
            .iter()
            .map(|&l| {
                let fade = match l {
                    Eyes | Eyebrows | Mouth | Nose | NoseTip => Fade::CenterFade,
                    Chin | Ears | Face | Head => Fade::ContourFade,
                };
                (l, fade)
            })
            .collect();
        Self {
            blur_kernel: 15,
            blur_sigma: 3.0,
            inverse_fade_sigma: 0.6,
            class_weights,
            fade_assignment,
            canny_low: 0.1,
            canny_high: 0.3,
        }
    }
}

impl HeatmapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blur_kernel < 3 || self.blur_kernel % 2 == 0 {
            return Err(Error::invalid_config(format!(
                "blur_kernel must be odd and >= 3, got {}",
                self.blur_kernel
            )));
        }
        if !(self.blur_sigma > 0.0) || !(self.inverse_fade_sigma > 0.0) {
            return Err(Error::invalid_config("blur and fade sigmas must be positive"));
        }
        for l in Label::ALL {
            match self.class_weights.get(&l) {
                Some(&w) if w > 0.0 && w.is_finite() => {}
                Some(&w) => {
                    return Err(Error::invalid_config(format!("class weight for {l} must be > 0, got {w}")))
                }
                None => return Err(Error::invalid_config(format!("missing class weight for {l}"))),
            }
            if !self.fade_assignment.contains_key(&l) {
                return Err(Error::invalid_config(format!("missing fade assignment for {l}")));
            }
        }
        validate_thresholds(self.canny_low, self.canny_high)
    }

    pub fn class_weight(&self, label: Label) -> f64 {
        self.class_weights[&label]
    }

    pub fn fade(&self, label: Label) -> Fade {
        self.fade_assignment[&label]
    }
}

fn validate_thresholds(low: f64, high: f64) -> Result<()> {
    if !(low >= 0.0) || !(low <= high) {
        return Err(Error::invalid_config(format!(
            "canny thresholds need 0 <= low <= high, got low={low} high={high}"
        )));
    }
    Ok(())
}

/// Mirror-without-edge-repeat border index (`dcb|abcd|cba`), valid for any offset.
#[inline]
pub(crate) fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

fn convolve_rows<T: Scalar>(g: &Grid<T>, taps: &[T]) -> Grid<T> {
    let r = (taps.len() / 2) as isize;
    let w = g.width();
    Grid::from_fn(w, g.height(), |x, y| {
        taps.iter()
            .enumerate()
            .map(|(k, &t)| t * g.get(reflect101(x as isize + k as isize - r, w), y))
            .sum()
    })
}

fn convolve_cols<T: Scalar>(g: &Grid<T>, taps: &[T]) -> Grid<T> {
    let r = (taps.len() / 2) as isize;
    let h = g.height();
    Grid::from_fn(g.width(), h, |x, y| {
        taps.iter()
            .enumerate()
            .map(|(k, &t)| t * g.get(x, reflect101(y as isize + k as isize - r, h)))
            .sum()
    })
}

/// Sum-normalized 1D Gaussian taps.
pub fn gaussian_kernel_1d<T: Scalar>(kernel: usize, sigma: f64) -> Vec<T> {
    let r = (kernel / 2) as f64;
    let raw: Vec<f64> = (0..kernel)
        .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| T::of(v / total)).collect()
}

/// Separable Gaussian blur with mirror (reflect-101) borders.
pub fn gaussian_blur<T: Scalar>(grid: &Grid<T>, kernel: usize, sigma: f64) -> Result<Grid<T>> {
    if kernel % 2 == 0 || kernel == 0 {
        return Err(Error::invalid_config(format!("blur kernel must be odd, got {kernel}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid_config(format!("blur sigma must be > 0, got {sigma}")));
    }
    if grid.is_empty() {
        return Ok(grid.clone());
    }
    let taps = gaussian_kernel_1d::<T>(kernel, sigma);
    Ok(convolve_cols(&convolve_rows(grid, &taps), &taps))
}

fn gradients_3x3<T: Scalar>(g: &Grid<T>, smooth: [f64; 3]) -> (Grid<T>, Grid<T>) {
    let s: Vec<T> = smooth.iter().map(|&v| T::of(v)).collect();
    let d = [-T::one(), T::zero(), T::one()];
    let gx = convolve_cols(&convolve_rows(g, &d), &s);
    let gy = convolve_rows(&convolve_cols(g, &d), &s);
    (gx, gy)
}

/// Scharr gradient magnitude (weights 3, 10, 3), min-max normalized to `[0, 1]`.
pub fn scharr_magnitude<T: Scalar>(gray: &Grid<T>) -> Result<Grid<T>> {
    if gray.is_empty() {
        return Err(Error::invalid_input("scharr_magnitude: empty crop"));
    }
    let (gx, gy) = gradients_3x3(gray, [3.0, 10.0, 3.0]);
    Ok(gx.zip_map(&gy, |a, b| a.hypot(b)).min_max_normalized())
}

/// Canny edge map in `{0, 1}`.
///
/// Gaussian smoothing (5x5, sigma 1.4), Sobel gradients, magnitude scaled by
/// its maximum, non-maximum suppression along the quantized gradient
/// direction, then hysteresis with 8-connectivity. Thresholds apply to the
/// `[0, 1]`-scaled magnitude.
pub fn canny_edges<T: Scalar>(gray: &Grid<T>, low: f64, high: f64) -> Result<Grid<T>> {
    validate_thresholds(low, high)?;
    let (w, h) = (gray.width(), gray.height());
    if gray.is_empty() {
        return Ok(gray.clone());
    }
    let smoothed = gaussian_blur(gray, 5, 1.4)?;
    let (gx, gy) = gradients_3x3(&smoothed, [1.0, 2.0, 1.0]);
    let mag = gx.zip_map(&gy, |a, b| a.hypot(b));
    let peak = mag.max_value();
    if !(peak > T::of(1e-12)) {
        return Ok(Grid::zeros(w, h));
    }
    let mag = mag.map(|v| v / peak);

    let at = |x: isize, y: isize| -> T {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            T::zero()
        } else {
            mag.get(x as usize, y as usize)
        }
    };
    let mut thin = Grid::<T>::zeros(w, h);
    let tan22 = T::of(std::f64::consts::FRAC_PI_8.tan());
    let tan67 = T::of((3.0 * std::f64::consts::FRAC_PI_8).tan());
    for y in 0..h {
        for x in 0..w {
            let m = mag.get(x, y);
            if m <= T::zero() {
                continue;
            }
            let (dx, dy) = (gx.get(x, y), gy.get(x, y));
            // Neighbour offsets along the gradient direction.
            let (ox, oy): (isize, isize) = if dy.abs() <= dx.abs() * tan22 {
                (1, 0)
            } else if dy.abs() >= dx.abs() * tan67 {
                (0, 1)
            } else if (dx > T::zero()) == (dy > T::zero()) {
                (1, 1)
            } else {
                (1, -1)
            };
            let (xi, yi) = (x as isize, y as isize);
            let behind = at(xi - ox, yi - oy);
            let ahead = at(xi + ox, yi + oy);
            // Ties resolve towards the "behind" pixel so plateaus stay one pixel wide.
            if m > behind && m >= ahead {
                thin.set(x, y, m);
            }
        }
    }

    let (lo, hi) = (T::of(low), T::of(high));
    let mut out = Grid::<T>::zeros(w, h);
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if thin.get(x, y) >= hi && thin.get(x, y) > T::zero() && out.get(x, y) == T::zero() {
                out.set(x, y, T::one());
                stack.push((x, y));
                while let Some((cx, cy)) = stack.pop() {
                    for ny in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
                        for nx in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
                            let v = thin.get(nx, ny);
                            if v >= lo && v > T::zero() && out.get(nx, ny) == T::zero() {
                                out.set(nx, ny, T::one());
                                stack.push((nx, ny));
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Coordinates spanning `[-1, 1]` across `n` pixels, endpoints included; a single pixel sits at 0.
fn unit_coords(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|i| 2.0 * i as f64 / (n - 1) as f64 - 1.0).collect()
}

fn radial_grid<T: Scalar>(width: usize, height: usize, f: impl Fn(f64) -> f64) -> Result<Grid<T>> {
    if width == 0 || height == 0 {
        return Err(Error::invalid_input(format!("fade size {width}x{height} must be >= 1")));
    }
    let xs = unit_coords(width);
    let ys = unit_coords(height);
    Ok(Grid::from_fn(width, height, |x, y| {
        T::of(f(xs[x] * xs[x] + ys[y] * ys[y]))
    }))
}

/// `exp(-2 (x^2 + y^2))` over box coordinates normalized to `[-1, 1]`.
pub fn center_fade<T: Scalar>(width: usize, height: usize) -> Result<Grid<T>> {
    radial_grid(width, height, |r2| (-2.0 * r2).exp())
}

/// `1 - exp(-(x^2 + y^2) / (2 sigma^2))` over box coordinates normalized to `[-1, 1]`.
pub fn contour_fade<T: Scalar>(width: usize, height: usize, sigma: f64) -> Result<Grid<T>> {
    if !(sigma > 0.0) {
        return Err(Error::invalid_config(format!("fade sigma must be > 0, got {sigma}")));
    }
    radial_grid(width, height, |r2| 1.0 - (-r2 / (2.0 * sigma * sigma)).exp())
}

/// BT.601 luma of an RGB tensor in `[-1, 1]`, returned in `[0, 1]`.
pub fn luma<T: Scalar>(rgb: &Tensor<T>) -> Grid<T> {
    assert_eq!(rgb.channels(), 3, "luma needs an RGB tensor");
    let (r, g, b) = (T::of(0.299), T::of(0.587), T::of(0.114));
    let half = T::of(0.5);
    Grid::from_fn(rgb.width(), rgb.height(), |x, y| {
        let v = r * rgb.get(0, y, x) + g * rgb.get(1, y, x) + b * rgb.get(2, y, x);
        (v + T::one()) * half
    })
}

/// Smallest box area (in pixels) that produces a contribution.
pub const MIN_BOX_AREA: i64 = 4;

/// Edge map used for one crop: pixelwise max of the Scharr magnitude and the Canny map.
pub fn fused_edges<T: Scalar>(gray: &Grid<T>, cfg: &HeatmapConfig) -> Result<Grid<T>> {
    let scharr = scharr_magnitude(gray)?;
    let canny = canny_edges(gray, cfg.canny_low, cfg.canny_high)?;
    Ok(scharr.zip_map(&canny, T::max))
}

/// Contribution of one detection on the full frame (zero outside its box).
///
/// Returns `Ok(None)` for degenerate boxes (area below [`MIN_BOX_AREA`]).
pub fn region_heatmap<T: Scalar>(
    hr: &Tensor<T>,
    det: &DetectionRecord,
    cfg: &HeatmapConfig,
) -> Result<Option<Grid<T>>> {
    region_heatmap_from_gray(&luma(hr), det, cfg)
}

fn region_heatmap_from_gray<T: Scalar>(
    gray: &Grid<T>,
    det: &DetectionRecord,
    cfg: &HeatmapConfig,
) -> Result<Option<Grid<T>>> {
    let b = det.bbox;
    b.validate(gray.width(), gray.height())
        .map_err(|e| Error::invalid_input(format!("{}: {e}", det.image_id)))?;
    if b.area() < MIN_BOX_AREA {
        return Ok(None);
    }
    let (x1, y1, x2, y2) = (b.x1 as usize, b.y1 as usize, b.x2 as usize, b.y2 as usize);
    let crop = gray.crop(x1, y1, x2, y2);
    let edges = fused_edges(&crop, cfg)?;
    let blurred = gaussian_blur(&edges, cfg.blur_kernel, cfg.blur_sigma)?.min_max_normalized();
    let fade = match cfg.fade(det.label) {
        Fade::CenterFade => center_fade::<T>(crop.width(), crop.height())?,
        Fade::ContourFade => contour_fade::<T>(crop.width(), crop.height(), cfg.inverse_fade_sigma)?,
    };
    let weight = T::of(cfg.class_weight(det.label));
    let local = blurred.zip_map(&fade, |e, f| e * f * weight);
    let mut full = Grid::zeros(gray.width(), gray.height());
    for y in 0..local.height() {
        for x in 0..local.width() {
            full.set(x1 + x, y1 + y, local.get(x, y));
        }
    }
    Ok(Some(full))
}

/// Normalized per-pixel importance for one image.
#[derive(Clone, Debug, PartialEq)]
pub struct ImportanceMap<T> {
    pub image_id: String,
    pub values: Grid<T>,
}

impl<T: Scalar> ImportanceMap<T> {
    pub fn zeros(image_id: impl Into<String>, width: usize, height: usize) -> Self {
        Self {
            image_id: image_id.into(),
            values: Grid::zeros(width, height),
        }
    }

    /// 16-bit quantization used on disk: `round(v * 65535)`.
    pub fn to_u16(&self) -> Vec<u16> {
        self.values
            .data()
            .iter()
            .map(|v| (v.to_f64_lossy().clamp(0.0, 1.0) * 65535.0).round() as u16)
            .collect()
    }

    pub fn from_u16(image_id: impl Into<String>, width: usize, height: usize, data: &[u16]) -> Result<Self> {
        let values = data.iter().map(|&v| T::of(v as f64 / 65535.0)).collect();
        Ok(Self {
            image_id: image_id.into(),
            values: Grid::from_vec(width, height, values)?,
        })
    }
}

/// Result of [`compose_heatmap`]: the map plus detections that were skipped as degenerate.
#[derive(Clone, Debug)]
pub struct ComposedHeatmap<T> {
    pub map: ImportanceMap<T>,
    pub skipped: Vec<DetectionRecord>,
}

/// Accumulates all detection contributions for one image and divides by the global maximum.
///
/// Contributions are summed in a canonical order (label, box, confidence),
/// so the result does not depend on the order of `detections`.
pub fn compose_heatmap<T: Scalar>(
    image_id: &str,
    hr: &Tensor<T>,
    detections: &[DetectionRecord],
    cfg: &HeatmapConfig,
) -> Result<ComposedHeatmap<T>> {
    cfg.validate()?;
    if let Some(d) = detections.iter().find(|d| d.image_id != image_id) {
        return Err(Error::invalid_input(format!(
            "detection for `{}` passed while composing `{image_id}`",
            d.image_id
        )));
    }
    let gray = luma(hr);
    let mut ordered: Vec<&DetectionRecord> = detections.iter().collect();
    ordered.sort_by(|a, b| {
        (a.label, a.bbox)
            .cmp(&(b.label, b.bbox))
            .then(a.confidence.total_cmp(&b.confidence))
    });

    let mut acc = Grid::<T>::zeros(gray.width(), gray.height());
    let mut skipped = Vec::new();
    for det in ordered {
        match region_heatmap_from_gray(&gray, det, cfg)? {
            Some(contrib) => {
                for (a, &c) in acc.data_mut().iter_mut().zip(contrib.data()) {
                    *a += c;
                }
            }
            None => {
                log::warn!(
                    "{image_id}: skipping degenerate {} box {:?}",
                    det.label,
                    <[i64; 4]>::from(det.bbox)
                );
                skipped.push(det.clone());
            }
        }
    }
    let peak = acc.max_value();
    let values = if peak > T::zero() { acc.map(|v| v / peak) } else { acc };
    Ok(ComposedHeatmap {
        map: ImportanceMap {
            image_id: image_id.to_string(),
            values,
        },
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(label: Label, bbox: [i64; 4]) -> DetectionRecord {
        DetectionRecord {
            image_id: "img".into(),
            label,
            confidence: 0.9,
            bbox: bbox.into(),
        }
    }

    #[test]
    fn reflect101_folds() {
        assert_eq!(reflect101(-1, 5), 1);
        assert_eq!(reflect101(-2, 5), 2);
        assert_eq!(reflect101(5, 5), 3);
        assert_eq!(reflect101(6, 5), 2);
        assert_eq!(reflect101(-9, 3), 1);
        assert_eq!(reflect101(4, 1), 0);
    }

    #[test]
    fn label_parsing_accepts_prompt_spelling() {
        assert_eq!("nose tip".parse::<Label>().unwrap(), Label::NoseTip);
        assert_eq!("Eyes".parse::<Label>().unwrap(), Label::Eyes);
        assert!("beard".parse::<Label>().is_err());
    }

    #[test]
    fn jsonl_roundtrip_and_schema() {
        let line = r#"{"image_id": "000001", "detections": [{"label": "nose tip", "confidence": 0.5, "bbox": [1, 2, 30, 40]}]}"#;
        let parsed = parse_detections_jsonl(&format!("{line}\n\n")).unwrap();
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0].detections[0].label, Label::NoseTip);
        assert_eq!(parsed[0].detections[0].bbox, BBox::new(1, 2, 30, 40));
        let text = to_detections_jsonl(&parsed).unwrap();
        assert!(text.contains(r#""label":"nose_tip""#));
        assert_eq!(parse_detections_jsonl(&text).unwrap(), parsed);
        assert!(parse_detections_jsonl(r#"{"image_id": "x"}"#).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(HeatmapConfig::default().validate().is_ok());
        let mut c = HeatmapConfig::default();
        c.blur_kernel = 14;
        assert!(c.validate().is_err());
        let mut c = HeatmapConfig::default();
        c.class_weights.insert(Label::Eyes, 0.0);
        assert!(c.validate().is_err());
        let mut c = HeatmapConfig::default();
        c.fade_assignment.remove(&Label::Head);
        assert!(c.validate().is_err());
    }

    #[test]
    fn default_class_weights() {
        let c = HeatmapConfig::default();
        assert_eq!(c.class_weight(Label::Eyes), 4.5);
        assert_eq!(c.class_weight(Label::NoseTip), 3.0);
        assert_eq!(c.class_weight(Label::Head), 2.0);
        for l in [Label::Eyebrows, Label::Mouth, Label::Nose, Label::Chin, Label::Ears, Label::Face] {
            assert_eq!(c.class_weight(l), 4.0);
        }
        assert_eq!(c.fade(Label::Head), Fade::ContourFade);
        assert_eq!(c.fade(Label::Eyes), Fade::CenterFade);
    }

    #[test]
    fn degenerate_box_is_skipped() {
        let hr = Tensor::<f64>::from_fn(3, 16, 16, |_, _, x| if x < 8 { -1.0 } else { 1.0 });
        let det = record(Label::Eyes, [7, 7, 9, 8]);
        assert!(region_heatmap(&hr, &det, &HeatmapConfig::default()).unwrap().is_none());
        let out = compose_heatmap("img", &hr, &[det], &HeatmapConfig::default()).unwrap();
        assert_eq!(out.skipped.len(), 1);
        assert!(out.map.values.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn out_of_frame_box_is_error() {
        let hr = Tensor::<f64>::zeros(3, 16, 16);
        let det = record(Label::Eyes, [0, 0, 17, 4]);
        assert!(region_heatmap(&hr, &det, &HeatmapConfig::default()).is_err());
    }

    #[test]
    fn mixed_image_ids_rejected() {
        let hr = Tensor::<f64>::zeros(3, 16, 16);
        let mut det = record(Label::Eyes, [0, 0, 8, 8]);
        det.image_id = "other".into();
        assert!(compose_heatmap("img", &hr, &[det], &HeatmapConfig::default()).is_err());
    }

    #[test]
    fn u16_quantization() {
        let map = ImportanceMap::<f64> {
            image_id: "a".into(),
            values: Grid::from_vec(3, 1, vec![0.0, 0.5, 1.0]).unwrap(),
        };
        assert_eq!(map.to_u16(), vec![0, 32768, 65535]);
    }
}
