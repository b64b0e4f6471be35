//! Dataset plumbing: degradation, splits, on-disk layout and image IO.
//!
//! Layout under a dataset root:
//!
//! ```text
//! {root}/hr/{id}.png          128x128 RGB targets
//! {root}/heatmaps/{id}.png    16-bit grayscale importance maps
//! {root}/heatmaps/index.json  image id -> heatmap file
//! {root}/detections.jsonl     detector output
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmap::{compose_heatmap, HeatmapConfig, ImageDetections, ImportanceMap};
use crate::model::SCALE_FACTOR;
use crate::resample::{InterpolationMode, Kernel, Resampler2d};
use crate::scalar::Scalar;
use crate::tensor::{Grid, Tensor};

pub const HR_SIZE: usize = 128;
pub const LR_SIZE: usize = HR_SIZE / SCALE_FACTOR;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradationConfig {
    pub mode: InterpolationMode,
    pub antialias: bool,
    pub bicubic_a: f64,
}

impl Default for DegradationConfig {
    fn default() -> Self {
        Self {
            mode: InterpolationMode::Bilinear,
            antialias: true,
            bicubic_a: -0.5,
        }
    }
}

impl DegradationConfig {
    fn kernel(&self) -> Kernel {
        Kernel::for_mode(self.mode, self.bicubic_a)
    }

    pub fn downsampler<T: Scalar>(&self) -> Resampler2d<T> {
        Resampler2d::new((HR_SIZE, HR_SIZE), (LR_SIZE, LR_SIZE), self.kernel(), self.antialias)
    }

    pub fn upsampler<T: Scalar>(&self) -> Resampler2d<T> {
        Resampler2d::new((LR_SIZE, LR_SIZE), (HR_SIZE, HR_SIZE), self.kernel(), false)
    }
}

fn expect_shape<T: Scalar>(t: &Tensor<T>, n: usize, what: &str) -> Result<()> {
    if t.shape() != (3, n, n) {
        return Err(Error::invalid_input(format!(
            "{what} must be 3x{n}x{n}, got {:?}",
            t.shape()
        )));
    }
    Ok(())
}

/// 128x128 to 16x16, clamped to `[-1, 1]` (bicubic can overshoot).
pub fn degrade<T: Scalar>(hr: &Tensor<T>, cfg: &DegradationConfig) -> Result<Tensor<T>> {
    expect_shape(hr, HR_SIZE, "HR image")?;
    Ok(cfg.downsampler().apply(hr).clamp(-T::one(), T::one()))
}

/// x8 interpolation with the degradation kernel family. Not clamped.
pub fn upscale_reference<T: Scalar>(lr: &Tensor<T>, cfg: &DegradationConfig) -> Result<Tensor<T>> {
    expect_shape(lr, LR_SIZE, "LR image")?;
    Ok(cfg.upsampler().apply(lr))
}

/// How to size the three splits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSpec {
    Ratios([f64; 3]),
    Counts([usize; 3]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub counts: SplitCounts,
    pub seed: Option<u64>,
    pub degradation: DegradationConfig,
}

impl SplitManifest {
    pub fn new(train: Vec<String>, val: Vec<String>, test: Vec<String>, seed: Option<u64>) -> Self {
        let counts = SplitCounts {
            train: train.len(),
            val: val.len(),
            test: test.len(),
        };
        Self {
            train,
            val,
            test,
            counts,
            seed,
            degradation: DegradationConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for id in self.train.iter().chain(&self.val).chain(&self.test) {
            if !seen.insert(id) {
                return Err(Error::data(format!("image id `{id}` appears in more than one split slot")));
            }
        }
        let c = &self.counts;
        if (c.train, c.val, c.test) != (self.train.len(), self.val.len(), self.test.len()) {
            return Err(Error::data("split counts do not match the id lists"));
        }
        Ok(())
    }

    /// First `train` / `val` / `test` ids of each split, in manifest order.
    pub fn truncated(&self, train: usize, val: usize, test: usize) -> Self {
        let take = |v: &Vec<String>, n: usize| v.iter().take(n).cloned().collect();
        let mut m = Self::new(
            take(&self.train, train),
            take(&self.val, val),
            take(&self.test, test),
            self.seed,
        );
        m.degradation = self.degradation.clone();
        m
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text)
            .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        m.validate()?;
        Ok(m)
    }
}

/// Seeded shuffle, then consecutive train / val / test slices.
pub fn make_splits(ids: &[String], spec: SplitSpec, seed: u64) -> Result<SplitManifest> {
    let unique: BTreeSet<&String> = ids.iter().collect();
    if unique.len() != ids.len() {
        return Err(Error::invalid_input("image ids are not unique"));
    }
    let n = ids.len();
    let [train, val, test] = match spec {
        SplitSpec::Counts(c) => c,
        SplitSpec::Ratios(r) => {
            if r.iter().any(|v| !(*v >= 0.0)) || r.iter().sum::<f64>() > 1.0 + 1e-9 {
                return Err(Error::invalid_config(format!("split ratios {r:?} must be >= 0 and sum to <= 1")));
            }
            let val = (n as f64 * r[1]).round() as usize;
            let test = (n as f64 * r[2]).round() as usize;
            let train = if (r.iter().sum::<f64>() - 1.0).abs() < 1e-9 {
                n.saturating_sub(val + test)
            } else {
                (n as f64 * r[0]).round() as usize
            };
            [train, val, test]
        }
    };
    if train + val + test > n {
        return Err(Error::invalid_config(format!(
            "requested {train}+{val}+{test} ids but only {n} are available"
        )));
    }
    let mut order: Vec<String> = ids.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut it = order.into_iter();
    let train_ids = it.by_ref().take(train).collect();
    let val_ids = it.by_ref().take(val).collect();
    let test_ids = it.take(test).collect();
    Ok(SplitManifest::new(train_ids, val_ids, test_ids, Some(seed)))
}

/// Reads CelebA's `list_eval_partition.txt` (`<file> <0|1|2>` per line).
pub fn parse_celeba_partition(text: &str) -> Result<SplitManifest> {
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(file), Some(part), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::data(format!("partition line {}: expected `<file> <split>`", no + 1)));
        };
        let id = Path::new(file)
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or(file)
            .to_string();
        match part {
            "0" => train.push(id),
            "1" => val.push(id),
            "2" => test.push(id),
            other => {
                return Err(Error::data(format!("partition line {}: unknown split `{other}`", no + 1)))
            }
        }
    }
    let m = SplitManifest::new(train, val, test, None);
    m.validate()?;
    Ok(m)
}

/// Paths inside a dataset root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetLayout {
    pub root: PathBuf,
}

impl DatasetLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn hr_dir(&self) -> PathBuf {
        self.root.join("hr")
    }

    pub fn heatmap_dir(&self) -> PathBuf {
        self.root.join("heatmaps")
    }

    pub fn hr_path(&self, id: &str) -> PathBuf {
        self.hr_dir().join(format!("{id}.png"))
    }

    pub fn heatmap_path(&self, id: &str) -> PathBuf {
        self.heatmap_dir().join(format!("{id}.png"))
    }

    pub fn detections_path(&self) -> PathBuf {
        self.root.join("detections.jsonl")
    }

    /// Sorted ids of every `hr/*.png`.
    pub fn list_ids(&self) -> Result<Vec<String>> {
        let dir = self.hr_dir();
        let mut ids = Vec::new();
        for entry in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("png") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}

/// Loads an 8-bit RGB image as `[-1, 1]` CHW (`v / 127.5 - 1`).
pub fn load_rgb<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::data(format!("missing image {}", path.display())));
    }
    let img = image::open(path).map_err(|e| Error::image(path, e))?.to_rgb8();
    Ok(rgb_to_tensor(&img))
}

pub fn rgb_to_tensor<T: Scalar>(img: &RgbImage) -> Tensor<T> {
    let (w, h) = img.dimensions();
    Tensor::from_fn(3, h as usize, w as usize, |c, y, x| {
        T::of(img.get_pixel(x as u32, y as u32)[c] as f64 / 127.5 - 1.0)
    })
}

/// Clamps to `[-1, 1]` and quantizes to 8 bits.
pub fn tensor_to_rgb<T: Scalar>(t: &Tensor<T>) -> RgbImage {
    let q = |v: T| ((v.to_f64_lossy().clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8;
    ImageBuffer::from_fn(t.width() as u32, t.height() as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        if t.channels() == 1 {
            let v = q(t.get(0, y, x));
            Rgb([v, v, v])
        } else {
            Rgb([q(t.get(0, y, x)), q(t.get(1, y, x)), q(t.get(2, y, x))])
        }
    })
}

pub fn save_rgb<T: Scalar>(path: impl AsRef<Path>, t: &Tensor<T>) -> Result<()> {
    let path = path.as_ref();
    ensure_parent(path)?;
    tensor_to_rgb(t).save(path).map_err(|e| Error::image(path, e))
}

pub fn save_heatmap<T: Scalar>(path: impl AsRef<Path>, map: &ImportanceMap<T>) -> Result<()> {
    let path = path.as_ref();
    ensure_parent(path)?;
    let (w, h) = (map.values.width() as u32, map.values.height() as u32);
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w, h, map.to_u16()).expect("buffer size matches grid");
    img.save(path).map_err(|e| Error::image(path, e))
}

pub fn load_heatmap<T: Scalar>(path: impl AsRef<Path>, image_id: &str) -> Result<ImportanceMap<T>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::data(format!(
            "missing heatmap for `{image_id}` at {}",
            path.display()
        )));
    }
    let img = image::open(path).map_err(|e| Error::image(path, e))?.to_luma16();
    let (w, h) = img.dimensions();
    ImportanceMap::from_u16(image_id, w as usize, h as usize, img.as_raw())
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

/// Outcome of a heatmap generation pass.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HeatmapIndex {
    /// image id -> file name relative to the heatmap directory.
    pub files: BTreeMap<String, String>,
    /// image id -> number of detections skipped as degenerate.
    pub skipped: BTreeMap<String, usize>,
}

/// Renders one 16-bit heatmap per detection record and writes `index.json`.
pub fn write_heatmaps(
    detections: &[ImageDetections],
    hr_dir: &Path,
    out_dir: &Path,
    cfg: &HeatmapConfig,
) -> Result<HeatmapIndex> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut index = HeatmapIndex::default();
    for entry in detections {
        let hr_path = hr_dir.join(format!("{}.png", entry.image_id));
        let hr: Tensor<f64> = load_rgb(&hr_path)?;
        entry.validate(hr.width(), hr.height())?;
        let composed = compose_heatmap(&entry.image_id, &hr, &entry.records(), cfg)?;
        let file = format!("{}.png", entry.image_id);
        save_heatmap(out_dir.join(&file), &composed.map)?;
        if !composed.skipped.is_empty() {
            index.skipped.insert(entry.image_id.clone(), composed.skipped.len());
        }
        index.files.insert(entry.image_id.clone(), file);
    }
    let index_path = out_dir.join("index.json");
    std::fs::write(&index_path, serde_json::to_string_pretty(&index)? + "\n")
        .map_err(|e| Error::io(&index_path, e))?;
    Ok(index)
}

/// One training example with its cached LR input.
#[derive(Clone, Debug)]
pub struct Sample<T> {
    pub id: String,
    pub lr: Tensor<T>,
    pub hr: Tensor<T>,
    pub heat: Grid<T>,
}

#[derive(Clone, Debug)]
pub struct Dataset<T> {
    pub samples: Vec<Sample<T>>,
}

impl<T: Scalar> Dataset<T> {
    /// Loads `ids` from `layout`. A missing heatmap file is an error.
    pub fn load(layout: &DatasetLayout, ids: &[String], degradation: &DegradationConfig) -> Result<Self> {
        let down = degradation.downsampler::<T>();
        let mut samples = Vec::with_capacity(ids.len());
        for id in ids {
            let hr: Tensor<T> = load_rgb(layout.hr_path(id))?;
            if hr.shape() != (3, HR_SIZE, HR_SIZE) {
                return Err(Error::data(format!(
                    "`{id}` is {}x{}, expected {HR_SIZE}x{HR_SIZE}",
                    hr.width(),
                    hr.height()
                )));
            }
            let heat = load_heatmap::<T>(layout.heatmap_path(id), id)?.values;
            if (heat.width(), heat.height()) != (HR_SIZE, HR_SIZE) {
                return Err(Error::data(format!("heatmap for `{id}` is not {HR_SIZE}x{HR_SIZE}")));
            }
            let lr = down.apply(&hr).clamp(-T::one(), T::one());
            samples.push(Sample {
                id: id.clone(),
                lr,
                hr,
                heat,
            });
        }
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{i:06}")).collect()
    }

    #[test]
    fn constant_image_survives_degradation() {
        for mode in [InterpolationMode::Bilinear, InterpolationMode::Bicubic] {
            let cfg = DegradationConfig {
                mode,
                ..Default::default()
            };
            let hr = Tensor::filled(3, 128, 128, 0.3f64);
            let lr = degrade(&hr, &cfg).unwrap();
            assert!(lr.data().iter().all(|v| (v - 0.3).abs() < 1e-12));
            let up = upscale_reference(&lr, &cfg).unwrap();
            assert!(up.data().iter().all(|v| (v - 0.3).abs() < 1e-12));
        }
        assert!(degrade(&Tensor::<f32>::zeros(3, 64, 64), &DegradationConfig::default()).is_err());
    }

    #[test]
    fn ratio_splits() {
        let m = make_splits(&ids(100), SplitSpec::Ratios([0.8, 0.1, 0.1]), 3).unwrap();
        assert_eq!((m.train.len(), m.val.len(), m.test.len()), (80, 10, 10));
        m.validate().unwrap();
        assert_eq!(m, make_splits(&ids(100), SplitSpec::Ratios([0.8, 0.1, 0.1]), 3).unwrap());
        assert_ne!(m.train, make_splits(&ids(100), SplitSpec::Ratios([0.8, 0.1, 0.1]), 4).unwrap().train);
        assert!(make_splits(&ids(10), SplitSpec::Counts([8, 2, 1]), 0).is_err());
    }

    #[test]
    fn celeba_partition_file() {
        let text = "000001.jpg 0\n000002.jpg 0\n000003.jpg 1\n000004.jpg 2\n";
        let m = parse_celeba_partition(text).unwrap();
        assert_eq!(m.train, vec!["000001", "000002"]);
        assert_eq!((m.counts.val, m.counts.test), (1, 1));
        assert!(parse_celeba_partition("a.jpg 7\n").is_err());
    }

    #[test]
    fn image_io_roundtrip_and_missing_heatmap() {
        let dir = tempfile::tempdir().unwrap();
        let t = Tensor::from_fn(3, 4, 5, |c, y, x| ((c * 40 + y * 10 + x) as f64) / 127.5 - 1.0);
        let p = dir.path().join("a.png");
        save_rgb(&p, &t).unwrap();
        let back: Tensor<f64> = load_rgb(&p).unwrap();
        assert!(back.data().iter().zip(t.data()).all(|(a, b)| (a - b).abs() < 1e-12));

        let map = ImportanceMap {
            image_id: "a".into(),
            values: Grid::from_fn(3, 2, |x, y| (x + 3 * y) as f64 / 5.0),
        };
        let hp = dir.path().join("h.png");
        save_heatmap(&hp, &map).unwrap();
        assert_eq!(load_heatmap::<f64>(&hp, "a").unwrap().to_u16(), map.to_u16());

        let err = load_heatmap::<f64>(dir.path().join("nope.png"), "x").unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }
}
