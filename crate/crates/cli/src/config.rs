//! Run configuration: one JSON or TOML file, then flag overrides.

use std::path::{Path, PathBuf};

use landmark_sr::data::DegradationConfig;
use landmark_sr::features::VggWidths;
use landmark_sr::heatmap::HeatmapConfig;
use landmark_sr::losses::LossConfig;
use landmark_sr::metrics::ColorSpace;
use landmark_sr::model::ModelConfig;
use landmark_sr::trainer::TrainConfig;
use landmark_sr::{Error, Result};
use serde::{Deserialize, Serialize};

pub const SEED_ENV: &str = "LANDMARK_SR_SEED";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// Where the frozen feature extractor comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorSource {
    /// Weights file; when absent a seeded extractor is built.
    pub weights: Option<PathBuf>,
    pub widths: VggWidths,
    pub seed: u64,
}

impl Default for ExtractorSource {
    fn default() -> Self {
        Self {
            weights: None,
            widths: VggWidths::default(),
            seed: 0,
        }
    }
}

/// Id counts taken from the front of each split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subset {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for Subset {
    fn default() -> Self {
        Self {
            train: 2048,
            val: 256,
            test: 256,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub precision: Precision,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub degradation: DegradationConfig,
    pub heatmap: HeatmapConfig,
    pub extractor: ExtractorSource,
    /// LPIPS calibration weights; uniform when absent.
    pub calibration: Option<PathBuf>,
    /// `None` uses every id in the split manifest.
    pub subset: Option<Subset>,
    pub color_space: ColorSpace,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            precision: Precision::F32,
            model: ModelConfig::default(),
            loss: LossConfig::default(),
            train: TrainConfig::default(),
            degradation: DegradationConfig::default(),
            heatmap: HeatmapConfig::default(),
            extractor: ExtractorSource::default(),
            calibration: None,
            subset: Some(Subset::default()),
            color_space: ColorSpace::Rgb,
        }
    }
}

impl RunConfig {
    /// Parses TOML for `.toml` files and JSON otherwise.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let is_toml = path.extension().and_then(|e| e.to_str()) == Some("toml");
        if is_toml {
            toml::from_str(&text).map_err(|e| Error::invalid_config(format!("{}: {e}", path.display())))
        } else {
            serde_json::from_str(&text).map_err(|e| Error::invalid_config(format!("{}: {e}", path.display())))
        }
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        path.map(Self::from_file).transpose().map(Option::unwrap_or_default)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        self.train.validate()?;
        self.heatmap.validate()
    }
}

/// Seed precedence: flag, then `LANDMARK_SR_SEED`, then the config file.
pub fn resolve_seed(flag: Option<u64>, config: u64) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::invalid_config(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        Err(_) => Ok(config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_json_agree() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("c.toml");
        std::fs::write(&t, "seed = 5\n[train]\nlr = 0.001\n[loss]\nlambda_heat = 0.5\n").unwrap();
        let j = dir.path().join("c.json");
        std::fs::write(&j, r#"{"seed": 5, "train": {"lr": 0.001}, "loss": {"lambda_heat": 0.5}}"#).unwrap();
        let a = RunConfig::from_file(&t).unwrap();
        assert_eq!(a, RunConfig::from_file(&j).unwrap());
        assert_eq!(a.train.batch_size, 8);
        assert_eq!(a.loss.lambda_heat, 0.5);
    }

    #[test]
    fn readme_example_parses() {
        let text = r#"
seed = 3
precision = "f64"
color_space = "luma"

[model]
refinement_blocks = 1

[loss]
lambda_perc = 0.05
perceptual_layers = ["conv1_2", "conv2_2"]

[loss.heatmap]
heat_norm = "weighted_mean"

[train]
max_epochs = 10

[extractor]
weights = "vgg.safetensors"

[subset]
train = 64
val = 8
test = 8
"#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.precision, Precision::F64);
        assert_eq!(cfg.model.refinement_blocks, 1);
        assert_eq!(cfg.loss.heatmap.heat_norm, landmark_sr::losses::HeatNorm::WeightedMean);
        assert_eq!(cfg.subset.unwrap().train, 64);
        assert_eq!(cfg.extractor.weights.as_deref(), Some(Path::new("vgg.safetensors")));
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let j = dir.path().join("c.json");
        std::fs::write(&j, r#"{"trian": {}}"#).unwrap();
        assert!(matches!(RunConfig::from_file(&j), Err(Error::InvalidConfig(_))));
    }
}
