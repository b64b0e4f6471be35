//! Frozen convolutional feature pyramid used by the perceptual and LPIPS losses.
//!
//! The network is a plain op list (conv / ReLU / 2x2 max-pool / named tap).
//! The default layout mirrors the first three VGG16 blocks with taps named
//! `conv1_2`, `conv2_2` and `conv3_3`; widths are configurable so a narrow
//! seeded extractor can run on CPU. Weights are never updated.
//!
//! Weight files use [`TensorStore`] with a JSON `manifest` header entry
//! describing the op list, tap channels and input normalization.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{max_pool2, max_pool2_backward, relu_backward, relu_inplace, Conv2d};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::weights::TensorStore;

pub const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

/// Serializable description of one extractor op.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum OpSpec {
    Conv {
        name: String,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    },
    Relu,
    MaxPool,
    Tap {
        name: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractorManifest {
    pub ops: Vec<OpSpec>,
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

#[derive(Clone, Debug)]
enum Op<T> {
    Conv(String, Conv2d<T>),
    Relu,
    MaxPool,
    Tap(String),
}

#[derive(Clone, Debug)]
pub struct FeatureExtractor<T> {
    ops: Vec<Op<T>>,
    mean: [f64; 3],
    std: [f64; 3],
}

/// Features at the requested tap points, keyed by tap name.
pub type TapFeatures<T> = BTreeMap<String, Tensor<T>>;

/// What the backward pass needs from a forward pass.
#[derive(Debug)]
pub struct FeatureTape<T> {
    /// Per op: conv input, relu output, or (pool input shape, argmax).
    records: Vec<OpRecord<T>>,
}

#[derive(Debug)]
enum OpRecord<T> {
    ConvInput(Tensor<T>),
    ReluOutput(Tensor<T>),
    Pool((usize, usize, usize), Vec<usize>),
    Tap,
}

/// Layer widths of the three VGG-style blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VggWidths(pub [usize; 3]);

impl VggWidths {
    pub const VGG16: VggWidths = VggWidths([64, 128, 256]);
}

impl Default for VggWidths {
    fn default() -> Self {
        VggWidths([16, 32, 64])
    }
}

pub const DEFAULT_TAPS: [&str; 3] = ["conv1_2", "conv2_2", "conv3_3"];

impl<T: Scalar> FeatureExtractor<T> {
    pub fn vgg_manifest(widths: VggWidths) -> ExtractorManifest {
        let [w1, w2, w3] = widths.0;
        let mut ops = Vec::new();
        let conv = |ops: &mut Vec<OpSpec>, name: &str, cin: usize, cout: usize| {
            ops.push(OpSpec::Conv {
                name: name.into(),
                in_channels: cin,
                out_channels: cout,
                kernel: 3,
            });
            ops.push(OpSpec::Relu);
        };
        conv(&mut ops, "conv1_1", 3, w1);
        conv(&mut ops, "conv1_2", w1, w1);
        ops.push(OpSpec::Tap { name: "conv1_2".into() });
        ops.push(OpSpec::MaxPool);
        conv(&mut ops, "conv2_1", w1, w2);
        conv(&mut ops, "conv2_2", w2, w2);
        ops.push(OpSpec::Tap { name: "conv2_2".into() });
        ops.push(OpSpec::MaxPool);
        conv(&mut ops, "conv3_1", w2, w3);
        conv(&mut ops, "conv3_2", w3, w3);
        conv(&mut ops, "conv3_3", w3, w3);
        ops.push(OpSpec::Tap { name: "conv3_3".into() });
        ExtractorManifest {
            ops,
            mean: IMAGENET_MEAN,
            std: IMAGENET_STD,
        }
    }

    /// VGG-style extractor with deterministic He-initialized weights.
    pub fn seeded(widths: VggWidths, seed: u64) -> Self {
        Self::from_manifest_seeded(&Self::vgg_manifest(widths), seed)
            .expect("built-in manifest is valid")
    }

    pub fn from_manifest_seeded(manifest: &ExtractorManifest, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::from_manifest(manifest, |_, cin, cout, k| {
            Ok(Conv2d::he_init(cin, cout, k, 1, 0.0, &mut rng))
        })
    }

    fn from_manifest(
        manifest: &ExtractorManifest,
        mut make_conv: impl FnMut(&str, usize, usize, usize) -> Result<Conv2d<T>>,
    ) -> Result<Self> {
        let mut ops = Vec::with_capacity(manifest.ops.len());
        let mut channels = 3;
        for spec in &manifest.ops {
            ops.push(match spec {
                OpSpec::Conv {
                    name,
                    in_channels,
                    out_channels,
                    kernel,
                } => {
                    if *in_channels != channels || kernel % 2 == 0 {
                        return Err(Error::invalid_config(format!(
                            "extractor conv `{name}` expects {in_channels} input channels (have {channels}), kernel {kernel}"
                        )));
                    }
                    channels = *out_channels;
                    Op::Conv(name.clone(), make_conv(name, *in_channels, *out_channels, *kernel)?)
                }
                OpSpec::Relu => Op::Relu,
                OpSpec::MaxPool => Op::MaxPool,
                OpSpec::Tap { name } => Op::Tap(name.clone()),
            });
        }
        if manifest.std.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::invalid_config("extractor std must be positive"));
        }
        Ok(Self {
            ops,
            mean: manifest.mean,
            std: manifest.std,
        })
    }

    /// Extractor whose weights are supplied explicitly (mostly for tests).
    pub fn from_parts(manifest: &ExtractorManifest, convs: Vec<Conv2d<T>>) -> Result<Self> {
        let mut it = convs.into_iter();
        Self::from_manifest(manifest, |name, cin, cout, k| {
            let c = it
                .next()
                .ok_or_else(|| Error::invalid_config(format!("no weights for `{name}`")))?;
            if (c.in_channels, c.out_channels, c.kernel) != (cin, cout, k) {
                return Err(Error::invalid_config(format!("weight shape mismatch for `{name}`")));
            }
            Ok(c)
        })
    }

    pub fn manifest(&self) -> ExtractorManifest {
        ExtractorManifest {
            ops: self
                .ops
                .iter()
                .map(|op| match op {
                    Op::Conv(name, c) => OpSpec::Conv {
                        name: name.clone(),
                        in_channels: c.in_channels,
                        out_channels: c.out_channels,
                        kernel: c.kernel,
                    },
                    Op::Relu => OpSpec::Relu,
                    Op::MaxPool => OpSpec::MaxPool,
                    Op::Tap(name) => OpSpec::Tap { name: name.clone() },
                })
                .collect(),
            mean: self.mean,
            std: self.std,
        }
    }

    /// Tap names with their channel counts, in network order.
    pub fn taps(&self) -> Vec<(String, usize)> {
        let mut channels = 3;
        let mut out = Vec::new();
        for op in &self.ops {
            match op {
                Op::Conv(_, c) => channels = c.out_channels,
                Op::Tap(name) => out.push((name.clone(), channels)),
                _ => {}
            }
        }
        out
    }

    pub fn has_tap(&self, name: &str) -> bool {
        self.ops.iter().any(|op| matches!(op, Op::Tap(n) if n == name))
    }

    pub fn to_store(&self) -> Result<TensorStore<T>> {
        let mut store = TensorStore::new();
        for op in &self.ops {
            if let Op::Conv(name, c) = op {
                store.insert(
                    format!("{name}.weight"),
                    vec![c.out_channels, c.in_channels, c.kernel, c.kernel],
                    c.weight.clone(),
                );
                store.insert(format!("{name}.bias"), vec![c.out_channels], c.bias.clone());
            }
        }
        store
            .metadata
            .insert("manifest".into(), serde_json::to_string(&self.manifest())?);
        Ok(store)
    }

    pub fn from_store(store: &TensorStore<T>) -> Result<Self> {
        let manifest: ExtractorManifest = serde_json::from_str(
            store
                .metadata
                .get("manifest")
                .ok_or_else(|| Error::Weights("extractor file has no manifest".into()))?,
        )?;
        Self::from_manifest(&manifest, |name, cin, cout, k| {
            let mut c = Conv2d::zeros(cin, cout, k, 1);
            c.weight = store.expect(&format!("{name}.weight"), &[cout, cin, k, k])?.to_vec();
            c.bias = store.expect(&format!("{name}.bias"), &[cout])?.to_vec();
            Ok(c)
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_store()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_store(&TensorStore::load(path)?)
    }

    /// Maps `[-1, 1]` RGB to `[0, 1]`, then applies per-channel `(x - mean) / std`.
    pub fn normalize_input(&self, x: &Tensor<T>) -> Tensor<T> {
        let mut out = x.clone();
        for c in 0..3 {
            let (m, s) = (T::of(self.mean[c]), T::of(self.std[c]));
            let half = T::of(0.5);
            for v in out.plane_mut(c) {
                *v = ((*v + T::one()) * half - m) / s;
            }
        }
        out
    }

    /// Runs the extractor until every tap in `wanted` has been produced.
    pub fn forward(&self, x: &Tensor<T>, wanted: &[&str]) -> Result<TapFeatures<T>> {
        Ok(self.run(x, wanted, false)?.0)
    }

    pub fn forward_train(&self, x: &Tensor<T>, wanted: &[&str]) -> Result<(TapFeatures<T>, FeatureTape<T>)> {
        let (taps, tape) = self.run(x, wanted, true)?;
        Ok((taps, tape.expect("recording requested")))
    }

    fn run(
        &self,
        x: &Tensor<T>,
        wanted: &[&str],
        record: bool,
    ) -> Result<(TapFeatures<T>, Option<FeatureTape<T>>)> {
        if x.channels() != 3 {
            return Err(Error::invalid_input("extractor expects an RGB tensor"));
        }
        for w in wanted {
            if !self.has_tap(w) {
                return Err(Error::invalid_config(format!("extractor has no tap point `{w}`")));
            }
        }
        let mut taps = TapFeatures::new();
        let mut records = Vec::new();
        let mut h = self.normalize_input(x);
        for op in &self.ops {
            if taps.len() == wanted.len() {
                break;
            }
            match op {
                Op::Conv(_, c) => {
                    let y = c.forward(&h);
                    if record {
                        records.push(OpRecord::ConvInput(std::mem::replace(&mut h, y)));
                    } else {
                        h = y;
                    }
                }
                Op::Relu => {
                    relu_inplace(&mut h);
                    if record {
                        records.push(OpRecord::ReluOutput(h.clone()));
                    }
                }
                Op::MaxPool => {
                    let shape = h.shape();
                    let (y, arg) = max_pool2(&h);
                    h = y;
                    if record {
                        records.push(OpRecord::Pool(shape, arg));
                    }
                }
                Op::Tap(name) => {
                    if wanted.contains(&name.as_str()) {
                        taps.insert(name.clone(), h.clone());
                    }
                    if record {
                        records.push(OpRecord::Tap);
                    }
                }
            }
        }
        Ok((taps, record.then_some(FeatureTape { records })))
    }

    /// Gradient with respect to the `[-1, 1]` input, given gradients at tap points.
    pub fn backward(&self, tape: &FeatureTape<T>, tap_grads: &TapFeatures<T>) -> Tensor<T> {
        let mut g: Option<Tensor<T>> = None;
        for (op, rec) in self.ops.iter().zip(&tape.records).rev() {
            match (op, rec) {
                (Op::Tap(name), OpRecord::Tap) => {
                    if let Some(tg) = tap_grads.get(name) {
                        match g.as_mut() {
                            Some(acc) => acc.add_assign(tg),
                            None => g = Some(tg.clone()),
                        }
                    }
                }
                (_, _) if g.is_none() => {}
                (Op::Relu, OpRecord::ReluOutput(out)) => {
                    relu_backward(out, g.as_mut().expect("checked"));
                }
                (Op::MaxPool, OpRecord::Pool(shape, arg)) => {
                    g = Some(max_pool2_backward(*shape, arg, g.as_ref().expect("checked")));
                }
                (Op::Conv(_, c), OpRecord::ConvInput(input)) => {
                    let mut scratch = crate::nn::ConvGrad::zeros_like(c);
                    g = c.backward(input, g.as_ref().expect("checked"), &mut scratch, true);
                }
                _ => unreachable!("tape does not match extractor ops"),
            }
        }
        let mut g = g.unwrap_or_else(|| Tensor::zeros(3, 1, 1));
        for c in 0..3 {
            let s = T::of(0.5 / self.std[c]);
            g.plane_mut(c).iter_mut().for_each(|v| *v *= s);
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_extractor_is_deterministic_and_roundtrips() {
        let fx = FeatureExtractor::<f32>::seeded(VggWidths([4, 6, 8]), 5);
        let fx2 = FeatureExtractor::<f32>::seeded(VggWidths([4, 6, 8]), 5);
        let x = Tensor::from_fn(3, 16, 16, |c, y, x| ((c + 2 * y + 3 * x) as f32 * 0.1).sin());
        let a = fx.forward(&x, &DEFAULT_TAPS).unwrap();
        let b = fx2.forward(&x, &DEFAULT_TAPS).unwrap();
        assert_eq!(a, b);
        assert_eq!(a["conv1_2"].shape(), (4, 16, 16));
        assert_eq!(a["conv2_2"].shape(), (6, 8, 8));
        assert_eq!(a["conv3_3"].shape(), (8, 4, 4));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fx.safetensors");
        fx.save(&path).unwrap();
        let loaded = FeatureExtractor::<f32>::load(&path).unwrap();
        assert_eq!(loaded.forward(&x, &DEFAULT_TAPS).unwrap(), a);
        assert_eq!(loaded.taps(), vec![("conv1_2".into(), 4), ("conv2_2".into(), 6), ("conv3_3".into(), 8)]);
    }

    #[test]
    fn unknown_tap_is_config_error() {
        let fx = FeatureExtractor::<f32>::seeded(VggWidths([2, 2, 2]), 0);
        let x = Tensor::zeros(3, 8, 8);
        assert!(matches!(fx.forward(&x, &["conv4_3"]), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn stops_after_last_requested_tap() {
        let fx = FeatureExtractor::<f64>::seeded(VggWidths([2, 3, 4]), 0);
        let x = Tensor::from_fn(3, 8, 8, |c, y, x| (c * y + x) as f64 * 0.05);
        let (_, tape) = fx.forward_train(&x, &["conv1_2"]).unwrap();
        // conv, relu, conv, relu, tap
        assert_eq!(tape.records.len(), 5);
    }
}
