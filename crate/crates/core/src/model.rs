//! Lightweight U-Net for 8x face super-resolution.
//!
//! Layout (default config, 16x16 input):
//!
//! ```text
//! encoder   16x16 (48) -> 8x8 (96) -> 4x4 (192) -> 2x2 (384)   two 3x3 convs per stage,
//!                                                             the first one stride 2 from stage 2 on
//! bottleneck 2x2 (384)                                        two 3x3 convs
//! decoder   4x4 (192) -> 8x8 (96) -> 16x16 (48)               interpolate x2, concat skip, two 3x3 convs
//! upsampler 32 -> 64 -> 128                                   nearest x2, 3x3 conv
//! refine    1x1 conv, N residual blocks, 1x1 conv to RGB
//! output    refine + interpolate_x8(input)
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{leaky_relu_backward, leaky_relu_inplace, Conv2d, ConvGrad};
use crate::resample::{InterpolationMode, Kernel, Resampler2d};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Spatial magnification of the learned upsampler (three x2 stages).
pub const SCALE_FACTOR: usize = 8;
const UPSAMPLER_STAGES: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub base_channels: usize,
    pub encoder_stages: usize,
    pub leaky_slope: f64,
    pub refinement_blocks: usize,
    pub refinement_width: usize,
    pub upsample_mode_skip: InterpolationMode,
    pub bicubic_a: f64,
    pub channel_schedule: Vec<usize>,
    /// Side length of the square low-resolution input.
    pub input_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            base_channels: 48,
            encoder_stages: 4,
            leaky_slope: 0.2,
            refinement_blocks: 5,
            refinement_width: 48,
            upsample_mode_skip: InterpolationMode::Bilinear,
            bicubic_a: -0.5,
            channel_schedule: vec![48, 96, 192, 384],
            input_size: 16,
        }
    }
}

impl ModelConfig {
    /// Default architecture with a different number of residual refinement blocks.
    pub fn with_refinement_blocks(blocks: usize) -> Self {
        Self {
            refinement_blocks: blocks,
            ..Self::default()
        }
    }

    /// Uniformly narrow variant: schedule `width * [1, 2, 4, 8]`, refinement width `width`.
    pub fn narrow(width: usize, refinement_blocks: usize) -> Self {
        Self {
            base_channels: width,
            refinement_width: width,
            refinement_blocks,
            channel_schedule: vec![width, 2 * width, 4 * width, 8 * width],
            ..Self::default()
        }
    }

    pub fn output_size(&self) -> usize {
        self.input_size * SCALE_FACTOR
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_stages == 0 || self.encoder_stages != self.channel_schedule.len() {
            return Err(Error::invalid_config(format!(
                "encoder_stages ({}) must equal channel_schedule length ({}) and be >= 1",
                self.encoder_stages,
                self.channel_schedule.len()
            )));
        }
        if self.channel_schedule[0] != self.base_channels {
            return Err(Error::invalid_config(format!(
                "channel_schedule starts at {} but base_channels is {}",
                self.channel_schedule[0], self.base_channels
            )));
        }
        if self.channel_schedule.contains(&0) || self.refinement_width == 0 {
            return Err(Error::invalid_config("channel counts must be positive"));
        }
        if self.refinement_blocks < 1 {
            return Err(Error::invalid_config("refinement_blocks must be >= 1"));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::invalid_config("leaky_slope must lie in (0, 1)"));
        }
        let reduction = 1usize << (self.encoder_stages - 1);
        if self.input_size == 0 || self.input_size % reduction != 0 {
            return Err(Error::invalid_config(format!(
                "input_size {} must be a positive multiple of {reduction}",
                self.input_size
            )));
        }
        Ok(())
    }

    fn skip_kernel(&self) -> Kernel {
        Kernel::for_mode(self.upsample_mode_skip, self.bicubic_a)
    }
}

/// Static description of one convolution in the network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LayerSpec {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub input_hw: (usize, usize),
    pub output_hw: (usize, usize),
}

impl LayerSpec {
    pub fn params(&self) -> u64 {
        (self.out_channels * self.in_channels * self.kernel * self.kernel + self.out_channels) as u64
    }

    pub fn macs(&self) -> u64 {
        (self.output_hw.0
            * self.output_hw.1
            * self.out_channels
            * self.in_channels
            * self.kernel
            * self.kernel) as u64
    }
}

/// Index map from network roles to positions in the flat conv list.
#[derive(Clone, Debug)]
struct Layout {
    stages: usize,
    blocks: usize,
}

impl Layout {
    fn encoder(&self, stage: usize, i: usize) -> usize {
        2 * stage + i
    }
    fn bottleneck(&self, i: usize) -> usize {
        2 * self.stages + i
    }
    /// Decoder step `d` runs from the coarsest resolution upwards.
    fn decoder(&self, d: usize, i: usize) -> usize {
        2 * self.stages + 2 + 2 * d + i
    }
    fn upsampler(&self, u: usize) -> usize {
        2 * self.stages + 2 + 2 * (self.stages - 1) + u
    }
    fn head_in(&self) -> usize {
        self.upsampler(UPSAMPLER_STAGES)
    }
    fn block(&self, b: usize, i: usize) -> usize {
        self.head_in() + 1 + 2 * b + i
    }
    fn head_out(&self) -> usize {
        self.block(self.blocks, 0)
    }
    fn len(&self) -> usize {
        self.head_out() + 1
    }
}

/// Every convolution of the network in canonical order, with shapes at the configured input size.
pub fn layer_inventory(config: &ModelConfig) -> Result<Vec<LayerSpec>> {
    config.validate()?;
    let sched = &config.channel_schedule;
    let stages = config.encoder_stages;
    let width = config.refinement_width;
    let mut layers = Vec::new();
    let mut push = |name: String, cin: usize, cout: usize, k: usize, stride: usize, hw: usize| {
        let out = (hw + 2 * (k / 2) - k) / stride + 1;
        layers.push(LayerSpec {
            name,
            in_channels: cin,
            out_channels: cout,
            kernel: k,
            stride,
            input_hw: (hw, hw),
            output_hw: (out, out),
        });
        out
    };

    let mut hw = config.input_size;
    let mut cin = 3;
    for (s, &c) in sched.iter().enumerate() {
        let stride = if s == 0 { 1 } else { 2 };
        hw = push(format!("encoder.{s}.conv0"), cin, c, 3, stride, hw);
        hw = push(format!("encoder.{s}.conv1"), c, c, 3, 1, hw);
        cin = c;
    }
    let deepest = sched[stages - 1];
    push("bottleneck.conv0".into(), deepest, deepest, 3, 1, hw);
    push("bottleneck.conv1".into(), deepest, deepest, 3, 1, hw);
    let mut cur = deepest;
    for d in 0..stages - 1 {
        let skip = sched[stages - 2 - d];
        hw *= 2;
        push(format!("decoder.{d}.conv0"), cur + skip, skip, 3, 1, hw);
        push(format!("decoder.{d}.conv1"), skip, skip, 3, 1, hw);
        cur = skip;
    }
    for u in 0..UPSAMPLER_STAGES {
        hw *= 2;
        let cin = if u == 0 { cur } else { width };
        push(format!("upsampler.{u}.conv"), cin, width, 3, 1, hw);
    }
    push("refine.input".into(), width, width, 1, 1, hw);
    for b in 0..config.refinement_blocks {
        push(format!("refine.block{b}.conv0"), width, width, 3, 1, hw);
        push(format!("refine.block{b}.conv1"), width, width, 3, 1, hw);
    }
    push("refine.output".into(), width, 3, 1, 1, hw);
    Ok(layers)
}

/// Analytic trainable parameter count.
pub fn count_params(config: &ModelConfig) -> Result<u64> {
    Ok(layer_inventory(config)?.iter().map(LayerSpec::params).sum())
}

/// Analytic multiply-accumulate count for one forward pass at the configured input size.
/// Interpolations and activations contribute nothing.
pub fn count_macs(config: &ModelConfig) -> Result<u64> {
    Ok(layer_inventory(config)?.iter().map(LayerSpec::macs).sum())
}

/// Per-layer report as TSV: `name, out_shape, params, macs`, then a total row.
pub fn layer_report_tsv(config: &ModelConfig) -> Result<String> {
    let layers = layer_inventory(config)?;
    let mut out = String::from("name\tout_shape\tparams\tmacs\n");
    for l in &layers {
        out.push_str(&format!(
            "{}\t{}x{}x{}\t{}\t{}\n",
            l.name,
            l.out_channels,
            l.output_hw.0,
            l.output_hw.1,
            l.params(),
            l.macs()
        ));
    }
    let p: u64 = layers.iter().map(LayerSpec::params).sum();
    let m: u64 = layers.iter().map(LayerSpec::macs).sum();
    out.push_str(&format!("total\t-\t{p}\t{m}\n"));
    Ok(out)
}

/// Learnable weights of the network plus the fixed resamplers it needs.
#[derive(Clone, Debug)]
pub struct UNet<T> {
    config: ModelConfig,
    layout: Layout,
    convs: Vec<Conv2d<T>>,
    names: Vec<String>,
    skip_upscale: Resampler2d<T>,
    decoder_up: Vec<Resampler2d<T>>,
    slope: T,
    half_activations: bool,
}

/// Intermediate activations recorded by [`UNet::forward_train`].
#[derive(Debug)]
pub struct Tape<T> {
    /// Input of every conv (canonical order).
    inputs: Vec<Option<Tensor<T>>>,
    /// Output of every conv after its activation (only for activated convs).
    outputs: Vec<Option<Tensor<T>>>,
}

/// Gradient for every conv, in the same canonical order as the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub convs: Vec<ConvGrad<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &UNet<T>) -> Self {
        Self {
            convs: net.convs.iter().map(ConvGrad::zeros_like).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.convs.iter_mut().zip(&other.convs) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: T) {
        self.convs.iter_mut().for_each(|g| g.scale(s));
    }

    /// Flat view in canonical parameter order (weight then bias per conv).
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.convs
            .iter()
            .flat_map(|g| g.weight.iter().chain(g.bias.iter()))
    }

    pub fn slices(&self) -> impl Iterator<Item = &[T]> {
        self.convs
            .iter()
            .flat_map(|g| [g.weight.as_slice(), g.bias.as_slice()])
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

impl<T: Scalar> UNet<T> {
    /// Builds the network with seeded He initialization; identical seeds give
    /// bit-identical parameters.
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        let inventory = layer_inventory(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let convs = inventory
            .iter()
            .map(|l| {
                Conv2d::he_init(
                    l.in_channels,
                    l.out_channels,
                    l.kernel,
                    l.stride,
                    config.leaky_slope,
                    &mut rng,
                )
            })
            .collect();
        Ok(Self::assemble(config, inventory, convs))
    }

    /// Network with every parameter zero; weights are expected to be loaded afterwards.
    pub fn zeroed(config: &ModelConfig) -> Result<Self> {
        let inventory = layer_inventory(config)?;
        let convs = inventory
            .iter()
            .map(|l| Conv2d::zeros(l.in_channels, l.out_channels, l.kernel, l.stride))
            .collect();
        Ok(Self::assemble(config, inventory, convs))
    }

    fn assemble(config: &ModelConfig, inventory: Vec<LayerSpec>, convs: Vec<Conv2d<T>>) -> Self {
        let layout = Layout {
            stages: config.encoder_stages,
            blocks: config.refinement_blocks,
        };
        debug_assert_eq!(layout.len(), convs.len());
        let kernel = config.skip_kernel();
        let n = config.input_size;
        let skip_upscale = Resampler2d::new((n, n), (n * SCALE_FACTOR, n * SCALE_FACTOR), kernel, true);
        let coarsest = n >> (config.encoder_stages - 1);
        let decoder_up = (0..config.encoder_stages - 1)
            .map(|d| {
                let s = coarsest << d;
                Resampler2d::new((s, s), (2 * s, 2 * s), kernel, false)
            })
            .collect();
        Self {
            config: config.clone(),
            layout,
            names: inventory.into_iter().map(|l| l.name).collect(),
            convs,
            skip_upscale,
            decoder_up,
            slope: T::of(config.leaky_slope),
            half_activations: false,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Round activations through IEEE half precision (opt-in mixed precision emulation).
    pub fn set_half_activations(&mut self, on: bool) {
        self.half_activations = on;
    }

    pub fn param_count(&self) -> usize {
        self.convs.iter().map(Conv2d::param_count).sum()
    }

    pub fn convs(&self) -> &[Conv2d<T>] {
        &self.convs
    }

    pub fn convs_mut(&mut self) -> &mut [Conv2d<T>] {
        &mut self.convs
    }

    pub fn layer_names(&self) -> &[String] {
        &self.names
    }

    /// Named parameter tensors (`<layer>.weight` with 4D shape, `<layer>.bias`).
    pub fn named_parameters(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let mut out = Vec::with_capacity(2 * self.convs.len());
        for (name, c) in self.names.iter().zip(&self.convs) {
            out.push((
                format!("{name}.weight"),
                vec![c.out_channels, c.in_channels, c.kernel, c.kernel],
                c.weight.as_slice(),
            ));
            out.push((format!("{name}.bias"), vec![c.out_channels], c.bias.as_slice()));
        }
        out
    }

    /// Mutable flat parameter slices in canonical order.
    pub fn param_slices_mut(&mut self) -> impl Iterator<Item = &mut [T]> {
        self.convs
            .iter_mut()
            .flat_map(|c| [c.weight.as_mut_slice(), c.bias.as_mut_slice()])
    }

    pub fn param_slices(&self) -> impl Iterator<Item = &[T]> {
        self.convs
            .iter()
            .flat_map(|c| [c.weight.as_slice(), c.bias.as_slice()])
    }

    /// Interpolated input used by the global skip; also the interpolation baseline.
    pub fn interpolate_input(&self, lr: &Tensor<T>) -> Tensor<T> {
        self.skip_upscale.apply(lr)
    }

    fn check_input(&self, lr: &Tensor<T>) -> Result<()> {
        let n = self.config.input_size;
        if lr.shape() != (3, n, n) {
            return Err(Error::invalid_input(format!(
                "model input must be 3x{n}x{n}, got {:?}",
                lr.shape()
            )));
        }
        Ok(())
    }

    /// Inference forward pass; output clamped to `[-1, 1]`.
    pub fn infer(&self, lr: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward(lr)?.clamp(-T::one(), T::one()))
    }

    /// Unclamped forward pass without recording activations.
    pub fn forward(&self, lr: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(lr)?;
        Ok(self.run(lr, None))
    }

    /// Forward pass that keeps what [`UNet::backward`] needs.
    pub fn forward_train(&self, lr: &Tensor<T>) -> Result<(Tensor<T>, Tape<T>)> {
        self.check_input(lr)?;
        let n = self.convs.len();
        let mut tape = Tape {
            inputs: (0..n).map(|_| None).collect(),
            outputs: (0..n).map(|_| None).collect(),
        };
        let out = self.run(lr, Some(&mut tape));
        Ok((out, tape))
    }

    pub fn forward_batch(&self, batch: &[Tensor<T>]) -> Result<Vec<Tensor<T>>> {
        batch.iter().map(|x| self.forward(x)).collect()
    }

    fn round_half(&self, t: &mut Tensor<T>) {
        if self.half_activations {
            for v in t.data_mut() {
                *v = T::of(half::f16::from_f64(v.to_f64_lossy()).to_f64());
            }
        }
    }

    /// Applies conv `idx` (plus leaky ReLU when `act`), recording into the tape.
    fn step(&self, idx: usize, x: Tensor<T>, act: bool, tape: &mut Option<&mut Tape<T>>) -> Tensor<T> {
        let mut y = self.convs[idx].forward(&x);
        if act {
            leaky_relu_inplace(&mut y, self.slope);
        }
        self.round_half(&mut y);
        if let Some(t) = tape.as_deref_mut() {
            t.inputs[idx] = Some(x);
            if act {
                t.outputs[idx] = Some(y.clone());
            }
        }
        y
    }

    fn run(&self, lr: &Tensor<T>, mut tape: Option<&mut Tape<T>>) -> Tensor<T> {
        let l = &self.layout;
        let stages = self.config.encoder_stages;
        let mut skips = Vec::with_capacity(stages);
        let mut h = lr.clone();
        for s in 0..stages {
            h = self.step(l.encoder(s, 0), h, true, &mut tape);
            h = self.step(l.encoder(s, 1), h, true, &mut tape);
            debug_assert_eq!(h.height(), self.config.input_size >> s);
            skips.push(h.clone());
        }
        h = self.step(l.bottleneck(0), h, true, &mut tape);
        h = self.step(l.bottleneck(1), h, true, &mut tape);
        for d in 0..stages - 1 {
            let up = self.decoder_up[d].apply(&h);
            let cat = up.concat_channels(&skips[stages - 2 - d]);
            h = self.step(l.decoder(d, 0), cat, true, &mut tape);
            h = self.step(l.decoder(d, 1), h, true, &mut tape);
        }
        debug_assert_eq!(h.height(), self.config.input_size);
        for u in 0..UPSAMPLER_STAGES {
            let up = h.upsample_nearest(2);
            h = self.step(l.upsampler(u), up, true, &mut tape);
        }
        h = self.step(l.head_in(), h, false, &mut tape);
        for b in 0..self.config.refinement_blocks {
            let r = self.step(l.block(b, 0), h.clone(), true, &mut tape);
            let r = self.step(l.block(b, 1), r, false, &mut tape);
            h.add_assign(&r);
        }
        let mut out = self.step(l.head_out(), h, false, &mut tape);
        out.add_assign(&self.skip_upscale.apply(lr));
        debug_assert_eq!(out.height(), self.config.output_size());
        out
    }

    fn back_step(
        &self,
        idx: usize,
        act: bool,
        tape: &Tape<T>,
        mut dy: Tensor<T>,
        grads: &mut Gradients<T>,
        need_dx: bool,
    ) -> Option<Tensor<T>> {
        if act {
            let out = tape.outputs[idx].as_ref().expect("tape: missing output");
            leaky_relu_backward(out, &mut dy, self.slope);
        }
        let x = tape.inputs[idx].as_ref().expect("tape: missing input");
        self.convs[idx].backward(x, &dy, &mut grads.convs[idx], need_dx)
    }

    /// Accumulates parameter gradients of a scalar loss given `d loss / d output`.
    /// The gradient with respect to the network input is not needed and not formed.
    pub fn backward(&self, tape: &Tape<T>, d_out: &Tensor<T>, grads: &mut Gradients<T>) {
        let l = &self.layout;
        let stages = self.config.encoder_stages;
        let g = |o: Option<Tensor<T>>| o.expect("input grad requested");

        let mut dh = g(self.back_step(l.head_out(), false, tape, d_out.clone(), grads, true));
        for b in (0..self.config.refinement_blocks).rev() {
            let dr = g(self.back_step(l.block(b, 1), false, tape, dh.clone(), grads, true));
            let dr = g(self.back_step(l.block(b, 0), true, tape, dr, grads, true));
            dh.add_assign(&dr);
        }
        dh = g(self.back_step(l.head_in(), false, tape, dh, grads, true));
        for u in (0..UPSAMPLER_STAGES).rev() {
            let dup = g(self.back_step(l.upsampler(u), true, tape, dh, grads, true));
            dh = dup.upsample_nearest_backward(2);
        }
        let mut dskips: Vec<Option<Tensor<T>>> = (0..stages).map(|_| None).collect();
        for d in (0..stages - 1).rev() {
            let dc = g(self.back_step(l.decoder(d, 1), true, tape, dh, grads, true));
            let dcat = g(self.back_step(l.decoder(d, 0), true, tape, dc, grads, true));
            let skip_idx = stages - 2 - d;
            let up_channels = dcat.channels() - self.convs[l.encoder(skip_idx, 1)].out_channels;
            let (dup, dskip) = dcat.split_channels(up_channels);
            dskips[skip_idx] = Some(dskip);
            dh = self.decoder_up[d].adjoint(&dup);
        }
        dh = g(self.back_step(l.bottleneck(1), true, tape, dh, grads, true));
        dh = g(self.back_step(l.bottleneck(0), true, tape, dh, grads, true));
        for s in (0..stages).rev() {
            if let Some(ds) = dskips[s].take() {
                dh.add_assign(&ds);
            }
            let dmid = g(self.back_step(l.encoder(s, 1), true, tape, dh, grads, true));
            match self.back_step(l.encoder(s, 0), true, tape, dmid, grads, s > 0) {
                Some(next) => dh = next,
                None => break,
            }
        }
    }

    /// Copies parameters from another network of identical architecture.
    pub fn load_from(&mut self, other: &UNet<T>) -> Result<()> {
        if other.config != self.config {
            return Err(Error::invalid_config("architecture mismatch"));
        }
        self.convs.clone_from(&other.convs);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            base_channels: 2,
            encoder_stages: 3,
            refinement_blocks: 1,
            refinement_width: 2,
            channel_schedule: vec![2, 3, 4],
            input_size: 4,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn default_inventory_shapes_follow_declared_path() {
        let inv = layer_inventory(&ModelConfig::default()).unwrap();
        let sizes: Vec<usize> = inv.iter().map(|l| l.output_hw.0).collect();
        assert_eq!(
            &sizes[..10],
            &[16, 16, 8, 8, 4, 4, 2, 2, 2, 2],
            "encoder + bottleneck"
        );
        assert_eq!(&sizes[10..16], &[4, 4, 8, 8, 16, 16]);
        assert_eq!(&sizes[16..19], &[32, 64, 128]);
        assert!(sizes[19..].iter().all(|&s| s == 128));
    }

    #[test]
    fn materialized_count_matches_analytic() {
        for cfg in [tiny(), ModelConfig::narrow(4, 2)] {
            let net = UNet::<f32>::build(&cfg, 3).unwrap();
            assert_eq!(net.param_count() as u64, count_params(&cfg).unwrap());
        }
    }

    #[test]
    fn rejects_inconsistent_schedule() {
        let cfg = ModelConfig {
            encoder_stages: 3,
            ..ModelConfig::default()
        };
        assert!(matches!(UNet::<f32>::build(&cfg, 0), Err(Error::InvalidConfig(_))));
        let cfg = ModelConfig {
            refinement_blocks: 0,
            ..ModelConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let net = UNet::<f32>::build(&tiny(), 0).unwrap();
        let x = Tensor::zeros(3, 5, 4);
        assert!(matches!(net.forward(&x), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = UNet::<f32>::build(&tiny(), 9).unwrap();
        let b = UNet::<f32>::build(&tiny(), 9).unwrap();
        let c = UNet::<f32>::build(&tiny(), 10).unwrap();
        assert_eq!(a.convs, b.convs);
        assert_ne!(a.convs, c.convs);
    }

    #[test]
    fn backward_matches_finite_differences_on_tiny_net() {
        let cfg = tiny();
        let net = UNet::<f64>::build(&cfg, 1).unwrap();
        let x = Tensor::from_fn(3, 4, 4, |c, y, x| ((c * 17 + y * 5 + x) as f64 * 0.61).sin() * 0.8);
        let w = Tensor::from_fn(3, 32, 32, |c, y, x| ((c * 3 + y * 11 + x * 7) as f64 * 0.13).cos());
        let loss = |n: &UNet<f64>| -> f64 {
            n.forward(&x).unwrap().data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
        };
        let (_, tape) = net.forward_train(&x).unwrap();
        let mut grads = Gradients::zeros_like(&net);
        net.backward(&tape, &w, &mut grads);
        let analytic: Vec<f64> = grads.iter().copied().collect();
        let total = analytic.len();
        let h = 1e-5;
        let mut fds = Vec::new();
        let mut ans = Vec::new();
        for idx in (0..total).step_by(7) {
            let mut plus = net.clone();
            let mut minus = net.clone();
            set_flat(&mut plus, idx, h);
            set_flat(&mut minus, idx, -h);
            fds.push((loss(&plus) - loss(&minus)) / (2.0 * h));
            ans.push(analytic[idx]);
        }
        let diff: f64 = fds.iter().zip(&ans).map(|(f, a)| (f - a).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = fds.iter().map(|f| f * f).sum::<f64>().sqrt();
        assert!(diff / norm < 1e-6, "normwise relative error {}", diff / norm);
    }

    fn set_flat(net: &mut UNet<f64>, mut idx: usize, delta: f64) {
        for s in net.param_slices_mut() {
            if idx < s.len() {
                s[idx] += delta;
                return;
            }
            idx -= s.len();
        }
        panic!("index out of range");
    }
}
