//! Latency harness: timed forward passes on a fixed 1x3x16x16 input.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{count_macs, count_params, UNet};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const DEFAULT_PASSES: usize = 200;
pub const DEFAULT_WARMUP: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub mean_latency_ms: f64,
    pub std_latency_ms: f64,
    pub fps: f64,
    pub warmup_passes: usize,
    pub measured_passes: usize,
    pub device_label: String,
    pub input_shape: [usize; 4],
    pub refinement_blocks: usize,
    pub params: u64,
    pub macs: u64,
    pub dtype: String,
}

/// Fixed deterministic input in `[-1, 1]`.
pub fn bench_input<T: Scalar>(size: usize) -> Tensor<T> {
    Tensor::from_fn(3, size, size, |c, y, x| {
        T::of((((c * 31 + y * 7 + x * 3) % 17) as f64 / 8.0) - 1.0)
    })
}

/// Runs `warmup` untimed passes, then times each of `passes` forward passes.
pub fn measure_latency<T: Scalar>(
    net: &UNet<T>,
    passes: usize,
    warmup: usize,
    device_label: &str,
) -> Result<BenchReport> {
    if passes == 0 {
        return Err(Error::invalid_config("passes must be >= 1"));
    }
    let n = net.config().input_size;
    let input = bench_input::<T>(n);
    for _ in 0..warmup {
        std::hint::black_box(net.infer(&input)?);
    }
    let mut times = Vec::with_capacity(passes);
    for _ in 0..passes {
        let start = Instant::now();
        std::hint::black_box(net.infer(std::hint::black_box(&input))?);
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let mean = times.iter().sum::<f64>() / passes as f64;
    let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / passes as f64;
    Ok(BenchReport {
        mean_latency_ms: mean,
        std_latency_ms: var.sqrt(),
        fps: 1000.0 / mean,
        warmup_passes: warmup,
        measured_passes: passes,
        device_label: device_label.to_string(),
        input_shape: [1, 3, n, n],
        refinement_blocks: net.config().refinement_blocks,
        params: count_params(net.config())?,
        macs: count_macs(net.config())?,
        dtype: T::DTYPE.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn report_fields() {
        let net = UNet::<f32>::build(&ModelConfig::narrow(4, 1), 0).unwrap();
        let r = measure_latency(&net, 3, 1, "cpu").unwrap();
        assert_eq!(r.measured_passes, 3);
        assert_eq!(r.input_shape, [1, 3, 16, 16]);
        assert!((r.fps * r.mean_latency_ms - 1000.0).abs() < 1e-9);
        assert!(measure_latency(&net, 0, 0, "cpu").is_err());
    }
}
