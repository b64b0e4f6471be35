//! Separable bilinear / bicubic resampling with optional antialiasing.
//!
//! Filter weights follow the area-scaled convention: for an output sample
//! `i` the source-space centre is `(i + 0.5) * in / out`, and when
//! downsampling with antialias the kernel support is stretched by the scale
//! factor. Weights near the borders are truncated and renormalized, so every
//! output is a convex-ish combination whose weights sum to exactly one.
//!
//! Resampling is linear, so the backward pass is the transposed operator
//! ([`Resampler2d::adjoint`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InterpolationMode {
    #[default]
    Bilinear,
    Bicubic,
}

impl std::str::FromStr for InterpolationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bilinear" => Ok(Self::Bilinear),
            "bicubic" => Ok(Self::Bicubic),
            other => Err(Error::invalid_config(format!(
                "unknown interpolation mode `{other}` (expected bilinear or bicubic)"
            ))),
        }
    }
}

impl std::fmt::Display for InterpolationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Bilinear => "bilinear",
            Self::Bicubic => "bicubic",
        })
    }
}

/// Interpolation kernel with its natural support radius.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kernel {
    Triangle,
    /// Keys cubic convolution with parameter `a`.
    Cubic { a: f64 },
}

impl Kernel {
    pub fn for_mode(mode: InterpolationMode, bicubic_a: f64) -> Self {
        match mode {
            InterpolationMode::Bilinear => Kernel::Triangle,
            InterpolationMode::Bicubic => Kernel::Cubic { a: bicubic_a },
        }
    }

    pub fn support(&self) -> f64 {
        match self {
            Kernel::Triangle => 1.0,
            Kernel::Cubic { .. } => 2.0,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = x.abs();
        match *self {
            Kernel::Triangle => (1.0 - x).max(0.0),
            Kernel::Cubic { a } => {
                if x < 1.0 {
                    ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
                } else if x < 2.0 {
                    (((x - 5.0) * x + 8.0) * x - 4.0) * a
                } else {
                    0.0
                }
            }
        }
    }
}

/// One-dimensional resampling operator stored as sparse rows.
#[derive(Clone, Debug)]
pub struct Resampler1d<T> {
    in_len: usize,
    out_len: usize,
    rows: Vec<(usize, Vec<T>)>,
}

impl<T: Scalar> Resampler1d<T> {
    pub fn new(in_len: usize, out_len: usize, kernel: Kernel, antialias: bool) -> Self {
        assert!(in_len > 0 && out_len > 0, "resampler lengths must be positive");
        let scale = in_len as f64 / out_len as f64;
        let filter_scale = if antialias { scale.max(1.0) } else { 1.0 };
        let support = kernel.support() * filter_scale;
        let mut rows = Vec::with_capacity(out_len);
        for i in 0..out_len {
            let centre = (i as f64 + 0.5) * scale;
            let lo = ((centre - support).floor().max(0.0)) as usize;
            let hi = ((centre + support).ceil() as usize).min(in_len);
            let mut w: Vec<f64> = (lo..hi)
                .map(|j| kernel.eval((j as f64 + 0.5 - centre) / filter_scale))
                .collect();
            // Trim zero taps at both ends so rows stay tight.
            let first = w.iter().position(|&v| v != 0.0).unwrap_or(0);
            let last = w.iter().rposition(|&v| v != 0.0).map_or(0, |p| p + 1);
            let (start, mut w) = if first < last {
                (lo + first, w.drain(first..last).collect::<Vec<_>>())
            } else {
                // Degenerate: fall back to nearest sample.
                let j = (centre.floor() as usize).min(in_len - 1);
                (j, vec![1.0])
            };
            let total: f64 = w.iter().sum();
            for v in &mut w {
                *v /= total;
            }
            rows.push((start, w.into_iter().map(T::of).collect()));
        }
        Self {
            in_len,
            out_len,
            rows,
        }
    }

    pub fn in_len(&self) -> usize {
        self.in_len
    }

    pub fn out_len(&self) -> usize {
        self.out_len
    }

    /// Sparse row `i`: starting source index and weights.
    pub fn row(&self, i: usize) -> (usize, &[T]) {
        let (s, ref w) = self.rows[i];
        (s, w)
    }

    /// Dense `out_len x in_len` matrix, mainly for tests.
    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut m = vec![vec![T::zero(); self.in_len]; self.out_len];
        for (i, (s, w)) in self.rows.iter().enumerate() {
            for (k, &v) in w.iter().enumerate() {
                m[i][s + k] = v;
            }
        }
        m
    }

    fn apply_strided(&self, src: &[T], src_stride: usize, dst: &mut [T], dst_stride: usize) {
        for (i, (s, w)) in self.rows.iter().enumerate() {
            let mut acc = T::zero();
            for (k, &v) in w.iter().enumerate() {
                acc += v * src[(s + k) * src_stride];
            }
            dst[i * dst_stride] = acc;
        }
    }

    fn adjoint_strided(&self, src: &[T], src_stride: usize, dst: &mut [T], dst_stride: usize) {
        for (i, (s, w)) in self.rows.iter().enumerate() {
            let g = src[i * src_stride];
            for (k, &v) in w.iter().enumerate() {
                dst[(s + k) * dst_stride] += v * g;
            }
        }
    }
}

/// Separable 2D resampler: columns (width) first, then rows (height).
#[derive(Clone, Debug)]
pub struct Resampler2d<T> {
    horizontal: Resampler1d<T>,
    vertical: Resampler1d<T>,
}

impl<T: Scalar> Resampler2d<T> {
    pub fn new(
        in_hw: (usize, usize),
        out_hw: (usize, usize),
        kernel: Kernel,
        antialias: bool,
    ) -> Self {
        Self {
            vertical: Resampler1d::new(in_hw.0, out_hw.0, kernel, antialias),
            horizontal: Resampler1d::new(in_hw.1, out_hw.1, kernel, antialias),
        }
    }

    pub fn input_hw(&self) -> (usize, usize) {
        (self.vertical.in_len, self.horizontal.in_len)
    }

    pub fn output_hw(&self) -> (usize, usize) {
        (self.vertical.out_len, self.horizontal.out_len)
    }

    pub fn apply(&self, x: &Tensor<T>) -> Tensor<T> {
        assert_eq!((x.height(), x.width()), self.input_hw(), "resample: input size");
        let (ih, iw) = self.input_hw();
        let (oh, ow) = self.output_hw();
        let mut out = Tensor::zeros(x.channels(), oh, ow);
        let mut tmp = vec![T::zero(); ih * ow];
        for c in 0..x.channels() {
            let src = x.plane(c);
            for y in 0..ih {
                self.horizontal
                    .apply_strided(&src[y * iw..], 1, &mut tmp[y * ow..], 1);
            }
            let dst = out.plane_mut(c);
            for xx in 0..ow {
                self.vertical.apply_strided(&tmp[xx..], ow, &mut dst[xx..], ow);
            }
        }
        out
    }

    /// Transposed operator: maps a gradient on the output grid back to the input grid.
    pub fn adjoint(&self, g: &Tensor<T>) -> Tensor<T> {
        assert_eq!((g.height(), g.width()), self.output_hw(), "resample adjoint: size");
        let (ih, iw) = self.input_hw();
        let (_, ow) = self.output_hw();
        let mut out = Tensor::zeros(g.channels(), ih, iw);
        let mut tmp = vec![T::zero(); ih * ow];
        for c in 0..g.channels() {
            tmp.iter_mut().for_each(|v| *v = T::zero());
            let src = g.plane(c);
            for xx in 0..ow {
                self.vertical.adjoint_strided(&src[xx..], ow, &mut tmp[xx..], ow);
            }
            let dst = out.plane_mut(c);
            for y in 0..ih {
                self.horizontal
                    .adjoint_strided(&tmp[y * ow..], 1, &mut dst[y * iw..], 1);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_sum_to_one() {
        for kernel in [Kernel::Triangle, Kernel::Cubic { a: -0.5 }] {
            for (i, o) in [(128, 16), (16, 128), (4, 8), (8, 4), (2, 4), (5, 5)] {
                for aa in [false, true] {
                    let r = Resampler1d::<f64>::new(i, o, kernel, aa);
                    for k in 0..o {
                        let s: f64 = r.row(k).1.iter().sum();
                        assert!((s - 1.0).abs() < 1e-12, "{kernel:?} {i}->{o}");
                    }
                }
            }
        }
    }

    #[test]
    fn cubic_kernel_values() {
        let k = Kernel::Cubic { a: -0.5 };
        assert_eq!(k.eval(0.0), 1.0);
        assert!(k.eval(1.0).abs() < 1e-15);
        assert!(k.eval(2.0).abs() < 1e-15);
        // a=-0.5 at x=0.5: (1.5*0.5 - 2.5)*0.25 + 1 = 0.5625
        assert!((k.eval(0.5) - 0.5625).abs() < 1e-15);
        // x=1.5: ((1.5-5)*1.5+8)*1.5-4 = -0.125, times a -> 0.0625... sign check
        assert!((k.eval(1.5) - (-0.0625)).abs() < 1e-15);
    }

    #[test]
    fn upsample_by_two_bilinear_interior_weights() {
        // align-corners-false bilinear: output 2 maps to centre 1.25 -> taps 0.75/0.25 on 0.5/1.5
        let r = Resampler1d::<f64>::new(4, 8, Kernel::Triangle, true);
        let (s, w) = r.row(2);
        assert_eq!(s, 0);
        assert!((w[0] - 0.25).abs() < 1e-12 && (w[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn adjoint_identity() {
        let r = Resampler2d::<f64>::new((4, 6), (8, 12), Kernel::Cubic { a: -0.5 }, true);
        let x = Tensor::from_fn(2, 4, 6, |c, y, x| ((c * 7 + y * 3 + x) as f64).sin());
        let g = Tensor::from_fn(2, 8, 12, |c, y, x| ((c + y * 5 + x * 2) as f64).cos());
        let ax = r.apply(&x);
        let lhs: f64 = ax.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let atg = r.adjoint(&g);
        let rhs: f64 = x.data().iter().zip(atg.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
