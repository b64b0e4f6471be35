//! Convolution, activation and pooling primitives with hand-written backward passes.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// 2D convolution with square kernel, "same"-style zero padding of `kernel / 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    /// `out_channels x in_channels x kernel x kernel`, row-major.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Gradient buffers for one [`Conv2d`].
#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrad<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvGrad<T> {
    pub fn zeros_like(conv: &Conv2d<T>) -> Self {
        Self {
            weight: vec![T::zero(); conv.weight.len()],
            bias: vec![T::zero(); conv.bias.len()],
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, &b) in self.weight.iter_mut().zip(&other.weight) {
            *a += b;
        }
        for (a, &b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: T) {
        self.weight.iter_mut().chain(self.bias.iter_mut()).for_each(|v| *v *= s);
    }
}

impl<T: Scalar> Conv2d<T> {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        assert!(kernel % 2 == 1, "conv kernels must be odd");
        assert!(stride >= 1);
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            weight: vec![T::zero(); out_channels * in_channels * kernel * kernel],
            bias: vec![T::zero(); out_channels],
        }
    }

    /// He (fan-in) normal initialization for a leaky-ReLU network; biases zero.
    pub fn he_init<R: Rng>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        leaky_slope: f64,
        rng: &mut R,
    ) -> Self {
        let mut conv = Self::zeros(in_channels, out_channels, kernel, stride);
        let fan_in = (in_channels * kernel * kernel) as f64;
        let std = (2.0 / ((1.0 + leaky_slope * leaky_slope) * fan_in)).sqrt();
        for w in &mut conv.weight {
            let z: f64 = StandardNormal.sample(rng);
            *w = T::of(z * std);
        }
        conv
    }

    #[inline]
    pub fn padding(&self) -> usize {
        self.kernel / 2
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let p = self.padding();
        (
            (h + 2 * p - self.kernel) / self.stride + 1,
            (w + 2 * p - self.kernel) / self.stride + 1,
        )
    }

    /// Multiply-accumulate count for one forward pass at the given input size.
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let (oh, ow) = self.output_hw(h, w);
        (oh * ow * self.out_channels * self.in_channels * self.kernel * self.kernel) as u64
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1
    }

    /// Unfolds `x` into a `(in_channels * k * k) x (oh * ow)` patch matrix.
    fn im2col(&self, x: &Tensor<T>) -> Vec<T> {
        let (h, w) = (x.height(), x.width());
        let (oh, ow) = self.output_hw(h, w);
        let k = self.kernel;
        let p = self.padding() as isize;
        let s = self.stride;
        let mut cols = vec![T::zero(); self.in_channels * k * k * oh * ow];
        for c in 0..self.in_channels {
            let plane = x.plane(c);
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((c * k + ky) * k + kx) * oh * ow;
                    for oy in 0..oh {
                        let iy = (oy * s) as isize + ky as isize - p;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                        let dst = &mut cols[row + oy * ow..row + (oy + 1) * ow];
                        if s == 1 {
                            // Contiguous span of valid x positions.
                            let shift = kx as isize - p;
                            let x0 = (-shift).max(0) as usize;
                            let x1 = ((w as isize - shift).min(ow as isize)).max(0) as usize;
                            if x0 < x1 {
                                let sx0 = (x0 as isize + shift) as usize;
                                dst[x0..x1].copy_from_slice(&src[sx0..sx0 + (x1 - x0)]);
                            }
                        } else {
                            for (ox, d) in dst.iter_mut().enumerate() {
                                let ix = (ox * s) as isize + kx as isize - p;
                                if ix >= 0 && ix < w as isize {
                                    *d = src[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    /// Adjoint of [`Conv2d::im2col`].
    fn col2im(&self, cols: &[T], h: usize, w: usize) -> Tensor<T> {
        let (oh, ow) = self.output_hw(h, w);
        let k = self.kernel;
        let p = self.padding() as isize;
        let s = self.stride;
        let mut out = Tensor::zeros(self.in_channels, h, w);
        for c in 0..self.in_channels {
            let plane = out.plane_mut(c);
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((c * k + ky) * k + kx) * oh * ow;
                    for oy in 0..oh {
                        let iy = (oy * s) as isize + ky as isize - p;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        let src = &cols[row + oy * ow..row + (oy + 1) * ow];
                        for (ox, &v) in src.iter().enumerate() {
                            let ix = (ox * s) as isize + kx as isize - p;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] += v;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        assert_eq!(x.channels(), self.in_channels, "conv: input channels");
        let (h, w) = (x.height(), x.width());
        let (oh, ow) = self.output_hw(h, w);
        let n = oh * ow;
        let kk = self.in_channels * self.kernel * self.kernel;
        let mut out = Tensor::zeros(self.out_channels, oh, ow);
        {
            let y = out.data_mut();
            for (o, &b) in self.bias.iter().enumerate() {
                y[o * n..(o + 1) * n].iter_mut().for_each(|v| *v = b);
            }
        }
        let owned;
        let cols: &[T] = if self.is_pointwise() {
            x.data()
        } else {
            owned = self.im2col(x);
            &owned
        };
        T::gemm(
            self.out_channels,
            kk,
            n,
            T::one(),
            &self.weight,
            (kk as isize, 1),
            cols,
            (n as isize, 1),
            T::one(),
            out.data_mut(),
            (n as isize, 1),
        );
        out
    }

    /// Accumulates parameter gradients into `grad` and returns the input gradient
    /// when `need_input_grad` is set.
    pub fn backward(
        &self,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        grad: &mut ConvGrad<T>,
        need_input_grad: bool,
    ) -> Option<Tensor<T>> {
        let (h, w) = (x.height(), x.width());
        let (oh, ow) = self.output_hw(h, w);
        assert_eq!(dy.shape(), (self.out_channels, oh, ow), "conv backward: dy shape");
        let n = oh * ow;
        let kk = self.in_channels * self.kernel * self.kernel;

        for (o, gb) in grad.bias.iter_mut().enumerate() {
            *gb += dy.plane(o).iter().copied().sum::<T>();
        }

        let owned;
        let cols: &[T] = if self.is_pointwise() {
            x.data()
        } else {
            owned = self.im2col(x);
            &owned
        };
        // dW (out x kk) += dY (out x n) * cols^T (n x kk)
        T::gemm(
            self.out_channels,
            n,
            kk,
            T::one(),
            dy.data(),
            (n as isize, 1),
            cols,
            (1, n as isize),
            T::one(),
            &mut grad.weight,
            (kk as isize, 1),
        );

        if !need_input_grad {
            return None;
        }
        // dcols (kk x n) = W^T (kk x out) * dY (out x n)
        let mut dcols = vec![T::zero(); kk * n];
        T::gemm(
            kk,
            self.out_channels,
            n,
            T::one(),
            &self.weight,
            (1, kk as isize),
            dy.data(),
            (n as isize, 1),
            T::zero(),
            &mut dcols,
            (n as isize, 1),
        );
        if self.is_pointwise() {
            Some(Tensor::from_vec(self.in_channels, h, w, dcols).expect("pointwise shape"))
        } else {
            Some(self.col2im(&dcols, h, w))
        }
    }
}

pub fn leaky_relu_inplace<T: Scalar>(x: &mut Tensor<T>, slope: T) {
    for v in x.data_mut() {
        if *v < T::zero() {
            *v *= slope;
        }
    }
}

/// Backward of leaky ReLU given the activation *output*; valid because `slope > 0`
/// preserves the sign of the pre-activation.
pub fn leaky_relu_backward<T: Scalar>(out: &Tensor<T>, dy: &mut Tensor<T>, slope: T) {
    for (g, &o) in dy.data_mut().iter_mut().zip(out.data()) {
        if o <= T::zero() {
            *g *= slope;
        }
    }
}

pub fn relu_inplace<T: Scalar>(x: &mut Tensor<T>) {
    for v in x.data_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

pub fn relu_backward<T: Scalar>(out: &Tensor<T>, dy: &mut Tensor<T>) {
    for (g, &o) in dy.data_mut().iter_mut().zip(out.data()) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
}

/// 2x2 max pooling with stride 2 (odd trailing rows/columns are dropped).
/// Returns the pooled tensor and the flat argmax index of each output.
pub fn max_pool2<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, Vec<usize>) {
    let (c, h, w) = x.shape();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(c, oh, ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        let src = x.plane(ch);
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = (2 * oy) * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = (2 * oy + dy) * w + 2 * ox + dx;
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                out.set(ch, oy, ox, src[best]);
                arg.push(base + best);
            }
        }
    }
    (out, arg)
}

pub fn max_pool2_backward<T: Scalar>(
    input_shape: (usize, usize, usize),
    argmax: &[usize],
    dy: &Tensor<T>,
) -> Tensor<T> {
    let (c, h, w) = input_shape;
    let mut dx = Tensor::zeros(c, h, w);
    let d = dx.data_mut();
    for (&i, &g) in argmax.iter().zip(dy.data()) {
        d[i] += g;
    }
    dx
}
