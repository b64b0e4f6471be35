//! Dense channel-major image tensors and single-channel grids.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A single image tensor laid out as `channels x height x width`.
///
/// Batches are plain slices of tensors; nothing in the network couples
/// batch items, so there is no batch axis here.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, T::zero())
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: T) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::invalid_input(format!(
                "tensor data has {} elements, shape {}x{}x{} needs {}",
                data.len(),
                channels,
                height,
                width,
                channels * height * width
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: T) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn ensure_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::invalid_input(format!(
                "{what}: shape mismatch {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Channel concatenation `[self; other]`.
    pub fn concat_channels(&self, other: &Self) -> Self {
        assert_eq!(
            (self.height, self.width),
            (other.height, other.width),
            "concat: spatial mismatch"
        );
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Self {
            channels: self.channels + other.channels,
            height: self.height,
            width: self.width,
            data,
        }
    }

    /// Inverse of [`Tensor::concat_channels`]: the first `channels` planes and the rest.
    pub fn split_channels(&self, channels: usize) -> (Self, Self) {
        let cut = channels * self.plane_len();
        (
            Self {
                channels,
                height: self.height,
                width: self.width,
                data: self.data[..cut].to_vec(),
            },
            Self {
                channels: self.channels - channels,
                height: self.height,
                width: self.width,
                data: self.data[cut..].to_vec(),
            },
        )
    }

    /// Maps `[-1, 1]` to `[0, 1]`.
    pub fn to_unit_range(&self) -> Self {
        let half = T::of(0.5);
        self.map(|v| (v + T::one()) * half)
    }

    pub fn clamp(&self, lo: T, hi: T) -> Self {
        self.map(|v| v.max(lo).min(hi))
    }

    /// Nearest-neighbour upsampling by an integer factor.
    pub fn upsample_nearest(&self, factor: usize) -> Self {
        let (h, w) = (self.height * factor, self.width * factor);
        let mut out = Self::zeros(self.channels, h, w);
        for c in 0..self.channels {
            let src = self.plane(c);
            let dst = out.plane_mut(c);
            for y in 0..h {
                let row = &src[(y / factor) * self.width..(y / factor + 1) * self.width];
                let drow = &mut dst[y * w..(y + 1) * w];
                for (x, d) in drow.iter_mut().enumerate() {
                    *d = row[x / factor];
                }
            }
        }
        out
    }

    /// Adjoint of [`Tensor::upsample_nearest`]: sums each `factor x factor` block.
    pub fn upsample_nearest_backward(&self, factor: usize) -> Self {
        let (h, w) = (self.height / factor, self.width / factor);
        let mut out = Self::zeros(self.channels, h, w);
        for c in 0..self.channels {
            let src = self.plane(c);
            let dst = out.plane_mut(c);
            for y in 0..self.height {
                for x in 0..self.width {
                    dst[(y / factor) * w + x / factor] += src[y * self.width + x];
                }
            }
        }
        out
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| U::of(v.to_f64_lossy())).collect(),
        }
    }

    /// Horizontal mirror of every channel.
    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn(self.channels, self.height, self.width, |c, y, x| {
            self.get(c, y, self.width - 1 - x)
        })
    }
}

/// A single-channel `height x width` field of reals, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Scalar> Grid<T> {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, T::zero())
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid_input(format!(
                "grid data has {} elements, {}x{} needs {}",
                data.len(),
                width,
                height,
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!((self.width, self.height), (other.width, other.height));
        Self {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn max_value(&self) -> T {
        self.data.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn min_value(&self) -> T {
        self.data.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Rescales to `[0, 1]` by `(v - min) / (max - min)`; a flat grid maps to zeros.
    pub fn min_max_normalized(&self) -> Self {
        let lo = self.min_value();
        let hi = self.max_value();
        let range = hi - lo;
        if !(range > T::epsilon() * (T::one() + hi.abs())) {
            return Self::zeros(self.width, self.height);
        }
        self.map(|v| (v - lo) / range)
    }

    /// Copy of the half-open window `[x1, x2) x [y1, y2)`.
    pub fn crop(&self, x1: usize, y1: usize, x2: usize, y2: usize) -> Self {
        Self::from_fn(x2 - x1, y2 - y1, |x, y| self.get(x1 + x, y1 + y))
    }

    pub fn cast<U: Scalar>(&self) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| U::of(v.to_f64_lossy())).collect(),
        }
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_then_split_recovers_parts() {
        let a = Tensor::<f64>::from_fn(2, 3, 4, |c, y, x| (c * 100 + y * 10 + x) as f64);
        let b = Tensor::<f64>::from_fn(1, 3, 4, |_, y, x| -((y * 10 + x) as f64));
        let cat = a.concat_channels(&b);
        assert_eq!(cat.shape(), (3, 3, 4));
        let (a2, b2) = cat.split_channels(2);
        assert_eq!(a, a2);
        assert_eq!(b, b2);
    }

    #[test]
    fn nearest_backward_is_adjoint() {
        let x = Tensor::<f64>::from_fn(2, 3, 3, |c, y, x| ((c + 1) * (y + 2) * (x + 3)) as f64 * 0.1);
        let g = Tensor::<f64>::from_fn(2, 6, 6, |c, y, x| (c as f64 - y as f64 * 0.3 + x as f64).cos());
        let up = x.upsample_nearest(2);
        let lhs: f64 = up.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let back = g.upsample_nearest_backward(2);
        let rhs: f64 = x.data().iter().zip(back.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn flat_grid_normalizes_to_zero() {
        let g = Grid::<f64>::filled(4, 3, 0.7);
        assert!(g.min_max_normalized().data().iter().all(|&v| v == 0.0));
        let r = Grid::<f64>::from_fn(3, 1, |x, _| x as f64 * 2.0 + 1.0);
        assert_eq!(r.min_max_normalized().data(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Tensor::<f32>::from_vec(3, 2, 2, vec![0.0; 11]).is_err());
        assert!(Grid::<f32>::from_vec(2, 2, vec![0.0; 3]).is_err());
    }
}
