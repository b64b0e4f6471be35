//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All math is written against [`Scalar`], so the same network, losses and
//! metrics run in `f32` for training and in `f64` for gradient checking.

use num_traits::{Float, FloatConst, NumAssign};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating point element type used by tensors, losses and the network.
pub trait Scalar:
    Float + FloatConst + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Dtype tag used in weight files.
    const DTYPE: &'static str;

    /// Size of one element in bytes.
    const BYTES: usize;

    /// General matrix multiply `C = alpha * A * B + beta * C` with explicit
    /// row/column strides, so transposed operands need no copies.
    ///
    /// `A` is `m x k`, `B` is `k x n`, `C` is `m x n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
        c_strides: (isize, isize),
    );

    fn write_le(self, out: &mut Vec<u8>);

    fn read_le(bytes: &[u8]) -> Self;

    /// Lossy conversion from `f64`; every literal in the crate goes through here.
    #[inline]
    fn of(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).expect("f64 is representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

fn span(rows: usize, cols: usize, strides: (isize, isize)) -> usize {
    if rows == 0 || cols == 0 {
        return 0;
    }
    (rows - 1) * strides.0.unsigned_abs() + (cols - 1) * strides.1.unsigned_abs() + 1
}

macro_rules! impl_scalar {
    ($ty:ty, $name:literal, $gemm:path) => {
        impl Scalar for $ty {
            const DTYPE: &'static str = $name;
            const BYTES: usize = std::mem::size_of::<$ty>();

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                a_strides: (isize, isize),
                b: &[Self],
                b_strides: (isize, isize),
                beta: Self,
                c: &mut [Self],
                c_strides: (isize, isize),
            ) {
                assert!(a.len() >= span(m, k, a_strides), "gemm: A too small");
                assert!(b.len() >= span(k, n, b_strides), "gemm: B too small");
                assert!(c.len() >= span(m, n, c_strides), "gemm: C too small");
                assert!(
                    a_strides.0 >= 0
                        && a_strides.1 >= 0
                        && b_strides.0 >= 0
                        && b_strides.1 >= 0
                        && c_strides.0 >= 0
                        && c_strides.1 >= 0,
                    "gemm: negative strides unsupported"
                );
                // SAFETY: the asserts above guarantee every addressed element
                // lies inside the borrowed slices, and `c` is uniquely borrowed.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        a_strides.0,
                        a_strides.1,
                        b.as_ptr(),
                        b_strides.0,
                        b_strides.1,
                        beta,
                        c.as_mut_ptr(),
                        c_strides.0,
                        c_strides.1,
                    )
                }
            }

            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }

            fn read_le(bytes: &[u8]) -> Self {
                let mut buf = [0u8; std::mem::size_of::<$ty>()];
                buf.copy_from_slice(&bytes[..std::mem::size_of::<$ty>()]);
                <$ty>::from_le_bytes(buf)
            }
        }
    };
}

impl_scalar!(f32, "F32", matrixmultiply::sgemm);
impl_scalar!(f64, "F64", matrixmultiply::dgemm);

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn gemm_matches_naive_including_transposed_operand() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|v| v as f64 * 0.5 - 1.0).collect();
        let b: Vec<f64> = (0..k * n).map(|v| (v as f64).sin()).collect();
        let expected = naive(m, k, n, &a, &b);

        let mut c = vec![0.0; m * n];
        f64::gemm(m, k, n, 1.0, &a, (k as isize, 1), &b, (n as isize, 1), 0.0, &mut c, (n as isize, 1));
        for (x, y) in c.iter().zip(&expected) {
            assert!((x - y).abs() < 1e-12);
        }

        // Same product with A stored transposed (k x m).
        let mut at = vec![0.0; m * k];
        for i in 0..m {
            for p in 0..k {
                at[p * m + i] = a[i * k + p];
            }
        }
        let mut c2 = vec![0.0; m * n];
        f64::gemm(m, k, n, 1.0, &at, (1, m as isize), &b, (n as isize, 1), 0.0, &mut c2, (n as isize, 1));
        assert_eq!(c, c2);
    }

    #[test]
    fn le_roundtrip() {
        let mut buf = Vec::new();
        1.25f32.write_le(&mut buf);
        (-3.5f64).write_le(&mut buf);
        assert_eq!(f32::read_le(&buf[..4]), 1.25);
        assert_eq!(f64::read_le(&buf[4..]), -3.5);
    }
}
