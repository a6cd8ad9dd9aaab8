use std::fmt::{Debug, Display};
use std::iter::Sum;

use rustfft::FftNum;

/// Scalar element type of a [`Tensor`](crate::Tensor).
///
/// Implemented for `f32` (training) and `f64` (oracles and gradient checks).
pub trait Float: num_traits::Float + FftNum + Sum + Default + Debug + Display + Send + Sync + 'static {
    /// `c[m×n] = alpha · a[m×k] · b[k×n] + beta · c`, with arbitrary element
    /// strides on `a` and `b` and a row stride on `c`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: (&[Self], isize, isize),
        b: (&[Self], isize, isize),
        beta: Self,
        c: (&mut [Self], isize),
    );

    fn of(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).expect("finite f64 converts to Float")
    }

    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

fn check_extent(len: usize, rows: usize, cols: usize, rs: isize, cs: isize) {
    if rows == 0 || cols == 0 {
        return;
    }
    assert!(rs >= 0 && cs >= 0, "negative strides are not supported");
    let last = (rows - 1) * rs as usize + (cols - 1) * cs as usize;
    assert!(last < len, "gemm operand too short: need {} got {len}", last + 1);
}

macro_rules! impl_float {
    ($t:ty, $gemm:path) => {
        impl Float for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: (&[Self], isize, isize),
                b: (&[Self], isize, isize),
                beta: Self,
                c: (&mut [Self], isize),
            ) {
                check_extent(a.0.len(), m, k, a.1, a.2);
                check_extent(b.0.len(), k, n, b.1, b.2);
                check_extent(c.0.len(), m, n, c.1, 1);
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: extents checked above; `c` does not alias `a` or `b`
                // because it is borrowed mutably.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.0.as_ptr(),
                        a.1,
                        a.2,
                        b.0.as_ptr(),
                        b.1,
                        b.2,
                        beta,
                        c.0.as_mut_ptr(),
                        c.1,
                        1,
                    );
                }
            }
        }
    };
}

impl_float!(f32, matrixmultiply::sgemm);
impl_float!(f64, matrixmultiply::dgemm);
