//! Unitary multi-dimensional DFT over the trailing axes of a buffer.

use num_complex::Complex;
use rustfft::{FftDirection, FftPlanner};

use crate::{Float, Tensor};

/// In-place unitary DFT over the trailing `spatial.len()` axes of each of the
/// `data.len() / prod(spatial)` contiguous blocks in `data`.
///
/// Both directions are scaled by `1/√M` so the pair is exactly inverse and
/// Parseval holds.
pub fn dft_in_place<T: Float>(data: &mut [Complex<T>], spatial: &[usize], inverse: bool) {
    let m: usize = spatial.iter().product();
    assert!(
        m > 0 && data.len().is_multiple_of(m),
        "buffer not a multiple of {spatial:?}"
    );
    let dir = if inverse {
        FftDirection::Inverse
    } else {
        FftDirection::Forward
    };
    let mut planner = FftPlanner::<T>::new();
    let mut line = Vec::new();
    for block in data.chunks_mut(m) {
        for axis in 0..spatial.len() {
            let n = spatial[axis];
            if n == 1 {
                continue;
            }
            let stride: usize = spatial[axis + 1..].iter().product();
            let outer = m / (n * stride);
            let fft = planner.plan_fft(n, dir);
            let mut scratch = vec![Complex::new(T::zero(), T::zero()); fft.get_inplace_scratch_len()];
            line.resize(n, Complex::new(T::zero(), T::zero()));
            for o in 0..outer {
                for s in 0..stride {
                    let base = o * n * stride + s;
                    for (i, v) in line.iter_mut().enumerate() {
                        *v = block[base + i * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (i, v) in line.iter().enumerate() {
                        block[base + i * stride] = *v;
                    }
                }
            }
        }
        let scale = T::one() / T::of(m as f64).sqrt();
        for v in block.iter_mut() {
            *v = *v * scale;
        }
    }
}

/// Unitary DFT of a real tensor over its trailing `rank` axes. The result has
/// an extra trailing axis of length 2 holding (real, imaginary).
pub fn dft_real<T: Float>(x: &Tensor<T>, rank: usize) -> Tensor<T> {
    let spatial = &x.shape()[x.rank() - rank..];
    let mut buf: Vec<Complex<T>> = x.data().iter().map(|&v| Complex::new(v, T::zero())).collect();
    dft_in_place(&mut buf, spatial, false);
    let mut shape = x.shape().to_vec();
    shape.push(2);
    Tensor::from_vec(shape, buf.iter().flat_map(|c| [c.re, c.im]).collect())
}

/// Real part of the unitary inverse DFT of an interleaved complex tensor
/// (trailing axis of length 2) over the `rank` axes before it.
pub fn idft_real_part<T: Float>(z: &Tensor<T>, rank: usize) -> Tensor<T> {
    assert_eq!(z.shape().last(), Some(&2), "complex tensor needs trailing axis 2");
    let shape = &z.shape()[..z.rank() - 1];
    let spatial = &shape[shape.len() - rank..];
    let mut buf: Vec<Complex<T>> = z.data().chunks_exact(2).map(|c| Complex::new(c[0], c[1])).collect();
    dft_in_place(&mut buf, spatial, true);
    Tensor::from_vec(shape.to_vec(), buf.iter().map(|c| c.re).collect())
}
