//! Convolution and resampling kernels over `[batch, channel, spatial…]` tensors
//! with 1 to 3 spatial axes. Convolutions are stride 1 with zero "same" padding
//! and odd kernels.

use crate::{Float, Tensor};

/// Spatial extent padded to three axes (leading axes of length 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Vol([usize; 3]);

impl Vol {
    fn of(spatial: &[usize]) -> Self {
        assert!(
            (1..=3).contains(&spatial.len()),
            "1 to 3 spatial axes supported, got {spatial:?}"
        );
        let mut v = [1; 3];
        v[3 - spatial.len()..].copy_from_slice(spatial);
        Vol(v)
    }

    fn len(self) -> usize {
        self.0.iter().product()
    }
}

fn split_bcs(shape: &[usize]) -> (usize, usize, &[usize]) {
    assert!(shape.len() >= 3, "expected [batch, channel, spatial…], got {shape:?}");
    (shape[0], shape[1], &shape[2..])
}

/// Unfolds one sample `[cin, S]` into `[cin·K, S]` patch rows.
fn im2col<T: Float>(x: &[T], cin: usize, s: Vol, k: Vol, col: &mut [T]) {
    let sl = s.len();
    let [sd, sh, sw] = s.0;
    let [kd, kh, kw] = k.0;
    let (pd, ph, pw) = (kd / 2, kh / 2, kw / 2);
    let mut row = 0;
    for c in 0..cin {
        let src = &x[c * sl..(c + 1) * sl];
        for a in 0..kd {
            for b in 0..kh {
                for e in 0..kw {
                    let dst = &mut col[row * sl..(row + 1) * sl];
                    row += 1;
                    let ox = e as isize - pw as isize;
                    let x0 = (-ox).max(0) as usize;
                    let x1 = ((sw as isize - ox).min(sw as isize)).max(0) as usize;
                    for z in 0..sd {
                        let iz = z as isize + a as isize - pd as isize;
                        for y in 0..sh {
                            let iy = y as isize + b as isize - ph as isize;
                            let line = &mut dst[(z * sh + y) * sw..(z * sh + y + 1) * sw];
                            if iz < 0 || iz >= sd as isize || iy < 0 || iy >= sh as isize || x0 >= x1 {
                                line.fill(T::zero());
                                continue;
                            }
                            let base = (iz as usize * sh + iy as usize) * sw;
                            line[..x0].fill(T::zero());
                            let sx0 = (x0 as isize + ox) as usize;
                            line[x0..x1].copy_from_slice(&src[base + sx0..base + sx0 + (x1 - x0)]);
                            line[x1..].fill(T::zero());
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates patch rows back into `[cin, S]`.
fn col2im<T: Float>(col: &[T], cin: usize, s: Vol, k: Vol, x: &mut [T]) {
    let sl = s.len();
    let [sd, sh, sw] = s.0;
    let [kd, kh, kw] = k.0;
    let (pd, ph, pw) = (kd / 2, kh / 2, kw / 2);
    let mut row = 0;
    for c in 0..cin {
        let dst = &mut x[c * sl..(c + 1) * sl];
        for a in 0..kd {
            for b in 0..kh {
                for e in 0..kw {
                    let src = &col[row * sl..(row + 1) * sl];
                    row += 1;
                    let ox = e as isize - pw as isize;
                    let x0 = (-ox).max(0) as usize;
                    let x1 = ((sw as isize - ox).min(sw as isize)).max(0) as usize;
                    if x0 >= x1 {
                        continue;
                    }
                    for z in 0..sd {
                        let iz = z as isize + a as isize - pd as isize;
                        if iz < 0 || iz >= sd as isize {
                            continue;
                        }
                        for y in 0..sh {
                            let iy = y as isize + b as isize - ph as isize;
                            if iy < 0 || iy >= sh as isize {
                                continue;
                            }
                            let base = (iz as usize * sh + iy as usize) * sw;
                            let sx0 = (x0 as isize + ox) as usize;
                            let line = &src[(z * sh + y) * sw..(z * sh + y + 1) * sw];
                            for (d, v) in dst[base + sx0..base + sx0 + (x1 - x0)].iter_mut().zip(&line[x0..x1]) {
                                *d = *d + *v;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn check_kernel(w: &[usize], spatial_rank: usize) -> Vol {
    assert_eq!(w.len(), spatial_rank + 2, "kernel {w:?} vs {spatial_rank} spatial axes");
    assert!(w[2..].iter().all(|k| k % 2 == 1), "kernel extents must be odd: {w:?}");
    Vol::of(&w[2..])
}

/// `y[b, o] = Σ_i w[o, i] ⋆ x[b, i]` (cross-correlation).
pub fn conv<T: Float>(x: &Tensor<T>, w: &Tensor<T>) -> Tensor<T> {
    let (batch, cin, spatial) = split_bcs(x.shape());
    let k = check_kernel(w.shape(), spatial.len());
    let s = Vol::of(spatial);
    let cout = w.shape()[0];
    assert_eq!(w.shape()[1], cin, "conv: x {:?} w {:?}", x.shape(), w.shape());
    let (sl, kl) = (s.len(), k.len());
    let ck = cin * kl;
    let mut out = vec![T::zero(); batch * cout * sl];
    let mut col = if kl == 1 { Vec::new() } else { vec![T::zero(); ck * sl] };
    for b in 0..batch {
        let xb = &x.data()[b * cin * sl..(b + 1) * cin * sl];
        let src: &[T] = if kl == 1 {
            xb
        } else {
            im2col(xb, cin, s, k, &mut col);
            &col
        };
        T::gemm(
            cout,
            ck,
            sl,
            T::one(),
            (w.data(), ck as isize, 1),
            (src, sl as isize, 1),
            T::zero(),
            (&mut out[b * cout * sl..(b + 1) * cout * sl], sl as isize),
        );
    }
    let mut shape = vec![batch, cout];
    shape.extend_from_slice(spatial);
    Tensor::from_vec(shape, out)
}

/// Gradient of [`conv`] with respect to its input: the transposed convolution
/// of `g: [batch, cout, S]` with `w`.
pub fn conv_input_grad<T: Float>(g: &Tensor<T>, w: &Tensor<T>) -> Tensor<T> {
    let (batch, cout, spatial) = split_bcs(g.shape());
    let k = check_kernel(w.shape(), spatial.len());
    let s = Vol::of(spatial);
    assert_eq!(
        w.shape()[0],
        cout,
        "conv_input_grad: g {:?} w {:?}",
        g.shape(),
        w.shape()
    );
    let cin = w.shape()[1];
    let (sl, kl) = (s.len(), k.len());
    let ck = cin * kl;
    let mut out = vec![T::zero(); batch * cin * sl];
    let mut col = vec![T::zero(); if kl == 1 { 0 } else { ck * sl }];
    for b in 0..batch {
        let gb = &g.data()[b * cout * sl..(b + 1) * cout * sl];
        let ob = &mut out[b * cin * sl..(b + 1) * cin * sl];
        let dst: &mut [T] = if kl == 1 { ob } else { &mut col };
        T::gemm(
            ck,
            cout,
            sl,
            T::one(),
            (w.data(), 1, ck as isize),
            (gb, sl as isize, 1),
            T::zero(),
            (dst, sl as isize),
        );
        if kl != 1 {
            col2im(&col, cin, s, k, &mut out[b * cin * sl..(b + 1) * cin * sl]);
        }
    }
    let mut shape = vec![batch, cin];
    shape.extend_from_slice(spatial);
    Tensor::from_vec(shape, out)
}

/// Gradient of [`conv`] with respect to its weights, for a kernel of shape
/// `kernel_shape = [cout, cin, K…]`.
pub fn conv_weight_grad<T: Float>(x: &Tensor<T>, g: &Tensor<T>, kernel_shape: &[usize]) -> Tensor<T> {
    let (batch, cin, spatial) = split_bcs(x.shape());
    let k = check_kernel(kernel_shape, spatial.len());
    let s = Vol::of(spatial);
    let cout = kernel_shape[0];
    assert_eq!(kernel_shape[1], cin);
    assert_eq!(
        g.shape()[..2],
        [batch, cout],
        "conv_weight_grad: x {:?} g {:?}",
        x.shape(),
        g.shape()
    );
    assert_eq!(&g.shape()[2..], spatial);
    let (sl, kl) = (s.len(), k.len());
    let ck = cin * kl;
    let mut out = vec![T::zero(); cout * ck];
    let mut col = vec![T::zero(); if kl == 1 { 0 } else { ck * sl }];
    for b in 0..batch {
        let xb = &x.data()[b * cin * sl..(b + 1) * cin * sl];
        let gb = &g.data()[b * cout * sl..(b + 1) * cout * sl];
        let src: &[T] = if kl == 1 {
            xb
        } else {
            im2col(xb, cin, s, k, &mut col);
            &col
        };
        T::gemm(
            cout,
            sl,
            ck,
            T::one(),
            (gb, sl as isize, 1),
            (src, 1, sl as isize),
            if b == 0 { T::zero() } else { T::one() },
            (&mut out, ck as isize),
        );
    }
    Tensor::from_vec(kernel_shape.to_vec(), out)
}

/// Nearest-neighbour 2× upsampling of every spatial axis.
pub fn upsample2<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    let (batch, ch, spatial) = split_bcs(x.shape());
    let rank = spatial.len();
    let Vol([sd, sh, sw]) = Vol::of(spatial);
    let fd = if rank == 3 { 2 } else { 1 };
    let fh = if rank >= 2 { 2 } else { 1 };
    let (od, oh, ow) = (sd * fd, sh * fh, sw * 2);
    let planes = batch * ch;
    let mut out = vec![T::zero(); planes * od * oh * ow];
    let src = x.data();
    for p in 0..planes {
        let si = &src[p * sd * sh * sw..];
        let so = &mut out[p * od * oh * ow..(p + 1) * od * oh * ow];
        for z in 0..od {
            for y in 0..oh {
                let srow = &si[((z / fd) * sh + y / fh) * sw..];
                let orow = &mut so[(z * oh + y) * ow..(z * oh + y + 1) * ow];
                for (xo, v) in orow.iter_mut().enumerate() {
                    *v = srow[xo / 2];
                }
            }
        }
    }
    let mut shape = vec![batch, ch];
    shape.extend(spatial.iter().map(|s| s * 2));
    Tensor::from_vec(shape, out)
}

/// 2× average pooling of every spatial axis (extents must be even).
pub fn downsample2<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    let (batch, ch, spatial) = split_bcs(x.shape());
    assert!(
        spatial.iter().all(|s| s % 2 == 0),
        "downsample2 needs even extents: {spatial:?}"
    );
    let rank = spatial.len();
    let Vol([sd, sh, sw]) = Vol::of(spatial);
    let fd = if rank == 3 { 2 } else { 1 };
    let fh = if rank >= 2 { 2 } else { 1 };
    let (od, oh, ow) = (sd / fd, sh / fh, sw / 2);
    let norm = T::of(1.0 / (fd * fh * 2) as f64);
    let planes = batch * ch;
    let mut out = vec![T::zero(); planes * od * oh * ow];
    let src = x.data();
    for p in 0..planes {
        let si = &src[p * sd * sh * sw..(p + 1) * sd * sh * sw];
        let so = &mut out[p * od * oh * ow..(p + 1) * od * oh * ow];
        for z in 0..sd {
            for y in 0..sh {
                let srow = &si[(z * sh + y) * sw..(z * sh + y + 1) * sw];
                let orow = &mut so[((z / fd) * oh + y / fh) * ow..((z / fd) * oh + y / fh + 1) * ow];
                for (xo, v) in orow.iter_mut().enumerate() {
                    *v = *v + srow[2 * xo] + srow[2 * xo + 1];
                }
            }
        }
        so.iter_mut().for_each(|v| *v = *v * norm);
    }
    let mut shape = vec![batch, ch];
    shape.extend(spatial.iter().map(|s| s / 2));
    Tensor::from_vec(shape, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    /// Direct nested-loop correlation, independent of im2col.
    fn conv_direct(x: &Tensor<f64>, w: &Tensor<f64>) -> Tensor<f64> {
        let (b, cin, sp) = (x.shape()[0], x.shape()[1], &x.shape()[2..]);
        let cout = w.shape()[0];
        let Vol(s) = Vol::of(sp);
        let Vol(k) = Vol::of(&w.shape()[2..]);
        let sl = s.iter().product::<usize>();
        let kl = k.iter().product::<usize>();
        let mut out = vec![0.0; b * cout * sl];
        for bi in 0..b {
            for o in 0..cout {
                for z in 0..s[0] {
                    for y in 0..s[1] {
                        for xx in 0..s[2] {
                            let mut acc = 0.0;
                            for i in 0..cin {
                                for a in 0..k[0] {
                                    for bb in 0..k[1] {
                                        for e in 0..k[2] {
                                            let iz = z as isize + a as isize - (k[0] / 2) as isize;
                                            let iy = y as isize + bb as isize - (k[1] / 2) as isize;
                                            let ix = xx as isize + e as isize - (k[2] / 2) as isize;
                                            if iz < 0 || iy < 0 || ix < 0 {
                                                continue;
                                            }
                                            let (iz, iy, ix) = (iz as usize, iy as usize, ix as usize);
                                            if iz >= s[0] || iy >= s[1] || ix >= s[2] {
                                                continue;
                                            }
                                            acc += x.data()[(bi * cin + i) * sl + (iz * s[1] + iy) * s[2] + ix]
                                                * w.data()[(o * cin + i) * kl + (a * k[1] + bb) * k[2] + e];
                                        }
                                    }
                                }
                            }
                            out[(bi * cout + o) * sl + (z * s[1] + y) * s[2] + xx] = acc;
                        }
                    }
                }
            }
        }
        let mut shape = vec![b, cout];
        shape.extend_from_slice(sp);
        Tensor::from_vec(shape, out)
    }

    #[test]
    fn conv_matches_direct_2d_and_3d() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (xs, ws) in [
            (vec![2, 3, 5, 6], vec![4, 3, 3, 3]),
            (vec![1, 2, 4, 3, 5], vec![3, 2, 3, 3, 3]),
            (vec![2, 3, 4, 4], vec![2, 3, 1, 1]),
        ] {
            let x = random(&xs, &mut rng);
            let w = random(&ws, &mut rng);
            let d = conv(&x, &w).max_abs_diff(&conv_direct(&x, &w));
            assert!(d < 1e-12, "{xs:?} {ws:?}: {d}");
        }
    }

    #[test]
    fn conv_adjoint_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&[2, 3, 4, 5, 3], &mut rng);
        let w = random(&[2, 3, 3, 3, 3], &mut rng);
        let g = random(&[2, 2, 4, 5, 3], &mut rng);
        let dot = |a: &Tensor<f64>, b: &Tensor<f64>| a.mul(b).sum();
        let lhs = dot(&conv(&x, &w), &g);
        assert!((lhs - dot(&x, &conv_input_grad(&g, &w))).abs() < 1e-10);
        assert!((lhs - dot(&w, &conv_weight_grad(&x, &g, w.shape()))).abs() < 1e-10);
    }

    #[test]
    fn resample_adjoint_and_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for shape in [vec![2, 3, 4, 6], vec![1, 2, 4, 2, 6]] {
            let x = random(&shape, &mut rng);
            let up = upsample2(&x);
            let big: Vec<usize> = shape
                .iter()
                .enumerate()
                .map(|(i, &s)| if i < 2 { s } else { 2 * s })
                .collect();
            assert_eq!(up.shape(), &big[..]);
            assert!(downsample2(&up).max_abs_diff(&x) < 1e-15);
            let y = random(&big, &mut rng);
            let f = (1usize << (shape.len() - 2)) as f64;
            let lhs = up.mul(&y).sum();
            let rhs = x.mul(&downsample2(&y)).sum() * f;
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }
}
