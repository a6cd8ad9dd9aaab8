use std::fmt;
use std::sync::Arc;

use crate::Float;

/// Dense row-major tensor with shared, copy-on-write storage.
#[derive(Clone)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Arc<Vec<T>>,
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head: Vec<_> = self.data.iter().take(8).collect();
        write!(f, "Tensor{:?} {:?}", self.shape, head)?;
        if self.data.len() > 8 {
            write!(f, "…")?;
        }
        Ok(())
    }
}

/// Right-aligned broadcast of two shapes.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let r = a.len().max(b.len());
    let mut out = vec![0; r];
    for i in 0..r {
        let da = if i + a.len() >= r { a[i + a.len() - r] } else { 1 };
        let db = if i + b.len() >= r { b[i + b.len() - r] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => panic!("shapes {a:?} and {b:?} do not broadcast"),
        };
    }
    out
}

/// Strides of `shape` viewed inside the broadcast shape `out` (0 on broadcast axes).
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let r = out.len();
    assert!(shape.len() <= r, "cannot broadcast {shape:?} to {out:?}");
    let off = r - shape.len();
    let mut st = vec![0; r];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        assert!(
            shape[i] == out[i + off] || shape[i] == 1,
            "cannot broadcast {shape:?} to {out:?}"
        );
        st[i + off] = if shape[i] == 1 { 0 } else { acc };
        acc *= shape[i];
    }
    st
}

/// Visits every index of `out` together with the matching offsets into two
/// strided operands.
fn walk2(out: &[usize], sa: &[usize], sb: &[usize], mut f: impl FnMut(usize, usize, usize)) {
    let n: usize = out.iter().product();
    if n == 0 {
        return;
    }
    let r = out.len();
    if r == 0 {
        f(0, 0, 0);
        return;
    }
    let inner = out[r - 1];
    let (ia, ib) = (sa[r - 1], sb[r - 1]);
    let mut idx = vec![0usize; r - 1];
    let (mut oa, mut ob, mut io) = (0usize, 0usize, 0usize);
    loop {
        for j in 0..inner {
            f(io + j, oa + j * ia, ob + j * ib);
        }
        io += inner;
        let mut d = r - 1;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            oa += sa[d];
            ob += sb[d];
            if idx[d] < out[d] {
                break;
            }
            oa -= sa[d] * out[d];
            ob -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

fn contiguous_strides(shape: &[usize]) -> Vec<usize> {
    let mut st = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        st[i] = st[i + 1] * shape[i + 1];
    }
    st
}

impl<T: Float> Tensor<T> {
    pub fn from_vec(shape: impl Into<Vec<usize>>, data: Vec<T>) -> Self {
        let shape = shape.into();
        let n: usize = shape.iter().product();
        assert_eq!(n, data.len(), "shape {shape:?} needs {n} elements, got {}", data.len());
        Self {
            shape,
            data: Arc::new(data),
        }
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: T) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Self::from_vec(shape, vec![value; n])
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, T::one())
    }

    pub fn scalar(value: T) -> Self {
        Self::from_vec(Vec::new(), vec![value])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Mutable access; clones the storage if it is shared.
    pub fn data_mut(&mut self) -> &mut [T] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn into_vec(self) -> Vec<T> {
        Arc::try_unwrap(self.data).unwrap_or_else(|shared| (*shared).clone())
    }

    /// The single element of a one-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn cast<U: Float>(&self) -> Tensor<U> {
        Tensor::from_vec(
            self.shape.clone(),
            self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        )
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_vec(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    /// Elementwise binary op with right-aligned broadcasting.
    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        if self.shape == other.shape {
            let data = self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect();
            return Self::from_vec(self.shape.clone(), data);
        }
        let out = broadcast_shape(&self.shape, &other.shape);
        let sa = broadcast_strides(&self.shape, &out);
        let sb = broadcast_strides(&other.shape, &out);
        let n: usize = out.iter().product();
        let mut data = vec![T::zero(); n];
        let (a, b) = (&self.data, &other.data);
        walk2(&out, &sa, &sb, |io, ia, ib| data[io] = f(a[ia], b[ib]));
        Self::from_vec(out, data)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| v * c)
    }

    /// Sums broadcast axes away so the result has `shape`.
    pub fn sum_to(&self, shape: &[usize]) -> Self {
        if self.shape == shape {
            return self.clone();
        }
        let sa = contiguous_strides(&self.shape);
        let sb = broadcast_strides(shape, &self.shape);
        let mut data = vec![T::zero(); shape.iter().product()];
        let src = &self.data;
        walk2(&self.shape, &sa, &sb, |_, ia, ib| data[ib] = data[ib] + src[ia]);
        Self::from_vec(shape.to_vec(), data)
    }

    pub fn broadcast_to(&self, shape: &[usize]) -> Self {
        if self.shape == shape {
            return self.clone();
        }
        let sb = broadcast_strides(&self.shape, shape);
        let mut data = vec![T::zero(); shape.iter().product()];
        let src = &self.data;
        walk2(shape, &sb, &sb, |io, ib, _| data[io] = src[ib]);
        Self::from_vec(shape.to_vec(), data)
    }

    pub fn reshape(&self, shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        assert_eq!(n, self.numel(), "reshape {:?} -> {shape:?}", self.shape);
        Self {
            shape: shape.to_vec(),
            data: Arc::clone(&self.data),
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn mean(&self) -> T {
        self.sum() / T::of(self.numel() as f64)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(other.data.iter())
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// 2-D matrix product.
    pub fn matmul(&self, other: &Self) -> Self {
        assert!(self.rank() == 2 && other.rank() == 2, "matmul needs matrices");
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        assert_eq!(k, k2, "matmul {:?} x {:?}", self.shape, other.shape);
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            T::one(),
            (&self.data, k as isize, 1),
            (&other.data, n as isize, 1),
            T::zero(),
            (&mut out, n as isize),
        );
        Self::from_vec(vec![m, n], out)
    }

    pub fn transpose(&self) -> Self {
        assert_eq!(self.rank(), 2, "transpose needs a matrix");
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Self::from_vec(vec![n, m], out)
    }

    fn split_at_axis(&self, axis: usize) -> (usize, usize, usize) {
        assert!(axis < self.rank(), "axis {axis} out of range for {:?}", self.shape);
        let outer = self.shape[..axis].iter().product();
        let inner = self.shape[axis + 1..].iter().product();
        (outer, self.shape[axis], inner)
    }

    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Self {
        let (outer, n, inner) = self.split_at_axis(axis);
        assert!(start + len <= n, "narrow {start}+{len} beyond {n}");
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            out.extend_from_slice(&self.data[base..base + len * inner]);
        }
        let mut shape = self.shape.clone();
        shape[axis] = len;
        Self::from_vec(shape, out)
    }

    /// Embeds `self` at offset `start` along `axis` in a zero tensor of length `total`.
    pub fn pad_axis(&self, axis: usize, start: usize, total: usize) -> Self {
        let (outer, n, inner) = self.split_at_axis(axis);
        assert!(start + n <= total, "pad {start}+{n} beyond {total}");
        let mut out = vec![T::zero(); outer * total * inner];
        for o in 0..outer {
            let dst = (o * total + start) * inner;
            out[dst..dst + n * inner].copy_from_slice(&self.data[o * n * inner..(o + 1) * n * inner]);
        }
        let mut shape = self.shape.clone();
        shape[axis] = total;
        Self::from_vec(shape, out)
    }

    pub fn concat(parts: &[&Self], axis: usize) -> Self {
        assert!(!parts.is_empty());
        let first = parts[0];
        let outer: usize = first.shape[..axis].iter().product();
        let inner: usize = first.shape[axis + 1..].iter().product();
        let total: usize = parts.iter().map(|p| p.shape[axis]).sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                assert_eq!(p.shape[..axis], first.shape[..axis]);
                assert_eq!(p.shape[axis + 1..], first.shape[axis + 1..]);
                let len = p.shape[axis] * inner;
                out.extend_from_slice(&p.data[o * len..(o + 1) * len]);
            }
        }
        let mut shape = first.shape.clone();
        shape[axis] = total;
        Self::from_vec(shape, out)
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(parts: &[&Self]) -> Self {
        assert!(!parts.is_empty());
        let mut shape = vec![parts.len()];
        shape.extend_from_slice(parts[0].shape());
        let mut out = Vec::with_capacity(parts.len() * parts[0].numel());
        for p in parts {
            assert_eq!(p.shape, parts[0].shape, "stack needs equal shapes");
            out.extend_from_slice(&p.data);
        }
        Self::from_vec(shape, out)
    }

    /// Row `i` of the leading axis.
    pub fn index(&self, i: usize) -> Self {
        let rest: Vec<usize> = self.shape[1..].to_vec();
        let len: usize = rest.iter().product();
        Self::from_vec(rest, self.data[i * len..(i + 1) * len].to_vec())
    }
}
