//! Real-valued voxel grids.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 2-D or 3-D real voxel grid in row-major order (last index fastest).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectField {
    shape: Vec<usize>,
    values: Vec<f64>,
}

pub(crate) fn check_shape(shape: &[usize]) -> Result<()> {
    if !(2..=3).contains(&shape.len()) {
        return Err(Error::param(format!("field must be 2-D or 3-D, got shape {shape:?}")));
    }
    if shape.contains(&0) {
        return Err(Error::param(format!("empty field shape {shape:?}")));
    }
    Ok(())
}

impl ObjectField {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        check_shape(&shape)?;
        let n: usize = shape.iter().product();
        if values.len() != n {
            return Err(Error::param(format!(
                "shape {shape:?} needs {n} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite value at voxel {i}")));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(shape, vec![0.0; n])
    }

    pub fn constant(shape: Vec<usize>, value: f64) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(shape, vec![value; n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dims(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Row-major offset of a voxel index.
    pub fn offset(&self, index: &[usize]) -> usize {
        index.iter().zip(&self.shape).fold(0, |acc, (&i, &s)| acc * s + i)
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.values[self.offset(index)]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.len() as f64
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `2×` average pooling along every axis, `times` times.
    pub fn downsample(&self, times: usize) -> Self {
        let mut cur = self.clone();
        for _ in 0..times {
            let out_shape: Vec<usize> = cur.shape.iter().map(|s| s / 2).collect();
            let mut out = Self::zeros(out_shape).expect("halved shape stays valid");
            let norm = 1.0 / (1usize << cur.dims()) as f64;
            for (i, &v) in cur.values.iter().enumerate() {
                let idx = unravel(i, &cur.shape);
                let half: Vec<usize> = idx.iter().map(|x| x / 2).collect();
                let o = out.offset(&half);
                out.values[o] += v * norm;
            }
            cur = out;
        }
        cur
    }
}

/// Row-major multi-index of a flat offset.
pub fn unravel(mut offset: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for (i, &s) in shape.iter().enumerate().rev() {
        idx[i] = offset % s;
        offset /= s;
    }
    idx
}

/// A field produced by the reconstruction operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconImage(pub ObjectField);

impl Deref for ReconImage {
    type Target = ObjectField;

    fn deref(&self) -> &ObjectField {
        &self.0
    }
}

impl ReconImage {
    pub fn into_field(self) -> ObjectField {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(ObjectField::new(vec![4], vec![0.0; 4]).is_err());
        assert!(ObjectField::new(vec![2, 0], vec![]).is_err());
        assert!(ObjectField::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(ObjectField::new(vec![2, 2], vec![0.0, 1.0, f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn downsample_averages_blocks() {
        let f = ObjectField::new(vec![2, 4], vec![1., 2., 3., 4., 5., 6., 7., 8.]).unwrap();
        let d = f.downsample(1);
        assert_eq!(d.shape(), &[1, 2]);
        assert_eq!(d.values(), &[3.5, 5.5]);
    }
}
