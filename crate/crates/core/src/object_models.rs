//! Ground-truth stochastic object models: lumpy and clustered-lumpy
//! backgrounds on a periodic grid, plus uniform-sphere detection signals.
//!
//! Lumps are isotropic Gaussians `a·exp(−|r−rₙ|²/(2w²))` placed with uniform
//! continuous centres and minimum-image (toroidal) distances, so every voxel
//! has the same marginal statistics.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{check_shape, ObjectField};
use crate::rng::stream;

/// Lumps farther than this many widths from a voxel are not rendered.
const CUTOFF_WIDTHS: f64 = 6.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LumpyParams {
    /// Expected number of lumps per field.
    pub mean_count: f64,
    pub amplitude: f64,
    /// Gaussian standard deviation, voxels.
    pub width: f64,
    pub field_shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusteredLumpyParams {
    pub mean_cluster_count: f64,
    pub mean_blobs_per_cluster: f64,
    /// Standard deviation of blob offsets from their cluster centre, voxels.
    pub cluster_spread: f64,
    pub amplitude: f64,
    pub width: f64,
    pub field_shape: Vec<usize>,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(format!("{name} must be positive and finite, got {v}")))
    }
}

impl LumpyParams {
    pub fn validate(&self) -> Result<()> {
        positive("mean_count", self.mean_count)?;
        positive("amplitude", self.amplitude)?;
        positive("width", self.width)?;
        check_shape(&self.field_shape)
    }

    pub fn voxels(&self) -> usize {
        self.field_shape.iter().product()
    }

    /// Ensemble mean of every voxel: `N̄·a·(2πw²)^{d/2} / M`.
    pub fn analytic_mean(&self) -> f64 {
        let d = self.field_shape.len() as i32;
        self.mean_count * self.amplitude * (2.0 * std::f64::consts::PI * self.width.powi(2)).powf(d as f64 / 2.0)
            / self.voxels() as f64
    }

    /// Ensemble variance of every voxel: `N̄·a²·(πw²)^{d/2} / M`.
    pub fn analytic_variance(&self) -> f64 {
        let d = self.field_shape.len() as f64;
        self.mean_count * self.amplitude.powi(2) * (std::f64::consts::PI * self.width.powi(2)).powf(d / 2.0)
            / self.voxels() as f64
    }
}

impl ClusteredLumpyParams {
    pub fn validate(&self) -> Result<()> {
        positive("mean_cluster_count", self.mean_cluster_count)?;
        positive("mean_blobs_per_cluster", self.mean_blobs_per_cluster)?;
        positive("cluster_spread", self.cluster_spread)?;
        positive("amplitude", self.amplitude)?;
        positive("width", self.width)?;
        check_shape(&self.field_shape)
    }

    /// Ensemble mean of every voxel.
    pub fn analytic_mean(&self) -> f64 {
        let d = self.field_shape.len() as f64;
        let m: usize = self.field_shape.iter().product();
        self.mean_cluster_count
            * self.mean_blobs_per_cluster
            * self.amplitude
            * (2.0 * std::f64::consts::PI * self.width.powi(2)).powf(d / 2.0)
            / m as f64
    }
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    let p = Poisson::new(mean).expect("validated positive mean");
    let n: f64 = p.sample(rng);
    n as usize
}

fn uniform_center<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Vec<f64> {
    shape.iter().map(|&s| rng.random::<f64>() * s as f64).collect()
}

/// Per-axis Gaussian factors `(index, exp(−dx²/(2w²)))` with minimum-image `dx`.
fn axis_factors(len: usize, center: f64, width: f64) -> Vec<(usize, f64)> {
    let l = len as f64;
    let cutoff = CUTOFF_WIDTHS * width;
    (0..len)
        .filter_map(|i| {
            let mut dx = (i as f64 - center).rem_euclid(l);
            if dx >= l / 2.0 {
                dx -= l;
            }
            (dx.abs() <= cutoff).then(|| (i, (-dx * dx / (2.0 * width * width)).exp()))
        })
        .collect()
}

/// Renders a superposition of Gaussian lumps with the given centres.
pub fn render_lumps(shape: &[usize], centers: &[Vec<f64>], amplitude: f64, width: f64) -> Result<ObjectField> {
    let mut field = ObjectField::zeros(shape.to_vec())?;
    let values = field.values_mut();
    for c in centers {
        if c.len() != shape.len() {
            return Err(Error::param(format!("centre {c:?} has wrong dimension for {shape:?}")));
        }
        let factors: Vec<Vec<(usize, f64)>> = shape.iter().zip(c).map(|(&s, &x)| axis_factors(s, x, width)).collect();
        match shape.len() {
            2 => {
                for &(i, fi) in &factors[0] {
                    let row = &mut values[i * shape[1]..(i + 1) * shape[1]];
                    for &(j, fj) in &factors[1] {
                        row[j] += amplitude * fi * fj;
                    }
                }
            }
            _ => {
                for &(i, fi) in &factors[0] {
                    for &(j, fj) in &factors[1] {
                        let base = (i * shape[1] + j) * shape[2];
                        let fij = amplitude * fi * fj;
                        for &(k, fk) in &factors[2] {
                            values[base + k] += fij * fk;
                        }
                    }
                }
            }
        }
    }
    Ok(field)
}

/// Lumpy background: `N ~ Poisson(N̄)` Gaussian lumps with uniform centres.
pub fn sample_lumpy<R: Rng + ?Sized>(params: &LumpyParams, rng: &mut R) -> Result<ObjectField> {
    params.validate()?;
    let n = poisson(params.mean_count, rng);
    let centers: Vec<Vec<f64>> = (0..n).map(|_| uniform_center(&params.field_shape, rng)).collect();
    render_lumps(&params.field_shape, &centers, params.amplitude, params.width)
}

/// A position in field coordinates, one entry per axis.
pub type Point = Vec<f64>;

/// Cluster centres and the blob centres they spawn (blob centres wrapped
/// into the field).
pub fn clustered_centers<R: Rng + ?Sized>(
    params: &ClusteredLumpyParams,
    rng: &mut R,
) -> Result<(Vec<Point>, Vec<Point>)> {
    params.validate()?;
    let offset = Normal::new(0.0, params.cluster_spread).map_err(|e| Error::param(e.to_string()))?;
    let clusters: Vec<Vec<f64>> = (0..poisson(params.mean_cluster_count, rng))
        .map(|_| uniform_center(&params.field_shape, rng))
        .collect();
    let mut blobs = Vec::new();
    for c in &clusters {
        for _ in 0..poisson(params.mean_blobs_per_cluster, rng) {
            let b = c
                .iter()
                .zip(&params.field_shape)
                .map(|(&x, &s)| (x + offset.sample(rng)).rem_euclid(s as f64))
                .collect();
            blobs.push(b);
        }
    }
    Ok((clusters, blobs))
}

/// Clustered lumpy background: Poisson clusters, each with a Poisson number
/// of blobs displaced by isotropic Gaussian offsets.
pub fn sample_clustered_lumpy<R: Rng + ?Sized>(params: &ClusteredLumpyParams, rng: &mut R) -> Result<ObjectField> {
    let (_, blobs) = clustered_centers(params, rng)?;
    render_lumps(&params.field_shape, &blobs, params.amplitude, params.width)
}

/// A sphere (disc in 2-D) of constant amplitude.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    pub center: Vec<usize>,
    pub radius: f64,
    pub amplitude: f64,
}

impl SignalSpec {
    /// Integer offsets whose squared length is at most `radius²`.
    pub fn support_offsets(&self) -> Vec<Vec<isize>> {
        let r = self.radius.floor() as isize;
        let d = self.center.len();
        let mut out = Vec::new();
        let mut off = vec![-r; d];
        loop {
            let r2: isize = off.iter().map(|o| o * o).sum();
            if (r2 as f64) <= self.radius * self.radius {
                out.push(off.clone());
            }
            let mut i = d;
            loop {
                if i == 0 {
                    return out;
                }
                i -= 1;
                off[i] += 1;
                if off[i] <= r {
                    break;
                }
                off[i] = -r;
            }
        }
    }

    fn check(&self, shape: &[usize]) -> Result<()> {
        if self.center.len() != shape.len() {
            return Err(Error::param(format!(
                "signal centre {:?} does not match field shape {shape:?}",
                self.center
            )));
        }
        if !(self.radius.is_finite() && self.radius >= 0.0) {
            return Err(Error::param(format!("signal radius {}", self.radius)));
        }
        let r = self.radius.floor() as usize;
        for (&c, &s) in self.center.iter().zip(shape) {
            if c < r || c + r >= s {
                return Err(Error::Bounds(format!(
                    "signal of radius {} at {:?} leaves field {shape:?}",
                    self.radius, self.center
                )));
            }
        }
        Ok(())
    }

    /// The signal alone, as a field of `shape`.
    pub fn render(&self, shape: &[usize]) -> Result<ObjectField> {
        self.check(shape)?;
        let mut f = ObjectField::zeros(shape.to_vec())?;
        for off in self.support_offsets() {
            let idx: Vec<usize> = self
                .center
                .iter()
                .zip(&off)
                .map(|(&c, &o)| (c as isize + o) as usize)
                .collect();
            let o = f.offset(&idx);
            f.values_mut()[o] += self.amplitude;
        }
        Ok(f)
    }
}

/// `f + s`: adds `amplitude` at every voxel whose centre lies within `radius`
/// of the signal centre.
pub fn insert_signal(field: &ObjectField, signal: &SignalSpec) -> Result<ObjectField> {
    let s = signal.render(field.shape())?;
    let values = field.values().iter().zip(s.values()).map(|(a, b)| a + b).collect();
    ObjectField::new(field.shape().to_vec(), values)
}

/// Object models selectable from configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectModel {
    Lumpy(LumpyParams),
    ClusteredLumpy(ClusteredLumpyParams),
    /// Every sample is the same constant field.
    Constant {
        value: f64,
        field_shape: Vec<usize>,
    },
}

impl ObjectModel {
    pub fn field_shape(&self) -> &[usize] {
        match self {
            ObjectModel::Lumpy(p) => &p.field_shape,
            ObjectModel::ClusteredLumpy(p) => &p.field_shape,
            ObjectModel::Constant { field_shape, .. } => field_shape,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ObjectModel::Lumpy(p) => p.validate(),
            ObjectModel::ClusteredLumpy(p) => p.validate(),
            ObjectModel::Constant { value, field_shape } => {
                if !value.is_finite() {
                    return Err(Error::param("constant value must be finite"));
                }
                check_shape(field_shape)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ObjectField> {
        match self {
            ObjectModel::Lumpy(p) => sample_lumpy(p, rng),
            ObjectModel::ClusteredLumpy(p) => sample_clustered_lumpy(p, rng),
            ObjectModel::Constant { value, field_shape } => ObjectField::constant(field_shape.clone(), *value),
        }
    }

    /// Samples `count` objects; sample `i` uses `stream(seed, i)`.
    pub fn sample_ensemble(&self, count: usize, seed: u64) -> Result<Vec<ObjectField>> {
        self.validate()?;
        (0..count)
            .into_par_iter()
            .map(|i| self.sample(&mut stream(seed, i as u64)))
            .collect()
    }
}

/// Affine display/training normalisation `v ↦ v·scale + offset`, fixed per
/// ensemble and recorded in dataset manifests.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub scale: f64,
    pub offset: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            scale: 1.0,
            offset: 0.0,
        }
    }
}

impl Normalization {
    /// Maps the ensemble's [min, max] to [0, 1].
    pub fn fit_unit_range(fields: &[ObjectField]) -> Self {
        let (lo, hi) = fields
            .iter()
            .flat_map(|f| f.values().iter().copied())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if !(hi > lo) {
            return Self::default();
        }
        Self {
            scale: 1.0 / (hi - lo),
            offset: -lo / (hi - lo),
        }
    }

    pub fn apply(&self, f: &ObjectField) -> ObjectField {
        f.map(|v| v * self.scale + self.offset)
    }

    pub fn invert(&self, f: &ObjectField) -> ObjectField {
        f.map(|v| (v - self.offset) / self.scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn lumpy_2d() -> LumpyParams {
        LumpyParams {
            mean_count: 20.0,
            amplitude: 1.0,
            width: 3.0,
            field_shape: vec![64, 64],
        }
    }

    #[test]
    fn empty_lump_set_is_zero_field() {
        let f = render_lumps(&[16, 16], &[], 1.0, 2.0).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn same_seed_same_bytes() {
        let p = lumpy_2d();
        let a = sample_lumpy(&p, &mut stream(9, 0)).unwrap();
        let b = sample_lumpy(&p, &mut stream(9, 0)).unwrap();
        let bits = |f: &ObjectField| f.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let c = sample_lumpy(&p, &mut stream(9, 1)).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn lumps_are_non_negative_and_wrap() {
        // A lump centred on the corner contributes equally to all four corners.
        let f = render_lumps(&[16, 16], &[vec![0.0, 0.0]], 1.0, 1.5).unwrap();
        assert!(f.values().iter().all(|&v| v >= 0.0));
        assert!((f.get(&[0, 1]) - f.get(&[0, 15])).abs() < 1e-15);
        assert!((f.get(&[1, 0]) - f.get(&[15, 0])).abs() < 1e-15);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = lumpy_2d();
        p.width = 0.0;
        assert!(matches!(sample_lumpy(&p, &mut stream(0, 0)), Err(Error::Parameter(_))));
        p.width = 3.0;
        p.mean_count = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn tiny_spread_keeps_blobs_on_cluster_centres() {
        let p = ClusteredLumpyParams {
            mean_cluster_count: 5.0,
            mean_blobs_per_cluster: 4.0,
            cluster_spread: 1e-9,
            amplitude: 1.0,
            width: 2.0,
            field_shape: vec![32, 32],
        };
        for seed in 0..20 {
            let (clusters, blobs) = clustered_centers(&p, &mut stream(seed, 0)).unwrap();
            for b in &blobs {
                let near = clusters.iter().any(|c| {
                    c.iter().zip(b).zip(&p.field_shape).all(|((x, y), &s)| {
                        let d = (x - y).rem_euclid(s as f64);
                        d.min(s as f64 - d) < 1e-6
                    })
                });
                assert!(near, "blob {b:?} not on any cluster centre");
            }
        }
    }

    #[test]
    fn sphere_lattice_counts() {
        let s3 = SignalSpec {
            center: vec![8, 8, 8],
            radius: 2.0,
            amplitude: 1.0,
        };
        assert_eq!(s3.support_offsets().len(), 33);
        let s2 = SignalSpec {
            center: vec![8, 8],
            radius: 2.0,
            amplitude: 1.0,
        };
        assert_eq!(s2.support_offsets().len(), 13);
    }

    #[test]
    fn signal_insertion_sums_and_bounds() {
        let f = sample_lumpy(
            &LumpyParams {
                field_shape: vec![16, 16, 16],
                ..lumpy_2d()
            },
            &mut stream(1, 0),
        )
        .unwrap();
        let sig = SignalSpec {
            center: vec![8, 8, 8],
            radius: 2.0,
            amplitude: 0.7,
        };
        let g = insert_signal(&f, &sig).unwrap();
        assert!((g.sum() - f.sum() - 33.0 * 0.7).abs() < 1e-9);

        let zero = SignalSpec {
            amplitude: 0.0,
            ..sig.clone()
        };
        assert_eq!(insert_signal(&f, &zero).unwrap(), f);

        let f2 = ObjectField::zeros(vec![16, 16]).unwrap();
        let sig2 = SignalSpec {
            center: vec![5, 9],
            radius: 2.0,
            amplitude: 1.5,
        };
        assert!((insert_signal(&f2, &sig2).unwrap().sum() - 13.0 * 1.5).abs() < 1e-12);

        let edge = SignalSpec {
            center: vec![1, 8],
            radius: 2.0,
            amplitude: 1.0,
        };
        assert!(matches!(insert_signal(&f2, &edge), Err(Error::Bounds(_))));
        let far = SignalSpec {
            center: vec![14, 8],
            radius: 2.0,
            amplitude: 1.0,
        };
        assert!(matches!(insert_signal(&f2, &far), Err(Error::Bounds(_))));
    }

    #[test]
    fn signal_insertion_is_additive() {
        let f = ObjectField::constant(vec![12, 12], 0.25).unwrap();
        let a = SignalSpec {
            center: vec![5, 5],
            radius: 2.0,
            amplitude: 0.5,
        };
        let b = SignalSpec {
            center: vec![6, 5],
            radius: 1.5,
            amplitude: 0.25,
        };
        let twice = insert_signal(&insert_signal(&f, &a).unwrap(), &b).unwrap();
        let direct: Vec<f64> = f
            .values()
            .iter()
            .zip(a.render(f.shape()).unwrap().values())
            .zip(b.render(f.shape()).unwrap().values())
            .map(|((x, y), z)| x + y + z)
            .collect();
        assert_eq!(twice.values(), &direct[..]);
    }

    #[test]
    fn normalization_round_trip() {
        let p = lumpy_2d();
        let fields = ObjectModel::Lumpy(p).sample_ensemble(4, 3).unwrap();
        let n = Normalization::fit_unit_range(&fields);
        let g = n.apply(&fields[0]);
        assert!(g.values().iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
        assert!(n.invert(&g).max_abs_diff(&fields[0]) < 1e-12);
    }
}
