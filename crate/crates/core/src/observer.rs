//! Task-based and distributional image-quality measures: the Hotelling
//! observer SNR for a signal-known-exactly detection task, and Fréchet
//! distances between Gaussian fits of slice features.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::field::{unravel, ObjectField};
use crate::object_models::SignalSpec;
use crate::{Error, Result};

pub const DEFAULT_ROI_SIDE: usize = 8;
pub const DEFAULT_RIDGE_SCALE: f64 = 1e-6;
/// Eigenvalues down to `-SQRT_CLIP_TOL · max(1, λ_max)` are treated as zero.
pub const SQRT_CLIP_TOL: f64 = 1e-8;

/// A box of voxels; the centre sits at index `side / 2` within the box.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoiSpec {
    pub center: Vec<usize>,
    pub side: Vec<usize>,
}

impl RoiSpec {
    pub fn cube(center: Vec<usize>, side: usize) -> Self {
        let side = vec![side; center.len()];
        Self { center, side }
    }

    pub fn voxels(&self) -> usize {
        self.side.iter().product()
    }

    fn origin(&self, shape: &[usize]) -> Result<Vec<usize>> {
        if self.center.len() != shape.len() || self.side.len() != shape.len() {
            return Err(Error::Parameter(format!(
                "ROI rank {} does not match field shape {shape:?}",
                self.center.len()
            )));
        }
        if self.side.contains(&0) {
            return Err(Error::param("ROI side must be positive"));
        }
        self.center
            .iter()
            .zip(&self.side)
            .zip(shape)
            .map(|((&c, &s), &n)| {
                let half = s / 2;
                if c < half || c - half + s > n {
                    Err(Error::Bounds(format!(
                        "ROI of side {s} centred at {c} leaves an axis of length {n}"
                    )))
                } else {
                    Ok(c - half)
                }
            })
            .collect()
    }
}

/// Row-major ROI voxel values.
pub fn extract_roi(x: &ObjectField, roi: &RoiSpec) -> Result<Vec<f64>> {
    let origin = roi.origin(x.shape())?;
    let mut out = Vec::with_capacity(roi.voxels());
    let mut idx = vec![0; origin.len()];
    for i in 0..roi.voxels() {
        let local = unravel(i, &roi.side);
        for ((d, o), l) in idx.iter_mut().zip(&origin).zip(&local) {
            *d = o + l;
        }
        out.push(x.get(&idx));
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct CovarianceEstimate {
    pub matrix: DMatrix<f64>,
    pub samples: usize,
    /// The `ε` added to the diagonal.
    pub ridge: f64,
}

impl CovarianceEstimate {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

fn check_samples(samples: &[Vec<f64>], min: usize) -> Result<usize> {
    if samples.len() < min {
        return Err(Error::Parameter(format!(
            "need at least {min} samples, got {}",
            samples.len()
        )));
    }
    let dim = samples[0].len();
    if dim == 0 || samples.iter().any(|s| s.len() != dim) {
        return Err(Error::param("samples must be non-empty vectors of equal length"));
    }
    Ok(dim)
}

/// Mean and unbiased covariance. Summation runs over samples in sorted
/// order of their bit patterns, so the result does not depend on the order
/// the samples are given in.
fn mean_and_cov(samples: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let n = samples.len();
    let dim = samples[0].len();
    let mut order: Vec<&Vec<f64>> = samples.iter().collect();
    order.sort_by(|a, b| a.iter().map(|v| v.to_bits()).cmp(b.iter().map(|v| v.to_bits())));
    let mut mean = DVector::zeros(dim);
    for s in &order {
        mean += DVector::from_column_slice(s);
    }
    mean /= n as f64;
    let centred = DMatrix::from_fn(n, dim, |i, j| order[i][j] - mean[j]);
    let mut cov = centred.transpose() * &centred / (n as f64 - 1.0);
    // Exact symmetry.
    for i in 0..dim {
        for j in 0..i {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    (mean, cov)
}

fn add_ridge(cov: &mut DMatrix<f64>, ridge_scale: f64) -> f64 {
    let dim = cov.nrows();
    let eps = ridge_scale * cov.trace() / dim as f64;
    // Degenerate (zero) covariance still gets a positive ridge.
    let eps = if eps > 0.0 { eps } else { ridge_scale };
    for i in 0..dim {
        cov[(i, i)] += eps;
    }
    eps
}

/// Unbiased sample covariance plus `εI`, `ε = ridge_scale · tr(K) / dim`
/// (or `ridge_scale` itself when the trace is zero).
pub fn estimate_covariance(samples: &[Vec<f64>], ridge_scale: f64) -> Result<CovarianceEstimate> {
    check_samples(samples, 2)?;
    if !(ridge_scale.is_finite() && ridge_scale >= 0.0) {
        return Err(Error::Parameter(format!("ridge scale {ridge_scale}")));
    }
    let (_, mut matrix) = mean_and_cov(samples);
    let ridge = add_ridge(&mut matrix, ridge_scale);
    Ok(CovarianceEstimate {
        matrix,
        samples: samples.len(),
        ridge,
    })
}

/// `√(sᵀK⁻¹s)` by Cholesky solve.
pub fn hotelling_snr(s: &[f64], k: &CovarianceEstimate) -> Result<f64> {
    if s.len() != k.dim() {
        return Err(Error::Parameter(format!(
            "signal length {} does not match covariance dimension {}",
            s.len(),
            k.dim()
        )));
    }
    let chol = k.matrix.clone().cholesky().ok_or_else(|| {
        let diag = k.matrix.diagonal();
        Error::Numerical(format!(
            "covariance ({}×{}, {} samples, ridge {:.3e}, diagonal range [{:.3e}, {:.3e}]) is not positive definite",
            k.dim(),
            k.dim(),
            k.samples,
            k.ridge,
            diag.min(),
            diag.max()
        ))
    })?;
    let s = DVector::from_column_slice(s);
    let w = chol.solve(&s);
    Ok(s.dot(&w).max(0.0).sqrt())
}

/// A signal-known-exactly detection task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionTask {
    pub signal: SignalSpec,
    pub roi: RoiSpec,
    pub noise_std: f64,
    #[serde(default = "default_ridge")]
    pub ridge_scale: f64,
}

fn default_ridge() -> f64 {
    DEFAULT_RIDGE_SCALE
}

impl DetectionTask {
    /// Signal centred in the field with the default 8-voxel ROI.
    pub fn centred(shape: &[usize], radius: f64, amplitude: f64, noise_std: f64) -> Self {
        let center: Vec<usize> = shape.iter().map(|s| s / 2).collect();
        Self {
            signal: SignalSpec {
                center: center.clone(),
                radius,
                amplitude,
            },
            roi: RoiSpec::cube(center, DEFAULT_ROI_SIDE),
            noise_std,
            ridge_scale: DEFAULT_RIDGE_SCALE,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SnrStudy {
    pub snr: f64,
    pub covariance: CovarianceEstimate,
    pub signal_roi: Vec<f64>,
}

/// Hotelling SNR for detecting `task.signal` in `g = f + n` over an object
/// ensemble, with `K` estimated from signal-absent ROI samples (one fresh
/// noise draw per object). Under the additive model `K` is the same with
/// the signal present, so signal-present samples are not simulated.
pub fn snr_study<R: Rng + ?Sized>(objects: &[ObjectField], task: &DetectionTask, rng: &mut R) -> Result<SnrStudy> {
    let first = objects.first().ok_or_else(|| Error::param("empty object ensemble"))?;
    let mut acc = SnrAccumulator::new(task, first.shape())?;
    for f in objects {
        acc.push(f, rng)?;
    }
    acc.finish()
}

/// Incremental form of [`snr_study`]: objects are pushed one at a time and
/// only their noisy ROI vectors are kept.
pub struct SnrAccumulator {
    task: DetectionTask,
    shape: Vec<usize>,
    signal_roi: Vec<f64>,
    normal: Normal<f64>,
    samples: Vec<Vec<f64>>,
}

impl SnrAccumulator {
    pub fn new(task: &DetectionTask, shape: &[usize]) -> Result<Self> {
        if !(task.noise_std.is_finite() && task.noise_std >= 0.0) {
            return Err(Error::Parameter(format!("noise std {}", task.noise_std)));
        }
        let signal = task.signal.render(shape)?;
        Ok(Self {
            task: task.clone(),
            shape: shape.to_vec(),
            signal_roi: extract_roi(&signal, &task.roi)?,
            normal: Normal::new(0.0, task.noise_std).map_err(|e| Error::param(e.to_string()))?,
            samples: Vec::new(),
        })
    }

    pub fn push<R: Rng + ?Sized>(&mut self, f: &ObjectField, rng: &mut R) -> Result<()> {
        if f.shape() != self.shape.as_slice() {
            return Err(Error::param("ensemble members differ in shape"));
        }
        let mut v = extract_roi(f, &self.task.roi)?;
        if self.task.noise_std > 0.0 {
            for x in &mut v {
                *x += self.normal.sample(rng);
            }
        }
        self.samples.push(v);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn finish(&self) -> Result<SnrStudy> {
        if self.samples.is_empty() {
            return Err(Error::param("empty object ensemble"));
        }
        let covariance = estimate_covariance(&self.samples, self.task.ridge_scale)?;
        let snr = hotelling_snr(&self.signal_roi, &covariance)?;
        Ok(SnrStudy {
            snr,
            covariance,
            signal_roi: self.signal_roi.clone(),
        })
    }
}

/// Diagnostic variant: `K = K_f + σ²I` with `K_f` from the objects alone.
pub fn snr_decomposed(objects: &[ObjectField], task: &DetectionTask) -> Result<SnrStudy> {
    let shape = objects
        .first()
        .ok_or_else(|| Error::param("empty object ensemble"))?
        .shape()
        .to_vec();
    let signal_roi = extract_roi(&task.signal.render(&shape)?, &task.roi)?;
    let samples = objects
        .iter()
        .map(|f| extract_roi(f, &task.roi))
        .collect::<Result<Vec<_>>>()?;
    let mut covariance = estimate_covariance(&samples, task.ridge_scale)?;
    let var = task.noise_std * task.noise_std;
    for i in 0..covariance.dim() {
        covariance.matrix[(i, i)] += var;
    }
    let snr = hotelling_snr(&signal_roi, &covariance)?;
    Ok(SnrStudy {
        snr,
        covariance,
        signal_roi,
    })
}

/// Mean and covariance of a feature ensemble.
#[derive(Clone, Debug)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianStats {
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::param("mean and covariance dimensions differ"));
        }
        Ok(Self {
            mean: DVector::from_vec(mean),
            cov,
        })
    }

    pub fn fit(features: &[Vec<f64>]) -> Result<Self> {
        check_samples(features, 2)?;
        let (mean, cov) = mean_and_cov(features);
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Running mean and covariance of feature vectors, for ensembles too large
/// to keep. Sums are taken about the first vector seen to limit
/// cancellation.
#[derive(Clone, Debug)]
pub struct FeatureMoments {
    n: usize,
    shift: DVector<f64>,
    sum: DVector<f64>,
    outer: DMatrix<f64>,
}

impl FeatureMoments {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0,
            shift: DVector::zeros(dim),
            sum: DVector::zeros(dim),
            outer: DMatrix::zeros(dim, dim),
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn push_batch(&mut self, features: &[Vec<f64>]) -> Result<()> {
        let dim = self.shift.len();
        if features.iter().any(|f| f.len() != dim) {
            return Err(Error::Parameter(format!("feature vectors must have length {dim}")));
        }
        if features.is_empty() {
            return Ok(());
        }
        if self.n == 0 {
            self.shift = DVector::from_column_slice(&features[0]);
        }
        let m = DMatrix::from_fn(features.len(), dim, |i, j| features[i][j] - self.shift[j]);
        for j in 0..dim {
            self.sum[j] += m.column(j).sum();
        }
        self.outer += m.transpose() * &m;
        self.n += features.len();
        Ok(())
    }

    pub fn stats(&self) -> Result<GaussianStats> {
        if self.n < 2 {
            return Err(Error::Parameter(format!("need at least 2 samples, got {}", self.n)));
        }
        let n = self.n as f64;
        let d = &self.sum / n;
        let mut cov = (&self.outer - &self.sum * d.transpose()) / (n - 1.0);
        let dim = cov.nrows();
        for i in 0..dim {
            for j in 0..i {
                let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        Ok(GaussianStats {
            mean: &self.shift + d,
            cov,
        })
    }
}

/// `V diag(√λ) Vᵀ`, clipping slightly negative eigenvalues.
fn sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.iter().cloned().fold(1.0f64, f64::max);
    let mut roots = eig.eigenvalues.clone();
    for l in roots.iter_mut() {
        if *l < -SQRT_CLIP_TOL * scale {
            return Err(Error::Numerical(format!(
                "matrix square root: eigenvalue {l:.3e} is below the clipping tolerance"
            )));
        }
        *l = l.max(0.0).sqrt();
    }
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// `‖μ_A − μ_B‖² + tr(C_A + C_B − 2(C_A C_B)^½)`.
///
/// The cross term equals `tr((√C_A C_B √C_A)^½)`, which is the sum of the
/// singular values of `√C_A √C_B`. Taking singular values directly avoids
/// square-rooting a squared, near-singular matrix.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Parameter(format!(
            "feature dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let dmu = (&a.mean - &b.mean).norm_squared();
    let product = sqrt_psd(&a.cov)? * sqrt_psd(&b.cov)?;
    let cross = product.singular_values().sum();
    Ok((dmu + a.cov.trace() + b.cov.trace() - 2.0 * cross).max(0.0))
}

/// Maps a 2-D slice to a feature vector.
pub trait FeatureExtractor: Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn extract(&self, slice: &ObjectField) -> Result<Vec<f64>>;
}

/// Average-pools a slice to `16 × 16` and flattens it.
#[derive(Clone, Copy, Debug, Default)]
pub struct Pixel16;

impl FeatureExtractor for Pixel16 {
    fn name(&self) -> &str {
        "pixel16"
    }

    fn dim(&self) -> usize {
        256
    }

    fn extract(&self, slice: &ObjectField) -> Result<Vec<f64>> {
        let shape = slice.shape();
        if shape.len() != 2 || shape.iter().any(|&s| s < 16 || s % 16 != 0) {
            return Err(Error::Parameter(format!(
                "pixel16 needs a 2-D slice with sides divisible by 16, got {shape:?}"
            )));
        }
        let (fy, fx) = (shape[0] / 16, shape[1] / 16);
        let norm = (fy * fx) as f64;
        let mut out = vec![0.0; 256];
        for y in 0..shape[0] {
            for x in 0..shape[1] {
                out[(y / fy) * 16 + x / fx] += slice.get(&[y, x]);
            }
        }
        out.iter_mut().for_each(|v| *v /= norm);
        Ok(out)
    }
}

/// Extractor lookup by name.
pub fn extractor(name: &str) -> Result<Box<dyn FeatureExtractor>> {
    match name {
        "pixel16" => Ok(Box::new(Pixel16)),
        other => Err(Error::Config(format!("unknown feature extractor {other}"))),
    }
}

/// Slicing direction for 3-D volumes indexed `[z, y, x]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SliceAxis {
    /// Fixes axis 0.
    Axial,
    /// Fixes axis 1.
    Coronal,
    /// Fixes axis 2.
    Sagittal,
}

impl SliceAxis {
    pub const ALL: [SliceAxis; 3] = [SliceAxis::Axial, SliceAxis::Coronal, SliceAxis::Sagittal];

    fn index(self) -> usize {
        match self {
            SliceAxis::Axial => 0,
            SliceAxis::Coronal => 1,
            SliceAxis::Sagittal => 2,
        }
    }
}

impl std::fmt::Display for SliceAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SliceAxis::Axial => "axial",
            SliceAxis::Coronal => "coronal",
            SliceAxis::Sagittal => "sagittal",
        })
    }
}

/// All 2-D slices of `f` perpendicular to `axis`; a 2-D field is its own
/// single slice.
pub fn slices(f: &ObjectField, axis: SliceAxis) -> Vec<ObjectField> {
    if f.dims() == 2 {
        return vec![f.clone()];
    }
    let shape = f.shape();
    let a = axis.index();
    let rest: Vec<usize> = (0..3).filter(|&d| d != a).collect();
    let (h, w) = (shape[rest[0]], shape[rest[1]]);
    (0..shape[a])
        .map(|k| {
            let mut idx = [0usize; 3];
            idx[a] = k;
            let mut values = Vec::with_capacity(h * w);
            for i in 0..h {
                for j in 0..w {
                    idx[rest[0]] = i;
                    idx[rest[1]] = j;
                    values.push(f.get(&idx));
                }
            }
            ObjectField::new(vec![h, w], values).expect("slice of a valid field")
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FidResult {
    pub value: f64,
    pub axis: Option<SliceAxis>,
    pub extractor: String,
    pub slices_a: usize,
    pub slices_b: usize,
    /// Ridge added to both covariances when either side had too few slices
    /// for a full-rank fit.
    pub ridge: f64,
    pub warning: Option<String>,
}

fn features(ens: &[ObjectField], axis: SliceAxis, ex: &dyn FeatureExtractor) -> Result<Vec<Vec<f64>>> {
    let per: Vec<Result<Vec<Vec<f64>>>> = ens
        .par_iter()
        .map(|f| slices(f, axis).iter().map(|s| ex.extract(s)).collect())
        .collect();
    let mut out = Vec::new();
    for p in per {
        out.extend(p?);
    }
    Ok(out)
}

/// Fréchet distance between Gaussian fits of slice features.
pub fn slice_fid(
    ens_a: &[ObjectField],
    ens_b: &[ObjectField],
    axis: SliceAxis,
    ex: &dyn FeatureExtractor,
) -> Result<FidResult> {
    let dims = ens_a.first().map(|f| f.dims()).unwrap_or(0);
    if ens_a.is_empty() || ens_b.is_empty() {
        return Err(Error::param("empty ensemble"));
    }
    if ens_b.iter().chain(ens_a).any(|f| f.dims() != dims) {
        return Err(Error::param("ensembles mix 2-D and 3-D fields"));
    }
    let fa = features(ens_a, axis, ex)?;
    let fb = features(ens_b, axis, ex)?;
    fid_from_stats(
        GaussianStats::fit(&fa)?,
        GaussianStats::fit(&fb)?,
        (fa.len(), fb.len()),
        (dims == 3).then_some(axis),
        ex,
    )
}

/// Slice features of one ensemble member, for use with [`FeatureMoments`].
pub fn slice_features(f: &ObjectField, axis: SliceAxis, ex: &dyn FeatureExtractor) -> Result<Vec<Vec<f64>>> {
    slices(f, axis).iter().map(|s| ex.extract(s)).collect()
}

/// FID from already fitted statistics; `counts` are the slice counts behind
/// each fit and decide whether the covariances need a ridge.
pub fn fid_from_stats(
    mut a: GaussianStats,
    mut b: GaussianStats,
    counts: (usize, usize),
    axis: Option<SliceAxis>,
    ex: &dyn FeatureExtractor,
) -> Result<FidResult> {
    let (mut ridge, mut warning) = (0.0, None);
    let need = ex.dim() + 1;
    if counts.0 < need || counts.1 < need {
        warning = Some(format!(
            "only {} / {} slices for {} features; covariances ridged",
            counts.0,
            counts.1,
            ex.dim()
        ));
        let ea = add_ridge(&mut a.cov, DEFAULT_RIDGE_SCALE);
        let eb = add_ridge(&mut b.cov, DEFAULT_RIDGE_SCALE);
        ridge = ea.max(eb);
    }
    Ok(FidResult {
        value: frechet_distance(&a, &b)?,
        axis,
        extractor: ex.name().to_string(),
        slices_a: counts.0,
        slices_b: counts.1,
        ridge,
        warning,
    })
}

/// Radially averaged power spectrum of the residuals `x − mean(x)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RadialSpectrum {
    /// Bin centres in cycles per voxel (0 … 0.5·√d).
    pub frequency: Vec<f64>,
    pub power: Vec<f64>,
}

impl RadialSpectrum {
    /// Mean power over bins at or above the given frequency quantile of the
    /// Nyquist band, e.g. `0.75` for the top quartile.
    pub fn band_power(&self, quantile: f64) -> f64 {
        let cut = quantile * 0.5;
        let sel: Vec<f64> = self
            .frequency
            .iter()
            .zip(&self.power)
            .filter(|(f, _)| **f >= cut && **f <= 0.5)
            .map(|(_, p)| *p)
            .collect();
        sel.iter().sum::<f64>() / sel.len().max(1) as f64
    }
}

pub fn noise_power_spectrum(ensemble: &[ObjectField]) -> Result<RadialSpectrum> {
    let first = ensemble.first().ok_or_else(|| Error::param("empty ensemble"))?;
    let mut acc = SpectrumAccumulator::new(first.shape());
    for f in ensemble {
        acc.push(f)?;
    }
    acc.finish()
}

/// One-pass residual power spectrum. By linearity of the DFT,
/// `Σ|F(xᵢ − m)|² = Σ|F xᵢ|² − N|F m|²`, so only the running sum of the
/// fields and of their power spectra are kept.
pub struct SpectrumAccumulator {
    shape: Vec<usize>,
    n: usize,
    sum: Vec<f64>,
    power: Vec<f64>,
}

impl SpectrumAccumulator {
    pub fn new(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            n: 0,
            sum: vec![0.0; len],
            power: vec![0.0; len],
        }
    }

    pub fn push(&mut self, f: &ObjectField) -> Result<()> {
        if f.shape() != self.shape.as_slice() {
            return Err(Error::param("ensemble members differ in shape"));
        }
        for (s, v) in self.sum.iter_mut().zip(f.values()) {
            *s += v;
        }
        let spec = crate::imaging::dft_forward(f);
        for (p, c) in self.power.iter_mut().zip(spec.values()) {
            *p += c.norm_sqr();
        }
        self.n += 1;
        Ok(())
    }

    pub fn finish(&self) -> Result<RadialSpectrum> {
        if self.n < 2 {
            return Err(Error::param("need at least 2 fields for a noise power spectrum"));
        }
        let shape = &self.shape;
        let n = self.n as f64;
        let mean = ObjectField::new(shape.clone(), self.sum.iter().map(|s| s / n).collect())?;
        let mean_spec = crate::imaging::dft_forward(&mean);
        let power: Vec<f64> = self
            .power
            .iter()
            .zip(mean_spec.values())
            .map(|(p, m)| (p - n * m.norm_sqr()).max(0.0))
            .collect();
        let bins = shape.iter().max().copied().unwrap_or(1) / 2 + 1;
        let mut sum = vec![0.0; bins];
        let mut count = vec![0usize; bins];
        let denom = n - 1.0;
        for (i, p) in power.iter().enumerate() {
            let idx = unravel(i, shape);
            let r2: f64 = idx
                .iter()
                .zip(shape)
                .map(|(&k, &s)| {
                    let k = if k > s / 2 { k as f64 - s as f64 } else { k as f64 };
                    (k / s as f64).powi(2)
                })
                .sum();
            let b = ((r2.sqrt() / 0.5) * (bins - 1) as f64).round() as usize;
            if b < bins {
                sum[b] += p / denom;
                count[b] += 1;
            }
        }
        let frequency = (0..bins).map(|b| 0.5 * b as f64 / (bins - 1).max(1) as f64).collect();
        let power = sum
            .iter()
            .zip(&count)
            .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
            .collect();
        Ok(RadialSpectrum { frequency, power })
    }
}
