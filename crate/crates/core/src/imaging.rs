//! Stylized fully-sampled MR imaging: unitary DFT measurement with additive
//! circular complex Gaussian noise, and real-part inverse-DFT reconstruction.

use ambientsom_tensor::fft::dft_in_place;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{check_shape, ObjectField, ReconImage};

/// Complex k-space samples on the object's grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    shape: Vec<usize>,
    values: Vec<Complex64>,
}

impl Measurement {
    pub fn new(shape: Vec<usize>, values: Vec<Complex64>) -> Result<Self> {
        check_shape(&shape)?;
        if values.len() != shape.iter().product::<usize>() {
            return Err(Error::param(format!(
                "measurement of shape {shape:?} has {} values",
                values.len()
            )));
        }
        if values.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Numerical("non-finite k-space sample".into()));
        }
        Ok(Self { shape, values })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImagingConfig {
    pub dims: usize,
    /// Standard deviation of each of the real and imaginary noise components.
    pub noise_std: f64,
    /// Optional k-space sampling mask (row-major, `true` = sampled). Unsampled
    /// entries are zeroed after noise is added. Off by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling_mask: Option<Vec<bool>>,
}

impl ImagingConfig {
    pub fn new(dims: usize, noise_std: f64) -> Self {
        Self {
            dims,
            noise_std,
            sampling_mask: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.dims) {
            return Err(Error::param(format!("imaging dims must be 2 or 3, got {}", self.dims)));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::param(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        Ok(())
    }
}

/// Unitary DFT of a real field.
pub fn dft_forward(f: &ObjectField) -> Measurement {
    let mut buf: Vec<Complex64> = f.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    dft_in_place(&mut buf, f.shape(), false);
    Measurement {
        shape: f.shape().to_vec(),
        values: buf,
    }
}

/// `g = Hf + n`.
pub fn measure<R: Rng + ?Sized>(f: &ObjectField, cfg: &ImagingConfig, rng: &mut R) -> Result<Measurement> {
    cfg.validate()?;
    if cfg.dims != f.dims() {
        return Err(Error::param(format!(
            "imaging configured for {}-D, object is {}-D",
            cfg.dims,
            f.dims()
        )));
    }
    let mut g = dft_forward(f);
    if cfg.noise_std > 0.0 {
        let normal = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::param(e.to_string()))?;
        for v in &mut g.values {
            let (re, im) = (normal.sample(rng), normal.sample(rng));
            *v += Complex64::new(re, im);
        }
    }
    if let Some(mask) = &cfg.sampling_mask {
        if mask.len() != g.values.len() {
            return Err(Error::param("sampling mask does not match the field size"));
        }
        for (v, &keep) in g.values.iter_mut().zip(mask) {
            if !keep {
                *v = Complex64::new(0.0, 0.0);
            }
        }
    }
    Ok(g)
}

/// `O(g)`: real part of the unitary inverse DFT.
pub fn reconstruct(g: &Measurement) -> ReconImage {
    let mut buf = g.values.clone();
    dft_in_place(&mut buf, &g.shape, true);
    let values = buf.iter().map(|c| c.re).collect();
    ReconImage(ObjectField::new(g.shape.clone(), values).expect("inverse DFT of finite data is finite"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn random_field(shape: &[usize], seed: u64) -> ObjectField {
        let mut rng = stream(seed, 0);
        let n = shape.iter().product();
        ObjectField::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn delta_and_constant_spectra() {
        let mut delta = ObjectField::zeros(vec![4, 4]).unwrap();
        delta.values_mut()[0] = 1.0;
        for c in dft_forward(&delta).values() {
            assert!((c.re - 0.25).abs() < 1e-15 && c.im.abs() < 1e-15);
        }
        let c = ObjectField::constant(vec![4, 8, 2], 1.5).unwrap();
        let g = dft_forward(&c);
        assert!((g.values()[0].re - 1.5 * 8.0).abs() < 1e-12);
        assert!(g.values()[1..].iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn parseval_and_round_trip() {
        let f = random_field(&[32, 32], 1);
        let g = dft_forward(&f);
        let ek: f64 = g.values().iter().map(|c| c.norm_sqr()).sum();
        let ex: f64 = f.values().iter().map(|v| v * v).sum();
        assert!((ek - ex).abs() / ex < 1e-10);
        let f64x = random_field(&[64, 64], 2);
        assert!(reconstruct(&dft_forward(&f64x)).max_abs_diff(&f64x) < 1e-5);
    }

    #[test]
    fn zero_noise_measure_is_dft() {
        let f = random_field(&[8, 8, 8], 3);
        let g = measure(&f, &ImagingConfig::new(3, 0.0), &mut stream(0, 0)).unwrap();
        assert_eq!(g, dft_forward(&f));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let f = random_field(&[8, 8], 3);
        assert!(matches!(
            measure(&f, &ImagingConfig::new(3, 0.1), &mut stream(0, 0)),
            Err(Error::Parameter(_))
        ));
        assert!(ImagingConfig::new(2, -1.0).validate().is_err());
    }

    #[test]
    fn zero_measurement_reconstructs_to_zero() {
        let g = Measurement::new(vec![4, 4], vec![Complex64::new(0.0, 0.0); 16]).unwrap();
        assert!(reconstruct(&g).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linearity_and_conjugate_symmetry() {
        let a = random_field(&[8, 6], 4);
        let b = random_field(&[8, 6], 5);
        let (alpha, beta) = (0.7, -1.3);
        let combo = ObjectField::new(
            vec![8, 6],
            a.values()
                .iter()
                .zip(b.values())
                .map(|(x, y)| alpha * x + beta * y)
                .collect(),
        )
        .unwrap();
        let (ga, gb, gc) = (dft_forward(&a), dft_forward(&b), dft_forward(&combo));
        let scale: f64 = gc.values().iter().map(|c| c.norm()).fold(0.0, f64::max);
        for ((x, y), z) in ga.values().iter().zip(gb.values()).zip(gc.values()) {
            assert!((x * alpha + y * beta - z).norm() / scale < 1e-10);
        }
        let f = random_field(&[6, 4, 5], 6);
        let g = dft_forward(&f);
        let s = g.shape().to_vec();
        for i in 0..s[0] {
            for j in 0..s[1] {
                for k in 0..s[2] {
                    let a = g.values()[(i * s[1] + j) * s[2] + k];
                    let (ni, nj, nk) = ((s[0] - i) % s[0], (s[1] - j) % s[1], (s[2] - k) % s[2]);
                    let b = g.values()[(ni * s[1] + nj) * s[2] + nk];
                    assert!((a - b.conj()).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn mask_zeroes_unsampled_entries() {
        let f = random_field(&[4, 4], 7);
        let mut cfg = ImagingConfig::new(2, 0.5);
        cfg.sampling_mask = Some((0..16).map(|i| i % 2 == 0).collect());
        let g = measure(&f, &cfg, &mut stream(1, 1)).unwrap();
        assert!(g.values().iter().skip(1).step_by(2).all(|c| c.norm() == 0.0));
    }
}
