//! The measurement-then-reconstruction chain `O(H_n(·))` as a differentiable
//! graph op, applied to generator output inside the training loop.

use ambientsom_tensor::{no_grad, Float, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::imaging::ImagingConfig;
use crate::nets::{to_fields, GeneratorState, LatentVector};
use crate::{Error, ReconImage, Result};

/// `O(H_n(x))` for `x: [B, 1, s…]`.
///
/// When `s` is below the imaging resolution `full_side` the batch is first
/// nearest-upsampled to full size, measured and reconstructed there, then
/// average-pooled back to `s`. Pooling a nearest-upsampled field is exact, so
/// the signal passes unchanged while the noise matches what pooled real
/// reconstructions carry.
pub fn ambient_chain<T: Float, R: Rng + ?Sized>(
    x: &Var<T>,
    imaging: &ImagingConfig,
    full_side: usize,
    rng: &mut R,
) -> Result<Var<T>> {
    let dims = x.shape().len() - 2;
    if dims != imaging.dims {
        return Err(Error::Config(format!(
            "imaging is {}-D but the generator is {}-D",
            imaging.dims, dims
        )));
    }
    let side = x.shape()[2];
    if full_side < side || !full_side.is_multiple_of(side) || !(full_side / side).is_power_of_two() {
        return Err(Error::Config(format!(
            "cannot map side {side} onto imaging side {full_side}"
        )));
    }
    let levels = (full_side / side).trailing_zeros();
    let mut h = x.clone();
    for _ in 0..levels {
        h = h.upsample2();
    }
    let mut spec = h.dft(dims);
    if imaging.noise_std > 0.0 {
        let normal = Normal::new(0.0, imaging.noise_std).map_err(|e| Error::param(e.to_string()))?;
        let shape = spec.shape().to_vec();
        let n = shape.iter().product();
        let noise = (0..n).map(|_| T::of(normal.sample(rng))).collect();
        spec = spec.add(&Var::constant(Tensor::from_vec(shape, noise)));
    }
    if let Some(mask) = &imaging.sampling_mask {
        let voxels = full_side.pow(dims as u32);
        if mask.len() != voxels {
            return Err(Error::Config("sampling mask does not match the imaging grid".into()));
        }
        let mut shape = vec![full_side; dims];
        shape.push(1);
        let m = mask.iter().map(|&k| if k { T::one() } else { T::zero() }).collect();
        spec = spec.mul(&Var::constant(Tensor::from_vec(shape, m)));
    }
    let mut r = spec.idft_real(dims);
    for _ in 0..levels {
        r = r.downsample2();
    }
    Ok(r)
}

/// Samples `batch` latents, generates, and passes the objects through
/// `O(H_n(·))` with fresh noise for every sample. Returns reconstructions at
/// the generator's current resolution.
pub fn ambient_fake_batch<T: Float, R: Rng + ?Sized>(
    gs: &GeneratorState<T>,
    imaging: &ImagingConfig,
    batch: usize,
    rng: &mut R,
) -> Result<Vec<ReconImage>> {
    let zs: Vec<_> = (0..batch).map(|_| LatentVector::sample(gs.latent_dim(), rng)).collect();
    ambient_recon(gs, &zs, imaging, rng)
}

/// As [`ambient_fake_batch`] for given latents.
pub fn ambient_recon<T: Float, R: Rng + ?Sized>(
    gs: &GeneratorState<T>,
    zs: &[LatentVector],
    imaging: &ImagingConfig,
    rng: &mut R,
) -> Result<Vec<ReconImage>> {
    imaging.validate()?;
    let objects = gs.sample_batch(zs, rng)?;
    let refs: Vec<_> = objects.iter().collect();
    let x = Var::constant(crate::nets::from_fields::<T>(&refs));
    let full = gs.config.resolution;
    let out = no_grad(|| ambient_chain(&x, imaging, full, rng))?;
    Ok(to_fields(out.value()).into_iter().map(ReconImage).collect())
}
