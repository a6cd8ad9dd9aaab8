//! Generator and discriminator networks.
//!
//! Three architectures share one parameter store and one set of layers:
//! a plain convolutional pair built directly at the final resolution, a
//! progressive-growing pair that starts at `4^d` and doubles per stage, and a
//! style-based generator (paired with the plain discriminator).

pub mod checkpoint;
mod layers;
mod params;
mod progressive;
mod styled;

use ambientsom_tensor::{no_grad, Float, Tensor, Var};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use params::{Bound, Param, ParamStore};

use crate::field::{ObjectField, ReconImage};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Hash)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Plain,
    Progressive,
    Styled,
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Arch::Plain => "plain",
            Arch::Progressive => "progressive",
            Arch::Styled => "styled",
        })
    }
}

/// Architecture hyperparameters shared by a generator/discriminator pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    pub arch: Arch,
    /// 2 or 3.
    pub dims: usize,
    /// Final side length; must be `4·2^n`.
    pub resolution: usize,
    pub latent_dim: usize,
    pub base_channels: usize,
    pub max_channels: usize,
    pub mapping_depth: usize,
    pub equalized_lr: bool,
    pub pixel_norm: bool,
    pub minibatch_stddev: bool,
    /// Seed for parameter initialisation.
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            arch: Arch::Progressive,
            dims: 2,
            resolution: 64,
            latent_dim: 128,
            base_channels: 16,
            max_channels: 256,
            mapping_depth: 4,
            equalized_lr: true,
            pixel_norm: true,
            minibatch_stddev: true,
            seed: 0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dims == 2 || self.dims == 3) {
            return Err(Error::Config(format!("dims must be 2 or 3, got {}", self.dims)));
        }
        if self.resolution < 4 || !self.resolution.is_power_of_two() {
            return Err(Error::Config(format!(
                "resolution must be 4·2^n, got {}",
                self.resolution
            )));
        }
        if self.latent_dim == 0 || self.base_channels == 0 || self.max_channels == 0 {
            return Err(Error::Config("latent_dim and channel counts must be positive".into()));
        }
        if self.arch == Arch::Styled && self.mapping_depth == 0 {
            return Err(Error::Config("styled generator needs a mapping network".into()));
        }
        Ok(())
    }

    /// Index of the last stage (`resolution = 4·2^levels`).
    pub fn levels(&self) -> usize {
        (self.resolution / 4).trailing_zeros() as usize
    }

    pub fn channels(&self, stage: usize) -> usize {
        let shift = (self.levels() - stage).min(20);
        self.max_channels.min(self.base_channels << shift)
    }

    pub fn channel_schedule(&self) -> Vec<usize> {
        (0..=self.levels()).map(|s| self.channels(s)).collect()
    }

    pub fn side(stage: usize) -> usize {
        4 << stage
    }

    /// Stage the networks are first built at.
    pub fn initial_stage(&self) -> usize {
        match self.arch {
            Arch::Progressive => 0,
            Arch::Plain | Arch::Styled => self.levels(),
        }
    }

    fn field_shape(&self, stage: usize) -> Vec<usize> {
        vec![Self::side(stage); self.dims]
    }
}

/// A point in latent space.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentVector(pub Vec<f64>);

impl LatentVector {
    pub fn sample<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Self {
        Self((0..k).map(|_| rng.sample(StandardNormal)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn latent_batch<T: Float>(zs: &[LatentVector], k: usize) -> Result<Var<T>> {
    if zs.is_empty() {
        return Err(Error::param("empty latent batch"));
    }
    let mut data = Vec::with_capacity(zs.len() * k);
    for z in zs {
        if z.len() != k {
            return Err(Error::Parameter(format!(
                "latent length {} does not match k = {k}",
                z.len()
            )));
        }
        data.extend(z.0.iter().map(|&v| T::of(v)));
    }
    Ok(Var::constant(Tensor::from_vec(vec![zs.len(), k], data)))
}

/// Splits a `[B, 1, S…]` tensor into fields.
pub fn to_fields<T: Float>(x: &Tensor<T>) -> Vec<ObjectField> {
    let shape = x.shape();
    let spatial = shape[2..].to_vec();
    let n: usize = spatial.iter().product();
    x.data()
        .chunks(n)
        .map(|c| {
            ObjectField::new(spatial.clone(), c.iter().map(|v| v.as_f64()).collect()).expect("finite network output")
        })
        .collect()
}

/// Stacks fields of a common shape into `[B, 1, S…]`.
pub fn from_fields<T: Float>(fields: &[&ObjectField]) -> Tensor<T> {
    let spatial = fields[0].shape().to_vec();
    let mut shape = vec![fields.len(), 1];
    shape.extend(&spatial);
    let data = fields
        .iter()
        .flat_map(|f| f.values().iter().map(|&v| T::of(v)))
        .collect();
    Tensor::from_vec(shape, data)
}

#[derive(Clone, Debug)]
pub struct GeneratorState<T = f32> {
    pub config: NetConfig,
    pub params: ParamStore<T>,
    pub stage: usize,
    pub alpha: f64,
}

#[derive(Clone, Debug)]
pub struct DiscriminatorState<T = f32> {
    pub config: NetConfig,
    pub params: ParamStore<T>,
    pub stage: usize,
    pub alpha: f64,
}

impl<T: Float> GeneratorState<T> {
    pub fn new(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let stage = config.initial_stage();
        match config.arch {
            Arch::Styled => styled::build(&mut params, &config),
            Arch::Plain => {
                for s in 0..=stage {
                    progressive::add_generator_stage(&mut params, &config, s, s == stage);
                }
            }
            Arch::Progressive => progressive::add_generator_stage(&mut params, &config, 0, true),
        }
        Ok(Self {
            config,
            params,
            stage,
            alpha: 1.0,
        })
    }

    pub fn side(&self) -> usize {
        NetConfig::side(self.stage)
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.config.field_shape(self.stage)
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    /// Shapes `[B, 1, 4·2^l …]` of the per-level noise inputs (styled only).
    pub fn noise_shapes(&self, batch: usize) -> Vec<Vec<usize>> {
        if self.config.arch != Arch::Styled {
            return Vec::new();
        }
        (0..=self.config.levels())
            .map(|l| {
                let mut s = vec![batch, 1];
                s.extend(self.config.field_shape(l));
                s
            })
            .collect()
    }

    /// Fresh standard-normal noise inputs for a batch.
    pub fn sample_noise<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<Tensor<T>> {
        self.noise_shapes(batch)
            .into_iter()
            .map(|s| {
                let n = s.iter().product();
                Tensor::from_vec(s, (0..n).map(|_| T::of(rng.sample(StandardNormal))).collect())
            })
            .collect()
    }

    /// Differentiable forward pass: `z: [B, k] → [B, 1, S…]`. Styled
    /// generators use zero noise when `noise` is `None`.
    pub fn forward(&self, p: &Bound<T>, z: &Var<T>, noise: Option<&[Var<T>]>) -> Var<T> {
        match self.config.arch {
            Arch::Styled => {
                let w = styled::map(&self.config, p, z);
                let zeros;
                let noise = match noise {
                    Some(n) => n,
                    None => {
                        zeros = self
                            .noise_shapes(z.shape()[0])
                            .into_iter()
                            .map(|s| Var::constant(Tensor::zeros(s)))
                            .collect::<Vec<_>>();
                        &zeros
                    }
                };
                styled::synthesize(&self.config, p, &w, noise)
            }
            Arch::Plain => progressive::generate(&self.config, p, z, self.stage, 1.0),
            Arch::Progressive => progressive::generate(&self.config, p, z, self.stage, self.alpha),
        }
    }

    /// Generator outputs for a batch of latents.
    pub fn generate_batch(&self, zs: &[LatentVector]) -> Result<Vec<ObjectField>> {
        let z = latent_batch(zs, self.config.latent_dim)?;
        let out = no_grad(|| self.forward(&self.params.bind(false), &z, None));
        Ok(to_fields(out.value()))
    }

    /// Like [`generate_batch`](Self::generate_batch), but styled generators
    /// draw fresh per-level noise from `rng` instead of using zero noise.
    pub fn sample_batch<R: Rng + ?Sized>(&self, zs: &[LatentVector], rng: &mut R) -> Result<Vec<ObjectField>> {
        let z = latent_batch(zs, self.config.latent_dim)?;
        let noise: Vec<_> = self
            .sample_noise(zs.len(), rng)
            .into_iter()
            .map(Var::constant)
            .collect();
        let out = no_grad(|| self.forward(&self.params.bind(false), &z, Some(&noise)));
        Ok(to_fields(out.value()))
    }

    /// `f̂ = G(z)` at the current stage (zero noise for styled generators).
    pub fn generate(&self, z: &LatentVector) -> Result<ObjectField> {
        Ok(self.generate_batch(std::slice::from_ref(z))?.remove(0))
    }

    fn require_styled(&self) -> Result<()> {
        if self.config.arch != Arch::Styled {
            return Err(Error::Mode(format!(
                "operation needs a styled generator, this one is {}",
                self.config.arch
            )));
        }
        Ok(())
    }

    /// Style vector `w` for latent `z`.
    pub fn map_latent(&self, z: &LatentVector) -> Result<Vec<f64>> {
        self.require_styled()?;
        let z = latent_batch(std::slice::from_ref(z), self.config.latent_dim)?;
        let w = no_grad(|| styled::map(&self.config, &self.params.bind(false), &z));
        Ok(w.value().data().iter().map(|v| v.as_f64()).collect())
    }

    /// Differentiable mapping network, for `[B, k]` latents.
    pub fn map_var(&self, p: &Bound<T>, z: &Var<T>) -> Result<Var<T>> {
        self.require_styled()?;
        Ok(styled::map(&self.config, p, z))
    }

    /// Synthesis from explicit style inputs.
    pub fn generate_styled(&self, inputs: &StyleInputs) -> Result<ObjectField> {
        self.require_styled()?;
        let k = self.config.latent_dim;
        let shapes = self.noise_shapes(1);
        if inputs.noise_maps.len() != shapes.len() {
            return Err(Error::Parameter(format!(
                "expected {} noise maps, got {}",
                shapes.len(),
                inputs.noise_maps.len()
            )));
        }
        for (m, s) in inputs.noise_maps.iter().zip(&shapes) {
            if m.shape() != &s[2..] {
                return Err(Error::Parameter(format!(
                    "noise map shape {:?} does not match level shape {:?}",
                    m.shape(),
                    &s[2..]
                )));
            }
        }
        if let Some(psi) = inputs.truncation {
            if !(psi > 0.0 && psi <= 1.0) {
                return Err(Error::Parameter(format!("truncation must lie in (0, 1], got {psi}")));
            }
        }
        let p = self.params.bind(false);
        let out = no_grad(|| -> Result<Var<T>> {
            let w = match &inputs.style {
                StyleSource::Latent(z) => styled::map(&self.config, &p, &latent_batch(std::slice::from_ref(z), k)?),
                StyleSource::Mapped(w) => {
                    if w.len() != k {
                        return Err(Error::Parameter(format!("style length {} does not match {k}", w.len())));
                    }
                    Var::constant(Tensor::from_vec(vec![1, k], w.iter().map(|&v| T::of(v)).collect()))
                }
            };
            let w = match inputs.truncation {
                Some(psi) => styled::truncate(&p, &w, psi),
                None => w,
            };
            let noise: Vec<_> = inputs
                .noise_maps
                .iter()
                .map(|m| Var::constant(from_fields(&[m])))
                .collect();
            Ok(styled::synthesize(&self.config, &p, &w, &noise))
        })?;
        Ok(to_fields(out.value()).remove(0))
    }

    /// Updates the running average of mapped styles used for truncation.
    pub fn update_w_avg(&mut self, w_batch_mean: &Tensor<T>, decay: f64) {
        if let Some(avg) = self.params.get_mut("w_avg") {
            let d = T::of(decay);
            avg.value = avg.value.zip_with(w_batch_mean, |a, b| b + (a - b) * d);
        }
    }
}

impl<T: Float> DiscriminatorState<T> {
    pub fn new(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let stage = config.initial_stage();
        if config.arch == Arch::Progressive {
            progressive::add_discriminator_stage(&mut params, &config, 0, true);
        } else {
            for s in 0..=stage {
                progressive::add_discriminator_stage(&mut params, &config, s, s == stage);
            }
        }
        Ok(Self {
            config,
            params,
            stage,
            alpha: 1.0,
        })
    }

    pub fn input_shape(&self) -> Vec<usize> {
        self.config.field_shape(self.stage)
    }

    /// Differentiable forward pass: `[B, 1, S…] → [B, 1]`.
    pub fn forward(&self, p: &Bound<T>, x: &Var<T>) -> Var<T> {
        let alpha = if self.config.arch == Arch::Progressive {
            self.alpha
        } else {
            1.0
        };
        progressive::discriminate(&self.config, p, x, self.stage, alpha)
    }

    pub fn discriminate_batch(&self, xs: &[ReconImage]) -> Result<Vec<f64>> {
        if xs.is_empty() {
            return Err(Error::param("empty discriminator batch"));
        }
        let expected = self.input_shape();
        for x in xs {
            if x.shape() != expected.as_slice() {
                return Err(Error::Parameter(format!(
                    "input shape {:?} does not match stage shape {expected:?}",
                    x.shape()
                )));
            }
        }
        let refs: Vec<&ObjectField> = xs.iter().map(|x| &x.0).collect();
        let input = Var::constant(from_fields::<T>(&refs));
        let out = no_grad(|| self.forward(&self.params.bind(false), &input));
        Ok(out.value().data().iter().map(|v| v.as_f64()).collect())
    }

    /// Real-valued score of one reconstruction.
    pub fn discriminate(&self, x: &ReconImage) -> Result<f64> {
        Ok(self.discriminate_batch(std::slice::from_ref(x))?[0])
    }
}

/// Where the style vector comes from.
#[derive(Clone, Debug)]
pub enum StyleSource {
    Latent(LatentVector),
    Mapped(Vec<f64>),
}

/// Everything the styled synthesis network consumes.
#[derive(Clone, Debug)]
pub struct StyleInputs {
    pub style: StyleSource,
    /// One map per level, shaped `4·2^l` per axis.
    pub noise_maps: Vec<ObjectField>,
    pub truncation: Option<f64>,
}

impl StyleInputs {
    pub fn zero_noise<T: Float>(gs: &GeneratorState<T>, style: StyleSource) -> Self {
        let noise_maps = (0..=gs.config.levels())
            .map(|l| ObjectField::zeros(gs.config.field_shape(l)).expect("valid level shape"))
            .collect();
        Self {
            style,
            noise_maps,
            truncation: None,
        }
    }

    pub fn random_noise<T: Float, R: Rng + ?Sized>(gs: &GeneratorState<T>, style: StyleSource, rng: &mut R) -> Self {
        let noise_maps = (0..=gs.config.levels())
            .map(|l| {
                let shape = gs.config.field_shape(l);
                let n = shape.iter().product();
                ObjectField::new(shape, (0..n).map(|_| rng.sample(StandardNormal)).collect()).expect("finite noise")
            })
            .collect();
        Self {
            style,
            noise_maps,
            truncation: None,
        }
    }
}

/// Adds the next stage to both networks, preserving every existing
/// parameter and resetting the fade to `alpha = 0`.
pub fn grow<T: Float>(
    mut gs: GeneratorState<T>,
    mut ds: DiscriminatorState<T>,
) -> Result<(GeneratorState<T>, DiscriminatorState<T>)> {
    if gs.config.arch != Arch::Progressive || ds.config.arch != Arch::Progressive {
        return Err(Error::Schedule(format!("{} networks do not grow", gs.config.arch)));
    }
    if gs.stage != ds.stage {
        return Err(Error::Schedule(format!(
            "generator at stage {} but discriminator at stage {}",
            gs.stage, ds.stage
        )));
    }
    let next = gs.stage + 1;
    if next > gs.config.levels() {
        return Err(Error::Schedule(format!(
            "already at the final stage {} ({}^{})",
            gs.stage,
            gs.side(),
            gs.config.dims
        )));
    }
    progressive::add_generator_stage(&mut gs.params, &gs.config, next, true);
    progressive::add_discriminator_stage(&mut ds.params, &ds.config, next, true);
    gs.stage = next;
    ds.stage = next;
    gs.alpha = 0.0;
    ds.alpha = 0.0;
    Ok((gs, ds))
}

impl<T: Float> GeneratorState<T> {
    pub fn cast<U: Float>(&self) -> GeneratorState<U> {
        GeneratorState {
            config: self.config.clone(),
            params: self.params.cast(),
            stage: self.stage,
            alpha: self.alpha,
        }
    }
}

impl<T: Float> DiscriminatorState<T> {
    pub fn cast<U: Float>(&self) -> DiscriminatorState<U> {
        DiscriminatorState {
            config: self.config.clone(),
            params: self.params.cast(),
            stage: self.stage,
            alpha: self.alpha,
        }
    }
}
