//! Adversarial training: ambient (generator output passes through the
//! measurement and reconstruction operators) and baseline (generator output
//! compared with noisy reconstructions directly).

mod adam;
mod ambient;
mod loss;

use std::collections::VecDeque;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ambientsom_tensor::{grad_values, no_grad, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use adam::{Adam, AdamConfig};
pub use ambient::{ambient_chain, ambient_fake_batch, ambient_recon};
pub use loss::{
    discriminator_loss, discriminator_loss_var, generator_loss, generator_loss_var, gradient_penalty, r1_penalty,
    LossKind, WGAN_DRIFT,
};

use crate::imaging::{reconstruct, ImagingConfig, Measurement};
use crate::nets::checkpoint::Checkpoint;
use crate::nets::{from_fields, grow, Arch, DiscriminatorState, GeneratorState, NetConfig, ParamStore};
use crate::rng::{derive_seed, stream};
use crate::{Error, ReconImage, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Ambient,
    Baseline,
}

impl std::fmt::Display for TrainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrainMode::Ambient => "ambient",
            TrainMode::Baseline => "baseline",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub loss: LossKind,
    /// Batch size per stage; the last entry repeats for later stages.
    pub batch_size: Vec<usize>,
    /// Images shown per progressive stage (the whole run for other archs,
    /// unless `total_images` says otherwise).
    pub images_per_stage: u64,
    pub total_images: Option<u64>,
    /// Hard cap on optimisation steps.
    pub max_steps: Option<u64>,
    /// Share of each stage spent fading the new layers in.
    pub fade_fraction: f64,
    pub g_adam: AdamConfig,
    pub d_adam: AdamConfig,
    pub r1_weight: f64,
    /// Lazy regularisation: R1 is applied every this many steps.
    pub r1_interval: u64,
    pub gp_weight: f64,
    pub ema_decay: Option<f64>,
    pub w_avg_decay: f64,
    pub seed: u64,
    /// Write a checkpoint every this many steps (0 = only at the end).
    pub checkpoint_every: u64,
    /// The operator applied to generator output in ambient mode. Filled in
    /// from the imaging section of an experiment config.
    #[serde(skip)]
    pub imaging: ImagingConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Ambient,
            loss: LossKind::Logistic,
            batch_size: vec![16],
            images_per_stage: 20_000,
            total_images: None,
            max_steps: None,
            fade_fraction: 0.5,
            g_adam: AdamConfig::default(),
            d_adam: AdamConfig::default(),
            r1_weight: 1.0,
            r1_interval: 4,
            gp_weight: 10.0,
            ema_decay: None,
            w_avg_decay: 0.995,
            seed: 0,
            checkpoint_every: 0,
            imaging: ImagingConfig::new(2, 0.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, net: &NetConfig) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.fade_fraction) {
            return bad(format!("fade_fraction must lie in [0, 1], got {}", self.fade_fraction));
        }
        if self.batch_size.is_empty() || self.batch_size.contains(&0) {
            return bad("batch sizes must be positive".into());
        }
        if self.images_per_stage == 0 {
            return bad("images_per_stage must be positive".into());
        }
        for a in [&self.g_adam, &self.d_adam] {
            if !(a.lr > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
                return bad(format!("invalid optimizer settings {a:?}"));
            }
        }
        if self.r1_interval == 0 || self.r1_weight < 0.0 || self.gp_weight < 0.0 {
            return bad("penalty weights must be >= 0 and r1_interval positive".into());
        }
        if let Some(d) = self.ema_decay {
            if !(0.0..1.0).contains(&d) {
                return bad(format!("ema_decay must lie in [0, 1), got {d}"));
            }
        }
        self.imaging.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.imaging.dims != net.dims {
            return bad(format!(
                "imaging is {}-D but the networks are {}-D",
                self.imaging.dims, net.dims
            ));
        }
        net.validate()
    }

    pub fn batch_for(&self, stage_index: usize) -> usize {
        *self
            .batch_size
            .get(stage_index)
            .unwrap_or_else(|| self.batch_size.last().unwrap())
    }

    /// Number of schedule stages.
    pub fn stages(&self, net: &NetConfig) -> usize {
        if net.arch == Arch::Progressive {
            net.levels() + 1
        } else {
            1
        }
    }

    pub fn total_images(&self, net: &NetConfig) -> u64 {
        self.total_images
            .unwrap_or(self.images_per_stage * self.stages(net) as u64)
    }

    /// Images seen at which `grow` fires, in order.
    pub fn grow_points(&self, net: &NetConfig) -> Vec<u64> {
        (1..self.stages(net) as u64)
            .map(|s| s * self.images_per_stage)
            .collect()
    }
}

/// Fade-in weight after `images_in_stage` images of a freshly grown stage:
/// a linear ramp over the first `fade_fraction` of the stage, then 1.
pub fn fade_alpha(images_in_stage: u64, cfg: &TrainConfig) -> f64 {
    let fade_end = cfg.fade_fraction * cfg.images_per_stage as f64;
    if fade_end <= 0.0 {
        return 1.0;
    }
    (images_in_stage as f64 / fade_end).min(1.0)
}

/// Training data as handed to [`Trainer`].
#[derive(Clone, Debug)]
pub enum TrainData {
    /// Reconstructed once on load.
    Measurements(Vec<Measurement>),
    Recons(Vec<ReconImage>),
}

impl TrainData {
    fn into_recons(self) -> Vec<ReconImage> {
        match self {
            TrainData::Measurements(ms) => ms.iter().map(reconstruct).collect(),
            TrainData::Recons(r) => r,
        }
    }
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: u64,
    pub stage: usize,
    pub alpha: f64,
    pub images_seen: u64,
    pub d_loss: f64,
    pub g_loss: f64,
    pub penalty: f64,
    pub real_score: f64,
    pub fake_score: f64,
    pub wall_time: f64,
}

impl MetricRecord {
    /// Equality ignoring wall-clock time.
    pub fn same_run(&self, other: &Self) -> bool {
        Self {
            wall_time: 0.0,
            ..self.clone()
        } == Self {
            wall_time: 0.0,
            ..other.clone()
        }
    }
}

const METRIC_RING: usize = 1024;
pub const METRICS_FILE: &str = "metrics.ndjson";

#[derive(Clone, Debug)]
pub struct TrainState {
    pub gs: GeneratorState<f32>,
    pub ds: DiscriminatorState<f32>,
    pub g_opt: Adam<f32>,
    pub d_opt: Adam<f32>,
    pub ema: Option<ParamStore<f32>>,
    pub step: u64,
    pub images_seen: u64,
    pub recent: VecDeque<MetricRecord>,
}

impl TrainState {
    /// Generator used for sampling: EMA weights when enabled.
    pub fn sampling_generator(&self) -> GeneratorState<f32> {
        let mut g = self.gs.clone();
        if let Some(ema) = &self.ema {
            g.params = ema.clone();
        }
        g
    }
}

/// Owns the state, the cached data pyramid and the output directory.
pub struct Trainer {
    pub cfg: TrainConfig,
    pub state: TrainState,
    pub config_hash: String,
    pub grow_events: Vec<u64>,
    /// `[N, 1, s…]` real data per stage.
    pyramid: Vec<Tensor<f32>>,
    out_dir: Option<PathBuf>,
    started: Instant,
    time_offset: f64,
}

impl Trainer {
    pub fn new(net: &NetConfig, cfg: &TrainConfig, data: TrainData, config_hash: &str) -> Result<Self> {
        cfg.validate(net)?;
        let gs = GeneratorState::new(net.clone())?;
        let ds = DiscriminatorState::new(net.clone())?;
        let ema = cfg.ema_decay.map(|_| gs.params.clone());
        let state = TrainState {
            gs,
            ds,
            g_opt: Adam::new(cfg.g_adam),
            d_opt: Adam::new(cfg.d_adam),
            ema,
            step: 0,
            images_seen: 0,
            recent: VecDeque::new(),
        };
        Self::with_state(state, cfg, data, config_hash)
    }

    fn with_state(state: TrainState, cfg: &TrainConfig, data: TrainData, config_hash: &str) -> Result<Self> {
        let net = &state.gs.config;
        let recons = data.into_recons();
        if recons.is_empty() {
            return Err(Error::Config("empty training set".into()));
        }
        let expected = vec![net.resolution; net.dims];
        if let Some(bad) = recons.iter().find(|r| r.shape() != expected.as_slice()) {
            return Err(Error::Config(format!(
                "training item shape {:?} does not match network shape {expected:?}",
                bad.shape()
            )));
        }
        let refs: Vec<_> = recons.iter().map(|r| &r.0).collect();
        let mut level = from_fields::<f32>(&refs);
        let mut pyramid = vec![level.clone()];
        for _ in 0..net.levels() {
            level = ambientsom_tensor::kernels::downsample2(&level);
            pyramid.push(level.clone());
        }
        pyramid.reverse();
        Ok(Self {
            cfg: cfg.clone(),
            state,
            config_hash: config_hash.to_string(),
            grow_events: Vec::new(),
            pyramid,
            out_dir: None,
            started: Instant::now(),
            time_offset: 0.0,
        })
    }

    /// Continues from a checkpoint written by [`Trainer::checkpoint`]. The
    /// checkpoint must carry the same config hash.
    pub fn resume(ckpt: &Checkpoint, cfg: &TrainConfig, data: TrainData, config_hash: &str) -> Result<Self> {
        if ckpt.sidecar.config_hash != config_hash {
            return Err(Error::Integrity(format!(
                "checkpoint config hash {} does not match {config_hash}",
                ckpt.sidecar.config_hash
            )));
        }
        cfg.validate(&ckpt.sidecar.net)?;
        let extra: ResumeExtra = serde_json::from_value(ckpt.sidecar.extra.clone())
            .map_err(|e| Error::Integrity(format!("checkpoint lacks optimizer state: {e}")))?;
        let optimizer = |prefix: &str, config: AdamConfig, t: u64| -> Result<Adam<f32>> {
            Ok(Adam {
                config,
                t,
                m: ckpt.group(&format!("{prefix}.m"))?.clone(),
                v: ckpt.group(&format!("{prefix}.v"))?.clone(),
            })
        };
        let state = TrainState {
            gs: ckpt.generator()?,
            ds: ckpt.discriminator()?,
            g_opt: optimizer("adam.generator", cfg.g_adam, extra.g_adam_t)?,
            d_opt: optimizer("adam.discriminator", cfg.d_adam, extra.d_adam_t)?,
            ema: ckpt.groups.get("ema").cloned(),
            step: ckpt.sidecar.step,
            images_seen: extra.images_seen,
            recent: VecDeque::new(),
        };
        let mut t = Self::with_state(state, cfg, data, config_hash)?;
        t.grow_events = extra.grow_events;
        t.time_offset = extra.wall_time;
        Ok(t)
    }

    /// Directory receiving `metrics.ndjson` and `checkpoints/`. On resume,
    /// log lines past the current step are dropped.
    pub fn set_output(&mut self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let log = dir.join(METRICS_FILE);
        if log.exists() {
            let kept: Vec<MetricRecord> = read_metrics(&log)?
                .into_iter()
                .filter(|r| r.step < self.state.step)
                .collect();
            let mut text = String::new();
            for r in &kept {
                text.push_str(&serde_json::to_string(r).expect("record serialises"));
                text.push('\n');
            }
            crate::nets::checkpoint::write_atomic(&log, text.as_bytes())?;
        }
        self.out_dir = Some(dir.to_path_buf());
        Ok(())
    }

    fn net(&self) -> &NetConfig {
        &self.state.gs.config
    }

    pub fn total_images(&self) -> u64 {
        self.cfg.total_images(self.net())
    }

    pub fn finished(&self) -> bool {
        self.state.images_seen >= self.total_images() || self.cfg.max_steps.is_some_and(|m| self.state.step >= m)
    }

    /// Schedule stage index (0-based position in the stage list).
    fn stage_index(&self) -> usize {
        self.state.gs.stage - self.net().initial_stage()
    }

    /// Grows when the image count has reached the next boundary, then sets
    /// alpha for the current position in the stage.
    fn advance_schedule(&mut self) -> Result<()> {
        let ips = self.cfg.images_per_stage;
        while self.net().arch == Arch::Progressive
            && self.state.gs.stage < self.net().levels()
            && self.state.images_seen >= (self.stage_index() as u64 + 1) * ips
        {
            let (gs, ds) = grow(self.state.gs.clone(), self.state.ds.clone())?;
            self.state.gs = gs;
            self.state.ds = ds;
            // Restart the average: lagging old layers mixed with freshly
            // initialised new ones give a generator that never existed.
            if let Some(ema) = &mut self.state.ema {
                *ema = self.state.gs.params.clone();
            }
            self.grow_events.push(self.state.images_seen);
        }
        let alpha = if self.net().arch == Arch::Progressive && self.state.gs.stage > 0 {
            fade_alpha(self.state.images_seen - self.stage_index() as u64 * ips, &self.cfg)
        } else {
            1.0
        };
        self.state.gs.alpha = alpha;
        self.state.ds.alpha = alpha;
        Ok(())
    }

    /// Batch size for this step, cut short so stage boundaries are hit exactly.
    fn batch_size(&self) -> usize {
        let b = self.cfg.batch_for(self.stage_index()) as u64;
        let mut limit = self.total_images() - self.state.images_seen.min(self.total_images());
        if self.net().arch == Arch::Progressive && self.state.gs.stage < self.net().levels() {
            let boundary = (self.stage_index() as u64 + 1) * self.cfg.images_per_stage;
            limit = limit.min(boundary - self.state.images_seen);
        }
        b.min(limit.max(1)) as usize
    }

    /// Real batch at the current resolution, blended with its coarser
    /// version while a new stage fades in.
    fn real_batch<R: Rng>(&self, batch: usize, rng: &mut R) -> Tensor<f32> {
        let stage = self.state.gs.stage;
        let data = &self.pyramid[stage];
        let n = data.shape()[0];
        let rows: Vec<Tensor<f32>> = (0..batch).map(|_| data.index(rng.random_range(0..n))).collect();
        let refs: Vec<_> = rows.iter().collect();
        let real = Tensor::stack(&refs);
        let alpha = self.state.ds.alpha;
        if alpha < 1.0 && stage > 0 {
            let coarse = ambientsom_tensor::kernels::upsample2(&ambientsom_tensor::kernels::downsample2(&real));
            let a = alpha as f32;
            coarse.zip_with(&real, |c, r| c + (r - c) * a)
        } else {
            real
        }
    }

    /// Generator output mapped into the discriminator's domain.
    fn fake_branch<R: Rng>(&self, p: &crate::nets::Bound<f32>, batch: usize, rng: &mut R) -> Result<Var<f32>> {
        let gs = &self.state.gs;
        let k = gs.latent_dim();
        let z: Vec<f32> = (0..batch * k)
            .map(|_| rng.sample::<f32, _>(rand_distr::StandardNormal))
            .collect();
        let z = Var::constant(Tensor::from_vec(vec![batch, k], z));
        let noise: Vec<_> = gs.sample_noise(batch, rng).into_iter().map(Var::constant).collect();
        let x = gs.forward(p, &z, Some(&noise));
        match self.cfg.mode {
            TrainMode::Baseline => Ok(x),
            TrainMode::Ambient => ambient_chain(&x, &self.cfg.imaging, gs.config.resolution, rng),
        }
    }

    fn step_rng(&self) -> crate::rng::Stream {
        stream(derive_seed(self.cfg.seed, "train-step"), self.state.step)
    }

    /// Discriminator update; touches only discriminator parameters.
    pub fn d_step<R: Rng>(&mut self, rng: &mut R) -> Result<(f64, f64, f64, f64)> {
        let batch = self.batch_size();
        let real_t = self.real_batch(batch, rng);
        let g_params = self.state.gs.params.bind(false);
        let fake = no_grad(|| self.fake_branch(&g_params, batch, rng))?.detach();
        let ds = &self.state.ds;
        let p = ds.params.bind(true);
        let real = Var::param(real_t.clone());
        let real_scores = ds.forward(&p, &real);
        let fake_scores = ds.forward(&p, &fake);
        let mut loss = discriminator_loss_var(&real_scores, &fake_scores, self.cfg.loss);
        let mut penalty = 0.0;
        match self.cfg.loss {
            LossKind::Logistic if self.cfg.r1_weight > 0.0 && self.state.step.is_multiple_of(self.cfg.r1_interval) => {
                let r1 = r1_penalty(&real_scores, &real, self.cfg.r1_weight * self.cfg.r1_interval as f64);
                penalty = r1.value().item() as f64;
                loss = loss.add(&r1);
            }
            LossKind::WassersteinGp if self.cfg.gp_weight > 0.0 => {
                let eps: Vec<f32> = (0..batch).map(|_| rng.random::<f32>()).collect();
                let mut eshape = vec![1; real_t.rank()];
                eshape[0] = batch;
                let eps = Tensor::from_vec(eshape, eps);
                let inter = fake
                    .value()
                    .add(&real_t.sub(fake.value()).mul(&eps.broadcast_to(real_t.shape())));
                let xh = Var::param(inter);
                let gp = gradient_penalty(&ds.forward(&p, &xh), &xh, self.cfg.gp_weight);
                penalty = gp.value().item() as f64;
                loss = loss.add(&gp);
            }
            _ => {}
        }
        let d_loss = loss.value().item() as f64;
        if !d_loss.is_finite() {
            return Err(Error::Numerical(format!(
                "discriminator loss became {d_loss} at step {}",
                self.state.step
            )));
        }
        let leaves = p.trainable();
        let refs: Vec<_> = leaves.iter().map(|(_, v)| v).collect();
        let grads = grad_values(&loss, &refs);
        let named: Vec<_> = leaves.iter().map(|(n, _)| n.clone()).zip(grads).collect();
        self.state.d_opt.step(&mut self.state.ds.params, &named);
        Ok((
            d_loss,
            penalty,
            real_scores.value().mean() as f64,
            fake_scores.value().mean() as f64,
        ))
    }

    /// Generator update; touches only generator parameters.
    pub fn g_step<R: Rng>(&mut self, rng: &mut R) -> Result<f64> {
        let batch = self.batch_size();
        let p = self.state.gs.params.bind(true);
        let fake = self.fake_branch(&p, batch, rng)?;
        let d_params = self.state.ds.params.bind(false);
        let scores = self.state.ds.forward(&d_params, &fake);
        let loss = generator_loss_var(&scores, self.cfg.loss);
        let g_loss = loss.value().item() as f64;
        if !g_loss.is_finite() {
            return Err(Error::Numerical(format!(
                "generator loss became {g_loss} at step {}",
                self.state.step
            )));
        }
        let leaves = p.trainable();
        let refs: Vec<_> = leaves.iter().map(|(_, v)| v).collect();
        let grads = grad_values(&loss, &refs);
        let named: Vec<_> = leaves.iter().map(|(n, _)| n.clone()).zip(grads).collect();
        self.state.g_opt.step(&mut self.state.gs.params, &named);
        if self.state.gs.config.arch == Arch::Styled {
            let k = self.state.gs.latent_dim();
            let z: Vec<f32> = (0..batch * k)
                .map(|_| rng.sample::<f32, _>(rand_distr::StandardNormal))
                .collect();
            let z = Var::constant(Tensor::from_vec(vec![batch, k], z));
            let w = no_grad(|| self.state.gs.map_var(&self.state.gs.params.bind(false), &z))?;
            let mean = w.value().sum_to(&[1, k]).scale(1.0 / batch as f32).reshape(&[k]);
            self.state.gs.update_w_avg(&mean, self.cfg.w_avg_decay);
        }
        if let (Some(ema), Some(decay)) = (&mut self.state.ema, self.cfg.ema_decay) {
            let d = decay as f32;
            for (name, p) in self.state.gs.params.iter() {
                let e = ema.get_mut(name).expect("ema tracks every parameter");
                e.value = p.value.zip_with(&e.value, |p, e| p + (e - p) * d);
            }
        }
        Ok(g_loss)
    }

    /// One D update followed by one G update.
    pub fn step(&mut self) -> Result<MetricRecord> {
        self.advance_schedule()?;
        let batch = self.batch_size();
        let mut rng = self.step_rng();
        let (d_loss, penalty, real_score, fake_score) = self.d_step(&mut rng)?;
        let g_loss = self.g_step(&mut rng)?;
        let record = MetricRecord {
            step: self.state.step,
            stage: self.state.gs.stage,
            alpha: self.state.gs.alpha,
            images_seen: self.state.images_seen,
            d_loss,
            g_loss,
            penalty,
            real_score,
            fake_score,
            wall_time: self.time_offset + self.started.elapsed().as_secs_f64(),
        };
        self.state.step += 1;
        self.state.images_seen += batch as u64;
        self.state.recent.push_back(record.clone());
        if self.state.recent.len() > METRIC_RING {
            self.state.recent.pop_front();
        }
        if let Some(dir) = &self.out_dir {
            let path = dir.join(METRICS_FILE);
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(|e| Error::io(&path, e))?;
            writeln!(f, "{}", serde_json::to_string(&record).expect("record serialises"))
                .map_err(|e| Error::io(&path, e))?;
            if self.cfg.checkpoint_every > 0
                && self.state.step.is_multiple_of(self.cfg.checkpoint_every)
                && !self.finished()
            {
                let ckpt_dir = dir.join("checkpoints").join(format!("step-{:08}", self.state.step));
                self.checkpoint().save(&ckpt_dir)?;
            }
        }
        Ok(record)
    }

    /// Runs until the schedule (or `max_steps`) is exhausted. Returns the
    /// records produced by this call and writes a final checkpoint when an
    /// output directory is set.
    pub fn run(&mut self) -> Result<Vec<MetricRecord>> {
        let mut out = Vec::new();
        while !self.finished() {
            out.push(self.step()?);
        }
        if let Some(dir) = self.out_dir.clone() {
            self.checkpoint().save(&dir.join("checkpoints").join("final"))?;
        }
        Ok(out)
    }

    /// Snapshot of everything needed to resume.
    pub fn checkpoint(&self) -> Checkpoint {
        let s = &self.state;
        let mut ck = Checkpoint::new(&s.gs, &s.ds, &self.cfg.mode.to_string(), s.step, &self.config_hash);
        ck.groups.insert("adam.generator.m".into(), s.g_opt.m.clone());
        ck.groups.insert("adam.generator.v".into(), s.g_opt.v.clone());
        ck.groups.insert("adam.discriminator.m".into(), s.d_opt.m.clone());
        ck.groups.insert("adam.discriminator.v".into(), s.d_opt.v.clone());
        if let Some(ema) = &s.ema {
            ck.groups.insert("ema".into(), ema.clone());
        }
        ck.sidecar.extra = serde_json::to_value(ResumeExtra {
            images_seen: s.images_seen,
            g_adam_t: s.g_opt.t,
            d_adam_t: s.d_opt.t,
            g_adam: s.g_opt.config,
            d_adam: s.d_opt.config,
            loss: self.cfg.loss,
            grow_events: self.grow_events.clone(),
            wall_time: self.time_offset + self.started.elapsed().as_secs_f64(),
        })
        .expect("extras serialise");
        ck
    }
}

#[derive(Serialize, Deserialize)]
struct ResumeExtra {
    images_seen: u64,
    g_adam_t: u64,
    d_adam_t: u64,
    g_adam: AdamConfig,
    d_adam: AdamConfig,
    loss: LossKind,
    grow_events: Vec<u64>,
    wall_time: f64,
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Integrity(format!("{}: {e}", path.display()))))
        .collect()
}

/// Everything [`train`] produces.
pub struct TrainOutcome {
    pub state: TrainState,
    pub metrics: Vec<MetricRecord>,
    pub grow_events: Vec<u64>,
}

/// Trains from scratch; see [`Trainer`] for finer control.
pub fn train(
    data: TrainData,
    net: &NetConfig,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
    config_hash: &str,
) -> Result<TrainOutcome> {
    let mut t = Trainer::new(net, cfg, data, config_hash)?;
    if let Some(dir) = out_dir {
        t.set_output(dir)?;
    }
    let metrics = t.run()?;
    Ok(TrainOutcome {
        state: t.state,
        metrics,
        grow_events: t.grow_events,
    })
}
