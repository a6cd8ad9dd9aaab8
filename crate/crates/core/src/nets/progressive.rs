//! Progressive-growing generator and discriminator (also used, built at the
//! final stage, for the plain architecture).

use ambientsom_tensor::{Float, Var};

use super::layers::*;
use super::params::{Bound, ParamStore};
use super::NetConfig;

pub(crate) fn add_generator_stage<T: Float>(store: &mut ParamStore<T>, cfg: &NetConfig, stage: usize, head: bool) {
    let d = cfg.dims;
    let init = WeightInit::he(cfg.equalized_lr);
    let c = cfg.channels(stage);
    if stage == 0 {
        let base = 4usize.pow(d as u32);
        // Dense layer feeding a 4^d grid: gain √2 / √(4^d) as in ProGAN.
        let dense_init = init.with_gain(std::f64::consts::SQRT_2 / (base as f64).sqrt());
        add_dense(store, cfg.seed, "g0.dense", cfg.latent_dim, c * base, dense_init, 0.0);
        add_conv(store, cfg.seed, "g0.conv", c, c, 3, d, init);
    } else {
        let prev = cfg.channels(stage - 1);
        add_conv(store, cfg.seed, &format!("g{stage}.conv0"), prev, c, 3, d, init);
        add_conv(store, cfg.seed, &format!("g{stage}.conv1"), c, c, 3, d, init);
    }
    if head {
        add_conv(
            store,
            cfg.seed,
            &format!("g{stage}.rgb"),
            c,
            1,
            1,
            d,
            init.with_gain(1.0),
        );
    }
}

pub(crate) fn add_discriminator_stage<T: Float>(store: &mut ParamStore<T>, cfg: &NetConfig, stage: usize, head: bool) {
    let d = cfg.dims;
    let init = WeightInit::he(cfg.equalized_lr);
    let c = cfg.channels(stage);
    if head {
        add_conv(store, cfg.seed, &format!("d{stage}.rgb"), 1, c, 1, d, init);
    }
    if stage == 0 {
        let extra = usize::from(cfg.minibatch_stddev);
        add_conv(store, cfg.seed, "d0.conv", c + extra, c, 3, d, init);
        add_dense(store, cfg.seed, "d0.dense", c * 4usize.pow(d as u32), c, init, 0.0);
        add_dense(store, cfg.seed, "d0.out", c, 1, init.with_gain(1.0), 0.0);
    } else {
        let prev = cfg.channels(stage - 1);
        add_conv(store, cfg.seed, &format!("d{stage}.conv0"), c, c, 3, d, init);
        add_conv(store, cfg.seed, &format!("d{stage}.conv1"), c, prev, 3, d, init);
    }
}

fn norm<T: Float>(cfg: &NetConfig, x: Var<T>) -> Var<T> {
    if cfg.pixel_norm {
        pixel_norm(&x)
    } else {
        x
    }
}

/// Features after the stage-`stage` block, plus the stage-`stage − 1`
/// features that fed it.
fn generator_features<T: Float>(cfg: &NetConfig, p: &Bound<T>, z: &Var<T>, stage: usize) -> (Var<T>, Option<Var<T>>) {
    let batch = z.shape()[0];
    let c0 = cfg.channels(0);
    let mut shape = vec![batch, c0];
    shape.extend(vec![4; cfg.dims]);
    let h = dense(p, "g0.dense", &norm(cfg, z.clone())).reshape(&shape);
    let h = norm(cfg, lrelu(&h));
    let mut h = norm(cfg, lrelu(&conv(p, "g0.conv", &h)));
    let mut prev = None;
    for s in 1..=stage {
        prev = Some(h.clone());
        let up = h.upsample2();
        let a = norm(cfg, lrelu(&conv(p, &format!("g{s}.conv0"), &up)));
        h = norm(cfg, lrelu(&conv(p, &format!("g{s}.conv1"), &a)));
    }
    (h, prev)
}

/// `[B, k] → [B, 1, R…]` at `R = 4·2^stage`, blending in the new stage with
/// weight `alpha` against the upsampled previous-stage output.
pub(crate) fn generate<T: Float>(cfg: &NetConfig, p: &Bound<T>, z: &Var<T>, stage: usize, alpha: f64) -> Var<T> {
    let (h, prev) = generator_features(cfg, p, z, stage);
    let out = conv(p, &format!("g{stage}.rgb"), &h);
    match prev {
        Some(prev) if alpha < 1.0 => {
            let skip = conv(p, &format!("g{}.rgb", stage - 1), &prev).upsample2();
            skip.lerp(&out, T::of(alpha))
        }
        _ => out,
    }
}

/// `[B, 1, R…] → [B, 1]` logits.
pub(crate) fn discriminate<T: Float>(cfg: &NetConfig, p: &Bound<T>, x: &Var<T>, stage: usize, alpha: f64) -> Var<T> {
    let mut h = lrelu(&conv(p, &format!("d{stage}.rgb"), x));
    for s in (1..=stage).rev() {
        h = lrelu(&conv(p, &format!("d{s}.conv0"), &h));
        h = lrelu(&conv(p, &format!("d{s}.conv1"), &h)).downsample2();
        if s == stage && alpha < 1.0 {
            let skip = lrelu(&conv(p, &format!("d{}.rgb", s - 1), &x.downsample2()));
            h = skip.lerp(&h, T::of(alpha));
        }
    }
    if cfg.minibatch_stddev {
        h = minibatch_stddev(&h);
    }
    let h = lrelu(&conv(p, "d0.conv", &h));
    let batch = h.shape()[0];
    let flat = h.reshape(&[batch, h.value().numel() / batch]);
    let h = lrelu(&dense(p, "d0.dense", &flat));
    dense(p, "d0.out", &h)
}
