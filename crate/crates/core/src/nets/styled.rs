//! Style-based generator: mapping network, learned constant input,
//! weight-demodulated convolutions with per-level noise injection, and a
//! skip-connected output path.

use ambientsom_tensor::{Float, Var};

use super::layers::*;
use super::params::{Bound, ParamStore};
use super::NetConfig;

/// Learning-rate multiplier of the mapping network.
pub(crate) const MAPPING_LR_MUL: f64 = 0.01;

fn add_modconv<T: Float>(
    store: &mut ParamStore<T>,
    cfg: &NetConfig,
    name: &str,
    cin: usize,
    cout: usize,
    kernel: usize,
) {
    let init = WeightInit::he(true).with_gain(1.0);
    add_dense(
        store,
        cfg.seed,
        &format!("{name}.affine"),
        cfg.latent_dim,
        cin,
        init,
        1.0,
    );
    let mut shape = vec![cout, cin];
    shape.extend(vec![kernel; cfg.dims]);
    let fan_in = cin * kernel.pow(cfg.dims as u32);
    store.insert_normal(cfg.seed, &format!("{name}.w"), shape, 1.0, 1.0 / (fan_in as f64).sqrt());
    store.insert_const(&format!("{name}.b"), vec![cout], 0.0, 1.0, true);
}

pub(crate) fn build<T: Float>(store: &mut ParamStore<T>, cfg: &NetConfig) {
    let k = cfg.latent_dim;
    let map_init = WeightInit::he(true).with_lr_mul(MAPPING_LR_MUL);
    for i in 0..cfg.mapping_depth {
        add_dense(store, cfg.seed, &format!("map{i}"), k, k, map_init, 0.0);
    }
    store.insert_const("w_avg", vec![k], 0.0, 1.0, false);
    let c0 = cfg.channels(0);
    let mut const_shape = vec![1, c0];
    const_shape.extend(vec![4; cfg.dims]);
    store.insert_normal(cfg.seed, "s.const", const_shape, 1.0, 1.0);
    for level in 0..=cfg.levels() {
        let c = cfg.channels(level);
        if level == 0 {
            add_modconv(store, cfg, "s0.conv0", c, c, 3);
            store.insert_const("s0.conv0.noise", vec![1], 0.0, 1.0, true);
        } else {
            let prev = cfg.channels(level - 1);
            add_modconv(store, cfg, &format!("s{level}.conv0"), prev, c, 3);
            add_modconv(store, cfg, &format!("s{level}.conv1"), c, c, 3);
            store.insert_const(&format!("s{level}.conv0.noise"), vec![1], 0.0, 1.0, true);
            store.insert_const(&format!("s{level}.conv1.noise"), vec![1], 0.0, 1.0, true);
        }
        add_modconv(store, cfg, &format!("s{level}.rgb"), c, 1, 1);
    }
}

/// `z: [B, k] → w: [B, k]`.
pub(crate) fn map<T: Float>(cfg: &NetConfig, p: &Bound<T>, z: &Var<T>) -> Var<T> {
    let mut h = pixel_norm(z);
    for i in 0..cfg.mapping_depth {
        h = lrelu(&dense(p, &format!("map{i}"), &h));
    }
    h
}

/// `w_avg + ψ·(w − w_avg)`.
pub(crate) fn truncate<T: Float>(p: &Bound<T>, w: &Var<T>, psi: f64) -> Var<T> {
    let avg = p.get("w_avg");
    avg.add(&w.sub(&avg).scale(T::of(psi)))
}

fn synthesis_layer<T: Float>(p: &Bound<T>, name: &str, x: &Var<T>, w: &Var<T>, noise: &Var<T>) -> Var<T> {
    let dims = x.shape().len() - 2;
    let y = modulated_conv(p, name, x, w, true);
    let y = y.add(&noise.mul(&p.get(&format!("{name}.noise"))));
    lrelu(&y.add(&channel_bias(&p.get(&format!("{name}.b")), dims)))
}

fn to_rgb<T: Float>(p: &Bound<T>, name: &str, x: &Var<T>, w: &Var<T>) -> Var<T> {
    let dims = x.shape().len() - 2;
    modulated_conv(p, name, x, w, false).add(&channel_bias(&p.get(&format!("{name}.b")), dims))
}

/// `w: [B, k]`, `noise[l]: [B, 1, 4·2^l …]` → `[B, 1, R…]`.
#[allow(clippy::needless_range_loop)]
pub(crate) fn synthesize<T: Float>(cfg: &NetConfig, p: &Bound<T>, w: &Var<T>, noise: &[Var<T>]) -> Var<T> {
    let batch = w.shape()[0];
    let c0 = cfg.channels(0);
    let mut shape = vec![batch, c0];
    shape.extend(vec![4; cfg.dims]);
    let mut h = p.get("s.const").broadcast_to(&shape);
    h = synthesis_layer(p, "s0.conv0", &h, w, &noise[0]);
    let mut rgb = to_rgb(p, "s0.rgb", &h, w);
    for level in 1..=cfg.levels() {
        h = h.upsample2();
        h = synthesis_layer(p, &format!("s{level}.conv0"), &h, w, &noise[level]);
        h = synthesis_layer(p, &format!("s{level}.conv1"), &h, w, &noise[level]);
        rgb = rgb.upsample2().add(&to_rgb(p, &format!("s{level}.rgb"), &h, w));
    }
    rgb
}
