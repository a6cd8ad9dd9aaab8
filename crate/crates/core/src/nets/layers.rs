//! Building blocks shared by the progressive and style-based networks.

use ambientsom_tensor::{Float, Var};

use super::params::{Bound, ParamStore};

pub(crate) const LRELU_SLOPE: f64 = 0.2;
const EPS: f64 = 1e-8;

/// How weights are initialised and scaled at runtime.
#[derive(Clone, Copy, Debug)]
pub(crate) struct WeightInit {
    pub equalized: bool,
    pub gain: f64,
    pub lr_mul: f64,
}

impl WeightInit {
    pub fn he(equalized: bool) -> Self {
        Self {
            equalized,
            gain: std::f64::consts::SQRT_2,
            lr_mul: 1.0,
        }
    }

    pub fn with_gain(self, gain: f64) -> Self {
        Self { gain, ..self }
    }

    pub fn with_lr_mul(self, lr_mul: f64) -> Self {
        Self { lr_mul, ..self }
    }

    /// (init std, runtime scale) for a weight with `fan_in` inputs.
    fn weight(self, fan_in: usize) -> (f64, f64) {
        let he = self.gain / (fan_in as f64).sqrt();
        if self.equalized {
            (1.0 / self.lr_mul, he * self.lr_mul)
        } else {
            (he / self.lr_mul, self.lr_mul)
        }
    }
}

pub(crate) fn spatial_ones(dims: usize) -> Vec<usize> {
    vec![1; dims]
}

pub(crate) fn add_dense<T: Float>(
    store: &mut ParamStore<T>,
    seed: u64,
    name: &str,
    fan_in: usize,
    fan_out: usize,
    init: WeightInit,
    bias_init: f64,
) {
    let (std, scale) = init.weight(fan_in);
    store.insert_normal(seed, &format!("{name}.w"), vec![fan_in, fan_out], std, scale);
    store.insert_const(
        &format!("{name}.b"),
        vec![fan_out],
        bias_init / init.lr_mul,
        init.lr_mul,
        true,
    );
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn add_conv<T: Float>(
    store: &mut ParamStore<T>,
    seed: u64,
    name: &str,
    cin: usize,
    cout: usize,
    kernel: usize,
    dims: usize,
    init: WeightInit,
) {
    let kprod = kernel.pow(dims as u32);
    let (std, scale) = init.weight(cin * kprod);
    let mut shape = vec![cout, cin];
    shape.extend(vec![kernel; dims]);
    store.insert_normal(seed, &format!("{name}.w"), shape, std, scale);
    store.insert_const(&format!("{name}.b"), vec![cout], 0.0, 1.0, true);
}

/// `x · W + b` for `x: [B, in]`.
pub(crate) fn dense<T: Float>(p: &Bound<T>, name: &str, x: &Var<T>) -> Var<T> {
    x.matmul(&p.get(&format!("{name}.w"))).add(&p.get(&format!("{name}.b")))
}

/// Per-channel bias for `[B, C, S…]`.
pub(crate) fn channel_bias<T: Float>(b: &Var<T>, dims: usize) -> Var<T> {
    let mut shape = vec![1, b.shape()[0]];
    shape.extend(spatial_ones(dims));
    b.reshape(&shape)
}

pub(crate) fn conv<T: Float>(p: &Bound<T>, name: &str, x: &Var<T>) -> Var<T> {
    let dims = x.shape().len() - 2;
    x.conv(&p.get(&format!("{name}.w")))
        .add(&channel_bias(&p.get(&format!("{name}.b")), dims))
}

pub(crate) fn lrelu<T: Float>(x: &Var<T>) -> Var<T> {
    x.leaky_relu(T::of(LRELU_SLOPE))
}

/// Normalises every feature vector (axis 1) to unit mean square.
pub(crate) fn pixel_norm<T: Float>(x: &Var<T>) -> Var<T> {
    let mut shape = x.shape().to_vec();
    shape[1] = 1;
    x.mul(&x.square().mean_to(&shape).add_scalar(T::of(EPS)).rsqrt())
}

/// Appends one channel holding the average over features of the
/// across-batch standard deviation.
pub(crate) fn minibatch_stddev<T: Float>(x: &Var<T>) -> Var<T> {
    let shape = x.shape().to_vec();
    let mut per_feature = shape.clone();
    per_feature[0] = 1;
    let mean = x.mean_to(&per_feature);
    let var = x.sub(&mean).square().mean_to(&per_feature);
    let std = var.add_scalar(T::of(EPS)).sqrt();
    let mut one = vec![1; shape.len()];
    one[0] = 1;
    let avg = std.mean_to(&one);
    let mut stat_shape = shape.clone();
    stat_shape[1] = 1;
    x.concat(&avg.broadcast_to(&stat_shape), 1)
}

/// Style-modulated convolution. Scaling the input channels by the style and
/// the output channels by the demodulation factor is equivalent to
/// convolving with per-sample modulated, demodulated weights.
pub(crate) fn modulated_conv<T: Float>(p: &Bound<T>, name: &str, x: &Var<T>, w: &Var<T>, demodulate: bool) -> Var<T> {
    let dims = x.shape().len() - 2;
    let batch = x.shape()[0];
    let cin = x.shape()[1];
    let style = dense(p, &format!("{name}.affine"), w);
    let mut s_shape = vec![batch, cin];
    s_shape.extend(spatial_ones(dims));
    let weight = p.get(&format!("{name}.w"));
    let cout = weight.shape()[0];
    let y = x.mul(&style.reshape(&s_shape)).conv(&weight);
    if !demodulate {
        return y;
    }
    let mut reduce = vec![cout, cin];
    reduce.extend(spatial_ones(dims));
    let wsq = weight.square().sum_to(&reduce).reshape(&[cout, cin]);
    let demod = style.square().matmul(&wsq.transpose()).add_scalar(T::of(EPS)).rsqrt();
    let mut d_shape = vec![batch, cout];
    d_shape.extend(spatial_ones(dims));
    y.mul(&demod.reshape(&d_shape))
}
