//! Central finite differences, for validating analytic gradients.

use crate::Tensor;

/// Central-difference gradient of a scalar function at `x`.
pub fn numerical_grad(x: &Tensor<f64>, step: f64, mut f: impl FnMut(&Tensor<f64>) -> f64) -> Tensor<f64> {
    let mut probe = x.clone();
    let mut out = vec![0.0; x.numel()];
    for (i, o) in out.iter_mut().enumerate() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let up = f(&probe);
        probe.data_mut()[i] = orig - step;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        *o = (up - down) / (2.0 * step);
    }
    Tensor::from_vec(x.shape().to_vec(), out)
}

/// Central-difference derivative along direction `dir`.
pub fn directional_derivative(
    x: &Tensor<f64>,
    dir: &Tensor<f64>,
    step: f64,
    mut f: impl FnMut(&Tensor<f64>) -> f64,
) -> f64 {
    let up = f(&x.add(&dir.scale(step)));
    let down = f(&x.sub(&dir.scale(step)));
    (up - down) / (2.0 * step)
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
