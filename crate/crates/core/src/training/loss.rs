//! Adversarial objectives, as plain functions of score lists and as graph ops.

use ambientsom_tensor::{grad, Float, Var};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Non-saturating logistic loss with an R1 penalty on real inputs.
    Logistic,
    /// Wasserstein critic with a gradient penalty on interpolates.
    WassersteinGp,
}

/// Drift term keeping Wasserstein critic scores near zero.
pub const WGAN_DRIFT: f64 = 1e-3;

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn non_empty(xs: &[f64], what: &str) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::Parameter(format!("empty {what} score batch")));
    }
    Ok(())
}

/// Discriminator loss from scores, without any gradient penalty (which needs
/// the network; see [`r1_penalty`] and [`gradient_penalty`]).
pub fn discriminator_loss(real: &[f64], fake: &[f64], kind: LossKind) -> Result<f64> {
    non_empty(real, "real")?;
    non_empty(fake, "fake")?;
    Ok(match kind {
        LossKind::Logistic => {
            real.iter().map(|&r| softplus(-r)).sum::<f64>() / real.len() as f64
                + fake.iter().map(|&f| softplus(f)).sum::<f64>() / fake.len() as f64
        }
        LossKind::WassersteinGp => {
            mean(fake) - mean(real) + WGAN_DRIFT * real.iter().map(|r| r * r).sum::<f64>() / real.len() as f64
        }
    })
}

pub fn generator_loss(fake: &[f64], kind: LossKind) -> Result<f64> {
    non_empty(fake, "fake")?;
    Ok(match kind {
        LossKind::Logistic => fake.iter().map(|&f| softplus(-f)).sum::<f64>() / fake.len() as f64,
        LossKind::WassersteinGp => -mean(fake),
    })
}

/// Graph version of [`discriminator_loss`] for `[B, 1]` score tensors.
pub fn discriminator_loss_var<T: Float>(real: &Var<T>, fake: &Var<T>, kind: LossKind) -> Var<T> {
    match kind {
        LossKind::Logistic => real.neg().softplus().mean().add(&fake.softplus().mean()),
        LossKind::WassersteinGp => fake
            .mean()
            .sub(&real.mean())
            .add(&real.square().mean().scale(T::of(WGAN_DRIFT))),
    }
}

pub fn generator_loss_var<T: Float>(fake: &Var<T>, kind: LossKind) -> Var<T> {
    match kind {
        LossKind::Logistic => fake.neg().softplus().mean(),
        LossKind::WassersteinGp => fake.mean().neg(),
    }
}

/// Per-sample squared norm of `∂ Σ scores / ∂ x`, kept differentiable.
fn input_grad_sq_norm<T: Float>(scores: &Var<T>, x: &Var<T>) -> Var<T> {
    let g = grad(&scores.sum(), &[x], None, true)
        .remove(0)
        .expect("scores depend on the input");
    let batch = x.shape()[0];
    let mut keep = vec![1; x.shape().len()];
    keep[0] = batch;
    g.square().sum_to(&keep).reshape(&[batch])
}

/// `(γ/2)·E‖∇ₓD(x)‖²` over the real batch; `x` must be a graph leaf.
pub fn r1_penalty<T: Float>(real_scores: &Var<T>, x: &Var<T>, gamma: f64) -> Var<T> {
    input_grad_sq_norm(real_scores, x).mean().scale(T::of(0.5 * gamma))
}

/// `λ·E(‖∇D(x̂)‖ − 1)²` at interpolates `x̂`; `x` must be a graph leaf.
pub fn gradient_penalty<T: Float>(scores: &Var<T>, x: &Var<T>, lambda: f64) -> Var<T> {
    let norm = input_grad_sq_norm(scores, x).add_scalar(T::of(1e-12)).sqrt();
    norm.add_scalar(T::of(-1.0)).square().mean().scale(T::of(lambda))
}
