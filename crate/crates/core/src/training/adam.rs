use ambientsom_tensor::{Float, Tensor};
use serde::{Deserialize, Serialize};

use crate::nets::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.0,
            beta2: 0.99,
            eps: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer over a [`ParamStore`]. Moment buffers are
/// created on first use, so parameters added by growing start from zero.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub t: u64,
    pub m: ParamStore<T>,
    pub v: ParamStore<T>,
}

impl<T: Float> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            m: ParamStore::new(),
            v: ParamStore::new(),
        }
    }

    /// One update of every named parameter with a gradient.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[(String, Tensor<T>)]) {
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let step = T::of(c.lr / bc1);
        let inv_bc2 = T::of(1.0 / bc2);
        let eps = T::of(c.eps);
        for (name, g) in grads {
            let p = params.get_mut(name).expect("gradient for a known parameter");
            if !self.m.contains(name) {
                let shape = g.shape().to_vec();
                self.m.insert_const(name, shape.clone(), 0.0, 1.0, false);
                self.v.insert_const(name, shape, 0.0, 1.0, false);
            }
            let m = self.m.get_mut(name).expect("moment exists");
            m.value = m.value.zip_with(g, |m, g| b1 * m + (T::one() - b1) * g);
            let v = self.v.get_mut(name).expect("moment exists");
            v.value = v.value.zip_with(g, |v, g| b2 * v + (T::one() - b2) * g * g);
            let (m, v) = (&self.m.get(name).unwrap().value, &self.v.get(name).unwrap().value);
            let update = m.zip_with(v, |m, v| step * m / ((v * inv_bc2).sqrt() + eps));
            p.value = p.value.sub(&update);
        }
    }
}
