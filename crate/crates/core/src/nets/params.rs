use std::collections::HashMap;

use ambientsom_tensor::{Float, Tensor, Var};
use indexmap::IndexMap;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::rng::{derive_seed, stream};

/// One stored tensor. The effective value seen by the network is
/// `value · scale` (equalized learning rate / learning-rate multipliers).
#[derive(Clone, Debug)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub scale: f64,
    pub trainable: bool,
}

/// Named network parameters in creation order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    entries: IndexMap<String, Param<T>>,
}

impl<T: Float> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            entries: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, param: Param<T>) {
        let name = name.into();
        assert!(!self.entries.contains_key(&name), "parameter {name} defined twice");
        self.entries.insert(name, param);
    }

    /// Standard-normal tensor drawn from a stream keyed by `(seed, name)`, so
    /// the value does not depend on what else has been created.
    pub fn insert_normal(&mut self, seed: u64, name: &str, shape: Vec<usize>, std: f64, scale: f64) {
        let mut rng = stream(derive_seed(seed, name), 0);
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                T::of(v * std)
            })
            .collect();
        self.insert(
            name,
            Param {
                value: Tensor::from_vec(shape, data),
                scale,
                trainable: true,
            },
        );
    }

    pub fn insert_const(&mut self, name: &str, shape: Vec<usize>, value: f64, scale: f64, trainable: bool) {
        self.insert(
            name,
            Param {
                value: Tensor::full(shape, T::of(value)),
                scale,
                trainable,
            },
        );
    }

    pub fn get(&self, name: &str) -> Option<&Param<T>> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.entries.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param<T>)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Param<T>)> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_elements(&self) -> usize {
        self.entries.values().map(|p| p.value.numel()).sum()
    }

    pub fn cast<U: Float>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|(k, p)| {
                    (
                        k.clone(),
                        Param {
                            value: p.value.cast(),
                            scale: p.scale,
                            trainable: p.trainable,
                        },
                    )
                })
                .collect(),
        }
    }

    /// SHA-256 over names, shapes and value bits.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (name, p) in &self.entries {
            h.update(name.as_bytes());
            for s in p.value.shape() {
                h.update((*s as u64).to_le_bytes());
            }
            for v in p.value.data() {
                h.update(v.as_f64().to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Creates graph leaves for every entry; trainable entries require
    /// gradients when `trainable` is set.
    pub fn bind(&self, trainable: bool) -> Bound<T> {
        let vars = self
            .entries
            .iter()
            .map(|(k, p)| {
                let v = if trainable && p.trainable {
                    Var::param(p.value.clone())
                } else {
                    Var::constant(p.value.clone())
                };
                (k.clone(), (v, p.scale))
            })
            .collect();
        Bound { vars }
    }
}

/// Parameters bound into a computation graph.
pub struct Bound<T> {
    vars: HashMap<String, (Var<T>, f64)>,
}

impl<T: Float> Bound<T> {
    /// The raw leaf.
    pub fn leaf(&self, name: &str) -> &Var<T> {
        &self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
            .0
    }

    /// The effective (scaled) value.
    pub fn get(&self, name: &str) -> Var<T> {
        let (v, s) = self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"));
        if *s == 1.0 {
            v.clone()
        } else {
            v.scale(T::of(*s))
        }
    }

    /// Leaves that require gradients, in a stable order.
    pub fn trainable(&self) -> Vec<(String, Var<T>)> {
        let mut out: Vec<_> = self
            .vars
            .iter()
            .filter(|(_, (v, _))| v.requires_grad())
            .map(|(k, (v, _))| (k.clone(), v.clone()))
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }
}
