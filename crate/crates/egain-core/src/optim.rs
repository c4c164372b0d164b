//! Named parameter storage and the adaptive-moment optimizer.
//!
//! All networks keep their tensors in one [`ParamStore`] under dotted names
//! ("gen.block0.conv1.w", "enc_b.stem.b", ...). Forward code pulls them into
//! a graph as leaves; the optimizer walks name-sorted entries so updates are
//! order-deterministic.

use crate::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { tensors: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) {
        let name = name.into();
        assert!(
            self.tensors.insert(name.clone(), t).is_none(),
            "parameter {name} registered twice"
        );
    }

    pub fn get(&self, name: &str) -> &Tensor<T> {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor<T> {
        self.tensors
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(|t| t.all_finite())
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }
}

/// Parameters materialized as graph leaves for one training step.
pub struct ParamVars {
    vars: BTreeMap<String, Var>,
}

impl ParamVars {
    /// Insert every parameter whose name starts with one of `trainable`
    /// prefixes as a gradient-tracking leaf; everything else is frozen.
    pub fn bind<T: Scalar>(g: &Graph<T>, store: &ParamStore<T>, trainable: &[&str]) -> Self {
        let mut vars = BTreeMap::new();
        for (name, t) in store.iter() {
            let rg = trainable.iter().any(|p| name.starts_with(p));
            vars.insert(name.to_string(), g.leaf(t.clone(), rg));
        }
        ParamVars { vars }
    }

    pub fn var(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("unbound parameter {name}"))
    }

    /// Names and vars of the gradient-tracking subset, in name order.
    pub fn trainable<T: Scalar>(&self, g: &Graph<T>) -> Vec<(String, Var)> {
        self.vars
            .iter()
            .filter(|(_, &v)| g.requires_grad(v))
            .map(|(k, &v)| (k.clone(), v))
            .collect()
    }
}

#[derive(Debug, Clone)]
struct Moments<T> {
    m: Tensor<T>,
    v: Tensor<T>,
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    state: BTreeMap<String, Moments<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Adam { learning_rate, beta1, beta2, epsilon, step: 0, state: BTreeMap::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update. `grads` maps parameter name to gradient tensor;
    /// missing names are skipped (no gradient flowed this step).
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &BTreeMap<String, Tensor<T>>) {
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let one_m_b1 = T::from_f64(1.0 - self.beta1);
        let one_m_b2 = T::from_f64(1.0 - self.beta2);
        let corr1 = T::from_f64(1.0 / (1.0 - self.beta1.powi(t)));
        let corr2 = T::from_f64(1.0 / (1.0 - self.beta2.powi(t)));
        let lr = T::from_f64(self.learning_rate);
        let eps = T::from_f64(self.epsilon);

        for (name, grad) in grads {
            let param = store.get_mut(name);
            let entry = self.state.entry(name.clone()).or_insert_with(|| Moments {
                m: Tensor::zeros(grad.shape()),
                v: Tensor::zeros(grad.shape()),
            });
            let p = param.data_mut();
            let m = entry.m.data_mut();
            let v = entry.v.data_mut();
            let gd = grad.data();
            for i in 0..p.len() {
                let gi = gd[i];
                m[i] = b1 * m[i] + one_m_b1 * gi;
                v[i] = b2 * v[i] + one_m_b2 * gi * gi;
                let mh = m[i] * corr1;
                let vh = v[i] * corr2;
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}
