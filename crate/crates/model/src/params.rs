//! Named parameter storage and the AdamW optimizer.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::tensor::{cst, Matrix, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<S> {
    names: Vec<String>,
    values: Vec<Matrix<S>>,
    index: BTreeMap<String, ParamId>,
    frozen: BTreeSet<ParamId>,
}

impl<S: Scalar> Default for ParamStore<S> {
    fn default() -> Self {
        ParamStore::new()
    }
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            index: BTreeMap::new(),
            frozen: BTreeSet::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix<S>) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        let id = ParamId(self.values.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        id
    }

    /// `rows×cols` entries drawn from N(0, std²).
    pub fn add_normal<R: Rng>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        std: f64,
        rng: &mut R,
    ) -> ParamId {
        let normal = Normal::new(0.0, std).expect("valid std");
        let data = (0..rows * cols)
            .map(|_| cst::<S>(normal.sample(rng)))
            .collect();
        self.add(name, Matrix::from_vec(rows, cols, data))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Matrix<S> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix<S> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    /// Exclude every parameter whose name starts with `prefix` from training.
    pub fn freeze_prefix(&mut self, prefix: &str) {
        for (i, name) in self.names.iter().enumerate() {
            if name.starts_with(prefix) {
                self.frozen.insert(ParamId(i));
            }
        }
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        !self.frozen.contains(&id)
    }

    pub fn cast<T: Scalar>(&self) -> ParamStore<T> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Matrix::cast).collect(),
            index: self.index.clone(),
            frozen: self.frozen.clone(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(Matrix::all_finite)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay, standing in for an explicit L2 penalty.
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 5e-6,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// AdamW over a [`ParamStore`]; parameters without a gradient in a step are
/// left untouched.
#[derive(Clone, Debug)]
pub struct AdamW<S> {
    pub config: AdamWConfig,
    m: BTreeMap<ParamId, Matrix<S>>,
    v: BTreeMap<ParamId, Matrix<S>>,
    step: u64,
}

impl<S: Scalar> AdamW<S> {
    pub fn new(config: AdamWConfig) -> Self {
        AdamW {
            config,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore<S>, grads: &[(ParamId, Matrix<S>)]) {
        self.step += 1;
        let c = &self.config;
        let (b1, b2): (S, S) = (cst(c.beta1), cst(c.beta2));
        let bc1: S = cst(1.0 - c.beta1.powi(self.step as i32));
        let bc2: S = cst(1.0 - c.beta2.powi(self.step as i32));
        let lr: S = cst(c.lr);
        let eps: S = cst(c.eps);
        let decay: S = cst(1.0 - c.lr * c.weight_decay);
        for (id, g) in grads {
            if !store.is_trainable(*id) {
                continue;
            }
            let p = store.value_mut(*id);
            let m = self
                .m
                .entry(*id)
                .or_insert_with(|| Matrix::zeros(g.rows, g.cols));
            let v = self
                .v
                .entry(*id)
                .or_insert_with(|| Matrix::zeros(g.rows, g.cols));
            for i in 0..g.data.len() {
                let gi = g.data[i];
                m.data[i] = b1 * m.data[i] + (S::one() - b1) * gi;
                v.data[i] = b2 * v.data[i] + (S::one() - b2) * gi * gi;
                let mhat = m.data[i] / bc1;
                let vhat = v.data[i] / bc2;
                p.data[i] = p.data[i] * decay - lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}
