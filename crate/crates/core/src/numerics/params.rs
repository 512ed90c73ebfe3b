use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use sha2::{Digest, Sha256};

use super::Matrix;
use crate::error::{Error, Result};

static NEXT_STORE_UID: AtomicU64 = AtomicU64::new(1);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// Named parameter tensors, each paired with a same-shape gradient buffer.
///
/// Every store carries a process-unique id so a computation graph that
/// binds parameters from several stores can route gradients back to the
/// right one.
#[derive(Debug)]
pub struct ParamStore {
    uid: u64,
    seed: u64,
    names: Vec<String>,
    values: Vec<Matrix>,
    grads: Vec<Matrix>,
    index: BTreeMap<String, ParamId>,
}

impl Clone for ParamStore {
    fn clone(&self) -> Self {
        ParamStore {
            uid: NEXT_STORE_UID.fetch_add(1, Ordering::Relaxed),
            seed: self.seed,
            names: self.names.clone(),
            values: self.values.clone(),
            grads: self.grads.clone(),
            index: self.index.clone(),
        }
    }
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        ParamStore {
            uid: NEXT_STORE_UID.fetch_add(1, Ordering::Relaxed),
            seed,
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    pub(crate) fn uid(&self) -> u64 {
        self.uid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Argument(format!("duplicate parameter name `{name}`")));
        }
        value.check_finite(&name)?;
        let id = ParamId(self.values.len());
        self.grads.push(Matrix::zeros(value.rows(), value.cols()));
        self.values.push(value);
        self.names.push(name.clone());
        self.index.insert(name, id);
        Ok(id)
    }

    /// Adds a weight initialised from `U(-sqrt(1/fan_in), sqrt(1/fan_in))`.
    pub fn add_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let bound = (1.0 / fan_in.max(1) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        self.add(name, Matrix::from_vec(rows, cols, data)?)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> Result<ParamId> {
        self.add(name, Matrix::zeros(rows, cols))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn expect(&self, name: &str) -> Result<ParamId> {
        self.id(name)
            .ok_or_else(|| Error::Argument(format!("missing parameter `{name}`")))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Matrix {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.grads[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads.iter().map(Matrix::squared_norm).sum::<f64>().sqrt()
    }

    /// Rescales all gradients so their joint L2 norm is at most `max_norm`.
    pub fn clip_grad_norm(&mut self, max_norm: f64) {
        let norm = self.grad_norm();
        if norm > max_norm && norm.is_finite() {
            let c = max_norm / norm;
            for g in &mut self.grads {
                g.scale_in_place(c);
            }
        }
    }

    /// Copies every parameter whose name starts with `from_prefix` into
    /// this store under `to_prefix`, replacing the existing value.
    pub fn copy_prefixed(&mut self, other: &ParamStore, from_prefix: &str, to_prefix: &str) -> Result<usize> {
        let mut copied = 0;
        for (i, name) in other.names.iter().enumerate() {
            if let Some(rest) = name.strip_prefix(from_prefix) {
                let target = format!("{to_prefix}{rest}");
                let id = self.expect(&target)?;
                other.values[i].expect_shape(self.values[id.0].shape(), &target)?;
                self.values[id.0] = other.values[i].clone();
                copied += 1;
            }
        }
        Ok(copied)
    }

    /// SHA-256 over names, shapes and the exact bit patterns of every value.
    pub fn content_hash(&self) -> String {
        self.hash_filtered(|_| true)
    }

    /// Like [`content_hash`](Self::content_hash) but restricted to names
    /// accepted by `keep`.
    pub fn hash_filtered(&self, keep: impl Fn(&str) -> bool) -> String {
        let mut h = Sha256::new();
        for (name, value) in self.names.iter().zip(&self.values) {
            if !keep(name) {
                continue;
            }
            h.update(name.as_bytes());
            h.update([0u8]);
            h.update((value.rows() as u64).to_le_bytes());
            h.update((value.cols() as u64).to_le_bytes());
            for x in value.as_slice() {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub(crate) fn entries(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }
}
