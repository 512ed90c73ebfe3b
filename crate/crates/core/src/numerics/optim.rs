use serde::{Deserialize, Serialize};

use super::{Matrix, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Mini-batch training settings shared by both networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Dropout on embeddings and encoder output during training.
    pub dropout: f64,
    /// Joint gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// Set by the caller; the pipeline derives it from the run seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 20,
            batch_size: 32,
            adam: AdamConfig::default(),
            dropout: 0.5,
            grad_clip: Some(5.0),
            seed: 42,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Adam with bias-corrected first and second moment estimates.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    steps: u64,
}

impl Adam {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros = || {
            store
                .ids()
                .map(|id| {
                    let (r, c) = store.value(id).shape();
                    Matrix::zeros(r, c)
                })
                .collect::<Vec<_>>()
        };
        Adam {
            config,
            first: zeros(),
            second: zeros(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update from the gradients currently held in `store`.
    /// Nothing is modified if any gradient is non-finite.
    pub fn update(&mut self, store: &mut ParamStore) -> Result<()> {
        if store.len() != self.first.len() {
            return Err(Error::Argument(format!(
                "optimizer tracks {} parameters, store has {}",
                self.first.len(),
                store.len()
            )));
        }
        for id in store.ids() {
            if !store.grad(id).is_finite() {
                return Err(Error::NonFinite(format!("gradient of `{}`", store.name(id))));
            }
        }
        self.steps += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.steps as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        for id in store.ids().collect::<Vec<_>>() {
            let grad = store.grad(id).as_slice().to_vec();
            let m = self.first[id.0].as_mut_slice();
            let v = self.second[id.0].as_mut_slice();
            let value = store.value_mut(id).as_mut_slice();
            for k in 0..grad.len() {
                let g = grad[k];
                m[k] = beta1 * m[k] + (1.0 - beta1) * g;
                v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
                let m_hat = m[k] / bias1;
                let v_hat = v[k] / bias2;
                value[k] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn store_with(values: &[f64]) -> (ParamStore, super::super::ParamId) {
        let mut s = ParamStore::new(0);
        let id = s.add("w", Matrix::row_vector(values)).unwrap();
        (s, id)
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let (mut s, id) = store_with(&[0.3, -1.2]);
        let mut adam = Adam::new(&s, AdamConfig::default());
        for _ in 0..10 {
            adam.update(&mut s).unwrap();
        }
        assert_eq!(s.value(id).as_slice(), &[0.3, -1.2]);
    }

    #[test]
    fn constant_gradient_step_tends_to_lr_times_sign() {
        let (mut s, id) = store_with(&[0.0, 0.0]);
        s.grad_mut(id).as_mut_slice().copy_from_slice(&[2.5, -0.01]);
        let cfg = AdamConfig::default();
        let mut adam = Adam::new(&s, cfg.clone());
        let mut last = s.value(id).clone();
        for _ in 0..2000 {
            adam.update(&mut s).unwrap();
            let now = s.value(id).clone();
            let step = now.zip_map(&last, |a, b| a - b).unwrap();
            last = now;
            if adam.steps() > 1000 {
                assert!((step[(0, 0)] + cfg.learning_rate).abs() < 1e-9);
                assert!((step[(0, 1)] - cfg.learning_rate).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let (mut s, id) = store_with(&[1.0]);
        s.grad_mut(id).as_mut_slice()[0] = f64::NAN;
        let mut adam = Adam::new(&s, AdamConfig::default());
        let err = adam.update(&mut s).unwrap_err().to_string();
        assert!(err.contains("`w`"), "{err}");
        assert_eq!(s.value(id).item(), 1.0);
    }

    #[test]
    fn identical_runs_are_bitwise_identical() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let mut s = ParamStore::new(99);
            let id = s.add_uniform("w", 4, 4, 4, &mut rng).unwrap();
            let mut adam = Adam::new(&s, AdamConfig::default());
            for step in 0..100 {
                let g: Vec<f64> = s.value(id).as_slice().iter().map(|x| x * 2.0 + step as f64 * 1e-3).collect();
                s.grad_mut(id).as_mut_slice().copy_from_slice(&g);
                adam.update(&mut s).unwrap();
            }
            s.content_hash()
        };
        assert_eq!(run(), run());
    }
}
