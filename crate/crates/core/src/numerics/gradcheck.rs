use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Matrix, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    /// Maximum relative error `|a - n| / max(|a|, |n|)` for a coordinate to pass.
    pub tolerance: f64,
    /// Coordinates whose analytic and numeric values differ by less than
    /// this pass regardless of relative error (both are rounding noise).
    pub absolute_floor: f64,
    /// Coordinates sampled per tensor; `None` checks every coordinate.
    pub coords_per_tensor: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            epsilon: 1e-5,
            tolerance: 1e-4,
            absolute_floor: 1e-9,
            coords_per_tensor: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckEntry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        !self.entries.is_empty() && self.entries.iter().all(|e| e.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.rel_error).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> impl Iterator<Item = &GradCheckEntry> {
        self.entries.iter().filter(|e| !e.passed)
    }
}

/// Compares analytic gradients against central differences.
///
/// `loss` must evaluate the objective at the current parameters *and* add
/// its analytic gradient into the store's gradient buffers. The checker
/// zeroes the buffers before the analytic call; later calls at perturbed
/// points only use the returned value. On return the store holds the
/// original parameters and the analytic gradient.
pub fn grad_check<F>(mut loss: F, store: &mut ParamStore, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: FnMut(&mut ParamStore) -> Result<f64>,
{
    store.zero_grads();
    let base = loss(store)?;
    if !base.is_finite() {
        return Err(Error::NonFinite("loss at the unperturbed point".into()));
    }
    let analytic: Vec<Matrix> = store.ids().map(|id| store.grad(id).clone()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport::default();
    for id in store.ids().collect::<Vec<_>>() {
        let n = store.value(id).len();
        let coords: Vec<usize> = match cfg.coords_per_tensor {
            Some(k) if k < n => {
                let mut picked = sample(&mut rng, n, k).into_vec();
                picked.sort_unstable();
                picked
            }
            _ => (0..n).collect(),
        };
        for k in coords {
            let original = store.value(id).as_slice()[k];
            store.value_mut(id).as_mut_slice()[k] = original + cfg.epsilon;
            let plus = loss(store);
            store.value_mut(id).as_mut_slice()[k] = original - cfg.epsilon;
            let minus = loss(store);
            store.value_mut(id).as_mut_slice()[k] = original;
            let (plus, minus) = (plus?, minus?);
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss when perturbing `{}`[{k}]",
                    store.name(id)
                )));
            }
            let numeric = (plus - minus) / (2.0 * cfg.epsilon);
            let a = analytic[id.0].as_slice()[k];
            let diff = (a - numeric).abs();
            let scale = a.abs().max(numeric.abs());
            let rel_error = if scale > 0.0 { diff / scale } else { 0.0 };
            report.entries.push(GradCheckEntry {
                param: store.name(id).to_string(),
                index: k,
                analytic: a,
                numeric,
                rel_error,
                passed: rel_error <= cfg.tolerance || diff <= cfg.absolute_floor,
            });
        }
    }

    for (id, g) in store.ids().collect::<Vec<_>>().into_iter().zip(analytic) {
        *store.grad_mut(id) = g;
    }
    Ok(report)
}
