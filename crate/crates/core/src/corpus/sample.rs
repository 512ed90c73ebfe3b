use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Indices of a seeded uniform sample of `round(fraction * n)` items,
/// returned in ascending order.
///
/// The sample is a prefix of one seeded permutation of `0..n`, so for a
/// fixed seed a smaller fraction always selects a subset of a larger one.
pub fn sample_indices(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Argument(format!("fraction {fraction} not in (0, 1]")));
    }
    let k = ((fraction * n as f64).round() as usize).min(n);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut picked = perm[..k].to_vec();
    picked.sort_unstable();
    Ok(picked)
}

pub fn sample_fraction<T: Clone>(items: &[T], fraction: f64, seed: u64) -> Result<Vec<T>> {
    Ok(sample_indices(items.len(), fraction, seed)?
        .into_iter()
        .map(|i| items[i].clone())
        .collect())
}
