use log::debug;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{Graph, Var};

/// Contrastive margin loss on squared L2 distance: matched pairs are pulled
/// together, unmatched pairs pushed to at least `margin` apart.
pub fn match_loss(g_s: &[f64], g_t: &[f64], matched: bool, margin: f64) -> Result<f64> {
    if g_s.len() != g_t.len() {
        return Err(Error::Shape(format!("widths {} and {}", g_s.len(), g_t.len())));
    }
    let d2: f64 = g_s.iter().zip(g_t).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(if matched { d2 } else { (margin - d2).max(0.0) })
}

/// Graph form of [`match_loss`] over two `1 × d` vectors.
pub fn match_loss_node(g: &mut Graph, g_s: Var, g_t: Var, matched: bool, margin: f64) -> Result<Var> {
    let diff = g.sub(g_s, g_t)?;
    let sq = g.mul(diff, diff)?;
    let d2 = g.sum(sq);
    if matched {
        return Ok(d2);
    }
    let neg = g.scale(d2, -1.0);
    let gap = g.add_scalar(neg, margin);
    Ok(g.relu(gap))
}

/// `count` independent derangements of `0..batch_size`: entry `p[i]` is the
/// instance whose `g_t` is paired with `g_s` of instance `i`. A batch of
/// one has no derangement, so nothing is returned.
pub fn make_negatives<R: Rng>(batch_size: usize, count: usize, rng: &mut R) -> Vec<Vec<usize>> {
    if batch_size < 2 {
        if count > 0 {
            debug!("batch of {batch_size} has no negatives");
        }
        return Vec::new();
    }
    (0..count)
        .map(|_| {
            let mut p: Vec<usize> = (0..batch_size).collect();
            loop {
                p.shuffle(rng);
                if p.iter().enumerate().all(|(i, &j)| i != j) {
                    return p;
                }
            }
        })
        .collect()
}
