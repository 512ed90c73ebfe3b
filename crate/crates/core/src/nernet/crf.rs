//! Linear-chain CRF over `K` tags with START/STOP transitions.
//!
//! Transitions are a `(K+2) × (K+2)` matrix `T[from][to]`; row `K` is START
//! and column `K+1` is STOP. The score of a path `y` under emissions `E` is
//!
//! ```text
//! T[START][y0] + Σ_t E[t][y_t] + Σ_{t>0} T[y_{t-1}][y_t] + T[y_{L-1}][STOP]
//! ```

use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp, CustomOp, Graph, Matrix, Var};

pub fn start_index(k: usize) -> usize {
    k
}

pub fn stop_index(k: usize) -> usize {
    k + 1
}

fn check(emissions: &Matrix, transitions: &Matrix) -> Result<usize> {
    let (len, k) = emissions.shape();
    if len == 0 {
        return Err(Error::Empty("CRF over an empty sequence".into()));
    }
    transitions.expect_shape((k + 2, k + 2), "CRF transitions")?;
    emissions.check_finite("CRF emissions")?;
    Ok(k)
}

/// Score of one tag path.
pub fn path_score(emissions: &Matrix, transitions: &Matrix, path: &[usize]) -> Result<f64> {
    let k = check(emissions, transitions)?;
    if path.len() != emissions.rows() {
        return Err(Error::Shape(format!(
            "path of {} tags for {} positions",
            path.len(),
            emissions.rows()
        )));
    }
    if let Some(&bad) = path.iter().find(|&&y| y >= k) {
        return Err(Error::Argument(format!("tag id {bad} outside 0..{k}")));
    }
    let mut s = transitions[(start_index(k), path[0])] + transitions[(path[path.len() - 1], stop_index(k))];
    for (t, &y) in path.iter().enumerate() {
        s += emissions[(t, y)];
        if t > 0 {
            s += transitions[(path[t - 1], y)];
        }
    }
    Ok(s)
}

/// Forward log-potentials: `alpha[t][j]` sums over paths ending in `j` at `t`.
fn forward(emissions: &Matrix, transitions: &Matrix, k: usize) -> Vec<Vec<f64>> {
    let len = emissions.rows();
    let mut alpha = vec![vec![0.0; k]; len];
    for j in 0..k {
        alpha[0][j] = transitions[(start_index(k), j)] + emissions[(0, j)];
    }
    let mut buf = vec![0.0; k];
    for t in 1..len {
        for j in 0..k {
            for i in 0..k {
                buf[i] = alpha[t - 1][i] + transitions[(i, j)];
            }
            alpha[t][j] = log_sum_exp(&buf) + emissions[(t, j)];
        }
    }
    alpha
}

/// Backward log-potentials: `beta[t][i]` sums over continuations from `i` at `t`.
fn backward(emissions: &Matrix, transitions: &Matrix, k: usize) -> Vec<Vec<f64>> {
    let len = emissions.rows();
    let mut beta = vec![vec![0.0; k]; len];
    for i in 0..k {
        beta[len - 1][i] = transitions[(i, stop_index(k))];
    }
    let mut buf = vec![0.0; k];
    for t in (0..len - 1).rev() {
        for i in 0..k {
            for j in 0..k {
                buf[j] = transitions[(i, j)] + emissions[(t + 1, j)] + beta[t + 1][j];
            }
            beta[t][i] = log_sum_exp(&buf);
        }
    }
    beta
}

fn log_partition_from_alpha(alpha: &[Vec<f64>], transitions: &Matrix, k: usize) -> f64 {
    let last = &alpha[alpha.len() - 1];
    let terms: Vec<f64> = (0..k).map(|i| last[i] + transitions[(i, stop_index(k))]).collect();
    log_sum_exp(&terms)
}

/// `log Σ_paths exp(score)` by the forward algorithm in log space.
pub fn crf_log_partition(emissions: &Matrix, transitions: &Matrix) -> Result<f64> {
    let k = check(emissions, transitions)?;
    let alpha = forward(emissions, transitions, k);
    Ok(log_partition_from_alpha(&alpha, transitions, k))
}

/// Negative log-likelihood of `gold`: log-partition minus gold path score.
pub fn crf_nll(emissions: &Matrix, transitions: &Matrix, gold: &[usize]) -> Result<f64> {
    let gold_score = path_score(emissions, transitions, gold)?;
    Ok((crf_log_partition(emissions, transitions)? - gold_score).max(0.0))
}

/// Expected counts under the CRF distribution: per-position tag marginals
/// (`L × K`) and transition expectations (`(K+2) × (K+2)`).
pub fn crf_marginals(emissions: &Matrix, transitions: &Matrix) -> Result<(Matrix, Matrix)> {
    let k = check(emissions, transitions)?;
    let len = emissions.rows();
    let alpha = forward(emissions, transitions, k);
    let beta = backward(emissions, transitions, k);
    let log_z = log_partition_from_alpha(&alpha, transitions, k);

    let mut unary = Matrix::zeros(len, k);
    for t in 0..len {
        for j in 0..k {
            unary[(t, j)] = (alpha[t][j] + beta[t][j] - log_z).exp();
        }
    }
    let mut pair = Matrix::zeros(k + 2, k + 2);
    for j in 0..k {
        pair[(start_index(k), j)] = unary[(0, j)];
        pair[(j, stop_index(k))] = unary[(len - 1, j)];
    }
    for t in 1..len {
        for i in 0..k {
            for j in 0..k {
                pair[(i, j)] +=
                    (alpha[t - 1][i] + transitions[(i, j)] + emissions[(t, j)] + beta[t][j] - log_z).exp();
            }
        }
    }
    Ok((unary, pair))
}

/// Highest-scoring path and its score. Ties go to the lower tag id at every
/// backpointer and at the final step. `allowed`, when given, is a
/// `(K+2) × (K+2)` mask of permitted transitions.
pub fn crf_viterbi(emissions: &Matrix, transitions: &Matrix, allowed: Option<&[Vec<bool>]>) -> Result<(Vec<usize>, f64)> {
    let k = check(emissions, transitions)?;
    let len = emissions.rows();
    let trans = |i: usize, j: usize| -> f64 {
        match allowed {
            Some(mask) if !mask[i][j] => f64::NEG_INFINITY,
            _ => transitions[(i, j)],
        }
    };
    let mut score = vec![vec![f64::NEG_INFINITY; k]; len];
    let mut back = vec![vec![0usize; k]; len];
    for j in 0..k {
        score[0][j] = trans(start_index(k), j) + emissions[(0, j)];
    }
    for t in 1..len {
        for j in 0..k {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for i in 0..k {
                let s = score[t - 1][i] + trans(i, j);
                if s > best {
                    best = s;
                    arg = i;
                }
            }
            score[t][j] = best + emissions[(t, j)];
            back[t][j] = arg;
        }
    }
    let mut best = f64::NEG_INFINITY;
    let mut last = 0;
    for i in 0..k {
        let s = score[len - 1][i] + trans(i, stop_index(k));
        if s > best {
            best = s;
            last = i;
        }
    }
    if best == f64::NEG_INFINITY {
        return Err(Error::Argument("no path satisfies the transition constraints".into()));
    }
    let mut path = vec![last; len];
    for t in (1..len).rev() {
        path[t - 1] = back[t][path[t]];
    }
    Ok((path, best))
}

/// CRF negative log-likelihood as a graph node over `(emissions, transitions)`.
struct CrfNllOp {
    gold: Vec<usize>,
}

impl CustomOp for CrfNllOp {
    fn name(&self) -> &'static str {
        "crf_nll"
    }

    fn backward(&self, inputs: &[&Matrix], _output: &Matrix, out_grad: &Matrix) -> Vec<Matrix> {
        let (emissions, transitions) = (inputs[0], inputs[1]);
        let k = emissions.cols();
        let g = out_grad.item();
        let (mut d_emit, mut d_trans) =
            crf_marginals(emissions, transitions).expect("inputs were validated in the forward pass");
        for (t, &y) in self.gold.iter().enumerate() {
            d_emit[(t, y)] -= 1.0;
            if t > 0 {
                d_trans[(self.gold[t - 1], y)] -= 1.0;
            }
        }
        d_trans[(start_index(k), self.gold[0])] -= 1.0;
        d_trans[(self.gold[self.gold.len() - 1], stop_index(k))] -= 1.0;
        d_emit.scale_in_place(g);
        d_trans.scale_in_place(g);
        vec![d_emit, d_trans]
    }
}

/// Adds the NLL node; gradients flow to both emissions and transitions.
pub fn crf_nll_node(g: &mut Graph, emissions: Var, transitions: Var, gold: &[usize]) -> Result<Var> {
    // not clamped at zero so the value stays consistent with its gradient
    let value = crf_log_partition(g.value(emissions), g.value(transitions))?
        - path_score(g.value(emissions), g.value(transitions), gold)?;
    Ok(g.custom(
        &[emissions, transitions],
        Matrix::scalar(value),
        Box::new(CrfNllOp { gold: gold.to_vec() }),
    ))
}
