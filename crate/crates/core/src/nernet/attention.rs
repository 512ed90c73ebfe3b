use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{Graph, Matrix, ParamId, ParamStore, Var};

/// `α = softmax(v · tanh(U1 h_i + U2 g_t))`, stored for right-multiplication
/// (`u1`: `d × d_a`, `u2`: `d_t × d_a`, `v`: `d_a × 1`). `d_t` is the width of
/// the trigger vector, which differs from `d` when the matcher has its own
/// encoder size.
#[derive(Clone, Debug)]
pub struct TriggerAttentionParams {
    pub u1: ParamId,
    pub u2: ParamId,
    pub v: ParamId,
    pub input_dim: usize,
    pub trigger_dim: usize,
    pub attention_dim: usize,
}

impl TriggerAttentionParams {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        trigger_dim: usize,
        attention_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let u1 = store.add_uniform(format!("{prefix}.u1"), input_dim, attention_dim, input_dim, rng)?;
        let u2 = store.add_uniform(format!("{prefix}.u2"), trigger_dim, attention_dim, trigger_dim, rng)?;
        let v = store.add_uniform(format!("{prefix}.v"), attention_dim, 1, attention_dim, rng)?;
        Ok(TriggerAttentionParams {
            u1,
            u2,
            v,
            input_dim,
            trigger_dim,
            attention_dim,
        })
    }

    pub fn from_store(store: &ParamStore, prefix: &str) -> Result<Self> {
        let u1 = store.expect(&format!("{prefix}.u1"))?;
        let u2 = store.expect(&format!("{prefix}.u2"))?;
        let v = store.expect(&format!("{prefix}.v"))?;
        let (input_dim, attention_dim) = store.value(u1).shape();
        let trigger_dim = store.value(u2).rows();
        store.value(u2).expect_shape((trigger_dim, attention_dim), "trigger attention u2")?;
        store.value(v).expect_shape((attention_dim, 1), "trigger attention v")?;
        Ok(TriggerAttentionParams {
            u1,
            u2,
            v,
            input_dim,
            trigger_dim,
            attention_dim,
        })
    }
}

/// `h: L × d`, `g_t: 1 × d` → (`α: L × 1`, `H' = α ⊙ H: L × d`).
pub fn trigger_attention(g: &mut Graph, store: &ParamStore, p: &TriggerAttentionParams, h: Var, g_t: Var) -> Result<(Var, Var)> {
    let (len, d) = g.value(h).shape();
    if len == 0 {
        return Err(Error::Empty("trigger attention over zero tokens".into()));
    }
    if d != p.input_dim || g.value(g_t).shape() != (1, p.trigger_dim) {
        return Err(Error::Shape(format!(
            "trigger attention expects widths {} and {}, got H {d} and g_t {:?}",
            p.input_dim,
            p.trigger_dim,
            g.value(g_t).shape()
        )));
    }
    let u1 = g.param(store, p.u1);
    let u2 = g.param(store, p.u2);
    let v = g.param(store, p.v);
    let a = g.matmul(h, u1)?;
    let b = g.matmul(g_t, u2)?;
    let pre = g.add_row_broadcast(a, b)?;
    let act = g.tanh(pre);
    let scores = g.matmul(act, v)?;
    let alpha = g.softmax(scores);
    let weighted = g.scale_rows(h, alpha)?;
    Ok((alpha, weighted))
}

/// Graph-free [`trigger_attention`].
pub fn trigger_attention_values(store: &ParamStore, p: &TriggerAttentionParams, h: &Matrix, g_t: &[f64]) -> Result<(Vec<f64>, Matrix)> {
    let mut g = Graph::new();
    let hv = g.constant(h.clone());
    let tv = g.constant(Matrix::row_vector(g_t));
    let (a, w) = trigger_attention(&mut g, store, p, hv, tv)?;
    Ok((g.value(a).as_slice().to_vec(), g.value(w).clone()))
}

/// `[H ; H']` along the feature axis.
pub fn concat_features(g: &mut Graph, h: Var, weighted: Var) -> Result<Var> {
    g.concat_cols(h, weighted)
}
