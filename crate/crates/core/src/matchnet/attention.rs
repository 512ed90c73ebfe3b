use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{Graph, Matrix, ParamId, ParamStore, Var};

/// Self-attention pooling weights. Stored for right-multiplication:
/// `w1` is `d × d_a` and `w2` is `d_a × 1`, so the score of row `h_i` is
/// `tanh(h_i · w1) · w2`.
#[derive(Clone, Debug)]
pub struct AttentionParams {
    pub w1: ParamId,
    pub w2: ParamId,
    pub input_dim: usize,
    pub attention_dim: usize,
}

impl AttentionParams {
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, input_dim: usize, attention_dim: usize, rng: &mut R) -> Result<Self> {
        let w1 = store.add_uniform(format!("{prefix}.w1"), input_dim, attention_dim, input_dim, rng)?;
        let w2 = store.add_uniform(format!("{prefix}.w2"), attention_dim, 1, attention_dim, rng)?;
        Ok(AttentionParams {
            w1,
            w2,
            input_dim,
            attention_dim,
        })
    }

    pub fn from_store(store: &ParamStore, prefix: &str) -> Result<Self> {
        let w1 = store.expect(&format!("{prefix}.w1"))?;
        let w2 = store.expect(&format!("{prefix}.w2"))?;
        let (input_dim, attention_dim) = store.value(w1).shape();
        store.value(w2).expect_shape((attention_dim, 1), "attention w2")?;
        Ok(AttentionParams {
            w1,
            w2,
            input_dim,
            attention_dim,
        })
    }
}

/// `rows: L × d` → (`L × 1` attention weights, `1 × d` pooled vector).
pub fn attend_pool(g: &mut Graph, store: &ParamStore, params: &AttentionParams, rows: Var) -> Result<(Var, Var)> {
    let (len, d) = g.value(rows).shape();
    if len == 0 {
        return Err(Error::Empty("attention pooling over zero rows".into()));
    }
    if d != params.input_dim {
        return Err(Error::Shape(format!("attention expects width {}, got {d}", params.input_dim)));
    }
    let w1 = g.param(store, params.w1);
    let w2 = g.param(store, params.w2);
    let hidden = g.matmul(rows, w1)?;
    let hidden = g.tanh(hidden);
    let scores = g.matmul(hidden, w2)?;
    let weights = g.softmax(scores);
    let wt = g.transpose(weights);
    let pooled = g.matmul(wt, rows)?;
    Ok((weights, pooled))
}

/// Graph-free [`attend_pool`].
pub fn attend_pool_values(store: &ParamStore, params: &AttentionParams, rows: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut g = Graph::new();
    let r = g.constant(rows.clone());
    let (w, p) = attend_pool(&mut g, store, params, r)?;
    Ok((g.value(w).as_slice().to_vec(), g.value(p).as_slice().to_vec()))
}

/// Rows of `h` at the trigger indices, in ascending index order.
pub fn trigger_rows(g: &mut Graph, h: Var, triggers: &[usize]) -> Result<Var> {
    if triggers.is_empty() {
        return Err(Error::Empty("trigger set is empty".into()));
    }
    let mut sorted = triggers.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    g.select_rows(h, &sorted)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn setup(d: usize, da: usize, seed: u64) -> (ParamStore, AttentionParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new(seed);
        let p = AttentionParams::new(&mut store, "att", d, da, &mut rng).unwrap();
        (store, p)
    }

    #[test]
    fn single_row_pools_to_itself() {
        let (store, p) = setup(3, 4, 0);
        let rows = Matrix::row_vector(&[0.3, -1.0, 2.0]);
        let (w, pooled) = attend_pool_values(&store, &p, &rows).unwrap();
        assert_eq!(w, vec![1.0]);
        assert_eq!(pooled, vec![0.3, -1.0, 2.0]);
    }

    #[test]
    fn identical_rows_give_uniform_weights() {
        let (store, p) = setup(2, 3, 1);
        let rows = Matrix::from_rows(&[vec![0.5, 0.25], vec![0.5, 0.25], vec![0.5, 0.25], vec![0.5, 0.25]]).unwrap();
        let (w, pooled) = attend_pool_values(&store, &p, &rows).unwrap();
        assert_eq!(w, vec![0.25; 4]);
        assert_eq!(pooled, vec![0.5, 0.25]);
    }

    #[test]
    fn matches_scalar_hand_computation() {
        let mut store = ParamStore::new(0);
        // W1 (d=2, d_a=2) and W2 (d_a=2) chosen by hand
        let w1 = store.add("att.w1", Matrix::from_rows(&[vec![0.5, -0.2], vec![0.1, 0.3]]).unwrap()).unwrap();
        let w2 = store.add("att.w2", Matrix::column_vector(&[1.0, -2.0])).unwrap();
        let p = AttentionParams { w1, w2, input_dim: 2, attention_dim: 2 };
        let h = [[1.0, 2.0], [-1.0, 0.5], [0.0, -1.0]];
        let rows = Matrix::from_rows(&h.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
        let (w, pooled) = attend_pool_values(&store, &p, &rows).unwrap();

        let scores: Vec<f64> = h
            .iter()
            .map(|r| {
                let a0 = (r[0] * 0.5 + r[1] * 0.1).tanh();
                let a1 = (r[0] * -0.2 + r[1] * 0.3).tanh();
                a0 * 1.0 + a1 * -2.0
            })
            .collect();
        let z: f64 = scores.iter().map(|s| s.exp()).sum();
        let alpha: Vec<f64> = scores.iter().map(|s| s.exp() / z).collect();
        let expect: Vec<f64> = (0..2).map(|j| (0..3).map(|i| alpha[i] * h[i][j]).sum()).collect();
        for (a, b) in w.iter().zip(&alpha) {
            assert!((a - b).abs() < 1e-14);
        }
        for (a, b) in pooled.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn trigger_rows_select_in_order() {
        let mut g = Graph::new();
        let h = g.constant(Matrix::from_rows(&(0..5).map(|i| vec![i as f64, -(i as f64)]).collect::<Vec<_>>()).unwrap());
        let m = trigger_rows(&mut g, h, &[2]).unwrap();
        assert_eq!(g.value(m).as_slice(), &[2.0, -2.0]);
        let m = trigger_rows(&mut g, h, &[3, 1]).unwrap();
        assert_eq!(g.value(m).as_slice(), &[1.0, -1.0, 3.0, -3.0]);
        assert!(trigger_rows(&mut g, h, &[]).is_err());
    }

    #[test]
    fn all_indices_pool_like_full_matrix() {
        let (store, p) = setup(3, 2, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h = Matrix::from_vec(4, 3, data).unwrap();
        let mut g = Graph::new();
        let hv = g.constant(h.clone());
        let m = trigger_rows(&mut g, hv, &[0, 1, 2, 3]).unwrap();
        let (_, gt) = attend_pool(&mut g, &store, &p, m).unwrap();
        let (_, full) = attend_pool_values(&store, &p, &h).unwrap();
        assert_eq!(g.value(gt).as_slice(), full.as_slice());
    }

    #[test]
    fn empty_input_is_an_error() {
        let (store, p) = setup(3, 2, 0);
        assert!(attend_pool_values(&store, &p, &Matrix::zeros(0, 3)).is_err());
    }
}
