use rand::Rng;

use super::{Graph, Matrix, ParamId, ParamStore, Var};
use crate::error::{Error, Result};

/// One LSTM direction. Gate blocks are packed column-wise in the order
/// input, forget, cell, output:
///
/// * `w`: `d_in × 4h` input weights
/// * `u`: `h × 4h` recurrent weights
/// * `b`: `1 × 4h` bias
#[derive(Clone, Debug)]
pub struct LstmParams {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
    pub input_size: usize,
    pub hidden_size: usize,
}

impl LstmParams {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input_size: usize,
        hidden_size: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let h4 = 4 * hidden_size;
        let w = store.add_uniform(format!("{prefix}.w"), input_size, h4, input_size, rng)?;
        let u = store.add_uniform(format!("{prefix}.u"), hidden_size, h4, hidden_size, rng)?;
        let b = store.add_zeros(format!("{prefix}.b"), 1, h4)?;
        Ok(LstmParams {
            w,
            u,
            b,
            input_size,
            hidden_size,
        })
    }

    pub fn from_store(store: &ParamStore, prefix: &str) -> Result<Self> {
        let w = store.expect(&format!("{prefix}.w"))?;
        let u = store.expect(&format!("{prefix}.u"))?;
        let b = store.expect(&format!("{prefix}.b"))?;
        let (input_size, h4) = store.value(w).shape();
        if h4 % 4 != 0 || store.value(u).shape() != (h4 / 4, h4) || store.value(b).shape() != (1, h4) {
            return Err(Error::Shape(format!("inconsistent LSTM parameters under `{prefix}`")));
        }
        Ok(LstmParams {
            w,
            u,
            b,
            input_size,
            hidden_size: h4 / 4,
        })
    }

    /// Runs the recurrence over the rows of `x` (`L × d_in`), from the last
    /// row to the first when `reverse` is set. Returns one `1 × h` state per
    /// position, indexed by position.
    fn run(&self, g: &mut Graph, store: &ParamStore, x: Var, reverse: bool) -> Result<Vec<Var>> {
        let h = self.hidden_size;
        let w = g.param(store, self.w);
        let u = g.param(store, self.u);
        let b = g.param(store, self.b);
        let xw = g.matmul(x, w)?;
        let xw = g.add_row_broadcast(xw, b)?;
        let len = g.value(x).rows();

        let order: Vec<usize> = if reverse {
            (0..len).rev().collect()
        } else {
            (0..len).collect()
        };
        let mut states = vec![None; len];
        let mut prev: Option<(Var, Var)> = None;
        for t in order {
            let mut z = g.row(xw, t)?;
            if let Some((h_prev, _)) = prev {
                let rec = g.matmul(h_prev, u)?;
                z = g.add(z, rec)?;
            }
            let i_pre = g.slice_cols(z, 0, h)?;
            let f_pre = g.slice_cols(z, h, h)?;
            let c_pre = g.slice_cols(z, 2 * h, h)?;
            let o_pre = g.slice_cols(z, 3 * h, h)?;
            let i = g.sigmoid(i_pre);
            let cand = g.tanh(c_pre);
            let o = g.sigmoid(o_pre);
            let mut c = g.mul(i, cand)?;
            if let Some((_, c_prev)) = prev {
                let f = g.sigmoid(f_pre);
                let keep = g.mul(f, c_prev)?;
                c = g.add(c, keep)?;
            }
            let tc = g.tanh(c);
            let h_t = g.mul(o, tc)?;
            states[t] = Some(h_t);
            prev = Some((h_t, c));
        }
        Ok(states.into_iter().map(|s| s.expect("every position visited")).collect())
    }
}

/// Forward and backward LSTMs whose states are concatenated per position.
#[derive(Clone, Debug)]
pub struct BiLstm {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

impl BiLstm {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input_size: usize,
        hidden_size: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(BiLstm {
            forward: LstmParams::new(store, &format!("{prefix}.fwd"), input_size, hidden_size, rng)?,
            backward: LstmParams::new(store, &format!("{prefix}.bwd"), input_size, hidden_size, rng)?,
        })
    }

    pub fn from_store(store: &ParamStore, prefix: &str) -> Result<Self> {
        let forward = LstmParams::from_store(store, &format!("{prefix}.fwd"))?;
        let backward = LstmParams::from_store(store, &format!("{prefix}.bwd"))?;
        if forward.input_size != backward.input_size || forward.hidden_size != backward.hidden_size {
            return Err(Error::Shape(format!("BiLSTM `{prefix}` directions disagree")));
        }
        Ok(BiLstm { forward, backward })
    }

    pub fn input_size(&self) -> usize {
        self.forward.input_size
    }

    pub fn output_size(&self) -> usize {
        2 * self.forward.hidden_size
    }

    /// `x: L × d_in` to `L × 2h`; row `t` is `[forward_t ; backward_t]`.
    pub fn encode(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let (len, d_in) = g.value(x).shape();
        if len == 0 {
            return Err(Error::Empty("BiLSTM input has no rows".into()));
        }
        if d_in != self.input_size() {
            return Err(Error::Shape(format!(
                "BiLSTM expects width {}, got {d_in}",
                self.input_size()
            )));
        }
        let fwd = self.forward.run(g, store, x, false)?;
        let bwd = self.backward.run(g, store, x, true)?;
        let fwd = g.stack_rows(&fwd)?;
        let bwd = g.stack_rows(&bwd)?;
        g.concat_cols(fwd, bwd)
    }
}

/// Graph-free convenience wrapper around [`BiLstm::encode`].
pub fn bilstm_encode(params: &BiLstm, store: &ParamStore, x: &Matrix) -> Result<Matrix> {
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let h = params.encode(&mut g, store, xv)?;
    Ok(g.value(h).clone())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::numerics::graph::sigmoid;

    fn random_input(rng: &mut ChaCha8Rng, l: usize, d: usize) -> Matrix {
        Matrix::from_vec(l, d, (0..l * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Scalar reference recurrence, written independently of the graph.
    fn reference_direction(store: &ParamStore, p: &LstmParams, x: &Matrix, reverse: bool) -> Vec<Vec<f64>> {
        let (w, u, b) = (store.value(p.w), store.value(p.u), store.value(p.b));
        let h = p.hidden_size;
        let len = x.rows();
        let mut hs = vec![vec![0.0; h]; len];
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        let steps: Vec<usize> = if reverse { (0..len).rev().collect() } else { (0..len).collect() };
        for t in steps {
            let mut z = vec![0.0; 4 * h];
            for (j, zj) in z.iter_mut().enumerate() {
                let mut acc = b[(0, j)];
                for k in 0..p.input_size {
                    acc += x[(t, k)] * w[(k, j)];
                }
                for k in 0..h {
                    acc += h_prev[k] * u[(k, j)];
                }
                *zj = acc;
            }
            let mut h_new = vec![0.0; h];
            let mut c_new = vec![0.0; h];
            for k in 0..h {
                let i = sigmoid(z[k]);
                let f = sigmoid(z[h + k]);
                let gg = z[2 * h + k].tanh();
                let o = sigmoid(z[3 * h + k]);
                c_new[k] = f * c_prev[k] + i * gg;
                h_new[k] = o * c_new[k].tanh();
            }
            hs[t] = h_new.clone();
            h_prev = h_new;
            c_prev = c_new;
        }
        hs
    }

    #[test]
    fn matches_scalar_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::new(7);
        let bi = BiLstm::new(&mut store, "enc", 2, 3, &mut rng).unwrap();
        // non-zero biases so the bias path is exercised
        for id in [bi.forward.b, bi.backward.b] {
            for x in store.value_mut(id).as_mut_slice() {
                *x = rng.random_range(-0.5..0.5);
            }
        }
        let x = random_input(&mut rng, 3, 2);
        let out = bilstm_encode(&bi, &store, &x).unwrap();
        assert_eq!(out.shape(), (3, 6));
        let f = reference_direction(&store, &bi.forward, &x, false);
        let b = reference_direction(&store, &bi.backward, &x, true);
        for t in 0..3 {
            for k in 0..3 {
                assert!((out[(t, k)] - f[t][k]).abs() < 1e-10);
                assert!((out[(t, 3 + k)] - b[t][k]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn single_step_directions_agree_with_shared_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new(1);
        let bi = BiLstm::new(&mut store, "enc", 4, 5, &mut rng).unwrap();
        store
            .copy_prefixed(&store.clone(), "enc.fwd", "enc.bwd")
            .unwrap();
        let x = random_input(&mut rng, 1, 4);
        let out = bilstm_encode(&bi, &store, &x).unwrap();
        assert_eq!(&out.row(0)[..5], &out.row(0)[5..]);
    }

    #[test]
    fn reversing_input_swaps_halves() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new(2);
        let bi = BiLstm::new(&mut store, "enc", 3, 4, &mut rng).unwrap();
        let swapped = BiLstm {
            forward: bi.backward.clone(),
            backward: bi.forward.clone(),
        };
        let x = random_input(&mut rng, 5, 3);
        let mut rev_rows: Vec<Vec<f64>> = (0..5).map(|t| x.row(t).to_vec()).collect();
        rev_rows.reverse();
        let x_rev = Matrix::from_rows(&rev_rows).unwrap();

        let a = bilstm_encode(&bi, &store, &x).unwrap();
        let b = bilstm_encode(&swapped, &store, &x_rev).unwrap();
        for t in 0..5 {
            let (ra, rb) = (a.row(t), b.row(4 - t));
            assert_eq!(&ra[..4], &rb[4..]);
            assert_eq!(&ra[4..], &rb[..4]);
        }
    }

    #[test]
    fn forward_direction_is_causal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new(3);
        let bi = BiLstm::new(&mut store, "enc", 2, 3, &mut rng).unwrap();
        let x = random_input(&mut rng, 6, 2);
        let mut y = x.clone();
        y[(4, 0)] += 0.5;
        let a = bilstm_encode(&bi, &store, &x).unwrap();
        let b = bilstm_encode(&bi, &store, &y).unwrap();
        for t in 0..4 {
            assert_eq!(&a.row(t)[..3], &b.row(t)[..3], "forward state {t} saw the future");
        }
        assert_ne!(&a.row(4)[..3], &b.row(4)[..3]);
        // the backward direction does see later positions
        assert_ne!(&a.row(0)[3..], &b.row(0)[3..]);
    }

    #[test]
    fn shape_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::new(4);
        let bi = BiLstm::new(&mut store, "enc", 2, 3, &mut rng).unwrap();
        assert!(bilstm_encode(&bi, &store, &Matrix::zeros(3, 5)).is_err());
        assert!(bilstm_encode(&bi, &store, &Matrix::zeros(0, 2)).is_err());
    }
}
