//! Tape-based reverse-mode differentiation over [`Matrix`] values.
//!
//! A [`Graph`] records every operation eagerly (values are computed as the
//! graph is built) and [`Graph::backward`] walks the tape in reverse.
//! Parameters are bound from a [`ParamStore`]; after the backward pass
//! [`Graph::accumulate`] adds their gradients into that store.

use std::collections::HashMap;

use rand::Rng;

use super::matrix::{matmul_nt_into, matmul_tn_into};
use super::{Matrix, ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// An operation defined outside this module, e.g. a fused loss whose
/// gradient has a closed form.
pub trait CustomOp {
    fn name(&self) -> &'static str;

    /// Gradient with respect to each input, in order.
    fn backward(&self, inputs: &[&Matrix], output: &Matrix, out_grad: &Matrix) -> Vec<Matrix>;
}

enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRowBroadcast(Var, Var),
    ScaleRows(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    SumAll(Var),
    Softmax(Var),
    Row(Var, usize),
    StackRows(Vec<Var>),
    SliceCols(Var, usize),
    ConcatCols(Var, Var),
    SelectRows(Var, Vec<usize>),
    Custom(Vec<Var>, Box<dyn CustomOp>),
}

struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    bound: HashMap<(u64, ParamId), Var>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Binds a parameter; repeated binds of the same parameter return the
    /// same variable so gradients accumulate in one place.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let key = (store.uid(), id);
        if let Some(&v) = self.bound.get(&key) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param);
        self.bound.insert(key, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        Ok(self.push(value, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    /// `a + b` where `b` is a `1 × n` row added to every row of `a`.
    pub fn add_row_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let (rows, cols) = self.shape(a);
        if self.shape(b) != (1, cols) {
            return Err(Error::Shape(format!(
                "row broadcast of {:?} onto {rows}x{cols}",
                self.shape(b)
            )));
        }
        let mut value = self.value(a).clone();
        let row = self.value(b).as_slice().to_vec();
        for i in 0..rows {
            for (x, r) in value.row_mut(i).iter_mut().zip(&row) {
                *x += r;
            }
        }
        Ok(self.push(value, Op::AddRowBroadcast(a, b)))
    }

    /// Multiplies row `i` of `a` by `s[i]`, where `s` is `rows × 1`.
    pub fn scale_rows(&mut self, a: Var, s: Var) -> Result<Var> {
        let (rows, _) = self.shape(a);
        if self.shape(s) != (rows, 1) {
            return Err(Error::Shape(format!(
                "row scaling needs a {rows}x1 column, got {:?}",
                self.shape(s)
            )));
        }
        let mut value = self.value(a).clone();
        for i in 0..rows {
            let c = self.value(s).as_slice()[i];
            value.row_mut(i).iter_mut().for_each(|x| *x *= c);
        }
        Ok(self.push(value, Op::ScaleRows(a, s)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x * c);
        self.push(value, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x + c);
        self.push(value, Op::AddScalar(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        self.push(value, Op::SumAll(a))
    }

    /// Sum of `1 × 1` terms, scaled by `1 / n`.
    pub fn mean(&mut self, terms: &[Var]) -> Result<Var> {
        if terms.is_empty() {
            return Err(Error::Empty("mean of zero terms".into()));
        }
        let mut acc = terms[0];
        for &t in &terms[1..] {
            acc = self.add(acc, t)?;
        }
        Ok(self.scale(acc, 1.0 / terms.len() as f64))
    }

    /// Softmax over every entry of `a` (normally a column or row vector).
    pub fn softmax(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let probs = super::softmax(self.value(a).as_slice());
        self.push(Matrix::from_vec(r, c, probs).expect("same size"), Op::Softmax(a))
    }

    pub fn row(&mut self, a: Var, i: usize) -> Result<Var> {
        let (rows, _) = self.shape(a);
        if i >= rows {
            return Err(Error::Shape(format!("row {i} of a {rows}-row matrix")));
        }
        let value = Matrix::row_vector(self.value(a).row(i));
        Ok(self.push(value, Op::Row(a, i)))
    }

    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Empty("stacking zero rows".into()))?;
        let cols = self.shape(*first).1;
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            if self.shape(r) != (1, cols) {
                return Err(Error::Shape(format!(
                    "stacking {:?} with 1x{cols} rows",
                    self.shape(r)
                )));
            }
            data.extend_from_slice(self.value(r).as_slice());
        }
        let value = Matrix::from_vec(rows.len(), cols, data)?;
        Ok(self.push(value, Op::StackRows(rows.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.shape(a);
        if start + len > cols {
            return Err(Error::Shape(format!(
                "columns {start}..{} of a {cols}-column matrix",
                start + len
            )));
        }
        let src = self.value(a);
        let mut value = Matrix::zeros(rows, len);
        for i in 0..rows {
            value.row_mut(i).copy_from_slice(&src.row(i)[start..start + len]);
        }
        Ok(self.push(value, Op::SliceCols(a, start)))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if ra != rb {
            return Err(Error::Shape(format!(
                "concatenating {ra}x{ca} with {rb}x{cb}"
            )));
        }
        let mut value = Matrix::zeros(ra, ca + cb);
        for i in 0..ra {
            let row = value.row_mut(i);
            row[..ca].copy_from_slice(self.nodes[a.0].value.row(i));
            row[ca..].copy_from_slice(self.nodes[b.0].value.row(i));
        }
        Ok(self.push(value, Op::ConcatCols(a, b)))
    }

    pub fn select_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let (rows, cols) = self.shape(a);
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::Shape(format!("row {bad} of a {rows}-row matrix")));
        }
        let mut value = Matrix::zeros(indices.len(), cols);
        for (k, &i) in indices.iter().enumerate() {
            value.row_mut(k).copy_from_slice(self.nodes[a.0].value.row(i));
        }
        Ok(self.push(value, Op::SelectRows(a, indices.to_vec())))
    }

    /// Inverted dropout. A no-op when `p == 0`.
    pub fn dropout<R: Rng>(&mut self, a: Var, p: f64, rng: &mut R) -> Result<Var> {
        if p <= 0.0 {
            return Ok(a);
        }
        let (r, c) = self.shape(a);
        let keep = 1.0 - p;
        let mask = (0..r * c)
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let mask = self.constant(Matrix::from_vec(r, c, mask)?);
        self.mul(a, mask)
    }

    pub fn custom(&mut self, inputs: &[Var], value: Matrix, op: Box<dyn CustomOp>) -> Var {
        self.push(value, Op::Custom(inputs.to_vec(), op))
    }

    /// Reverse pass from a `1 × 1` output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.shape(output) != (1, 1) {
            return Err(Error::Shape(format!(
                "backward needs a scalar output, got {:?}",
                self.shape(output)
            )));
        }
        let mut grads: Vec<Option<Matrix>> = Vec::with_capacity(output.0 + 1);
        grads.resize_with(output.0 + 1, || None);
        grads[output.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let mut da = Matrix::zeros(av.rows(), av.cols());
                matmul_nt_into(g, bv, &mut da);
                accumulate(grads, *a, da);
                let mut db = Matrix::zeros(bv.rows(), bv.cols());
                matmul_tn_into(av, g, &mut db);
                accumulate(grads, *b, db);
            }
            Op::Transpose(a) => accumulate(grads, *a, g.transpose()),
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let da = g.zip_map(val(*b), |x, y| x * y).expect("shape");
                let db = g.zip_map(val(*a), |x, y| x * y).expect("shape");
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::AddRowBroadcast(a, b) => {
                let mut db = Matrix::zeros(1, g.cols());
                for i in 0..g.rows() {
                    for (d, x) in db.as_mut_slice().iter_mut().zip(g.row(i)) {
                        *d += x;
                    }
                }
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, db);
            }
            Op::ScaleRows(a, s) => {
                let (av, sv) = (val(*a), val(*s));
                let mut da = g.clone();
                let mut ds = Matrix::zeros(sv.rows(), 1);
                for i in 0..g.rows() {
                    let c = sv.as_slice()[i];
                    da.row_mut(i).iter_mut().for_each(|x| *x *= c);
                    ds.as_mut_slice()[i] = g.row(i).iter().zip(av.row(i)).map(|(x, y)| x * y).sum();
                }
                accumulate(grads, *a, da);
                accumulate(grads, *s, ds);
            }
            Op::Scale(a, c) => accumulate(grads, *a, g.map(|x| x * c)),
            Op::AddScalar(a) => accumulate(grads, *a, g.clone()),
            Op::Tanh(a) => {
                let d = g.zip_map(&node.value, |x, y| x * (1.0 - y * y)).expect("shape");
                accumulate(grads, *a, d);
            }
            Op::Sigmoid(a) => {
                let d = g.zip_map(&node.value, |x, y| x * y * (1.0 - y)).expect("shape");
                accumulate(grads, *a, d);
            }
            Op::Relu(a) => {
                let d = g
                    .zip_map(val(*a), |x, y| if y > 0.0 { x } else { 0.0 })
                    .expect("shape");
                accumulate(grads, *a, d);
            }
            Op::SumAll(a) => {
                let (r, c) = val(*a).shape();
                accumulate(grads, *a, Matrix::filled(r, c, g.item()));
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let dot: f64 = g.as_slice().iter().zip(y.as_slice()).map(|(x, p)| x * p).sum();
                let d = g.zip_map(y, |x, p| p * (x - dot)).expect("shape");
                accumulate(grads, *a, d);
            }
            Op::Row(a, i) => {
                let (r, c) = val(*a).shape();
                let mut d = Matrix::zeros(r, c);
                d.row_mut(*i).copy_from_slice(g.as_slice());
                accumulate(grads, *a, d);
            }
            Op::StackRows(rows) => {
                for (i, r) in rows.iter().enumerate() {
                    accumulate(grads, *r, Matrix::row_vector(g.row(i)));
                }
            }
            Op::SliceCols(a, start) => {
                let (r, c) = val(*a).shape();
                let len = g.cols();
                let mut d = Matrix::zeros(r, c);
                for i in 0..r {
                    d.row_mut(i)[*start..*start + len].copy_from_slice(g.row(i));
                }
                accumulate(grads, *a, d);
            }
            Op::ConcatCols(a, b) => {
                let ca = val(*a).cols();
                let cb = val(*b).cols();
                let mut da = Matrix::zeros(g.rows(), ca);
                let mut db = Matrix::zeros(g.rows(), cb);
                for i in 0..g.rows() {
                    da.row_mut(i).copy_from_slice(&g.row(i)[..ca]);
                    db.row_mut(i).copy_from_slice(&g.row(i)[ca..]);
                }
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::SelectRows(a, indices) => {
                let (r, c) = val(*a).shape();
                let mut d = Matrix::zeros(r, c);
                for (k, &i) in indices.iter().enumerate() {
                    for (x, y) in d.row_mut(i).iter_mut().zip(g.row(k)) {
                        *x += y;
                    }
                }
                accumulate(grads, *a, d);
            }
            Op::Custom(inputs, op) => {
                let in_vals: Vec<&Matrix> = inputs.iter().map(|&v| val(v)).collect();
                let ds = op.backward(&in_vals, &node.value, g);
                debug_assert_eq!(ds.len(), inputs.len(), "{} returned wrong arity", op.name());
                for (v, d) in inputs.iter().zip(ds) {
                    accumulate(grads, *v, d);
                }
            }
        }
    }

    /// Adds the gradients of every parameter bound from `store` into its
    /// gradient buffers. Parameters bound from other stores are ignored.
    pub fn accumulate(&self, grads: &Gradients, store: &mut ParamStore) {
        let uid = store.uid();
        for (&(s, id), &v) in &self.bound {
            if s != uid {
                continue;
            }
            if let Some(g) = grads.get(v) {
                store.grad_mut(id).add_assign(g);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, d: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&d),
        slot @ None => *slot = Some(d),
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::numerics::{grad_check, GradCheckConfig};

    fn rand_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Exercises every built-in op in one scalar expression and checks it
    /// against central differences.
    #[test]
    fn all_ops_pass_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store = ParamStore::new(11);
        let a = store.add("a", rand_matrix(&mut rng, 3, 4)).unwrap();
        let b = store.add("b", rand_matrix(&mut rng, 4, 2)).unwrap();
        let r = store.add("r", rand_matrix(&mut rng, 1, 2)).unwrap();
        let s = store.add("s", rand_matrix(&mut rng, 3, 1)).unwrap();
        let c = store.add("c", rand_matrix(&mut rng, 3, 2)).unwrap();

        let loss = |store: &mut ParamStore| -> Result<f64> {
            let mut g = Graph::new();
            let (av, bv, rv, sv, cv) = (
                g.param(store, a),
                g.param(store, b),
                g.param(store, r),
                g.param(store, s),
                g.param(store, c),
            );
            let ab = g.matmul(av, bv)?;
            let ab = g.add_row_broadcast(ab, rv)?;
            let t = g.tanh(ab);
            let sg = g.sigmoid(cv);
            let m = g.mul(t, sg)?;
            let sc = g.scale_rows(m, sv)?;
            let d = g.sub(sc, cv)?;
            let sm = g.softmax(sv);
            let w = g.transpose(sm);
            let pooled = g.matmul(w, d)?;
            let row = g.row(d, 1)?;
            let st = g.stack_rows(&[pooled, row, pooled])?;
            let sl = g.slice_cols(st, 1, 1)?;
            let cat = g.concat_cols(st, sl)?;
            let sel = g.select_rows(cat, &[2, 0, 2])?;
            let sh = g.add_scalar(sel, 0.3);
            let re = g.relu(sh);
            let sq = g.mul(re, re)?;
            let tot = g.sum(sq);
            let tot = g.scale(tot, 0.7);
            let out = g.add(tot, tot)?;
            let grads = g.backward(out)?;
            g.accumulate(&grads, store);
            Ok(g.value(out).item())
        };

        let report = grad_check(loss, &mut store, &GradCheckConfig::default()).unwrap();
        assert!(report.passed(), "{report:#?}");
    }

    #[test]
    fn repeated_bind_shares_variable() {
        let mut store = ParamStore::new(0);
        let id = store.add("w", Matrix::scalar(2.0)).unwrap();
        let mut g = Graph::new();
        let v1 = g.param(&store, id);
        let v2 = g.param(&store, id);
        assert_eq!(v1, v2);
        let y = g.mul(v1, v2).unwrap();
        let grads = g.backward(y).unwrap();
        g.accumulate(&grads, &mut store);
        assert_eq!(store.grad(id).item(), 4.0);
    }

    #[test]
    fn other_store_grads_are_not_routed() {
        let mut s1 = ParamStore::new(0);
        let mut s2 = ParamStore::new(0);
        let p1 = s1.add("w", Matrix::scalar(3.0)).unwrap();
        let p2 = s2.add("w", Matrix::scalar(5.0)).unwrap();
        let mut g = Graph::new();
        let a = g.param(&s1, p1);
        let b = g.param(&s2, p2);
        let y = g.mul(a, b).unwrap();
        let grads = g.backward(y).unwrap();
        g.accumulate(&grads, &mut s1);
        assert_eq!(s1.grad(p1).item(), 5.0);
        assert_eq!(s2.grad(p2).item(), 0.0);
    }

    #[test]
    fn backward_needs_scalar() {
        let mut g = Graph::new();
        let x = g.constant(Matrix::zeros(2, 2));
        assert!(g.backward(x).is_err());
    }
}
