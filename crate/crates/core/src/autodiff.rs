//! Reverse-mode differentiation over a recorded tape of matrix primitives.
//!
//! A [`Graph`] borrows a [`ParamStore`] for its lifetime. Parameters enter the
//! tape at most once (on first use) and their values are read from the store
//! without copying. [`Graph::backward`] returns one gradient per stored
//! parameter, zero for parameters that the output does not reach.

use crate::error::{MgamError, Result};
use crate::tensor::{sigmoid, softplus, Tensor};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(usize),
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Concat(Vec<Var>, Axis),
    Rows(Var, Vec<usize>),
    Relu(Var),
    Sigmoid(Var),
    Softplus(Var),
    Softmax(Var),
    Sum(Var),
    Mean(Var),
    Scale(Var, f64),
}

struct Node {
    // `None` for parameter nodes, whose value lives in the store.
    value: Option<Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Named, ordered collection of trainable tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(value);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, id: usize) -> &Tensor {
        &self.tensors[id]
    }

    pub fn get_mut(&mut self, id: usize) -> &mut Tensor {
        &mut self.tensors[id]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

/// Gradients aligned with a [`ParamStore`].
pub type Gradients = Vec<Tensor>;

pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            param_vars: vec![None; store.len()],
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.store.get(*id),
            _ => unreachable!("node without value"),
        }
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        debug_assert!(value.is_finite(), "non-finite value from {op:?}");
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn param(&mut self, id: usize) -> Var {
        if let Some(v) = self.param_vars[id] {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.rows() {
            return Err(MgamError::usage(format!(
                "matmul shape mismatch {:?} x {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let out = ta.matmul(tb);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.cols() {
            return Err(MgamError::usage(format!(
                "matmul_nt shape mismatch {:?} x {:?}ᵀ",
                ta.shape(),
                tb.shape()
            )));
        }
        let out = ta.matmul_nt(tb);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::MatMulNT(a, b), ng))
    }

    /// Elementwise sum. `b` may also be a `1 × cols` row (added to every row)
    /// or a `1 × 1` scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let mut out = ta.clone();
        if ta.shape() == tb.shape() {
            out.add_assign(tb);
        } else if tb.rows() == 1 && tb.cols() == ta.cols() {
            for r in 0..out.rows() {
                for (o, x) in out.row_slice_mut(r).iter_mut().zip(tb.data()) {
                    *o += x;
                }
            }
        } else if tb.shape() == [1, 1] {
            let s = tb.item();
            out.data_mut().iter_mut().for_each(|o| *o += s);
        } else {
            return Err(MgamError::usage(format!(
                "add shape mismatch {:?} + {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(MgamError::usage(format!(
                "mul shape mismatch {:?} * {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::from_vec(ta.rows(), ta.cols(), data)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(MgamError::usage("concat of zero tensors"));
        };
        if parts.len() == 1 {
            return Ok(first);
        }
        let shapes: Vec<[usize; 2]> = parts.iter().map(|&p| self.value(p).shape()).collect();
        let out = match axis {
            Axis::Rows => {
                let cols = shapes[0][1];
                if shapes.iter().any(|s| s[1] != cols) {
                    return Err(MgamError::usage(format!("row concat mismatch {shapes:?}")));
                }
                let rows = shapes.iter().map(|s| s[0]).sum();
                let mut data = Vec::with_capacity(rows * cols);
                for &p in parts {
                    data.extend_from_slice(self.value(p).data());
                }
                Tensor::from_vec(rows, cols, data)?
            }
            Axis::Cols => {
                let rows = shapes[0][0];
                if shapes.iter().any(|s| s[0] != rows) {
                    return Err(MgamError::usage(format!("col concat mismatch {shapes:?}")));
                }
                let cols = shapes.iter().map(|s| s[1]).sum();
                let mut data = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    for &p in parts {
                        data.extend_from_slice(self.value(p).row_slice(r));
                    }
                }
                Tensor::from_vec(rows, cols, data)?
            }
        };
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(out, Op::Concat(parts.to_vec(), axis), ng))
    }

    /// Gathers the listed rows (repeats allowed) into a new matrix.
    pub fn rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let ta = self.value(a);
        if idx.is_empty() {
            return Err(MgamError::usage("row slice with no indices"));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= ta.rows()) {
            return Err(MgamError::usage(format!(
                "row index {bad} out of range for {} rows",
                ta.rows()
            )));
        }
        let cols = ta.cols();
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            data.extend_from_slice(ta.row_slice(i));
        }
        let out = Tensor::from_vec(idx.len(), cols, data)?;
        let ng = self.needs(a);
        Ok(self.push(out, Op::Rows(a, idx.to_vec()), ng))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(crate::tensor::relu);
        let ng = self.needs(a);
        self.push(out, Op::Relu(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let ng = self.needs(a);
        self.push(out, Op::Sigmoid(a), ng)
    }

    /// `ln(1 + e^x)`, the building block of the stable log-sigmoid loss.
    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(softplus);
        let ng = self.needs(a);
        self.push(out, Op::Softplus(a), ng)
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let mut out = Tensor::zeros(ta.rows(), ta.cols());
        for r in 0..ta.rows() {
            let s = crate::tensor::softmax(ta.row_slice(r))?;
            out.row_slice_mut(r).copy_from_slice(&s);
        }
        let ng = self.needs(a);
        Ok(self.push(out, Op::Softmax(a), ng))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let ng = self.needs(a);
        self.push(out, Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let out = Tensor::scalar(t.sum() / t.len() as f64);
        let ng = self.needs(a);
        self.push(out, Op::Mean(a), ng)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).map(|x| x * factor);
        let ng = self.needs(a);
        self.push(out, Op::Scale(a, factor), ng)
    }

    /// Gradients of the scalar `output` with respect to every stored parameter.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.value(output).shape() != [1, 1] {
            return Err(MgamError::usage(format!(
                "backward needs a scalar output, got {:?}",
                self.value(output).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Tensor::scalar(1.0));
        let mut out: Gradients = self
            .store
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.rows(), t.cols()))
            .collect();

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => out[*id].add_assign(&g),
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        let da = g.matmul_nt(self.value(*b));
                        accumulate(&mut grads, *a, da);
                    }
                    if self.needs(*b) {
                        let db = self.value(*a).matmul_tn(&g);
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::MatMulNT(a, b) => {
                    if self.needs(*a) {
                        let da = g.matmul(self.value(*b));
                        accumulate(&mut grads, *a, da);
                    }
                    if self.needs(*b) {
                        let db = g.matmul_tn(self.value(*a));
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*b) {
                        let tb = self.value(*b);
                        let db = if tb.shape() == g.shape() {
                            g.clone()
                        } else if tb.rows() == 1 && tb.cols() == g.cols() {
                            let mut acc = Tensor::zeros(1, g.cols());
                            for r in 0..g.rows() {
                                for (o, x) in acc.data_mut().iter_mut().zip(g.row_slice(r)) {
                                    *o += x;
                                }
                            }
                            acc
                        } else {
                            Tensor::scalar(g.sum())
                        };
                        accumulate(&mut grads, *b, db);
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Mul(a, b) => {
                    if self.needs(*a) {
                        let da = hadamard(&g, self.value(*b));
                        accumulate(&mut grads, *a, da);
                    }
                    if self.needs(*b) {
                        let db = hadamard(&g, self.value(*a));
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::Concat(parts, axis) => {
                    let mut offset = 0;
                    for &p in parts {
                        let shape = self.value(p).shape();
                        if self.needs(p) {
                            let piece = match axis {
                                Axis::Rows => Tensor::from_vec(
                                    shape[0],
                                    shape[1],
                                    g.data()[offset * shape[1]..(offset + shape[0]) * shape[1]]
                                        .to_vec(),
                                )?,
                                Axis::Cols => {
                                    let mut data = Vec::with_capacity(shape[0] * shape[1]);
                                    for r in 0..shape[0] {
                                        data.extend_from_slice(
                                            &g.row_slice(r)[offset..offset + shape[1]],
                                        );
                                    }
                                    Tensor::from_vec(shape[0], shape[1], data)?
                                }
                            };
                            accumulate(&mut grads, p, piece);
                        }
                        offset += match axis {
                            Axis::Rows => shape[0],
                            Axis::Cols => shape[1],
                        };
                    }
                }
                Op::Rows(a, idx) => {
                    let src = self.value(*a);
                    let slot = grads[a.0].get_or_insert_with(|| Tensor::zeros(src.rows(), src.cols()));
                    for (k, &r) in idx.iter().enumerate() {
                        for (o, x) in slot.row_slice_mut(r).iter_mut().zip(g.row_slice(k)) {
                            *o += x;
                        }
                    }
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let da = zip_map(&g, x, |gi, xi| if xi > 0.0 { gi } else { 0.0 });
                    accumulate(&mut grads, *a, da);
                }
                Op::Sigmoid(a) => {
                    let y = node.value.as_ref().expect("sigmoid value");
                    let da = zip_map(&g, y, |gi, yi| gi * yi * (1.0 - yi));
                    accumulate(&mut grads, *a, da);
                }
                Op::Softplus(a) => {
                    let x = self.value(*a);
                    let da = zip_map(&g, x, |gi, xi| gi * sigmoid(xi));
                    accumulate(&mut grads, *a, da);
                }
                Op::Softmax(a) => {
                    let y = node.value.as_ref().expect("softmax value");
                    let mut da = Tensor::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let yr = y.row_slice(r);
                        let gr = g.row_slice(r);
                        let inner: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for ((o, yi), gi) in da.row_slice_mut(r).iter_mut().zip(yr).zip(gr) {
                            *o = yi * (gi - inner);
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::Sum(a) => {
                    let shape = self.value(*a).shape();
                    accumulate(&mut grads, *a, Tensor::filled(shape[0], shape[1], g.item()));
                }
                Op::Mean(a) => {
                    let t = self.value(*a);
                    let v = g.item() / t.len() as f64;
                    accumulate(&mut grads, *a, Tensor::filled(t.rows(), t.cols(), v));
                }
                Op::Scale(a, f) => {
                    let f = *f;
                    accumulate(&mut grads, *a, g.map(|x| x * f));
                }
            }
        }
        Ok(out)
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn hadamard(a: &Tensor, b: &Tensor) -> Tensor {
    zip_map(a, b, |x, y| x * y)
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn finite_difference_grad(mut f: impl FnMut(&Tensor) -> f64, x: &Tensor, h: f64) -> Tensor {
    assert!(h > 0.0, "finite difference step must be positive");
    let mut probe = x.clone();
    let mut out = Tensor::zeros(x.rows(), x.cols());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - h;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        out.data_mut()[i] = (plus - minus) / (2.0 * h);
    }
    out
}

/// Elementwise relative error `|a - n| / max(|a|, |n|, floor)`, maximised.
pub fn max_relative_error(analytic: &Tensor, numeric: &Tensor, floor: f64) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(value: Tensor) -> ParamStore {
        let mut s = ParamStore::new();
        s.push("x", value);
        s
    }

    #[test]
    fn square_gradient() {
        let store = single(Tensor::scalar(3.0));
        let mut g = Graph::new(&store);
        let x = g.param(0);
        let y = g.mul(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads[0].item(), 6.0);
    }

    #[test]
    fn softmax_cross_entropy_identity() {
        let z = Tensor::row(vec![0.3, -1.2, 2.0, 0.7]);
        let k = 2;
        let store = single(z.clone());
        let mut g = Graph::new(&store);
        let x = g.param(0);
        let p = g.softmax(x).unwrap();
        // -log p_k written with primitives: log-sum-exp(z) - z_k.
        // Evaluate the loss through softmax to exercise its backward rule.
        let onehot = g.constant(Tensor::row(
            (0..4).map(|i| if i == k { 1.0 } else { 0.0 }).collect(),
        ));
        let picked = g.mul(p, onehot).unwrap();
        let pk = g.sum(picked);
        let grads = g.backward(pk).unwrap();
        // d p_k / d z = p_k (onehot - p); so d(-log p_k)/dz = (d p_k/dz) / -p_k = p - onehot.
        let probs = crate::tensor::softmax(z.data()).unwrap();
        let pk_val = probs[k];
        for i in 0..4 {
            let ce_grad = -grads[0].data()[i] / pk_val;
            let expected = probs[i] - if i == k { 1.0 } else { 0.0 };
            assert!((ce_grad - expected).abs() < 1e-10, "{ce_grad} vs {expected}");
        }
    }

    #[test]
    fn non_scalar_backward_is_usage_error() {
        let store = single(Tensor::row(vec![1.0, 2.0]));
        let mut g = Graph::new(&store);
        let x = g.param(0);
        assert!(matches!(g.backward(x), Err(MgamError::Usage(_))));
    }

    #[test]
    fn unreached_params_get_zero_gradient() {
        let mut store = ParamStore::new();
        store.push("a", Tensor::scalar(2.0));
        store.push("b", Tensor::row(vec![1.0, 1.0]));
        let mut g = Graph::new(&store);
        let a = g.param(0);
        let y = g.scale(a, 4.0);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads[0].item(), 4.0);
        assert_eq!(grads[1].data(), &[0.0, 0.0]);
    }

    #[test]
    fn finite_difference_examples() {
        let g = finite_difference_grad(|x| x.item() * x.item(), &Tensor::scalar(3.0), 1e-4);
        assert!((g.item() - 6.0).abs() < 1e-6);
        let g = finite_difference_grad(|_| 4.2, &Tensor::row(vec![1.0, -2.0]), 1e-4);
        assert_eq!(g.data(), &[0.0, 0.0]);
        for h in [1e-3, 1e-4, 1e-5] {
            let g = finite_difference_grad(
                |x| x.data().iter().map(|&v| sigmoid(v)).sum(),
                &Tensor::zeros(1, 3),
                h,
            );
            for v in g.data() {
                assert!((v - 0.25).abs() < 1e-6);
            }
        }
    }

    // matmul -> relu -> matmul -> sum on 4-dim inputs, checked against central differences.
    #[test]
    fn two_layer_composite_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::new();
        store.push("x", Tensor::uniform(3, 4, 1.0, &mut rng));
        store.push("w1", Tensor::uniform(4, 4, 1.0, &mut rng));
        store.push("w2", Tensor::uniform(4, 4, 1.0, &mut rng));

        fn eval(store: &ParamStore) -> (f64, Gradients) {
            let mut g = Graph::new(store);
            let x = g.param(0);
            let w1 = g.param(1);
            let w2 = g.param(2);
            let h = g.matmul(x, w1).unwrap();
            let h = g.relu(h);
            let o = g.matmul(h, w2).unwrap();
            let s = g.sum(o);
            (g.value(s).item(), g.backward(s).unwrap())
        }

        let (_, grads) = eval(&store);
        for id in 0..store.len() {
            let numeric = finite_difference_grad(
                |t| {
                    let mut probe = store.clone();
                    *probe.get_mut(id) = t.clone();
                    eval(&probe).0
                },
                store.get(id),
                1e-5,
            );
            assert!(max_relative_error(&grads[id], &numeric, 1e-6) < 1e-5);
        }
    }

    #[test]
    fn concat_and_rows_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store = ParamStore::new();
        store.push("e", Tensor::uniform(5, 3, 1.0, &mut rng));
        store.push("w", Tensor::uniform(2, 6, 1.0, &mut rng));
        store.push("b", Tensor::uniform(1, 2, 1.0, &mut rng));
        fn eval(store: &ParamStore) -> (f64, Gradients) {
            let mut g = Graph::new(store);
            let e = g.param(0);
            let w = g.param(1);
            let b = g.param(2);
            let a = g.rows(e, &[0, 3, 3]).unwrap();
            let c = g.rows(e, &[1, 4, 0]).unwrap();
            let x = g.concat(&[a, c], Axis::Cols).unwrap();
            let y = g.matmul_nt(x, w).unwrap();
            let y = g.add(y, b).unwrap();
            let y = g.sigmoid(y);
            let y2 = g.concat(&[y, y], Axis::Rows).unwrap();
            let s = g.softmax(y2).unwrap();
            let p = g.mul(s, y2).unwrap();
            let sp = g.softplus(p);
            let m = g.mean(sp);
            (g.value(m).item(), g.backward(m).unwrap())
        }
        let (_, grads) = eval(&store);
        for id in 0..store.len() {
            let numeric = finite_difference_grad(
                |t| {
                    let mut probe = store.clone();
                    *probe.get_mut(id) = t.clone();
                    eval(&probe).0
                },
                store.get(id),
                1e-5,
            );
            assert!(max_relative_error(&grads[id], &numeric, 1e-6) < 1e-5, "param {id}");
        }
    }

    #[test]
    fn backward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let store = single(Tensor::uniform(4, 4, 1.0, &mut rng));
        let run = || {
            let mut g = Graph::new(&store);
            let x = g.param(0);
            let y = g.matmul_nt(x, x).unwrap();
            let y = g.softmax(y).unwrap();
            let s = g.sum(y);
            let s2 = g.mul(s, s).unwrap();
            g.backward(s2).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(
            a[0].data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b[0].data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
