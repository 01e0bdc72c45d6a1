//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] owns every node created during a forward computation. Nodes are
//! appended after their parents, so the node index order is a topological
//! order and [`Var::backward`] is a single reverse sweep.

use std::cell::RefCell;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;
use crate::error::{Error, Result};

/// Backward rule of a custom node: maps the upstream gradient to one gradient
/// per parent, in parent order.
pub type BackwardFn = Box<dyn Fn(&Tensor) -> Vec<Tensor>>;

enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    ScaleRows(usize, usize),
    Scale(usize, f64),
    Shift(usize),
    Sum(usize),
    RowSum(usize),
    ColSum(usize),
    Sigmoid(usize),
    Exp(usize),
    Log(usize),
    Recip(usize),
    Relu(usize),
    LogSigmoid(usize),
    Softmax { input: usize, temp: f64 },
    NormalizeRows { input: usize, norms: Vec<f64>, eps: f64 },
    Dropout { input: usize, mask: Tensor },
    ConcatCols(usize, usize),
    Transpose(usize),
    GatherRows { input: usize, index: Vec<usize> },
    Clamp { input: usize, lo: f64, hi: f64 },
    Custom { parents: Vec<usize>, backward: BackwardFn },
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Arena of computation-graph nodes. Confined to one thread.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

/// Gradients produced by one backward sweep, indexed by node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of its shape if no gradient reached it.
    pub fn wrt(&self, v: Var<'_>) -> Tensor {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = v.shape();
                Tensor::zeros(r, c)
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn requires(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    /// Differentiable leaf (a parameter or an input we want gradients for).
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives gradients.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    /// Node with a caller-supplied backward rule.
    pub fn custom<'t>(&'t self, parents: &[Var<'t>], value: Tensor, backward: BackwardFn) -> Var<'t> {
        let ids: Vec<usize> = parents.iter().map(|p| p.id).collect();
        let rg = self.requires(&ids);
        self.push(value, Op::Custom { parents: ids, backward }, rg)
    }

    fn unary(&self, input: usize, value: Tensor, op: Op) -> Var<'_> {
        let rg = self.requires(&[input]);
        self.push(value, op, rg)
    }

    fn binary(&self, a: usize, b: usize, value: Tensor, op: Op) -> Var<'_> {
        let rg = self.requires(&[a, b]);
        self.push(value, op, rg)
    }

    fn value_of(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Row-wise `softmax(temp · x)` with max-shift.
pub fn softmax_rows(x: &Tensor, temp: f64) -> Tensor {
    let mut out = x.clone();
    for i in 0..x.rows() {
        let row = out.row_mut(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(temp * v));
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (temp * *v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    out
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.nodes.borrow()[self.id].value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// Value of a 1x1 node.
    pub fn item(&self) -> f64 {
        self.value().item()
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let v = self.value().matmul(&other.value())?;
        Ok(self.tape.binary(self.id, other.id, v, Op::MatMul(self.id, other.id)))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        let v = self.value().add(&other.value())?;
        Ok(self.tape.binary(self.id, other.id, v, Op::Add(self.id, other.id)))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        let v = self.value().sub(&other.value())?;
        Ok(self.tape.binary(self.id, other.id, v, Op::Sub(self.id, other.id)))
    }

    /// Elementwise product.
    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        let v = self.value().hadamard(&other.value())?;
        Ok(self.tape.binary(self.id, other.id, v, Op::Mul(self.id, other.id)))
    }

    /// Adds a `1×c` row vector to every row.
    pub fn add_row(self, row: Var<'t>) -> Result<Var<'t>> {
        let a = self.value();
        let r = row.value();
        if r.rows() != 1 || r.cols() != a.cols() {
            return Err(Error::shape("add_row", a.shape(), r.shape()));
        }
        let mut v = (*a).clone();
        for i in 0..v.rows() {
            v.row_mut(i).iter_mut().zip(r.row(0)).for_each(|(x, y)| *x += y);
        }
        Ok(self.tape.binary(self.id, row.id, v, Op::AddRow(self.id, row.id)))
    }

    /// Multiplies row `i` by `col[i]` for an `n×1` column.
    pub fn scale_rows(self, col: Var<'t>) -> Result<Var<'t>> {
        let a = self.value();
        let c = col.value();
        if c.cols() != 1 || c.rows() != a.rows() {
            return Err(Error::shape("scale_rows", a.shape(), c.shape()));
        }
        let mut v = (*a).clone();
        for i in 0..v.rows() {
            let s = c.get(i, 0);
            v.row_mut(i).iter_mut().for_each(|x| *x *= s);
        }
        Ok(self.tape.binary(self.id, col.id, v, Op::ScaleRows(self.id, col.id)))
    }

    pub fn scale(self, s: f64) -> Var<'t> {
        let v = self.value().scale(s);
        self.tape.unary(self.id, v, Op::Scale(self.id, s))
    }

    /// Adds a constant to every entry.
    pub fn shift(self, s: f64) -> Var<'t> {
        let v = self.value().map(|x| x + s);
        self.tape.unary(self.id, v, Op::Shift(self.id))
    }

    pub fn sum(self) -> Var<'t> {
        let v = Tensor::scalar(self.value().sum());
        self.tape.unary(self.id, v, Op::Sum(self.id))
    }

    /// `n×c → n×1`.
    pub fn row_sum(self) -> Var<'t> {
        let v = Tensor::column(&self.value().row_sums());
        self.tape.unary(self.id, v, Op::RowSum(self.id))
    }

    /// `n×c → 1×c`.
    pub fn col_sum(self) -> Var<'t> {
        let s = self.value().col_sums();
        let v = Tensor::from_vec(1, s.len(), s).expect("shape");
        self.tape.unary(self.id, v, Op::ColSum(self.id))
    }

    pub fn sigmoid(self) -> Var<'t> {
        let v = self.value().map(sigmoid);
        self.tape.unary(self.id, v, Op::Sigmoid(self.id))
    }

    pub fn exp(self) -> Var<'t> {
        let v = self.value().map(f64::exp);
        self.tape.unary(self.id, v, Op::Exp(self.id))
    }

    pub fn log(self) -> Var<'t> {
        let v = self.value().map(f64::ln);
        self.tape.unary(self.id, v, Op::Log(self.id))
    }

    pub fn recip(self) -> Var<'t> {
        let v = self.value().map(f64::recip);
        self.tape.unary(self.id, v, Op::Recip(self.id))
    }

    pub fn relu(self) -> Var<'t> {
        let v = self.value().map(|x| x.max(0.0));
        self.tape.unary(self.id, v, Op::Relu(self.id))
    }

    /// Numerically stable `log σ(x)`.
    pub fn log_sigmoid(self) -> Var<'t> {
        let v = self.value().map(log_sigmoid);
        self.tape.unary(self.id, v, Op::LogSigmoid(self.id))
    }

    /// Row-wise `softmax(temp · x)`.
    pub fn softmax_rows(self, temp: f64) -> Var<'t> {
        let v = softmax_rows(&self.value(), temp);
        self.tape.unary(self.id, v, Op::Softmax { input: self.id, temp })
    }

    /// Row-wise `softmin(temp · x) = softmax(−temp · x)`.
    pub fn softmin_rows(self, temp: f64) -> Var<'t> {
        self.softmax_rows(-temp)
    }

    /// Divides each row by `max(‖row‖₂, eps)`.
    pub fn normalize_rows(self, eps: f64) -> Var<'t> {
        let x = self.value();
        let norms: Vec<f64> = (0..x.rows())
            .map(|i| x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let mut v = (*x).clone();
        for (i, n) in norms.iter().enumerate() {
            let d = n.max(eps);
            v.row_mut(i).iter_mut().for_each(|e| *e /= d);
        }
        self.tape.unary(self.id, v, Op::NormalizeRows { input: self.id, norms, eps })
    }

    /// Pairwise cosine similarity of the rows of `self` (n×p) and `other` (k×p).
    pub fn cosine_similarity(self, other: Var<'t>, eps: f64) -> Result<Var<'t>> {
        let a = self.normalize_rows(eps);
        let b = other.normalize_rows(eps);
        a.matmul(b.transpose())
    }

    /// Inverted dropout: zeroes entries with probability `p` and rescales the
    /// survivors by `1/(1-p)`.
    pub fn dropout(self, p: f64, seed: u64) -> Var<'t> {
        if p <= 0.0 {
            return self;
        }
        let x = self.value();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = 1.0 - p;
        let mask = Tensor::from_fn(x.rows(), x.cols(), |_, _| {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        let v = x.hadamard(&mask).expect("shape");
        self.tape.unary(self.id, v, Op::Dropout { input: self.id, mask })
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn concat_cols(self, other: Var<'t>) -> Result<Var<'t>> {
        let a = self.value();
        let b = other.value();
        if a.rows() != b.rows() {
            return Err(Error::shape("concat_cols", a.shape(), b.shape()));
        }
        let v = Tensor::from_fn(a.rows(), a.cols() + b.cols(), |i, j| {
            if j < a.cols() {
                a.get(i, j)
            } else {
                b.get(i, j - a.cols())
            }
        });
        Ok(self.tape.binary(self.id, other.id, v, Op::ConcatCols(self.id, other.id)))
    }

    pub fn transpose(self) -> Var<'t> {
        let v = self.value().transpose();
        self.tape.unary(self.id, v, Op::Transpose(self.id))
    }

    /// Selects rows by index (repeats allowed).
    pub fn gather_rows(self, index: &[usize]) -> Result<Var<'t>> {
        let x = self.value();
        if let Some(&bad) = index.iter().find(|&&i| i >= x.rows()) {
            return Err(Error::invalid(format!("gather_rows index {bad} out of {} rows", x.rows())));
        }
        let v = Tensor::from_fn(index.len(), x.cols(), |r, c| x.get(index[r], c));
        Ok(self.tape.unary(
            self.id,
            v,
            Op::GatherRows {
                input: self.id,
                index: index.to_vec(),
            },
        ))
    }

    /// Clamp into `[lo, hi]`; gradient passes only strictly inside.
    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t> {
        let v = self.value().map(|x| x.clamp(lo, hi));
        self.tape.unary(self.id, v, Op::Clamp { input: self.id, lo, hi })
    }

    /// Same value, cut off from gradient flow.
    pub fn detach(self) -> Var<'t> {
        let v = (*self.value()).clone();
        self.tape.constant(v)
    }

    /// Reverse sweep from this scalar node.
    pub fn backward(self) -> Result<Gradients> {
        let nodes = self.tape.nodes.borrow();
        let shape = nodes[self.id].value.shape();
        if shape != (1, 1) {
            return Err(Error::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[self.id] = Some(Tensor::scalar(1.0));
        for id in (0..=self.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            for (parent, pg) in local_grads(&nodes, node, &g)? {
                if !nodes[parent].requires_grad {
                    continue;
                }
                match &mut grads[parent] {
                    Some(acc) => acc.add_assign(&pg)?,
                    slot @ None => *slot = Some(pg),
                }
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn local_grads(nodes: &[Node], node: &Node, g: &Tensor) -> Result<Vec<(usize, Tensor)>> {
    let val = |i: usize| -> &Tensor { &nodes[i].value };
    let out = &node.value;
    Ok(match &node.op {
        Op::Leaf => vec![],
        Op::MatMul(a, b) => vec![(*a, g.matmul_t(val(*b))?), (*b, val(*a).t_matmul(g)?)],
        Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
        Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.scale(-1.0))],
        Op::Mul(a, b) => vec![(*a, g.hadamard(val(*b))?), (*b, g.hadamard(val(*a))?)],
        Op::AddRow(a, r) => {
            let s = g.col_sums();
            vec![(*a, g.clone()), (*r, Tensor::from_vec(1, s.len(), s)?)]
        }
        Op::ScaleRows(a, c) => {
            let x = val(*a);
            let col = val(*c);
            let mut ga = g.clone();
            let mut gc = Tensor::zeros(col.rows(), 1);
            for i in 0..g.rows() {
                let s = col.get(i, 0);
                let dot: f64 = g.row(i).iter().zip(x.row(i)).map(|(p, q)| p * q).sum();
                gc.set(i, 0, dot);
                ga.row_mut(i).iter_mut().for_each(|v| *v *= s);
            }
            vec![(*a, ga), (*c, gc)]
        }
        Op::Scale(a, s) => vec![(*a, g.scale(*s))],
        Op::Shift(a) => vec![(*a, g.clone())],
        Op::Sum(a) => {
            let (r, c) = val(*a).shape();
            vec![(*a, Tensor::filled(r, c, g.item()))]
        }
        Op::RowSum(a) => {
            let (r, c) = val(*a).shape();
            vec![(*a, Tensor::from_fn(r, c, |i, _| g.get(i, 0)))]
        }
        Op::ColSum(a) => {
            let (r, c) = val(*a).shape();
            vec![(*a, Tensor::from_fn(r, c, |_, j| g.get(0, j)))]
        }
        Op::Sigmoid(a) => vec![(*a, g.zip_map(out, "sigmoid", |g, y| g * y * (1.0 - y))?)],
        Op::Exp(a) => vec![(*a, g.hadamard(out)?)],
        Op::Log(a) => vec![(*a, g.zip_map(val(*a), "log", |g, x| g / x)?)],
        Op::Recip(a) => vec![(*a, g.zip_map(out, "recip", |g, y| -g * y * y)?)],
        Op::Relu(a) => vec![(*a, g.zip_map(val(*a), "relu", |g, x| if x > 0.0 { g } else { 0.0 })?)],
        Op::LogSigmoid(a) => vec![(*a, g.zip_map(val(*a), "log_sigmoid", |g, x| g * (1.0 - sigmoid(x)))?)],
        Op::Softmax { input, temp } => {
            let mut ga = Tensor::zeros(g.rows(), g.cols());
            for i in 0..g.rows() {
                let y = out.row(i);
                let gr = g.row(i);
                let dot: f64 = gr.iter().zip(y).map(|(a, b)| a * b).sum();
                for (j, o) in ga.row_mut(i).iter_mut().enumerate() {
                    *o = temp * y[j] * (gr[j] - dot);
                }
            }
            vec![(*input, ga)]
        }
        Op::NormalizeRows { input, norms, eps } => {
            let mut ga = Tensor::zeros(g.rows(), g.cols());
            for (i, &n) in norms.iter().enumerate() {
                let y = out.row(i);
                let gr = g.row(i);
                if n > *eps {
                    let dot: f64 = gr.iter().zip(y).map(|(a, b)| a * b).sum();
                    for (j, o) in ga.row_mut(i).iter_mut().enumerate() {
                        *o = (gr[j] - dot * y[j]) / n;
                    }
                } else {
                    for (j, o) in ga.row_mut(i).iter_mut().enumerate() {
                        *o = gr[j] / eps;
                    }
                }
            }
            vec![(*input, ga)]
        }
        Op::Dropout { input, mask } => vec![(*input, g.hadamard(mask)?)],
        Op::ConcatCols(a, b) => {
            let ca = val(*a).cols();
            let cb = val(*b).cols();
            let ga = Tensor::from_fn(g.rows(), ca, |i, j| g.get(i, j));
            let gb = Tensor::from_fn(g.rows(), cb, |i, j| g.get(i, ca + j));
            vec![(*a, ga), (*b, gb)]
        }
        Op::Transpose(a) => vec![(*a, g.transpose())],
        Op::GatherRows { input, index } => {
            let (r, c) = val(*input).shape();
            let mut ga = Tensor::zeros(r, c);
            for (k, &src) in index.iter().enumerate() {
                ga.row_mut(src).iter_mut().zip(g.row(k)).for_each(|(o, v)| *o += v);
            }
            vec![(*input, ga)]
        }
        Op::Clamp { input, lo, hi } => {
            let (lo, hi) = (*lo, *hi);
            vec![(
                *input,
                g.zip_map(val(*input), "clamp", |g, x| if x > lo && x < hi { g } else { 0.0 })?,
            )]
        }
        Op::Custom { parents, backward } => {
            let gs = backward(g);
            if gs.len() != parents.len() {
                return Err(Error::invalid(format!(
                    "custom backward returned {} gradients for {} parents",
                    gs.len(),
                    parents.len()
                )));
            }
            for (p, pg) in parents.iter().zip(&gs) {
                if val(*p).shape() != pg.shape() {
                    return Err(Error::shape("custom backward", val(*p).shape(), pg.shape()));
                }
            }
            parents.iter().copied().zip(gs).collect()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::from_fn(2, 3, |i, j| (i + j) as f64));
        let g = x.sum().backward().unwrap();
        assert_eq!(g.wrt(x), Tensor::ones(2, 3));
    }

    #[test]
    fn square_sum_gradient_is_twice_input() {
        let tape = Tape::new();
        let xv = Tensor::from_fn(3, 2, |i, j| i as f64 - 2.0 * j as f64 + 0.5);
        let x = tape.leaf(xv.clone());
        let g = x.mul(x).unwrap().sum().backward().unwrap();
        assert_eq!(g.wrt(x), xv.scale(2.0));
    }

    #[test]
    fn sigmoid_at_zero() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(0.0));
        let y = x.sigmoid();
        assert_eq!(y.item(), 0.5);
        let g = y.backward().unwrap();
        assert_eq!(g.wrt(x).item(), 0.25);
    }

    #[test]
    fn softmin_zero_temperature_is_uniform() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::from_fn(3, 4, |i, j| (i * j) as f64 - 1.0));
        let y = x.softmin_rows(0.0).value();
        assert!(y.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(2, 2));
        assert!(matches!(x.backward(), Err(Error::NonScalarLoss((2, 2)))));
    }

    #[test]
    fn detach_blocks_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let y = x.mul(x.detach()).unwrap();
        let g = y.backward().unwrap();
        assert_eq!(g.wrt(x).item(), 3.0);
    }

    #[test]
    fn fan_out_accumulates() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(2.0));
        let y = x.add(x).unwrap().add(x).unwrap();
        assert_eq!(y.backward().unwrap().wrt(x).item(), 3.0);
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(2, 3));
        let b = tape.leaf(Tensor::zeros(2, 2));
        let msg = a.add(b).unwrap_err().to_string();
        assert!(msg.contains("(2, 3)") && msg.contains("(2, 2)"), "{msg}");
    }

    #[test]
    fn dropout_keeps_expected_scale() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::ones(200, 50));
        let y = x.dropout(0.2, 7).value();
        let zeros = y.data().iter().filter(|&&v| v == 0.0).count();
        assert!((zeros as f64 / 10_000.0 - 0.2).abs() < 0.02);
        assert!(y.data().iter().all(|&v| v == 0.0 || (v - 1.25).abs() < 1e-12));
    }
}
