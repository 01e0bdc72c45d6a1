//! Symmetric eigenpairs by shifted power iteration with deflation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tensor::Tensor;

pub const POWER_MAX_ITERS: usize = 10_000;
pub const POWER_TOL: f64 = 1e-8;

/// A symmetric linear operator known only through products.
pub trait SymOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
    /// Any `c` with `λ_min ≥ −c`, so `A + cI` is positive semidefinite.
    fn shift(&self) -> f64;
}

/// `B = A − ddᵀ/2m` of a simple graph, applied in O(n + m).
pub struct SparseModularity<'g> {
    g: &'g Graph,
    deg: Vec<f64>,
    two_m: f64,
}

impl<'g> SparseModularity<'g> {
    pub fn new(g: &'g Graph) -> Result<Self> {
        if g.m() == 0 {
            return Err(Error::EmptyGraph);
        }
        Ok(SparseModularity {
            g,
            deg: g.degrees().into_iter().map(|d| d as f64).collect(),
            two_m: 2.0 * g.m() as f64,
        })
    }

    pub fn degrees(&self) -> &[f64] {
        &self.deg
    }

    pub fn two_m(&self) -> f64 {
        self.two_m
    }

    pub fn graph(&self) -> &Graph {
        self.g
    }
}

impl SymOperator for SparseModularity<'_> {
    fn dim(&self) -> usize {
        self.g.n()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let dx: f64 = self.deg.iter().zip(x).map(|(d, v)| d * v).sum::<f64>() / self.two_m;
        for (v, o) in out.iter_mut().enumerate() {
            let ax: f64 = self.g.neighbors(v).iter().map(|&u| x[u]).sum();
            *o = ax - self.deg[v] * dx;
        }
    }

    fn shift(&self) -> f64 {
        2.0 * self.deg.iter().cloned().fold(0.0, f64::max)
    }
}

/// A dense symmetric matrix.
pub struct DenseSym<'a> {
    m: &'a Tensor,
    shift: f64,
}

impl<'a> DenseSym<'a> {
    pub fn new(m: &'a Tensor) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::shape("DenseSym", m.shape(), m.shape()));
        }
        let shift = (0..m.rows())
            .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        Ok(DenseSym { m, shift })
    }
}

impl SymOperator for DenseSym<'_> {
    fn dim(&self) -> usize {
        self.m.rows()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.m.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn shift(&self) -> f64 {
        self.shift
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for q in basis {
        let c = dot(v, q);
        v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Largest algebraic eigenpair of `op` restricted to the complement of the
/// orthonormal `deflate` vectors. Convergence is declared when the Rayleigh
/// quotient changes by less than `tol·max(1, |λ|)`; `None` after `max_iters`.
pub fn leading_eigenpair(
    op: &dyn SymOperator,
    deflate: &[Vec<f64>],
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Option<(f64, Vec<f64>)> {
    let n = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    project_out(&mut v, deflate);
    if normalize(&mut v) == 0.0 {
        return None;
    }
    let c = op.shift();
    let mut w = vec![0.0; n];
    let mut prev = f64::NAN;
    for _ in 0..max_iters {
        op.apply(&v, &mut w);
        let lambda = dot(&v, &w);
        if (lambda - prev).abs() < tol * lambda.abs().max(1.0) {
            return Some((lambda, v));
        }
        prev = lambda;
        w.iter_mut().zip(&v).for_each(|(a, b)| *a += c * b);
        project_out(&mut w, deflate);
        // second pass keeps round-off from re-entering the deflated space
        project_out(&mut w, deflate);
        if normalize(&mut w) == 0.0 {
            return Some((-c, v));
        }
        std::mem::swap(&mut v, &mut w);
    }
    None
}

/// The `k` largest algebraic eigenpairs, in decreasing order.
pub fn top_eigenpairs(op: &dyn SymOperator, k: usize, seed: u64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if k > op.dim() {
        return Err(Error::invalid(format!("asked for {k} eigenpairs of a {}-dim operator", op.dim())));
    }
    let mut values = Vec::with_capacity(k);
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(k);
    for i in 0..k {
        let (l, v) = leading_eigenpair(op, &vectors, seed.wrapping_add(i as u64), POWER_MAX_ITERS, POWER_TOL)
            .ok_or_else(|| Error::NoConvergence(format!("power iteration for eigenpair {i}")))?;
        values.push(l);
        vectors.push(v);
    }
    Ok((values, vectors))
}
