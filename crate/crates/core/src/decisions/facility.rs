use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::DistanceTable;
use crate::tensor::{Tensor, Var};

/// Temperature of the softmax-weighted mean standing in for the max over nodes.
pub const SMOOTH_MAX_TEMP: f64 = 100.0;

struct Tables {
    n: usize,
    d_max: f64,
    /// Row `v` lists candidate facilities by increasing distance from `v`.
    order: Vec<u32>,
    /// Matching distances, capped at `d_max`.
    sorted: Vec<f64>,
}

/// Expected minmax facility distance under independent inclusion.
///
/// For node `v` with candidates sorted by distance `d_1 ≤ … ≤ d_n`,
/// `E[d(v, S)] = Σ_i d_i x_i Π_{j<i}(1 − x_j) + D_max Π_j(1 − x_j)`, where the
/// last term covers the empty selection and `D_max` is the diameter plus one.
#[derive(Clone)]
pub struct FacilityObjective {
    tables: Arc<Tables>,
}

impl FacilityObjective {
    pub fn new(dist: &DistanceTable) -> Result<Self> {
        let n = dist.n();
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let d_max = dist.diameter() as f64 + 1.0;
        let mut order = Vec::with_capacity(n * n);
        let mut sorted = Vec::with_capacity(n * n);
        let mut idx: Vec<u32> = (0..n as u32).collect();
        for v in 0..n {
            let row = dist.row(v);
            idx.sort_by_key(|&u| (row[u as usize], u));
            for &u in &idx {
                let d = if dist.is_reachable(v, u as usize) {
                    row[u as usize] as f64
                } else {
                    d_max
                };
                order.push(u);
                sorted.push(d.min(d_max));
            }
        }
        Ok(FacilityObjective {
            tables: Arc::new(Tables { n, d_max, order, sorted }),
        })
    }

    pub fn n(&self) -> usize {
        self.tables.n
    }

    pub fn d_max(&self) -> f64 {
        self.tables.d_max
    }

    /// Per-node expected distance to the random facility set.
    pub fn expected_distances(&self, x: &[f64]) -> Result<Vec<f64>> {
        let t = &self.tables;
        if x.len() != t.n {
            return Err(Error::invalid(format!("{} probabilities for {} nodes", x.len(), t.n)));
        }
        Ok((0..t.n).map(|v| expected_one(t, x, v)).collect())
    }

    /// Per-node expected distances as an n×1 tape node.
    pub fn expected_var<'t>(&self, x: Var<'t>) -> Result<Var<'t>> {
        let t = Arc::clone(&self.tables);
        if x.shape() != (t.n, 1) {
            return Err(Error::shape("expected_facility", x.shape(), (t.n, 1)));
        }
        let xv = x.value();
        let value = Tensor::column(&self.expected_distances(xv.data())?);
        let xs = xv.data().to_vec();
        let backward = Box::new(move |g: &Tensor| {
            let n = t.n;
            let mut grad = vec![0.0; n];
            let mut tail = vec![0.0; n];
            for v in 0..n {
                let gv = g.data()[v];
                if gv == 0.0 {
                    continue;
                }
                let order = &t.order[v * n..(v + 1) * n];
                let d = &t.sorted[v * n..(v + 1) * n];
                // tail[s]: expected distance given no facility among the first s+1
                let mut u = t.d_max;
                for s in (0..n).rev() {
                    tail[s] = u;
                    let xi = xs[order[s] as usize];
                    u = d[s] * xi + (1.0 - xi) * u;
                }
                let mut q = 1.0;
                for s in 0..n {
                    let xi = xs[order[s] as usize];
                    grad[order[s] as usize] += gv * q * (d[s] - tail[s]);
                    q *= 1.0 - xi;
                    if q == 0.0 {
                        break;
                    }
                }
            }
            vec![Tensor::column(&grad)]
        });
        Ok(x.tape().custom(&[x], value, backward))
    }

    /// Softmax-weighted mean of the per-node expected distances (to minimize).
    pub fn loss<'t>(&self, x: Var<'t>, temp: f64) -> Result<Var<'t>> {
        let e = self.expected_var(x)?.transpose();
        let w = e.softmax_rows(temp);
        Ok(w.mul(e)?.sum())
    }
}

fn expected_one(t: &Tables, x: &[f64], v: usize) -> f64 {
    let n = t.n;
    let order = &t.order[v * n..(v + 1) * n];
    let d = &t.sorted[v * n..(v + 1) * n];
    let mut q = 1.0;
    let mut e = 0.0;
    for s in 0..n {
        let xi = x[order[s] as usize];
        e += d[s] * xi * q;
        q *= 1.0 - xi;
        if q == 0.0 {
            return e;
        }
    }
    e + t.d_max * q
}

/// `max_v min_{u∈S} dist(v, u)`; unreachable pairs count as the sentinel.
pub fn facility_value(selected: &[usize], dist: &DistanceTable) -> Result<f64> {
    if selected.is_empty() {
        return Err(Error::invalid("facility set is empty"));
    }
    if let Some(&u) = selected.iter().find(|&&u| u >= dist.n()) {
        return Err(Error::invalid(format!("facility {u} out of range")));
    }
    let worst = (0..dist.n())
        .map(|v| selected.iter().map(|&u| dist.get(v, u)).min().expect("nonempty"))
        .max()
        .unwrap_or(0);
    Ok(worst as f64)
}
