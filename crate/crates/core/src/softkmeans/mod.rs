//! Differentiable soft k-means under negative cosine distance.
//!
//! The forward pass runs plain fixed-point iterations on dense tensors. Two
//! backward paths are provided: [`one_step`] rebuilds a single update from
//! detached centers on the tape, and [`exact_layer`] differentiates the fixed
//! point itself through the implicit function theorem.

mod backward;
mod diagnostics;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{softmax_rows, Tensor};

pub use backward::{
    approx_backward, assignment_var, distance_var, exact_backward, exact_layer, fixed_point_jacobian, one_step,
    update_var, ClusterOutput,
};
pub use diagnostics::{diagnostics, SeparationDiagnostics};

/// Norm floor used when normalizing rows for cosine similarity.
pub const COSINE_EPS: f64 = 1e-12;

/// Cluster mass below which a center is considered empty.
pub const EMPTY_MASS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distance {
    #[default]
    NegCosine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub k: usize,
    pub beta: f64,
    pub max_iters: usize,
    /// Max-norm center change that counts as converged. Zero disables the
    /// check, so exactly `max_iters` updates run.
    pub tol: f64,
    #[serde(default)]
    pub distance: Distance,
}

impl ClusterConfig {
    pub fn new(k: usize, beta: f64) -> Self {
        ClusterConfig {
            k,
            beta,
            max_iters: 100,
            tol: 1e-4,
            distance: Distance::NegCosine,
        }
    }

    /// Exactly `steps` updates, no convergence test.
    pub fn fixed_steps(mut self, steps: usize) -> Self {
        self.max_iters = steps;
        self.tol = 0.0;
        self
    }

    pub fn with_tol(mut self, tol: f64, max_iters: usize) -> Self {
        self.tol = tol;
        self.max_iters = max_iters;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::invalid("cluster count must be at least 1"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::invalid(format!("tol must be non-negative, got {}", self.tol)));
        }
        Ok(())
    }
}

/// A center that lost all of its mass and was moved onto a data point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rescue {
    pub iteration: usize,
    pub cluster: usize,
    pub point: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    pub centers: Tensor,
    pub assignments: Tensor,
    pub iterations: usize,
    pub converged: bool,
    pub rescued: Vec<Rescue>,
}

impl ClusterState {
    pub fn k(&self) -> usize {
        self.centers.rows()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// `D_jk = −cos(x_j, μ_k)`. With `guard` off a zero-norm row is an error;
/// with it on the norm is floored at [`COSINE_EPS`].
pub fn distance_matrix(x: &Tensor, mu: &Tensor, guard: bool) -> Result<Tensor> {
    if x.cols() != mu.cols() {
        return Err(Error::shape("distance_matrix", x.shape(), mu.shape()));
    }
    if !guard {
        for (name, t) in [("embedding", x), ("center", mu)] {
            for i in 0..t.rows() {
                if t.row(i).iter().all(|&v| v == 0.0) {
                    return Err(Error::invalid(format!("{name} row {i} has zero norm")));
                }
            }
        }
    }
    let cos = x.normalize_rows(COSINE_EPS).matmul_t(&mu.normalize_rows(COSINE_EPS))?;
    Ok(cos.scale(-1.0))
}

/// Soft assignments `softmin_k(β·D_jk)`.
pub fn soft_assign(x: &Tensor, mu: &Tensor, beta: f64) -> Result<Tensor> {
    Ok(softmax_rows(&distance_matrix(x, mu, true)?, -beta))
}

/// `μ_k = Σ_j r_jk x_j / Σ_j r_jk`; empty clusters keep `fallback`'s row.
fn update_centers(x: &Tensor, r: &Tensor, fallback: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let mass = r.col_sums();
    let mut mu = r.t_matmul(x)?;
    let mut empty = Vec::new();
    for (k, &m) in mass.iter().enumerate() {
        if m < EMPTY_MASS {
            empty.push(k);
            mu.row_mut(k).copy_from_slice(fallback.row(k));
        } else {
            mu.row_mut(k).iter_mut().for_each(|v| *v /= m);
        }
    }
    Ok((mu, empty))
}

/// k-means++ seeding with `1 − cos` as the dissimilarity.
pub fn kmeans_plus_plus(x: &Tensor, k: usize, seed: u64) -> Result<Tensor> {
    let n = x.rows();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("need 1 ≤ K ≤ n, got K = {k}, n = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xn = x.normalize_rows(COSINE_EPS);
    let mut chosen = vec![rng.random_range(0..n)];
    let mut nearest = vec![f64::INFINITY; n];
    while chosen.len() < k {
        let last = *chosen.last().expect("nonempty");
        for (j, d) in nearest.iter_mut().enumerate() {
            let c: f64 = xn.row(j).iter().zip(xn.row(last)).map(|(a, b)| a * b).sum();
            *d = d.min((1.0 - c).max(0.0));
        }
        let total: f64 = nearest.iter().map(|d| d * d).sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (j, d) in nearest.iter().enumerate() {
                u -= d * d;
                if u <= 0.0 && d * d > 0.0 {
                    pick = j;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        chosen.push(pick);
    }
    let rows: Vec<Vec<f64>> = chosen.iter().map(|&j| x.row(j).to_vec()).collect();
    Tensor::from_rows(&rows)
}

/// Runs the soft k-means fixed-point iteration from `init`.
pub fn kmeans_forward(x: &Tensor, init: &Tensor, cfg: &ClusterConfig) -> Result<ClusterState> {
    cfg.validate()?;
    let n = x.rows();
    if init.rows() != cfg.k || init.cols() != x.cols() {
        return Err(Error::shape("kmeans_forward", x.shape(), init.shape()));
    }
    if cfg.k > n {
        return Err(Error::invalid(format!("K = {} exceeds n = {n}", cfg.k)));
    }
    x.validate("embeddings")?;
    let mut mu = init.clone();
    let mut r = soft_assign(x, &mu, cfg.beta)?;
    let mut rescued = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let (mut next, empty) = update_centers(x, &r, &mu)?;
        for k in empty {
            // point whose largest assignment is smallest
            let point = (0..n)
                .min_by(|&a, &b| {
                    let ma = r.row(a).iter().cloned().fold(f64::MIN, f64::max);
                    let mb = r.row(b).iter().cloned().fold(f64::MIN, f64::max);
                    ma.total_cmp(&mb)
                })
                .expect("n ≥ 1");
            next.row_mut(k).copy_from_slice(x.row(point));
            rescued.push(Rescue {
                iteration: iterations,
                cluster: k,
                point,
            });
        }
        let change = next
            .data()
            .iter()
            .zip(mu.data())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        mu = next;
        r = soft_assign(x, &mu, cfg.beta)?;
        if !mu.is_finite() {
            return Err(Error::NonFinite(format!("cluster centers at iteration {iterations}")));
        }
        if cfg.tol > 0.0 && change < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(ClusterState {
        centers: mu,
        assignments: r,
        iterations,
        converged,
        rescued,
    })
}

/// Per-row Shannon entropy of an assignment matrix.
pub fn row_entropy(r: &Tensor) -> Vec<f64> {
    (0..r.rows())
        .map(|j| r.row(j).iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_clouds(seed: u64, per: usize) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(2 * per, 3, |i, j| {
            let base = if i < per { [1.0, 0.2, 0.0] } else { [-0.2, 1.0, 0.1] };
            base[j] + 0.05 * (rng.random::<f64>() - 0.5)
        })
    }

    #[test]
    fn distance_examples() {
        let x = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0], vec![-3.0, 0.0]]).unwrap();
        let mu = Tensor::from_rows(&[vec![2.0, 0.0]]).unwrap();
        let d = distance_matrix(&x, &mu, true).unwrap();
        assert!((d.get(0, 0) + 1.0).abs() < 1e-15);
        assert!(d.get(1, 0).abs() < 1e-15);
        assert!((d.get(2, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_row_without_guard_is_error() {
        let x = Tensor::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let mu = Tensor::from_rows(&[vec![1.0, 1.0]]).unwrap();
        assert!(distance_matrix(&x, &mu, false).is_err());
        assert!(distance_matrix(&x, &mu, true).unwrap().is_finite());
    }

    #[test]
    fn separated_clouds_get_hard_assignments() {
        let x = two_clouds(1, 10);
        let init = kmeans_plus_plus(&x, 2, 5).unwrap();
        let st = kmeans_forward(&x, &init, &ClusterConfig::new(2, 50.0)).unwrap();
        assert!(st.converged);
        let ent = row_entropy(&st.assignments);
        assert!(ent.iter().all(|&e| e < 0.01), "{ent:?}");
        let first = (0..2).max_by(|&a, &b| st.assignments.get(0, a).total_cmp(&st.assignments.get(0, b))).unwrap();
        for j in 0..20 {
            let want = if j < 10 { first } else { 1 - first };
            assert!(st.assignments.get(j, want) > 0.99);
        }
    }

    #[test]
    fn tiny_beta_gives_uniform_assignments_and_centroids() {
        let x = two_clouds(2, 5);
        let init = kmeans_plus_plus(&x, 3, 1).unwrap();
        let st = kmeans_forward(&x, &init, &ClusterConfig::new(3, 1e-12).fixed_steps(1)).unwrap();
        let centroid: Vec<f64> = x.col_sums().iter().map(|s| s / 10.0).collect();
        for j in 0..10 {
            for k in 0..3 {
                assert!((st.assignments.get(j, k) - 1.0 / 3.0).abs() < 1e-9);
            }
        }
        for k in 0..3 {
            for (a, b) in st.centers.row(k).iter().zip(&centroid) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn identical_points_fixed_after_one_update() {
        let x = Tensor::from_fn(6, 2, |_, j| [0.3, -0.7][j]);
        let init = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let st = kmeans_forward(&x, &init, &ClusterConfig::new(2, 5.0).fixed_steps(1)).unwrap();
        for k in 0..2 {
            assert!((st.centers.get(k, 0) - 0.3).abs() < 1e-12);
            assert!((st.centers.get(k, 1) + 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_cluster_is_rescued() {
        let x = Tensor::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.01], vec![0.99, 0.0]]).unwrap();
        let init = Tensor::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        let st = kmeans_forward(&x, &init, &ClusterConfig::new(2, 100.0).fixed_steps(2)).unwrap();
        assert!(!st.rescued.is_empty());
        assert_eq!(st.rescued[0].cluster, 1);
        assert!(st.centers.is_finite());
    }

    #[test]
    fn fixed_point_residual_below_tol() {
        let x = two_clouds(4, 8);
        let cfg = ClusterConfig::new(2, 20.0);
        let st = kmeans_forward(&x, &kmeans_plus_plus(&x, 2, 0).unwrap(), &cfg).unwrap();
        assert!(st.converged);
        let again = kmeans_forward(&x, &st.centers, &cfg.clone().fixed_steps(1)).unwrap();
        let moved = again.centers.sub(&st.centers).unwrap().max_abs();
        assert!(moved < cfg.tol);
    }

    #[test]
    fn plus_plus_is_deterministic_and_validates_k() {
        let x = two_clouds(3, 4);
        assert_eq!(kmeans_plus_plus(&x, 2, 9).unwrap(), kmeans_plus_plus(&x, 2, 9).unwrap());
        assert!(kmeans_plus_plus(&x, 9, 0).is_err());
    }

    #[test]
    fn state_serializes() {
        let x = two_clouds(5, 3);
        let st = kmeans_forward(&x, &kmeans_plus_plus(&x, 2, 0).unwrap(), &ClusterConfig::new(2, 10.0)).unwrap();
        let back: ClusterState = serde_json::from_str(&st.to_json().unwrap()).unwrap();
        assert_eq!(back, st);
    }
}
