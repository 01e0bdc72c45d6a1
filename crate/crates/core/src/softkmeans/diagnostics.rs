use serde::{Deserialize, Serialize};

use super::{distance_matrix, fixed_point_jacobian, ClusterConfig, ClusterState};
use crate::error::Result;
use crate::tensor::Tensor;

/// Separation quantities behind the diagonal-approximation error bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationDiagnostics {
    /// Smallest gap between a point's closest and second-closest center.
    pub delta: f64,
    /// Smallest cluster mass divided by n.
    pub alpha: f64,
    pub beta: f64,
    pub k: usize,
    /// `βδ > ln(2βK²/α)`.
    pub applicable: bool,
    /// `e^{−δβ}·K²β / (α/2 − K²β·e^{−δβ})`, infinite when not applicable.
    pub bound: f64,
    /// Max column abs sum of `∂f/∂μ − I`.
    pub measured: f64,
    /// Factor applied to the embeddings so every row has `‖x_j‖₁ ≤ 1`.
    pub l1_scale: f64,
    /// Whether the unscaled input already satisfied `‖x_j‖₁ ≤ 1`.
    pub l1_premise_met: bool,
}

pub fn point_gaps(x: &Tensor, centers: &Tensor) -> Result<Vec<f64>> {
    let d = distance_matrix(x, centers, true)?;
    Ok((0..d.rows())
        .map(|j| {
            let mut row = d.row(j).to_vec();
            row.sort_by(f64::total_cmp);
            if row.len() < 2 {
                f64::INFINITY
            } else {
                row[1] - row[0]
            }
        })
        .collect())
}

pub fn diagnostics(x: &Tensor, state: &ClusterState, cfg: &ClusterConfig) -> Result<SeparationDiagnostics> {
    let n = x.rows();
    let k = state.k();
    let beta = cfg.beta;
    let delta = point_gaps(x, &state.centers)?.into_iter().fold(f64::INFINITY, f64::min);
    let mass = super::soft_assign(x, &state.centers, beta)?.col_sums();
    let alpha = mass.iter().cloned().fold(f64::INFINITY, f64::min) / n as f64;
    let kk = (k * k) as f64;
    let applicable = alpha > 0.0 && beta * delta > (2.0 * beta * kk / alpha).ln();
    let tail = (-delta * beta).exp();
    let denom = alpha / 2.0 - kk * beta * tail;
    let bound = if applicable && denom > 0.0 {
        tail * kk * beta / denom
    } else {
        f64::INFINITY
    };

    let max_l1 = (0..n)
        .map(|j| x.row(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let l1_scale = if max_l1 > 0.0 { 1.0 / max_l1 } else { 1.0 };
    let jac = fixed_point_jacobian(&x.scale(l1_scale), &state.centers.scale(l1_scale), beta)?;
    let dim = jac.rows();
    let measured = (0..dim)
        .map(|c| {
            (0..dim)
                .map(|r| (jac.get(r, c) - if r == c { 1.0 } else { 0.0 }).abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max);

    Ok(SeparationDiagnostics {
        delta,
        alpha,
        beta,
        k,
        applicable: applicable && denom > 0.0,
        bound,
        measured,
        l1_scale,
        l1_premise_met: max_l1 <= 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::super::kmeans_forward;
    use super::*;

    fn singleton_pair() -> (Tensor, ClusterState) {
        let x = Tensor::from_rows(&[vec![0.5, 0.0], vec![-0.5, 0.0]]).unwrap();
        let st = kmeans_forward(&x, &x, &ClusterConfig::new(2, 50.0)).unwrap();
        (x, st)
    }

    #[test]
    fn far_singletons_applicable_with_tiny_bound() {
        let (x, st) = singleton_pair();
        let d = diagnostics(&x, &st, &ClusterConfig::new(2, 50.0)).unwrap();
        assert!((d.delta - 2.0).abs() < 1e-12);
        assert!(d.applicable);
        assert!(d.bound < 1e-6);
        assert!(d.measured <= d.bound);
    }

    #[test]
    fn tiny_beta_satisfies_condition_through_negative_log() {
        // ln(2βK²/α) < 0 once β < α/(2K²), so the condition holds trivially
        let (x, st) = singleton_pair();
        let d = diagnostics(&x, &st, &ClusterConfig::new(2, 0.01)).unwrap();
        assert!(d.applicable);
        let tail = (-0.02f64).exp();
        let want = tail * 4.0 * 0.01 / (d.alpha / 2.0 - 4.0 * 0.01 * tail);
        assert!((d.bound - want).abs() < 1e-12);
        assert!(d.measured <= d.bound);
    }

    #[test]
    fn overlapping_clusters_not_applicable() {
        let x = Tensor::from_rows(&[vec![1.0, 0.1], vec![1.0, -0.1], vec![1.0, 0.0]]).unwrap();
        let centers = Tensor::from_rows(&[vec![1.0, 0.05], vec![1.0, -0.05]]).unwrap();
        let cfg = ClusterConfig::new(2, 1.0);
        let st = kmeans_forward(&x, &centers, &cfg.clone().fixed_steps(0)).unwrap();
        let d = diagnostics(&x, &st, &cfg).unwrap();
        assert!(!d.applicable);
        assert!(d.bound.is_infinite());
    }

    #[test]
    fn measured_norm_is_scale_invariant() {
        let x = Tensor::from_rows(&[vec![1.0, 0.2], vec![0.9, 0.4], vec![-0.3, 1.0], vec![-0.1, 0.8]]).unwrap();
        let cfg = ClusterConfig::new(2, 5.0);
        let st = kmeans_forward(&x, &Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(), &cfg).unwrap();
        let scaled = kmeans_forward(&x.scale(7.0), &st.centers.scale(7.0), &cfg.clone().fixed_steps(0)).unwrap();
        let a = diagnostics(&x, &st, &cfg).unwrap();
        let b = diagnostics(&x.scale(7.0), &scaled, &cfg).unwrap();
        assert!((a.measured - b.measured).abs() < 1e-10);
        assert!(!b.l1_premise_met);
    }
}
