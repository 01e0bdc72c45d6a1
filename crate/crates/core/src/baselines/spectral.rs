use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::eigen::{top_eigenpairs, DenseSym, SparseModularity, SymOperator};
use crate::error::{Error, Result};
use crate::graph::{Graph, ModularityMatrix};

pub const KMEANS_RESTARTS: usize = 20;
const LLOYD_MAX_ITERS: usize = 300;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm from k-means++ seeds; best of `restarts` by inertia.
pub fn hard_kmeans(points: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> Result<Vec<usize>> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("need 1 ≤ K ≤ n, got K = {k}, n = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..restarts.max(1) {
        let mut centers = vec![points[rng.random_range(0..n)].clone()];
        let mut near: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
        while centers.len() < k {
            let total: f64 = near.iter().sum();
            let pick = if total > 0.0 {
                let mut u = rng.random::<f64>() * total;
                let mut pick = n - 1;
                for (j, &d) in near.iter().enumerate() {
                    u -= d;
                    if u <= 0.0 && d > 0.0 {
                        pick = j;
                        break;
                    }
                }
                pick
            } else {
                rng.random_range(0..n)
            };
            centers.push(points[pick].clone());
            for (d, p) in near.iter_mut().zip(points) {
                *d = d.min(sq_dist(p, &centers[centers.len() - 1]));
            }
        }
        let mut labels = vec![usize::MAX; n];
        for _ in 0..LLOYD_MAX_ITERS {
            let mut changed = false;
            for (j, p) in points.iter().enumerate() {
                let mut arg = 0;
                let mut bd = f64::INFINITY;
                for (c, ctr) in centers.iter().enumerate() {
                    let d = sq_dist(p, ctr);
                    if d < bd {
                        bd = d;
                        arg = c;
                    }
                }
                if labels[j] != arg {
                    labels[j] = arg;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            let dim = points[0].len();
            let mut sums = vec![vec![0.0; dim]; k];
            let mut counts = vec![0usize; k];
            for (p, &l) in points.iter().zip(&labels) {
                counts[l] += 1;
                sums[l].iter_mut().zip(p).for_each(|(s, x)| *s += x);
            }
            for c in 0..k {
                if counts[c] > 0 {
                    centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
                }
            }
        }
        let inertia: f64 = points.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &centers[l])).sum();
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, labels));
        }
    }
    Ok(best.expect("one restart").1)
}

fn embed_and_cluster(op: &dyn SymOperator, k: usize, seed: u64) -> Result<Vec<usize>> {
    let (_, vecs) = top_eigenpairs(op, k, seed)?;
    let n = op.dim();
    let points: Vec<Vec<f64>> = (0..n).map(|j| vecs.iter().map(|v| v[j]).collect()).collect();
    hard_kmeans(&points, k, KMEANS_RESTARTS, seed)
}

/// Spectral clustering on the top-`k` eigenvectors of the modularity matrix.
pub fn spectral_clustering_modularity(g: &Graph, k: usize, seed: u64) -> Result<Vec<usize>> {
    let op = SparseModularity::new(g)?;
    embed_and_cluster(&op, k, seed)
}

/// Same on a precomputed (possibly weighted) modularity matrix.
pub fn spectral_clustering_dense(b: &ModularityMatrix, k: usize, seed: u64) -> Result<Vec<usize>> {
    let op = DenseSym::new(b.matrix())?;
    embed_and_cluster(&op, k, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_sbm;

    #[test]
    fn two_k5_recovered() {
        let g = generate_sbm(&[5, 5], 1.0, 0.0, 0).unwrap();
        let l = spectral_clustering_modularity(&g, 2, 3).unwrap();
        assert!(l[..5].iter().all(|&x| x == l[0]));
        assert!(l[5..].iter().all(|&x| x == l[5]));
        assert_ne!(l[0], l[5]);
        assert_eq!(l, spectral_clustering_modularity(&g, 2, 3).unwrap());
    }

    #[test]
    fn k_equals_n_gives_singletons() {
        let g = Graph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 2)]).unwrap();
        let mut l = spectral_clustering_modularity(&g, 5, 1).unwrap();
        l.sort_unstable();
        assert_eq!(l, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn dense_and_sparse_agree_on_planted() {
        let g = generate_sbm(&[12, 12], 0.7, 0.02, 5).unwrap();
        let b = crate::graph::modularity_matrix(&g).unwrap();
        let q1 = crate::decisions::modularity_value(&spectral_clustering_modularity(&g, 2, 0).unwrap(), &g).unwrap();
        let q2 = crate::decisions::modularity_value(&spectral_clustering_dense(&b, 2, 0).unwrap(), &g).unwrap();
        assert!((q1 - q2).abs() < 1e-12);
    }
}
