use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Graph;
use crate::tensor::Tensor;

/// One-hot degree buckets with log-spaced edges: bucket `b` holds degrees in
/// `[2^(b-1), 2^b)`, bucket 0 holds isolated nodes, the last bucket is open.
pub fn degree_bucket_features(g: &Graph, buckets: usize) -> Tensor {
    let mut f = Tensor::zeros(g.n(), buckets);
    for v in 0..g.n() {
        let d = g.degree(v);
        let b = if d == 0 { 0 } else { (usize::BITS - d.leading_zeros()) as usize };
        f.set(v, b.min(buckets - 1), 1.0);
    }
    f
}

/// i.i.d. standard normal features, scaled by `1/√d`.
pub fn random_features(n: usize, d: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = 1.0 / (d as f64).sqrt();
    Tensor::from_fn(n, d, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * s
    })
}

/// Applies `D^-1/2 (A + I) D^-1/2` to `x` `hops` times, then rescales each
/// column to unit root mean square.
pub fn propagate(g: &Graph, x: &Tensor, hops: usize) -> Tensor {
    let (n, d) = x.shape();
    let scale: Vec<f64> = (0..n).map(|v| 1.0 / ((g.degree(v) + 1) as f64).sqrt()).collect();
    let mut cur = x.clone();
    for _ in 0..hops {
        let next = Tensor::from_fn(n, d, |v, j| {
            let s: f64 = g.neighbors(v).iter().map(|&u| scale[u] * cur.get(u, j)).sum::<f64>() + scale[v] * cur.get(v, j);
            scale[v] * s
        });
        cur = next;
    }
    if hops == 0 {
        return cur;
    }
    let rms: Vec<f64> = (0..d)
        .map(|j| ((0..n).map(|v| cur.get(v, j).powi(2)).sum::<f64>() / n.max(1) as f64).sqrt())
        .collect();
    Tensor::from_fn(n, d, |v, j| if rms[j] > 0.0 { cur.get(v, j) / rms[j] / (d as f64).sqrt() } else { 0.0 })
}

/// Fallback features for graphs without attributes: degree buckets followed
/// by `random_dims` random columns.
pub fn structural_features(g: &Graph, buckets: usize, random_dims: usize, seed: u64) -> Tensor {
    propagated_features(g, buckets, random_dims, 0, seed)
}

/// [`structural_features`] with the random block propagated `hops` times
/// over `g`.
pub fn propagated_features(g: &Graph, buckets: usize, random_dims: usize, hops: usize, seed: u64) -> Tensor {
    let deg = degree_bucket_features(g, buckets);
    if random_dims == 0 {
        return deg;
    }
    let rnd = propagate(g, &random_features(g.n(), random_dims, seed), hops);
    Tensor::from_fn(g.n(), buckets + random_dims, |i, j| {
        if j < buckets {
            deg.get(i, j)
        } else {
            rnd.get(i, j - buckets)
        }
    })
}
