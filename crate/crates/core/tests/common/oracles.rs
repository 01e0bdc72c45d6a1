//! Independent reference computations used by the property and acceptance
//! tests.

use clusternet::graph::{DistanceTable, Graph};
use clusternet::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Modularity of a labeling straight from the pairwise definition.
pub fn modularity_pairwise(labels: &[usize], g: &Graph) -> f64 {
    let n = g.n();
    let two_m = 2.0 * g.m() as f64;
    let mut q = 0.0;
    for u in 0..n {
        for v in 0..n {
            if labels[u] == labels[v] {
                let a = if g.has_edge(u, v) { 1.0 } else { 0.0 };
                q += a - (g.degree(u) * g.degree(v)) as f64 / two_m;
            }
        }
    }
    q / two_m
}

/// `E[Q]` when node `u` draws its label from row `u` of `r`, summed over
/// all `K^n` labelings.
pub fn expected_modularity_enumerated(r: &Tensor, g: &Graph) -> f64 {
    let (n, k) = r.shape();
    let total = k.pow(n as u32);
    let mut labels = vec![0usize; n];
    let mut e = 0.0;
    for code in 0..total {
        let mut c = code;
        let mut p = 1.0;
        for (u, l) in labels.iter_mut().enumerate() {
            *l = c % k;
            c /= k;
            p *= r.get(u, *l);
        }
        e += p * modularity_pairwise(&labels, g);
    }
    e
}

fn clamped(dist: &DistanceTable, u: usize, v: usize, d_max: f64) -> f64 {
    if dist.is_reachable(u, v) {
        (dist.get(u, v) as f64).min(d_max)
    } else {
        d_max
    }
}

/// Per-node mean and standard error of the distance to the nearest selected
/// node when node `j` is selected independently with probability `x_j`;
/// `d_max` when nothing is selected.
pub fn facility_monte_carlo(x: &[f64], dist: &DistanceTable, d_max: f64, samples: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = vec![0.0; n];
    let mut sq = vec![0.0; n];
    let mut chosen = Vec::with_capacity(n);
    for _ in 0..samples {
        chosen.clear();
        chosen.extend((0..n).filter(|&j| rng.random::<f64>() < x[j]));
        for v in 0..n {
            let d = chosen.iter().map(|&s| clamped(dist, v, s, d_max)).fold(d_max, f64::min);
            sum[v] += d;
            sq[v] += d * d;
        }
    }
    let s = samples as f64;
    let mean: Vec<f64> = sum.iter().map(|a| a / s).collect();
    let se = mean
        .iter()
        .zip(&sq)
        .map(|(m, q)| ((q / s - m * m).max(0.0) / s).sqrt())
        .collect();
    (mean, se)
}

/// Optimal minmax facility value by exhaustive search over `k`-subsets.
pub fn kcenter_brute_force(dist: &DistanceTable, k: usize) -> u32 {
    let n = dist.n();
    let mut best = u32::MAX;
    let mut set: Vec<usize> = (0..k).collect();
    loop {
        let v = (0..n).map(|u| set.iter().map(|&s| dist.get(u, s)).min().unwrap()).max().unwrap();
        best = best.min(v);
        // next combination
        let mut i = k;
        while i > 0 && set[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return best;
        }
        set[i - 1] += 1;
        for j in i..k {
            set[j] = set[j - 1] + 1;
        }
    }
}

/// Per-sample nearest-facility distances, one vector per sample, generated
/// with the same stream as [`facility_monte_carlo`].
pub fn facility_samples(x: &[f64], dist: &DistanceTable, d_max: f64, samples: usize, seed: u64, mut visit: impl FnMut(&[f64])) {
    let n = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(n);
    let mut d = vec![0.0; n];
    for _ in 0..samples {
        chosen.clear();
        chosen.extend((0..n).filter(|&j| rng.random::<f64>() < x[j]));
        for (v, dv) in d.iter_mut().enumerate() {
            *dv = chosen.iter().map(|&s| clamped(dist, v, s, d_max)).fold(d_max, f64::min);
        }
        visit(&d);
    }
}

/// `Σ_v softmax(t·e)_v e_v` and its gradient.
pub fn smooth_max(e: &[f64], t: f64) -> (f64, Vec<f64>) {
    let m = e.iter().cloned().fold(f64::MIN, f64::max);
    let w: Vec<f64> = e.iter().map(|v| (t * (v - m)).exp()).collect();
    let z: f64 = w.iter().sum();
    let w: Vec<f64> = w.iter().map(|a| a / z).collect();
    let f: f64 = w.iter().zip(e).map(|(a, b)| a * b).sum();
    let g = w.iter().zip(e).map(|(a, b)| a * (1.0 + t * (b - f))).collect();
    (f, g)
}
