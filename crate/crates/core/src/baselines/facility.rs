use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::DistanceTable;

/// Adds, `k` times, the node that minimizes the resulting max-min distance.
/// Ties go to the lowest node id.
pub fn greedy_facility(dist: &DistanceTable, k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::invalid("facility budget must be positive"));
    }
    let n = dist.n();
    let mut cur = vec![u32::MAX; n];
    let mut chosen = Vec::new();
    let mut taken = vec![false; n];
    for _ in 0..k.min(n) {
        let mut best = (u32::MAX, usize::MAX);
        for u in (0..n).filter(|&u| !taken[u]) {
            let row = dist.row(u);
            let obj = cur.iter().zip(row).map(|(&c, &d)| c.min(d)).max().unwrap_or(0);
            if obj < best.0 {
                best = (obj, u);
            }
        }
        let u = best.1;
        taken[u] = true;
        chosen.push(u);
        for (c, &d) in cur.iter_mut().zip(dist.row(u)) {
            *c = (*c).min(d);
        }
    }
    Ok(chosen)
}

/// Farthest-point traversal from a seeded random start (or `start`), with
/// ties to the lowest id. A 2-approximation for k-center.
pub fn gonzalez(dist: &DistanceTable, k: usize, seed: u64, start: Option<usize>) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::invalid("facility budget must be positive"));
    }
    let n = dist.n();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let first = match start {
        Some(s) if s < n => s,
        Some(s) => return Err(Error::invalid(format!("start node {s} out of range"))),
        None => ChaCha8Rng::seed_from_u64(seed).random_range(0..n),
    };
    let mut chosen = vec![first];
    let mut taken = vec![false; n];
    taken[first] = true;
    let mut cur: Vec<u32> = dist.row(first).to_vec();
    while chosen.len() < k.min(n) {
        let mut far = (0u32, usize::MAX);
        for (v, &d) in cur.iter().enumerate() {
            if !taken[v] && (far.1 == usize::MAX || d > far.0) {
                far = (d, v);
            }
        }
        let u = far.1;
        taken[u] = true;
        chosen.push(u);
        for (c, &d) in cur.iter_mut().zip(dist.row(u)) {
            *c = (*c).min(d);
        }
    }
    Ok(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decisions::facility_value;
    use crate::graph::{all_pairs_bfs, Graph};

    fn path(n: usize) -> DistanceTable {
        let e: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        all_pairs_bfs(&Graph::from_edges(n, &e).unwrap())
    }

    #[test]
    fn star_center() {
        let g = Graph::from_edges(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        let d = all_pairs_bfs(&g);
        let s = greedy_facility(&d, 1).unwrap();
        assert_eq!(s, vec![0]);
        assert_eq!(facility_value(&s, &d).unwrap(), 1.0);
    }

    #[test]
    fn greedy_on_path() {
        let d = path(5);
        let s = greedy_facility(&d, 2).unwrap();
        assert!(facility_value(&s, &d).unwrap() <= 2.0);
        assert_eq!(facility_value(&greedy_facility(&d, 9).unwrap(), &d).unwrap(), 0.0);
    }

    #[test]
    fn gonzalez_trace_on_path() {
        let d = path(5);
        let s = gonzalez(&d, 2, 0, Some(0)).unwrap();
        assert_eq!(s, vec![0, 4]);
        assert_eq!(facility_value(&s, &d).unwrap(), 2.0);
        let all = gonzalez(&d, 5, 0, Some(2)).unwrap();
        assert_eq!(all.len(), 5);
        assert_eq!(facility_value(&all, &d).unwrap(), 0.0);
    }
}
