use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::Graph;

/// All-pairs hop distances. Unreachable pairs hold the sentinel `n`, one more
/// than any possible hop count.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceTable {
    n: usize,
    dist: Vec<u32>,
}

impl DistanceTable {
    /// Builds a table from a full row-major matrix; entries `>= n` are
    /// normalized to the sentinel.
    pub fn from_matrix(n: usize, mut dist: Vec<u32>) -> Self {
        assert_eq!(dist.len(), n * n);
        let s = n as u32;
        dist.iter_mut().for_each(|d| *d = (*d).min(s));
        DistanceTable { n, dist }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sentinel(&self) -> u32 {
        self.n as u32
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> u32 {
        self.dist[u * self.n + v]
    }

    pub fn row(&self, u: usize) -> &[u32] {
        &self.dist[u * self.n..(u + 1) * self.n]
    }

    pub fn is_reachable(&self, u: usize, v: usize) -> bool {
        self.get(u, v) < self.sentinel()
    }

    /// Largest finite distance.
    pub fn diameter(&self) -> u32 {
        let s = self.sentinel();
        self.dist.iter().copied().filter(|&d| d < s).max().unwrap_or(0)
    }

    pub fn is_connected(&self) -> bool {
        let s = self.sentinel();
        self.dist.iter().all(|&d| d < s)
    }
}

/// Breadth-first search from every node, `O(n·(n+m))`.
pub fn all_pairs_bfs(g: &Graph) -> DistanceTable {
    let n = g.n();
    let sentinel = n as u32;
    let mut dist = vec![sentinel; n * n];
    let mut queue = VecDeque::with_capacity(n);
    for s in 0..n {
        let row = &mut dist[s * n..(s + 1) * n];
        row[s] = 0;
        queue.clear();
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            let du = row[u];
            for &w in g.neighbors(u) {
                if row[w] == sentinel {
                    row[w] = du + 1;
                    queue.push_back(w);
                }
            }
        }
    }
    DistanceTable { n, dist }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_distances() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let d = all_pairs_bfs(&g);
        assert_eq!(d.get(0, 2), 2);
        assert_eq!(d.diameter(), 2);
    }

    #[test]
    fn disconnected_gets_sentinel() {
        let g = Graph::from_edges(2, &[]).unwrap();
        let d = all_pairs_bfs(&g);
        assert_eq!(d.get(0, 1), d.sentinel());
        assert!(!d.is_reachable(0, 1));
    }

    #[test]
    fn complete_graph() {
        let edges: Vec<_> = (0..4).flat_map(|u| (u + 1..4).map(move |v| (u, v))).collect();
        let d = all_pairs_bfs(&Graph::from_edges(4, &edges).unwrap());
        for u in 0..4 {
            for v in 0..4 {
                assert_eq!(d.get(u, v), u32::from(u != v));
            }
        }
    }
}
