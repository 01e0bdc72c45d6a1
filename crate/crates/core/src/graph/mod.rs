//! Undirected graphs and the matrices derived from them.

mod features;
mod io;
mod paths;
mod split;
mod synth;

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use features::{degree_bucket_features, propagate, propagated_features, random_features, structural_features};
pub use io::{load_cora, load_edge_list, load_features, read_edge_list, EdgeListOptions, LoadReport};
pub use paths::{all_pairs_bfs, DistanceTable};
pub use split::{split_edges, EdgeSplit, SplitManifest};
pub use synth::generate_sbm;

/// Immutable simple undirected graph on nodes `0..n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    n: usize,
    /// Edges as `(u, v)` with `u < v`, sorted.
    edges: Vec<(usize, usize)>,
    #[serde(skip)]
    adj: Vec<Vec<usize>>,
    features: Option<Tensor>,
    names: Option<Vec<String>>,
    blocks: Option<Vec<usize>>,
}

impl Graph {
    /// Builds a graph, silently dropping self-loops and duplicate edges.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Ok(Self::from_edges_report(n, edges)?.0)
    }

    /// Like [`Graph::from_edges`] but also returns what was dropped.
    pub fn from_edges_report(n: usize, edges: &[(usize, usize)]) -> Result<(Self, LoadReport)> {
        let mut report = LoadReport::default();
        let mut set = BTreeSet::new();
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::invalid(format!("edge ({u}, {v}) out of range for n = {n}")));
            }
            if u == v {
                report.self_loops += 1;
                continue;
            }
            if !set.insert((u.min(v), u.max(v))) {
                report.duplicates += 1;
            }
        }
        Ok((Self::from_sorted(n, set.into_iter().collect()), report))
    }

    fn from_sorted(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut g = Graph {
            n,
            edges,
            adj: Vec::new(),
            features: None,
            names: None,
            blocks: None,
        };
        g.rebuild_adjacency();
        g
    }

    fn rebuild_adjacency(&mut self) {
        let mut adj = vec![Vec::new(); self.n];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj.iter_mut().for_each(|a| a.sort_unstable());
        self.adj = adj;
    }

    /// Restores the adjacency lists after deserialization.
    pub fn restore(mut self) -> Self {
        self.rebuild_adjacency();
        self
    }

    pub fn with_features(mut self, features: Tensor) -> Result<Self> {
        if features.rows() != self.n {
            return Err(Error::shape("with_features", (self.n, 0), features.shape()));
        }
        self.features = Some(features);
        Ok(self)
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n {
            return Err(Error::invalid(format!("{} names for {} nodes", names.len(), self.n)));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn with_blocks(mut self, blocks: Vec<usize>) -> Result<Self> {
        if blocks.len() != self.n {
            return Err(Error::invalid(format!("{} block labels for {} nodes", blocks.len(), self.n)));
        }
        self.blocks = Some(blocks);
        Ok(self)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adj.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && self.adj[u].binary_search(&v).is_ok()
    }

    pub fn features(&self) -> Option<&Tensor> {
        self.features.as_ref()
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// Planted block labels for generated graphs.
    pub fn blocks(&self) -> Option<&[usize]> {
        self.blocks.as_deref()
    }

    /// Same node set (and metadata) with a different edge set.
    pub fn with_edge_set(&self, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Graph::from_edges(self.n, edges)?;
        g.features = self.features.clone();
        g.names = self.names.clone();
        g.blocks = self.blocks.clone();
        Ok(g)
    }

    pub fn adjacency_dense(&self) -> Tensor {
        let mut a = Tensor::zeros(self.n, self.n);
        for &(u, v) in &self.edges {
            a.set(u, v, 1.0);
            a.set(v, u, 1.0);
        }
        a
    }

    /// Connected-component id per node, numbered in order of first node.
    pub fn components(&self) -> Vec<usize> {
        let mut comp = vec![usize::MAX; self.n];
        let mut next = 0;
        let mut queue = VecDeque::new();
        for s in 0..self.n {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = next;
            queue.push_back(s);
            while let Some(u) = queue.pop_front() {
                for &w in &self.adj[u] {
                    if comp[w] == usize::MAX {
                        comp[w] = next;
                        queue.push_back(w);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    /// Subgraph induced by `nodes` (in the given order); node `i` of the
    /// result is `nodes[i]` of `self`.
    pub fn induced(&self, nodes: &[usize]) -> Result<Self> {
        let mut index = vec![usize::MAX; self.n];
        for (i, &v) in nodes.iter().enumerate() {
            if v >= self.n {
                return Err(Error::invalid(format!("node {v} out of range")));
            }
            index[v] = i;
        }
        let edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .filter(|(u, v)| index[*u] != usize::MAX && index[*v] != usize::MAX)
            .map(|&(u, v)| (index[u], index[v]))
            .collect();
        let mut g = Graph::from_edges(nodes.len(), &edges)?;
        if let Some(f) = &self.features {
            g.features = Some(Tensor::from_fn(nodes.len(), f.cols(), |i, j| f.get(nodes[i], j)));
        }
        if let Some(names) = &self.names {
            g.names = Some(nodes.iter().map(|&v| names[v].clone()).collect());
        }
        if let Some(b) = &self.blocks {
            g.blocks = Some(nodes.iter().map(|&v| b[v]).collect());
        }
        Ok(g)
    }

    /// Largest connected component and the original ids of its nodes
    /// (ties broken toward the component containing the smallest node id).
    pub fn largest_component(&self) -> Result<(Self, Vec<usize>)> {
        let comp = self.components();
        let count = comp.iter().max().map_or(0, |c| c + 1);
        let mut sizes = vec![0usize; count];
        comp.iter().for_each(|&c| sizes[c] += 1);
        let best = (0..count).max_by_key(|&c| (sizes[c], std::cmp::Reverse(c))).unwrap_or(0);
        let nodes: Vec<usize> = (0..self.n).filter(|&v| comp[v] == best).collect();
        Ok((self.induced(&nodes)?, nodes))
    }
}

/// Dense modularity matrix `B_uv = A_uv − d_u d_v / 2m`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModularityMatrix {
    b: Tensor,
    two_m: f64,
}

impl ModularityMatrix {
    /// From a (possibly weighted) symmetric dense adjacency matrix.
    pub fn from_adjacency(adj: &Tensor) -> Result<Self> {
        if adj.rows() != adj.cols() {
            return Err(Error::shape("modularity_matrix", adj.shape(), (adj.cols(), adj.rows())));
        }
        let d = adj.row_sums();
        let two_m: f64 = d.iter().sum();
        if two_m <= 0.0 {
            return Err(Error::EmptyGraph);
        }
        let b = Tensor::from_fn(adj.rows(), adj.cols(), |u, v| adj.get(u, v) - d[u] * d[v] / two_m);
        Ok(ModularityMatrix { b, two_m })
    }

    pub fn matrix(&self) -> &Tensor {
        &self.b
    }

    /// Total degree `2m`.
    pub fn two_m(&self) -> f64 {
        self.two_m
    }
}

pub fn modularity_matrix(g: &Graph) -> Result<ModularityMatrix> {
    if g.m() == 0 {
        return Err(Error::EmptyGraph);
    }
    ModularityMatrix::from_adjacency(&g.adjacency_dense())
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degree matrix of `A + I`.
pub fn normalized_adjacency(g: &Graph) -> Tensor {
    let mut a = g.adjacency_dense();
    for i in 0..g.n() {
        a.set(i, i, 1.0);
    }
    normalize_with_self_loops(&a)
}

/// Symmetric normalization of a dense matrix that already has self-loops.
pub(crate) fn normalize_with_self_loops(a: &Tensor) -> Tensor {
    let inv_sqrt: Vec<f64> = a.row_sums().iter().map(|d| 1.0 / d.sqrt()).collect();
    Tensor::from_fn(a.rows(), a.cols(), |i, j| a.get(i, j) * inv_sqrt[i] * inv_sqrt[j])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> Graph {
        Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    #[test]
    fn dedup_and_self_loops() {
        let (g, rep) = Graph::from_edges_report(2, &[(0, 1), (1, 0), (0, 0)]).unwrap();
        assert_eq!((g.n(), g.m()), (2, 1));
        assert_eq!((rep.self_loops, rep.duplicates), (1, 1));
    }

    #[test]
    fn out_of_range_edge_is_error() {
        assert!(Graph::from_edges(2, &[(0, 2)]).is_err());
    }

    #[test]
    fn triangle_modularity_matrix() {
        let b = modularity_matrix(&triangle()).unwrap();
        for u in 0..3 {
            for v in 0..3 {
                let expected = if u == v { -2.0 / 3.0 } else { 1.0 / 3.0 };
                assert!((b.matrix().get(u, v) - expected).abs() < 1e-15);
            }
        }
        assert!(b.matrix().sum().abs() < 1e-12);
    }

    #[test]
    fn two_triangles_modularity_matrix() {
        let g = Graph::from_edges(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]).unwrap();
        let b = modularity_matrix(&g).unwrap();
        // d = 2 everywhere, 2m = 12: within-triangle 1 - 4/12, across -4/12.
        assert!((b.matrix().get(0, 1) - (1.0 - 1.0 / 3.0)).abs() < 1e-15);
        assert!((b.matrix().get(0, 4) + 1.0 / 3.0).abs() < 1e-15);
        assert!((b.matrix().get(2, 2) + 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_graph_modularity_is_error() {
        let g = Graph::from_edges(3, &[]).unwrap();
        assert!(matches!(modularity_matrix(&g), Err(Error::EmptyGraph)));
    }

    #[test]
    fn normalized_adjacency_examples() {
        let single = normalized_adjacency(&Graph::from_edges(1, &[]).unwrap());
        assert_eq!(single, Tensor::eye(1));
        let pair = normalized_adjacency(&Graph::from_edges(2, &[(0, 1)]).unwrap());
        assert!(pair.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
        let tri = normalized_adjacency(&triangle());
        assert!(tri.data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn isolated_node_row_is_unit_self_loop() {
        let g = Graph::from_edges(3, &[(0, 1)]).unwrap();
        let a = normalized_adjacency(&g);
        assert_eq!(a.row(2), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn largest_component_picks_biggest() {
        let g = Graph::from_edges(7, &[(0, 1), (2, 3), (3, 4), (4, 2), (5, 6)]).unwrap();
        let (lcc, ids) = g.largest_component().unwrap();
        assert_eq!(ids, vec![2, 3, 4]);
        assert_eq!(lcc.m(), 3);
    }
}
