mod common;

use std::collections::HashSet;

use clusternet::graph::{all_pairs_bfs, modularity_matrix, normalized_adjacency, split_edges, Graph};
use common::{arb_graph, path};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn floyd_warshall(g: &Graph) -> Vec<Vec<Option<u32>>> {
    let n = g.n();
    let mut d = vec![vec![None; n]; n];
    for (v, row) in d.iter_mut().enumerate() {
        row[v] = Some(0);
    }
    for &(u, v) in g.edges() {
        d[u][v] = Some(1);
        d[v][u] = Some(1);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|c| a + b < c) {
                        d[i][j] = Some(a + b);
                    }
                }
            }
        }
    }
    d
}

proptest! {
    #[test]
    fn split_partitions_edges(g in arb_graph(14), f in 0.05f64..0.95, seed in any::<u64>()) {
        let s = split_edges(&g, f, seed).unwrap();
        let all: HashSet<_> = g.edges().iter().copied().collect();
        let train: HashSet<_> = s.train_edges.iter().copied().collect();
        let held: HashSet<_> = s.held_edges.iter().copied().collect();
        prop_assert!(train.is_disjoint(&held));
        prop_assert_eq!(train.union(&held).copied().collect::<HashSet<_>>(), all);
        prop_assert_eq!(s.held_edges.len(), (f * g.m() as f64).round() as usize);
        prop_assert_eq!(s.train_graph(&g).unwrap().n(), g.n());
    }

    #[test]
    fn split_is_reproducible(g in arb_graph(12), seed in any::<u64>()) {
        prop_assert_eq!(split_edges(&g, 0.6, seed).unwrap(), split_edges(&g, 0.6, seed).unwrap());
    }

    #[test]
    fn modularity_rows_sum_to_zero(g in arb_graph(14)) {
        let b = modularity_matrix(&g).unwrap();
        for s in b.matrix().row_sums() {
            prop_assert!(s.abs() < 1e-12);
        }
        prop_assert_eq!(b.two_m(), 2.0 * g.m() as f64);
    }

    #[test]
    fn bfs_matches_floyd_warshall(g in arb_graph(12)) {
        let d = all_pairs_bfs(&g);
        let fw = floyd_warshall(&g);
        for u in 0..g.n() {
            for v in 0..g.n() {
                match fw[u][v] {
                    Some(x) => prop_assert_eq!(d.get(u, v), x),
                    None => prop_assert!(!d.is_reachable(u, v)),
                }
            }
        }
    }

    #[test]
    fn normalized_adjacency_spectrum_in_unit_interval(g in arb_graph(14)) {
        let a = normalized_adjacency(&g);
        let n = g.n();
        let m = DMatrix::from_row_slice(n, n, a.data());
        prop_assert!((&m - m.transpose()).amax() < 1e-15);
        let eig = m.symmetric_eigen().eigenvalues;
        prop_assert!(eig.iter().all(|&l| (-1.0 - 1e-10..=1.0 + 1e-10).contains(&l)));
        prop_assert!(eig.iter().any(|&l| (l - 1.0).abs() < 1e-10));
    }
}

#[test]
fn path_distances() {
    let d = all_pairs_bfs(&path(6));
    assert_eq!(d.get(0, 5), 5);
    assert_eq!(d.diameter(), 5);
}
