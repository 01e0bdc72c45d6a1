#![allow(dead_code)]
pub mod oracles;


use clusternet::graph::Graph;
use proptest::prelude::*;

/// Zachary's karate club, 0-indexed.
pub const KARATE: [(usize, usize); 78] = [
    (0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (0, 6), (0, 7), (0, 8), (0, 10), (0, 11), (0, 12), (0, 13), (0, 17),
    (0, 19), (0, 21), (0, 31), (1, 2), (1, 3), (1, 7), (1, 13), (1, 17), (1, 19), (1, 21), (1, 30), (2, 3), (2, 7),
    (2, 8), (2, 9), (2, 13), (2, 27), (2, 28), (2, 32), (3, 7), (3, 12), (3, 13), (4, 6), (4, 10), (5, 6), (5, 10),
    (5, 16), (6, 16), (8, 30), (8, 32), (8, 33), (9, 33), (13, 33), (19, 33), (23, 25), (23, 29), (25, 24), (27, 23),
    (27, 24), (27, 33), (28, 33), (29, 26), (30, 32), (30, 33), (31, 24), (31, 25), (31, 28), (31, 32), (31, 33),
    (32, 14), (32, 15), (32, 18), (32, 20), (32, 22), (32, 23), (32, 29), (32, 33), (33, 14), (33, 15), (33, 18),
    (33, 20), (33, 22), (33, 23), (33, 26), (33, 29),
];

pub fn karate() -> Graph {
    Graph::from_edges(34, &KARATE).unwrap()
}

pub fn path(n: usize) -> Graph {
    let e: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
    Graph::from_edges(n, &e).unwrap()
}

/// Random simple graph with at least one edge.
pub fn arb_graph(max_n: usize) -> impl Strategy<Value = Graph> {
    (3..=max_n).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        let len = pairs.len();
        (Just(n), Just(pairs), proptest::collection::vec(any::<bool>(), len), 0..len).prop_map(
            |(n, pairs, keep, forced)| {
                let edges: Vec<_> = pairs
                    .iter()
                    .zip(&keep)
                    .enumerate()
                    .filter(|(i, (_, &k))| k || *i == forced)
                    .map(|(_, (&e, _))| e)
                    .collect();
                Graph::from_edges(n, &edges).unwrap()
            },
        )
    })
}

/// Random connected graph: a random spanning tree plus extra edges.
pub fn arb_connected(max_n: usize) -> impl Strategy<Value = Graph> {
    (3..=max_n).prop_flat_map(|n| {
        (
            Just(n),
            proptest::collection::vec(any::<prop::sample::Index>(), n - 1),
            proptest::collection::vec((0..n, 0..n), 0..2 * n),
        )
            .prop_map(|(n, parents, extra)| {
                let mut e: Vec<_> = (1..n).map(|v| (parents[v - 1].index(v), v)).collect();
                e.extend(extra.into_iter().filter(|(a, b)| a != b));
                Graph::from_edges(n, &e).unwrap()
            })
    })
}
