use clusternet::gcn::{gcn_forward, GcnParams, Mode};
use clusternet::graph::{normalized_adjacency, Graph};
use clusternet::tensor::{Tape, Tensor};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn permutation_equivariance(
        n in 4usize..12,
        edges in proptest::collection::vec((0usize..12, 0usize..12), 1..30),
        perm_seed in any::<u64>(),
        seed in any::<u64>(),
    ) {
        let edges: Vec<_> = edges.into_iter().map(|(a, b)| (a % n, b % n)).filter(|(a, b)| a != b).collect();
        prop_assume!(!edges.is_empty());
        let g = Graph::from_edges(n, &edges).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = perm_seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let pe: Vec<_> = edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        let gp = Graph::from_edges(n, &pe).unwrap();
        let x = Tensor::from_fn(n, 3, |i, j| ((i * 7 + j * 3) as f64 * 0.31).sin());
        let xp = {
            let mut t = Tensor::zeros(n, 3);
            for i in 0..n {
                t.row_mut(perm[i]).copy_from_slice(x.row(i));
            }
            t
        };
        let params = GcnParams::init(3, 6, 4, 0.0, seed).unwrap();
        let tape = Tape::new();
        let w = params.leaves(&tape);
        let z = gcn_forward(tape.constant(normalized_adjacency(&g)), tape.constant(x), &w, Mode::Eval).unwrap().value();
        let zp = gcn_forward(tape.constant(normalized_adjacency(&gp)), tape.constant(xp), &w, Mode::Eval).unwrap().value();
        for i in 0..n {
            for j in 0..4 {
                prop_assert!((z.get(i, j) - zp.get(perm[i], j)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn eval_mode_ignores_dropout() {
    let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
    let params = GcnParams::init(2, 3, 2, 0.5, 1).unwrap();
    let tape = Tape::new();
    let w = params.leaves(&tape);
    let adj = tape.constant(normalized_adjacency(&g));
    let x = tape.constant(Tensor::ones(4, 2));
    let a = gcn_forward(adj, x, &w, Mode::Eval).unwrap().value();
    let b = gcn_forward(adj, x, &w, Mode::Eval).unwrap().value();
    assert_eq!(a, b);
    let c = gcn_forward(adj, x, &w, Mode::Train { seed: 3 }).unwrap().value();
    assert_ne!(a, c);
}
