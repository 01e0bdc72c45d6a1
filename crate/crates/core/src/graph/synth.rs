use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Graph;
use crate::error::{Error, Result};

/// Stochastic block model: nodes in the same block connect with probability
/// `p_in`, across blocks with `p_out`. Block labels are kept on the graph.
pub fn generate_sbm(blocks: &[usize], p_in: f64, p_out: f64, seed: u64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=p_in).contains(&p_out) {
        return Err(Error::invalid(format!("need 0 <= p_out <= p_in <= 1, got p_in={p_in}, p_out={p_out}")));
    }
    let labels: Vec<usize> = blocks
        .iter()
        .enumerate()
        .flat_map(|(b, &size)| std::iter::repeat_n(b, size))
        .collect();
    let n = labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, &edges)?.with_blocks(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disjoint_cliques() {
        let g = generate_sbm(&[5, 5], 1.0, 0.0, 3).unwrap();
        assert_eq!(g.m(), 20);
        assert!(g.has_edge(0, 4) && g.has_edge(5, 9) && !g.has_edge(4, 5));
        assert_eq!(g.components().iter().max(), Some(&1));
    }

    #[test]
    fn deterministic() {
        let a = generate_sbm(&[20, 30], 0.3, 0.05, 8).unwrap();
        let b = generate_sbm(&[20, 30], 0.3, 0.05, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_probabilities() {
        assert!(generate_sbm(&[3], 0.1, 0.2, 0).is_err());
        assert!(generate_sbm(&[3], 1.2, 0.2, 0).is_err());
    }
}
