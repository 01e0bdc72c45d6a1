use serde::{Deserialize, Serialize};

use crate::decisions::{rescale_to_budget, DecisionObjective};
use crate::error::{Error, Result};
use crate::gcn::{gcn_forward, GcnParams, GcnVars, Mode};
use crate::tensor::{Adam, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct E2eConfig {
    pub hidden: usize,
    pub lr: f64,
    pub iters: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for E2eConfig {
    fn default() -> Self {
        E2eConfig {
            hidden: 50,
            lr: 0.01,
            iters: 1000,
            dropout: 0.0,
            seed: 0,
        }
    }
}

/// A GCN that outputs the decision directly: a row-softmax over `k`
/// communities, or a sigmoid inclusion probability rescaled to budget `k`.
pub fn gcn_e2e(
    adj: &Tensor,
    features: &Tensor,
    objective: &DecisionObjective<'_>,
    k: usize,
    cfg: &E2eConfig,
) -> Result<Tensor> {
    if k == 0 {
        return Err(Error::invalid("K must be positive"));
    }
    let out_dim = if objective.is_partition() { k } else { 1 };
    let mut params = GcnParams::init(features.cols(), cfg.hidden, out_dim, cfg.dropout, cfg.seed)?;
    let mut adam = Adam::new(cfg.lr);
    for it in 0..cfg.iters {
        let tape = Tape::new();
        let mode = Mode::Train {
            seed: cfg.seed.wrapping_add(it as u64),
        };
        let (w, soft) = head(&tape, &params, adj, features, objective, k, mode)?;
        let loss = objective.loss(soft)?;
        if !loss.item().is_finite() {
            return Err(Error::NonFinite(format!("gcn-e2e loss at iteration {it}")));
        }
        let grads = loss.backward()?;
        let mut ts = params.tensors();
        adam.step(&mut ts, &[grads.wrt(w.w1), grads.wrt(w.w2)])?;
        params.set_tensors(ts)?;
    }
    let tape = Tape::new();
    let (_, soft) = head(&tape, &params, adj, features, objective, k, Mode::Eval)?;
    let out = soft.value().as_ref().clone();
    Ok(out)
}

fn head<'t>(
    tape: &'t Tape,
    params: &GcnParams,
    adj: &Tensor,
    features: &Tensor,
    objective: &DecisionObjective<'_>,
    k: usize,
    mode: Mode,
) -> Result<(GcnVars<'t>, Var<'t>)> {
    let w = params.leaves(tape);
    let z = gcn_forward(tape.constant(adj.clone()), tape.constant(features.clone()), &w, mode)?;
    let soft = if objective.is_partition() {
        z.softmax_rows(1.0)
    } else {
        rescale_to_budget(z.sigmoid(), k)?
    };
    Ok((w, soft))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decisions::{modularity_value, round_partition, ModularityRelaxation};
    use crate::graph::{generate_sbm, modularity_matrix, normalized_adjacency, structural_features};

    #[test]
    fn partition_head_on_two_k5() {
        let g = generate_sbm(&[5, 5], 1.0, 0.0, 0).unwrap();
        let b = modularity_matrix(&g).unwrap();
        let obj = DecisionObjective::Community {
            b: &b,
            relax: ModularityRelaxation::Expected,
        };
        let cfg = E2eConfig {
            iters: 300,
            ..E2eConfig::default()
        };
        let feats = structural_features(&g, 16, 8, 1);
        let r = gcn_e2e(&normalized_adjacency(&g), &feats, &obj, 2, &cfg).unwrap();
        for s in r.row_sums() {
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!(modularity_value(&round_partition(&r), &g).unwrap() > 0.0);
    }
}
