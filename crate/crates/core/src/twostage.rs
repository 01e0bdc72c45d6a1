//! Two-stage baseline: a GCN link predictor trained on observed edges, whose
//! reconstructed graph is handed to a combinatorial algorithm.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcn::{gcn_forward, GcnParams, Mode};
use crate::graph::{normalize_with_self_loops, normalized_adjacency, Graph};
use crate::tensor::{Adam, Tape, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub hidden: usize,
    pub embed: usize,
    pub lr: f64,
    pub epochs: usize,
    pub negative_ratio: usize,
    pub edge_dropout: f64,
    pub seed: u64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            hidden: 50,
            embed: 50,
            lr: 0.01,
            epochs: 200,
            negative_ratio: 5,
            edge_dropout: 0.2,
            seed: 0,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.negative_ratio < 1 {
            return Err(Error::invalid("negative_ratio must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.edge_dropout) {
            return Err(Error::invalid(format!("edge_dropout must be in [0, 1), got {}", self.edge_dropout)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkPredictor {
    pub encoder: GcnParams,
    pub negative_ratio: usize,
    pub edge_dropout: f64,
    /// Eval-mode embeddings on the full observed adjacency.
    pub embeddings: Tensor,
    pub loss_history: Vec<f64>,
}

impl LinkPredictor {
    /// Logit `z_uᵀ z_v`.
    pub fn score(&self, u: usize, v: usize) -> f64 {
        self.embeddings.row(u).iter().zip(self.embeddings.row(v)).map(|(a, b)| a * b).sum()
    }

    pub fn probability(&self, u: usize, v: usize) -> f64 {
        1.0 / (1.0 + (-self.score(u, v)).exp())
    }
}

/// Uniform non-edges of `g`, never self-loops.
pub fn sample_non_edges(g: &Graph, count: usize, rng: &mut impl Rng) -> Result<Vec<(usize, usize)>> {
    let n = g.n();
    let capacity = n * n.saturating_sub(1) / 2 - g.m();
    if count > 0 && capacity == 0 {
        return Err(Error::invalid("graph is complete; no non-edges to sample"));
    }
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u != v && !g.has_edge(u, v) {
            out.push((u.min(v), u.max(v)));
        }
    }
    Ok(out)
}

/// Trains the encoder with a dot-product decoder and binary cross-entropy on
/// observed edges plus `negative_ratio` sampled non-edges per edge, dropping
/// message-passing edges independently each epoch.
pub fn train_link_predictor(observed: &Graph, features: &Tensor, cfg: &LinkConfig) -> Result<LinkPredictor> {
    cfg.validate()?;
    if observed.m() == 0 {
        return Err(Error::invalid("link predictor needs at least one training edge"));
    }
    if features.rows() != observed.n() {
        return Err(Error::shape("train_link_predictor", features.shape(), (observed.n(), 0)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = GcnParams::init(features.cols(), cfg.hidden, cfg.embed, 0.0, cfg.seed)?;
    let mut adam = Adam::new(cfg.lr);
    let pos = observed.edges().to_vec();
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let kept: Vec<(usize, usize)> = pos.iter().copied().filter(|_| rng.random::<f64>() >= cfg.edge_dropout).collect();
        let adj = normalized_adjacency(&observed.with_edge_set(&kept)?);
        let neg = sample_non_edges(observed, pos.len() * cfg.negative_ratio, &mut rng)?;
        let tape = Tape::new();
        let w = params.leaves(&tape);
        let z = gcn_forward(tape.constant(adj), tape.constant(features.clone()), &w, Mode::Eval)?;
        let logits = |pairs: &[(usize, usize)]| -> Result<_> {
            let us: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let vs: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            Ok(z.gather_rows(&us)?.mul(z.gather_rows(&vs)?)?.row_sum())
        };
        let lp = logits(&pos)?.log_sigmoid().sum();
        let ln = logits(&neg)?.scale(-1.0).log_sigmoid().sum();
        let loss = lp.add(ln)?.scale(-1.0 / (pos.len() + neg.len()) as f64);
        let value = loss.item();
        if !value.is_finite() {
            return Err(Error::NonFinite("link prediction loss".into()));
        }
        history.push(value);
        let grads = loss.backward()?;
        let mut ts = params.tensors();
        adam.step(&mut ts, &[grads.wrt(w.w1), grads.wrt(w.w2)])?;
        params.set_tensors(ts)?;
    }
    let embeddings = embed(&params, observed, features)?;
    Ok(LinkPredictor {
        encoder: params,
        negative_ratio: cfg.negative_ratio,
        edge_dropout: cfg.edge_dropout,
        embeddings,
        loss_history: history,
    })
}

fn embed(params: &GcnParams, g: &Graph, features: &Tensor) -> Result<Tensor> {
    let tape = Tape::new();
    let w = params.leaves(&tape);
    let z = gcn_forward(
        tape.constant(normalized_adjacency(g)),
        tape.constant(features.clone()),
        &w,
        Mode::Eval,
    )?;
    let out = z.value().as_ref().clone();
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdjacencyMode {
    /// Edge probabilities with observed edges fixed at one.
    Expected,
    /// Observed edges plus the `m̂` highest-scoring unobserved pairs.
    TopM,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictedGraph {
    pub mode: AdjacencyMode,
    /// Symmetric, zero diagonal. Binary in top-m mode.
    pub probs: Tensor,
    /// Discrete reconstruction in top-m mode.
    pub graph: Option<Graph>,
}

impl PredictedGraph {
    /// `u v score` lines for every pair with positive score, `u < v`.
    pub fn to_edge_list(&self) -> String {
        let n = self.probs.rows();
        let mut s = String::new();
        for u in 0..n {
            for v in u + 1..n {
                let p = self.probs.get(u, v);
                if p > 0.0 {
                    s.push_str(&format!("{u} {v} {p}\n"));
                }
            }
        }
        s
    }

    /// `D̃^{−1/2}(P + I)D̃^{−1/2}` of the weighted prediction.
    pub fn normalized(&self) -> Tensor {
        normalize_with_self_loops(&self.probs)
    }
}

/// Reconstructs the graph from a trained predictor. `m_hat` is the number of
/// unobserved pairs added in top-m mode.
pub fn predict_adjacency(model: &LinkPredictor, observed: &Graph, m_hat: usize, mode: AdjacencyMode) -> Result<PredictedGraph> {
    let n = observed.n();
    if model.embeddings.rows() != n {
        return Err(Error::shape("predict_adjacency", model.embeddings.shape(), (n, 0)));
    }
    match mode {
        AdjacencyMode::Expected => {
            let probs = Tensor::from_fn(n, n, |u, v| {
                if u == v {
                    0.0
                } else if observed.has_edge(u, v) {
                    1.0
                } else {
                    model.probability(u.min(v), u.max(v))
                }
            });
            Ok(PredictedGraph {
                mode,
                probs,
                graph: None,
            })
        }
        AdjacencyMode::TopM => {
            let mut cand: Vec<(f64, usize, usize)> = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    if !observed.has_edge(u, v) {
                        cand.push((model.score(u, v), u, v));
                    }
                }
            }
            if m_hat > cand.len() {
                return Err(Error::invalid(format!("m̂ = {m_hat} exceeds {} candidate pairs", cand.len())));
            }
            cand.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
            let mut edges = observed.edges().to_vec();
            edges.extend(cand[..m_hat].iter().map(|&(_, u, v)| (u, v)));
            let g = observed.with_edge_set(&edges)?;
            Ok(PredictedGraph {
                mode,
                probs: g.adjacency_dense(),
                graph: Some(g),
            })
        }
    }
}

/// Rank-based AUC; a tie between a positive and a negative counts one half.
pub fn auc_from_scores(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::invalid("AUC needs positive and negative scores"));
    }
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        rank_sum += avg * all[i..j].iter().filter(|x| x.1).count() as f64;
        i = j;
    }
    let (p, q) = (pos.len() as f64, neg.len() as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

/// AUC of held-out edges against as many sampled non-edges of `full`.
pub fn auc(model: &LinkPredictor, held: &[(usize, usize)], full: &Graph, seed: u64) -> Result<f64> {
    if held.is_empty() {
        return Err(Error::invalid("no held-out edges"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let neg = sample_non_edges(full, held.len(), &mut rng)?;
    let ps: Vec<f64> = held.iter().map(|&(u, v)| model.score(u, v)).collect();
    let ns: Vec<f64> = neg.iter().map(|&(u, v)| model.score(u, v)).collect();
    auc_from_scores(&ps, &ns)
}

/// Distinct non-edges check used by tests and callers that cache samples.
pub fn all_non_edges(g: &Graph, pairs: &[(usize, usize)]) -> bool {
    let seen: HashSet<_> = g.edges().iter().copied().collect();
    pairs.iter().all(|&(u, v)| u != v && !seen.contains(&(u.min(v), u.max(v))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, split_edges, structural_features};

    fn small_cfg() -> LinkConfig {
        LinkConfig {
            hidden: 16,
            embed: 16,
            epochs: 40,
            ..LinkConfig::default()
        }
    }

    #[test]
    fn auc_extremes() {
        assert_eq!(auc_from_scores(&[3.0, 4.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(auc_from_scores(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert_eq!(auc_from_scores(&[1.0], &[1.0]).unwrap(), 0.5);
        assert!(auc_from_scores(&[], &[1.0]).is_err());
    }

    #[test]
    fn negatives_avoid_edges_and_loops() {
        let g = generate_sbm(&[10, 10], 0.8, 0.1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let neg = sample_non_edges(&g, 500, &mut rng).unwrap();
        assert!(all_non_edges(&g, &neg));
    }

    #[test]
    fn predicted_graph_rules() {
        let g = generate_sbm(&[10, 10], 0.7, 0.05, 2).unwrap();
        let split = split_edges(&g, 0.6, 0).unwrap();
        let obs = split.train_graph(&g).unwrap();
        let feats = structural_features(&obs, 16, 8, 0);
        let model = train_link_predictor(&obs, &feats, &small_cfg()).unwrap();
        let top = predict_adjacency(&model, &obs, split.held_edges.len(), AdjacencyMode::TopM).unwrap();
        assert_eq!(top.graph.as_ref().unwrap().m(), g.m());
        let exp = predict_adjacency(&model, &obs, 0, AdjacencyMode::Expected).unwrap();
        for u in 0..20 {
            assert_eq!(exp.probs.get(u, u), 0.0);
            for v in 0..20 {
                assert_eq!(exp.probs.get(u, v), exp.probs.get(v, u));
                if obs.has_edge(u, v) {
                    assert_eq!(exp.probs.get(u, v), 1.0);
                    assert_eq!(top.probs.get(u, v), 1.0);
                }
            }
        }
        assert!(top.to_edge_list().lines().count() == g.m());
    }

    #[test]
    fn deterministic_under_seed() {
        let g = generate_sbm(&[8, 8], 0.7, 0.05, 3).unwrap();
        let feats = structural_features(&g, 16, 4, 0);
        let a = train_link_predictor(&g, &feats, &small_cfg()).unwrap();
        let b = train_link_predictor(&g, &feats, &small_cfg()).unwrap();
        assert_eq!(a.embeddings, b.embeddings);
    }
}
