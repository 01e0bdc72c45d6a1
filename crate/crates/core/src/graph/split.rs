use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};

/// Partition of a graph's edges into observed (training) and held-out sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeSplit {
    pub train_edges: Vec<(usize, usize)>,
    pub held_edges: Vec<(usize, usize)>,
    pub fraction_held: f64,
    pub seed: u64,
}

/// On-disk form of a split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub fraction: f64,
    pub held_edge_list: Vec<(usize, usize)>,
}

/// Uniform random split holding out `round(fraction_held · m)` edges.
pub fn split_edges(g: &Graph, fraction_held: f64, seed: u64) -> Result<EdgeSplit> {
    if !(fraction_held > 0.0 && fraction_held < 1.0) {
        return Err(Error::invalid(format!("fraction_held must be in (0, 1), got {fraction_held}")));
    }
    let mut edges = g.edges().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    edges.shuffle(&mut rng);
    let held_count = (fraction_held * g.m() as f64).round() as usize;
    let mut held = edges[..held_count].to_vec();
    let mut train = edges[held_count..].to_vec();
    held.sort_unstable();
    train.sort_unstable();
    Ok(EdgeSplit {
        train_edges: train,
        held_edges: held,
        fraction_held,
        seed,
    })
}

impl EdgeSplit {
    /// Graph on all `n` nodes with only the training edges.
    pub fn train_graph(&self, g: &Graph) -> Result<Graph> {
        g.with_edge_set(&self.train_edges)
    }

    pub fn manifest(&self) -> SplitManifest {
        SplitManifest {
            seed: self.seed,
            fraction: self.fraction_held,
            held_edge_list: self.held_edges.clone(),
        }
    }

    /// Rebuilds a split of `g` from a manifest.
    pub fn from_manifest(g: &Graph, m: &SplitManifest) -> Result<Self> {
        let mut held: Vec<(usize, usize)> = m.held_edge_list.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
        held.sort_unstable();
        for e in &held {
            if !g.has_edge(e.0, e.1) {
                return Err(Error::invalid(format!("held edge {e:?} not in graph")));
            }
        }
        let train = g
            .edges()
            .iter()
            .copied()
            .filter(|e| held.binary_search(e).is_err())
            .collect();
        Ok(EdgeSplit {
            train_edges: train,
            held_edges: held,
            fraction_held: m.fraction,
            seed: m.seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(&self.manifest())?)?;
        Ok(())
    }

    pub fn load(g: &Graph, path: &Path) -> Result<Self> {
        let m: SplitManifest = serde_json::from_str(&fs::read_to_string(path)?)?;
        Self::from_manifest(g, &m)
    }
}
