//! Decoding cluster output into decisions, differentiable decision losses,
//! and rounding to feasible discrete solutions.

mod facility;
mod rounding;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, ModularityMatrix};
use crate::softkmeans::distance_var;
use crate::tensor::Var;

pub use facility::{facility_value, FacilityObjective, SMOOTH_MAX_TEMP};
pub use rounding::{pipage_once, pipage_round, round_partition};

/// A discrete solution, serialized as a label array or a node list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HardSolution {
    Partition { labels: Vec<usize> },
    Selection { nodes: Vec<usize> },
}

impl HardSolution {
    /// Number of distinct communities or selected nodes.
    pub fn size(&self) -> usize {
        match self {
            HardSolution::Partition { labels } => {
                let mut l = labels.clone();
                l.sort_unstable();
                l.dedup();
                l.len()
            }
            HardSolution::Selection { nodes } => nodes.len(),
        }
    }
}

/// Which smooth surrogate of modularity to optimize.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModularityRelaxation {
    /// Expected modularity when each node draws its community independently
    /// from its row of `r`.
    #[default]
    Expected,
    /// `Tr[rᵀBr]/2m`, which treats a node's pairing with itself as random too.
    Trace,
}

/// Soft modularity of a row-stochastic `r` (to maximize).
pub fn modularity_loss<'t>(r: Var<'t>, b: &ModularityMatrix, relax: ModularityRelaxation) -> Result<Var<'t>> {
    let bm = b.matrix();
    if bm.rows() != r.shape().0 {
        return Err(Error::shape("modularity_loss", bm.shape(), r.shape()));
    }
    let tape = r.tape();
    let br = tape.constant(bm.clone()).matmul(r)?;
    let trace = r.mul(br)?.sum();
    let total = match relax {
        ModularityRelaxation::Trace => trace,
        ModularityRelaxation::Expected => {
            let n = bm.rows();
            let diag: Vec<f64> = (0..n).map(|u| bm.get(u, u)).collect();
            let self_pairs = r.mul(r)?.row_sum().mul(tape.constant(crate::tensor::Tensor::column(&diag)))?.sum();
            trace.sub(self_pairs)?.shift(diag.iter().sum())
        }
    };
    Ok(total.scale(1.0 / b.two_m()))
}

/// Modularity of a hard labeling.
pub fn modularity_value(labels: &[usize], g: &Graph) -> Result<f64> {
    if labels.len() != g.n() {
        return Err(Error::invalid(format!("{} labels for {} nodes", labels.len(), g.n())));
    }
    if g.m() == 0 {
        return Err(Error::EmptyGraph);
    }
    let c = labels.iter().max().map_or(0, |&l| l + 1);
    let mut inside = vec![0.0; c];
    let mut degree = vec![0.0; c];
    for &(u, v) in g.edges() {
        if labels[u] == labels[v] {
            inside[labels[u]] += 1.0;
        }
    }
    for (v, &l) in labels.iter().enumerate() {
        degree[l] += g.degree(v) as f64;
    }
    let m = g.m() as f64;
    Ok(inside
        .iter()
        .zip(&degree)
        .map(|(&e, &d)| e / m - (d / (2.0 * m)).powi(2))
        .sum())
}

/// Map from pre-squash mass `b` to an inclusion probability.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Squash {
    /// `clamp(2σ(γb) − 0.5, 0, 1)`.
    #[default]
    Verbatim,
    /// `2σ(γb) − 1`, which is 0 at `b = 0` and stays below 1.
    Shifted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    pub eta: f64,
    pub gamma: f64,
    pub budget: usize,
    #[serde(default)]
    pub squash: Squash,
}

/// Soft subset selection on a tape.
#[derive(Clone, Copy, Debug)]
pub struct SoftSelection<'t> {
    /// n×1 inclusion probabilities.
    pub x: Var<'t>,
    /// K×n mass allocation, rows sum to one.
    pub a: Var<'t>,
    /// n×1 mass received by each node.
    pub b: Var<'t>,
}

/// Each center spreads one unit of mass over nodes by a softmin of its
/// distances; received mass is squashed and rescaled to the budget.
pub fn select_from_clusters<'t>(emb: Var<'t>, centers: Var<'t>, p: &SelectionParams) -> Result<SoftSelection<'t>> {
    if p.budget == 0 {
        return Err(Error::invalid("selection budget must be positive"));
    }
    let a = distance_var(emb, centers)?.transpose().softmin_rows(p.eta);
    let b = a.col_sum().transpose();
    let squashed = b.scale(p.gamma).sigmoid().scale(2.0);
    let x = match p.squash {
        Squash::Verbatim => squashed.shift(-0.5).clamp(0.0, 1.0),
        Squash::Shifted => squashed.shift(-1.0).clamp(0.0, 1.0),
    };
    let x = rescale_to_budget(x, p.budget)?;
    Ok(SoftSelection { x, a, b })
}

/// `x ← K·x/‖x‖₁` when `‖x‖₁ > K`, for a non-negative n×1 `x`.
pub fn rescale_to_budget(x: Var<'_>, budget: usize) -> Result<Var<'_>> {
    let budget = budget as f64;
    if x.value().sum() > budget {
        x.matmul(x.sum().recip().scale(budget))
    } else {
        Ok(x)
    }
}

/// A decision loss on the observed graph, oriented for minimization.
#[derive(Clone, Copy)]
pub enum DecisionObjective<'a> {
    /// Negated soft modularity of an n×K assignment.
    Community {
        b: &'a ModularityMatrix,
        relax: ModularityRelaxation,
    },
    /// Smoothed max expected facility distance of an n×1 selection.
    Facility { objective: &'a FacilityObjective, temp: f64 },
}

impl DecisionObjective<'_> {
    pub fn loss<'t>(&self, soft: Var<'t>) -> Result<Var<'t>> {
        match *self {
            DecisionObjective::Community { b, relax } => Ok(modularity_loss(soft, b, relax)?.scale(-1.0)),
            DecisionObjective::Facility { objective, temp } => objective.loss(soft, temp),
        }
    }

    pub fn is_partition(&self) -> bool {
        matches!(self, DecisionObjective::Community { .. })
    }
}
