use std::path::PathBuf;

use super::config::{DatasetSpec, RunConfig, RunMode, Task};
use crate::decisions::{facility_value, modularity_value, DecisionObjective, FacilityObjective, HardSolution};
use crate::error::{Error, Result};
use crate::graph::{
    all_pairs_bfs, generate_sbm, load_cora, load_edge_list, load_features, modularity_matrix, normalized_adjacency,
    propagated_features, split_edges, DistanceTable, EdgeListOptions, EdgeSplit, Graph, ModularityMatrix,
};
use crate::tensor::Tensor;

/// Environment variable naming a directory with `cora.content` and `cora.cites`.
pub const CORA_ENV: &str = "CLUSTERNET_CORA_DIR";

pub fn load_dataset(spec: &DatasetSpec) -> Result<Graph> {
    match spec {
        DatasetSpec::EdgeList { path, features } => {
            let (g, _) = load_edge_list(path, &EdgeListOptions::default())?;
            match features {
                Some(f) => {
                    let x = load_features(f, g.n())?;
                    g.with_features(x)
                }
                None => Ok(g),
            }
        }
        DatasetSpec::Cora { dir } => {
            let dir = match dir {
                Some(d) => d.clone(),
                None => std::env::var_os(CORA_ENV)
                    .map(PathBuf::from)
                    .ok_or_else(|| Error::Config(format!("cora directory not given and {CORA_ENV} is unset")))?,
            };
            Ok(load_cora(&dir)?.0)
        }
        DatasetSpec::Sbm { blocks, p_in, p_out, seed } => generate_sbm(blocks, *p_in, *p_out, *seed),
    }
}

/// The complete graph, used only to score final solutions.
#[derive(Clone, Debug)]
pub struct FullGraph {
    graph: Graph,
    dist: Option<DistanceTable>,
}

impl FullGraph {
    pub fn new(graph: Graph, task: Task) -> Self {
        let dist = (task == Task::Facility).then(|| all_pairs_bfs(&graph));
        FullGraph { graph, dist }
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    /// Objective of `sol` on every edge of the graph.
    pub fn evaluate(&self, sol: &HardSolution) -> Result<f64> {
        evaluate(&self.graph, self.dist.as_ref(), sol)
    }
}

fn evaluate(g: &Graph, dist: Option<&DistanceTable>, sol: &HardSolution) -> Result<f64> {
    match sol {
        HardSolution::Partition { labels } => modularity_value(labels, g),
        HardSolution::Selection { nodes } => match dist {
            Some(d) => facility_value(nodes, d),
            None => facility_value(nodes, &all_pairs_bfs(g)),
        },
    }
}

/// The edges available for learning.
#[derive(Clone, Debug)]
pub struct ObservedGraph(Graph);

impl ObservedGraph {
    pub fn from_split(full: &FullGraph, split: &EdgeSplit) -> Result<Self> {
        Ok(ObservedGraph(split.train_graph(full.graph())?))
    }

    /// Every edge is observed.
    pub fn whole(full: &FullGraph) -> Self {
        ObservedGraph(full.graph().clone())
    }

    pub fn graph(&self) -> &Graph {
        &self.0
    }
}

#[derive(Clone)]
pub enum Target {
    Community { b: ModularityMatrix },
    Facility { dist: DistanceTable, objective: FacilityObjective },
}

/// A decision problem built only from observed edges.
#[derive(Clone)]
pub struct Instance {
    observed: ObservedGraph,
    adj: Tensor,
    features: Tensor,
    target: Target,
}

impl Instance {
    pub fn new(observed: ObservedGraph, task: Task, cfg: &RunConfig, feature_seed: u64) -> Result<Self> {
        let g = observed.graph();
        let features = match g.features() {
            Some(f) => f.clone(),
            None => propagated_features(
                g,
                cfg.features.degree_buckets,
                cfg.features.random_dims,
                cfg.features.hops,
                feature_seed,
            ),
        };
        let target = match task {
            Task::Community => Target::Community { b: modularity_matrix(g)? },
            Task::Facility => {
                let dist = all_pairs_bfs(g);
                let objective = FacilityObjective::new(&dist)?;
                Target::Facility { dist, objective }
            }
        };
        Ok(Instance {
            adj: normalized_adjacency(g),
            observed,
            features,
            target,
        })
    }

    pub fn observed(&self) -> &ObservedGraph {
        &self.observed
    }

    pub fn n(&self) -> usize {
        self.observed.graph().n()
    }

    pub fn adjacency(&self) -> &Tensor {
        &self.adj
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn task(&self) -> Task {
        match self.target {
            Target::Community { .. } => Task::Community,
            Target::Facility { .. } => Task::Facility,
        }
    }

    pub fn objective(&self, cfg: &RunConfig) -> DecisionObjective<'_> {
        match &self.target {
            Target::Community { b } => DecisionObjective::Community { b, relax: cfg.relaxation },
            Target::Facility { objective, .. } => DecisionObjective::Facility {
                objective,
                temp: cfg.smooth_max_temp,
            },
        }
    }

    /// Objective of `sol` on the observed edges only.
    pub fn evaluate(&self, sol: &HardSolution) -> Result<f64> {
        let dist = match &self.target {
            Target::Facility { dist, .. } => Some(dist),
            Target::Community { .. } => None,
        };
        evaluate(self.observed.graph(), dist, sol)
    }
}

/// Everything one run needs: the evaluation view, the split, and the
/// training-side instance.
pub struct Problem {
    pub name: String,
    pub full: FullGraph,
    pub split: Option<EdgeSplit>,
    pub instance: Instance,
}

/// Facility location runs on the largest connected component.
pub fn restrict_for_task(g: Graph, task: Task) -> Result<Graph> {
    match task {
        Task::Community => Ok(g),
        Task::Facility => Ok(g.largest_component()?.0),
    }
}

pub fn prepare_graph(g: Graph, cfg: &RunConfig, mode: RunMode, name: String, split_seed: u64) -> Result<Problem> {
    let g = restrict_for_task(g, cfg.task)?;
    let full = FullGraph::new(g, cfg.task);
    let (observed, split) = match mode {
        RunMode::OptOnly => (ObservedGraph::whole(&full), None),
        _ => {
            let split = match &cfg.split_manifest {
                Some(path) => EdgeSplit::load(full.graph(), path)?,
                None => split_edges(full.graph(), cfg.fraction_held, split_seed)?,
            };
            (ObservedGraph::from_split(&full, &split)?, Some(split))
        }
    };
    let instance = Instance::new(observed, cfg.task, cfg, cfg.seed)?;
    Ok(Problem {
        name,
        full,
        split,
        instance,
    })
}

pub fn prepare(cfg: &RunConfig) -> Result<Problem> {
    let g = load_dataset(&cfg.dataset)?;
    prepare_graph(g, cfg, cfg.mode, cfg.dataset.name(), cfg.seed)
}
