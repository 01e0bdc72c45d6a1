use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::clusternet::{infer, train, ClusterNet, WarmStart};
use super::config::{RunConfig, RunMode, Task};
use super::data::{prepare, Instance, Problem, Target};
use crate::baselines::{
    gcn_e2e, spectral_clustering_dense, BaselineName, BaselineSpec, E2eConfig,
};
use crate::decisions::{
    facility_value, pipage_round, round_partition, DecisionObjective, FacilityObjective, HardSolution,
};
use crate::error::{Error, Result};
use crate::graph::{all_pairs_bfs, DistanceTable, ModularityMatrix};
use crate::tensor::Tensor;
use crate::twostage::{auc, predict_adjacency, train_link_predictor, AdjacencyMode, PredictedGraph};

/// Environment variable naming the directory for result files.
pub const RESULTS_ENV: &str = "CLUSTERNET_RESULTS_DIR";

pub fn results_dir() -> PathBuf {
    std::env::var_os(RESULTS_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("results"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    ClusterNet,
    GcnE2e,
    /// The algorithm runs on the observed subgraph.
    Train(BaselineName),
    /// The algorithm runs on a graph reconstructed by a link predictor.
    TwoStage(BaselineName),
}

impl Method {
    pub fn valid_names() -> Vec<String> {
        let mut v = vec!["clusternet".to_string(), "gcn-e2e".to_string()];
        for b in BaselineName::ALL {
            if b != BaselineName::GcnE2e {
                v.push(format!("train-{b}"));
            }
        }
        for b in BaselineName::ALL {
            v.push(format!("2stage-{b}"));
        }
        v
    }

    /// Whether the method can produce a solution for `task`.
    pub fn supports(self, task: Task) -> bool {
        match self {
            Method::ClusterNet | Method::GcnE2e | Method::TwoStage(BaselineName::GcnE2e) => true,
            Method::Train(b) | Method::TwoStage(b) => match task {
                Task::Community => b.is_partition(),
                Task::Facility => b.is_selection(),
            },
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::ClusterNet => f.write_str("clusternet"),
            Method::GcnE2e => f.write_str("gcn-e2e"),
            Method::Train(b) => write!(f, "train-{b}"),
            Method::TwoStage(b) => write!(f, "2stage-{b}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parsed = match s {
            "clusternet" => Some(Method::ClusterNet),
            "gcn-e2e" => Some(Method::GcnE2e),
            _ => {
                if let Some(b) = s.strip_prefix("train-") {
                    b.parse().ok().filter(|&b| b != BaselineName::GcnE2e).map(Method::Train)
                } else if let Some(b) = s.strip_prefix("2stage-") {
                    b.parse().ok().map(Method::TwoStage)
                } else {
                    None
                }
            }
        };
        parsed.ok_or_else(|| Error::Config(format!("unknown method {s:?}; valid: {}", Method::valid_names().join(", "))))
    }
}

/// Outcome of one run on one graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub method: String,
    pub task: Task,
    pub mode: RunMode,
    pub dataset: String,
    pub seed: u64,
    /// Objective on every edge of the graph.
    pub objective_full_graph: f64,
    /// Objective on the observed edges only.
    pub objective_train_graph: f64,
    pub runtime_train_s: f64,
    pub runtime_forward_s: f64,
    pub solution: HardSolution,
    /// Communities found, or facilities selected.
    pub solution_size: usize,
    #[serde(default)]
    pub auc: Option<f64>,
    #[serde(default)]
    pub adjacency_mode: Option<AdjacencyMode>,
    pub gradient_updates: usize,
    #[serde(default)]
    pub graph_index: Option<usize>,
    pub config: RunConfig,
}

impl ExperimentResult {
    /// Key shared by results on the same graph instance.
    pub fn instance_key(&self) -> String {
        match self.graph_index {
            Some(i) => format!("{}#{i}", self.dataset),
            None => self.dataset.clone(),
        }
    }

    pub fn file_name(&self) -> String {
        let g = self.graph_index.map(|i| format!("_g{i}")).unwrap_or_default();
        format!(
            "{}_{}_{}_{}_s{}{g}.json",
            self.dataset,
            self.task.as_str(),
            self.mode.as_str(),
            self.method,
            self.seed
        )
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(self.file_name());
        fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Solution plus the timings and bookkeeping of the method that produced it.
struct Outcome {
    solution: HardSolution,
    runtime_train_s: f64,
    runtime_forward_s: f64,
    gradient_updates: usize,
    auc: Option<f64>,
    adjacency_mode: Option<AdjacencyMode>,
}

impl Outcome {
    fn untrained(solution: HardSolution, runtime_forward_s: f64) -> Self {
        Outcome {
            solution,
            runtime_train_s: 0.0,
            runtime_forward_s,
            gradient_updates: 0,
            auc: None,
            adjacency_mode: None,
        }
    }
}

pub(crate) fn finish(
    problem: &Problem,
    cfg: &RunConfig,
    method: Method,
    mode: RunMode,
    graph_index: Option<usize>,
    solution: HardSolution,
    timing: (f64, f64),
    gradient_updates: usize,
    link: (Option<f64>, Option<AdjacencyMode>),
) -> Result<ExperimentResult> {
    Ok(ExperimentResult {
        method: method.to_string(),
        task: cfg.task,
        mode,
        dataset: problem.name.clone(),
        seed: cfg.seed,
        objective_full_graph: problem.full.evaluate(&solution)?,
        objective_train_graph: problem.instance.evaluate(&solution)?,
        runtime_train_s: timing.0,
        runtime_forward_s: timing.1,
        solution_size: solution.size(),
        solution,
        auc: link.0,
        adjacency_mode: link.1,
        gradient_updates,
        graph_index,
        config: cfg.resolved(),
    })
}

fn wrap(problem: &Problem, cfg: &RunConfig, method: Method, o: Outcome) -> Result<ExperimentResult> {
    finish(
        problem,
        cfg,
        method,
        cfg.mode,
        None,
        o.solution,
        (o.runtime_train_s, o.runtime_forward_s),
        o.gradient_updates,
        (o.auc, o.adjacency_mode),
    )
}

/// Loads the dataset named by `cfg`, runs `cfg.method` and evaluates.
pub fn run(cfg: &RunConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    if cfg.mode.is_inductive() {
        return Err(Error::Config(format!(
            "mode {} needs graph lists; use the inductive runner",
            cfg.mode.as_str()
        )));
    }
    let method: Method = cfg.method.parse()?;
    if !method.supports(cfg.task) {
        return Err(Error::Config(format!("{method} does not solve {}", cfg.task.as_str())));
    }
    let problem = prepare(cfg)?;
    run_on(&problem, cfg, method)
}

pub fn run_on(problem: &Problem, cfg: &RunConfig, method: Method) -> Result<ExperimentResult> {
    let o = match method {
        Method::ClusterNet => clusternet_outcome(&problem.instance, cfg)?,
        Method::GcnE2e => e2e_outcome(&problem.instance, cfg)?,
        Method::Train(b) => baseline_outcome(&problem.instance, cfg, b)?,
        Method::TwoStage(b) => twostage_outcome(problem, cfg, b)?,
    };
    wrap(problem, cfg, method, o)
}

pub fn run_clusternet(cfg: &RunConfig) -> Result<ExperimentResult> {
    run(&RunConfig {
        method: "clusternet".into(),
        ..cfg.clone()
    })
}

fn clusternet_outcome(inst: &Instance, cfg: &RunConfig) -> Result<Outcome> {
    let mut model = ClusterNet::new(inst.features().cols(), cfg)?;
    let mut warm = WarmStart::new(1);
    let report = train(&mut model, &[inst], cfg, cfg.iters, &mut warm)?;
    let inf = infer(&model, inst, cfg, warm.get(0))?;
    Ok(Outcome {
        solution: inf.solution,
        runtime_train_s: report.runtime_s,
        runtime_forward_s: inf.runtime_s,
        gradient_updates: model.gradient_updates(),
        auc: None,
        adjacency_mode: None,
    })
}

fn e2e_config(cfg: &RunConfig) -> E2eConfig {
    E2eConfig {
        hidden: cfg.hidden,
        lr: cfg.lr,
        iters: cfg.iters,
        dropout: cfg.dropout,
        seed: cfg.seed,
    }
}

/// Rounds a soft decision, scoring pipage trials with `dist`.
fn round(soft: &Tensor, dist: Option<&DistanceTable>, cfg: &RunConfig) -> Result<HardSolution> {
    match dist {
        None => Ok(HardSolution::Partition {
            labels: round_partition(soft),
        }),
        Some(d) => {
            let loss = |s: &[usize]| facility_value(s, d).unwrap_or(f64::INFINITY);
            Ok(HardSolution::Selection {
                nodes: pipage_round(soft.data(), cfg.pipage_trials, cfg.seed, &loss)?,
            })
        }
    }
}

fn e2e_outcome(inst: &Instance, cfg: &RunConfig) -> Result<Outcome> {
    let start = Instant::now();
    let soft = gcn_e2e(inst.adjacency(), inst.features(), &inst.objective(cfg), cfg.k, &e2e_config(cfg))?;
    let dist = match inst.target() {
        Target::Facility { dist, .. } => Some(dist),
        Target::Community { .. } => None,
    };
    let solution = round(&soft, dist, cfg)?;
    Ok(Outcome {
        solution,
        runtime_train_s: start.elapsed().as_secs_f64(),
        runtime_forward_s: 0.0,
        gradient_updates: cfg.iters,
        auc: None,
        adjacency_mode: None,
    })
}

fn baseline_outcome(inst: &Instance, cfg: &RunConfig, name: BaselineName) -> Result<Outcome> {
    let spec = BaselineSpec {
        name,
        k: cfg.k,
        seed: cfg.seed,
    };
    let start = Instant::now();
    let solution = match inst.target() {
        Target::Community { .. } => HardSolution::Partition {
            labels: spec.partition(inst.observed().graph())?,
        },
        Target::Facility { dist, .. } => HardSolution::Selection {
            nodes: spec.selection(dist)?,
        },
    };
    Ok(Outcome::untrained(solution, start.elapsed().as_secs_f64()))
}

/// Default reconstruction: the expected matrix for spectral clustering and
/// the end-to-end GCN on community detection, top-m otherwise.
pub fn default_adjacency(task: Task, name: BaselineName) -> AdjacencyMode {
    match (task, name) {
        (Task::Community, BaselineName::Sc | BaselineName::GcnE2e) => AdjacencyMode::Expected,
        _ => AdjacencyMode::TopM,
    }
}

/// Unobserved edges to add in top-m mode, from the observed count and the
/// held-out fraction.
pub fn estimated_missing_edges(observed_m: usize, fraction_held: f64) -> usize {
    (observed_m as f64 * fraction_held / (1.0 - fraction_held)).round() as usize
}

fn twostage_outcome(problem: &Problem, cfg: &RunConfig, name: BaselineName) -> Result<Outcome> {
    let inst = &problem.instance;
    let mode = cfg.adjacency.unwrap_or_else(|| default_adjacency(cfg.task, name));
    let start = Instant::now();
    let link_cfg = crate::twostage::LinkConfig {
        seed: cfg.seed,
        ..cfg.link.clone()
    };
    let observed = inst.observed().graph();
    let model = train_link_predictor(observed, inst.features(), &link_cfg)?;
    let m_hat = match problem.split {
        Some(_) => estimated_missing_edges(observed.m(), cfg.fraction_held),
        None => 0,
    };
    let pred = predict_adjacency(&model, observed, m_hat, mode)?;
    let runtime_train_s = start.elapsed().as_secs_f64();
    let auc = match &problem.split {
        Some(s) if !s.held_edges.is_empty() => Some(auc(&model, &s.held_edges, problem.full.graph(), cfg.seed)?),
        _ => None,
    };
    let start = Instant::now();
    let solution = solve_on_prediction(&pred, inst.features(), cfg, name)?;
    Ok(Outcome {
        solution,
        runtime_train_s,
        runtime_forward_s: start.elapsed().as_secs_f64(),
        gradient_updates: link_cfg.epochs,
        auc,
        adjacency_mode: Some(mode),
    })
}

/// Runs baseline `name` on a reconstructed graph.
pub fn solve_on_prediction(pred: &PredictedGraph, features: &Tensor, cfg: &RunConfig, name: BaselineName) -> Result<HardSolution> {
    let spec = BaselineSpec {
        name,
        k: cfg.k,
        seed: cfg.seed,
    };
    let need_graph = || {
        pred.graph.as_ref().ok_or_else(|| {
            Error::Config(format!("2stage-{name} on {} needs a discrete graph; use top-m adjacency", cfg.task.as_str()))
        })
    };
    match (cfg.task, name) {
        (Task::Community, BaselineName::Sc) if pred.graph.is_none() => Ok(HardSolution::Partition {
            labels: spectral_clustering_dense(&ModularityMatrix::from_adjacency(&pred.probs)?, cfg.k, cfg.seed)?,
        }),
        (Task::Community, BaselineName::GcnE2e) => {
            let b = ModularityMatrix::from_adjacency(&pred.probs)?;
            let obj = DecisionObjective::Community {
                b: &b,
                relax: cfg.relaxation,
            };
            let soft = gcn_e2e(&pred.normalized(), features, &obj, cfg.k, &e2e_config(cfg))?;
            round(&soft, None, cfg)
        }
        (Task::Facility, BaselineName::GcnE2e) => {
            let dist = all_pairs_bfs(need_graph()?);
            let objective = FacilityObjective::new(&dist)?;
            let obj = DecisionObjective::Facility {
                objective: &objective,
                temp: cfg.smooth_max_temp,
            };
            let soft = gcn_e2e(&pred.normalized(), features, &obj, cfg.k, &e2e_config(cfg))?;
            round(&soft, Some(&dist), cfg)
        }
        (Task::Community, _) => Ok(HardSolution::Partition {
            labels: spec.partition(need_graph()?)?,
        }),
        (Task::Facility, _) => Ok(HardSolution::Selection {
            nodes: spec.selection(&all_pairs_bfs(need_graph()?))?,
        }),
    }
}

/// Runs every method in `methods` on the same prepared problem.
pub fn run_methods(problem: &Problem, cfg: &RunConfig, methods: &[Method]) -> Result<Vec<ExperimentResult>> {
    methods.iter().map(|&m| run_on(problem, cfg, m)).collect()
}
