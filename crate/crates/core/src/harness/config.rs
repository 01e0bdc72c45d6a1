use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decisions::{ModularityRelaxation, Squash, SMOOTH_MAX_TEMP};
use crate::error::{Error, Result};
use crate::twostage::{AdjacencyMode, LinkConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    #[default]
    Community,
    Facility,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Community => "community",
            Task::Facility => "facility",
        }
    }

    /// Whether larger objective values are better.
    pub fn maximize(self) -> bool {
        matches!(self, Task::Community)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    /// Train on observed edges, evaluate on the full graph.
    #[default]
    LearnOpt,
    /// The whole graph is observed.
    OptOnly,
    /// Inductive, no fine-tuning on test graphs.
    Inductive,
    /// Inductive, then fine-tune on each test graph's observed edges.
    Finetune,
    /// Fine-tune from a fresh initialization only.
    FinetuneOnly,
    /// Inductive with a single training graph.
    OneTrain,
}

impl RunMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RunMode::LearnOpt => "learn-opt",
            RunMode::OptOnly => "opt-only",
            RunMode::Inductive => "inductive",
            RunMode::Finetune => "finetune",
            RunMode::FinetuneOnly => "finetune-only",
            RunMode::OneTrain => "one-train",
        }
    }

    pub fn is_inductive(self) -> bool {
        !matches!(self, RunMode::LearnOpt | RunMode::OptOnly)
    }
}

/// Where a graph comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSpec {
    EdgeList {
        path: PathBuf,
        #[serde(default)]
        features: Option<PathBuf>,
    },
    /// LINQS layout; `dir` falls back to `CLUSTERNET_CORA_DIR`.
    Cora {
        #[serde(default)]
        dir: Option<PathBuf>,
    },
    Sbm {
        blocks: Vec<usize>,
        p_in: f64,
        p_out: f64,
        seed: u64,
    },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Sbm {
            blocks: vec![50, 50, 50, 50],
            p_in: 0.2,
            p_out: 0.01,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn name(&self) -> String {
        match self {
            DatasetSpec::EdgeList { path, .. } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "edge-list".into()),
            DatasetSpec::Cora { .. } => "cora".into(),
            DatasetSpec::Sbm { blocks, seed, .. } => {
                format!("sbm-{}-s{seed}", blocks.iter().map(|b| b.to_string()).collect::<Vec<_>>().join("x"))
            }
        }
    }
}

/// Number of k-means updates per training iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KmeansSchedule {
    pub initial: usize,
    pub later: usize,
    pub switch_at: usize,
}

impl KmeansSchedule {
    pub fn fixed(steps: usize) -> Self {
        KmeansSchedule {
            initial: steps,
            later: steps,
            switch_at: 0,
        }
    }

    pub fn at(&self, iteration: usize) -> usize {
        if iteration >= self.switch_at {
            self.later
        } else {
            self.initial
        }
    }
}

impl Default for KmeansSchedule {
    fn default() -> Self {
        KmeansSchedule {
            initial: 1,
            later: 5,
            switch_at: 500,
        }
    }
}

/// Gradient path through the cluster layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterBackward {
    /// One differentiable update from the detached fixed point.
    #[default]
    OneStep,
    /// Implicit differentiation through the fixed point.
    Exact,
}

/// Fallback node features when the dataset has none.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub degree_buckets: usize,
    pub random_dims: usize,
    /// Propagation steps applied to the random columns over the observed
    /// graph.
    pub hops: usize,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            degree_buckets: 16,
            random_dims: 32,
            hops: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub task: Task,
    pub mode: RunMode,
    /// `clusternet`, `gcn-e2e`, `train-<baseline>` or `2stage-<baseline>`.
    pub method: String,
    pub dataset: DatasetSpec,
    pub k: usize,
    /// Defaults to 50 for community detection and 30 for facility location.
    pub beta: Option<f64>,
    pub gamma: f64,
    /// Defaults to `beta`.
    pub eta: Option<f64>,
    pub lr: f64,
    pub iters: usize,
    pub hidden: usize,
    pub embed: usize,
    pub kmeans: KmeansSchedule,
    pub backward: ClusterBackward,
    pub dropout: f64,
    pub seed: u64,
    pub fraction_held: f64,
    pub split_manifest: Option<PathBuf>,
    pub squash: Squash,
    pub relaxation: ModularityRelaxation,
    pub pipage_trials: usize,
    pub smooth_max_temp: f64,
    pub features: FeatureSpec,
    pub link: LinkConfig,
    /// Two-stage reconstruction; default is expected for `sc`, top-m otherwise.
    pub adjacency: Option<AdjacencyMode>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: Task::Community,
            mode: RunMode::LearnOpt,
            method: "clusternet".into(),
            dataset: DatasetSpec::default(),
            k: 5,
            beta: None,
            gamma: 100.0,
            eta: None,
            lr: 0.01,
            iters: 1000,
            hidden: 50,
            embed: 50,
            kmeans: KmeansSchedule::default(),
            backward: ClusterBackward::OneStep,
            dropout: 0.0,
            seed: 0,
            fraction_held: 0.6,
            split_manifest: None,
            squash: Squash::Verbatim,
            relaxation: ModularityRelaxation::Expected,
            pipage_trials: 10,
            smooth_max_temp: SMOOTH_MAX_TEMP,
            features: FeatureSpec::default(),
            link: LinkConfig::default(),
            adjacency: None,
        }
    }
}

impl RunConfig {
    /// Defaults for training across a family of graphs.
    pub fn inductive_defaults() -> Self {
        RunConfig {
            mode: RunMode::Inductive,
            beta: Some(70.0),
            lr: 0.001,
            dropout: 0.2,
            iters: 70,
            kmeans: KmeansSchedule::fixed(10),
            features: FeatureSpec {
                hops: 4,
                ..FeatureSpec::default()
            },
            ..RunConfig::default()
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or(match self.task {
            Task::Community => 50.0,
            Task::Facility => 30.0,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or_else(|| self.beta())
    }

    /// Copy with `beta` and `eta` resolved, as recorded in results.
    pub fn resolved(&self) -> Self {
        RunConfig {
            beta: Some(self.beta()),
            eta: Some(self.eta()),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.k < 1 {
            return bad("k must be at least 1".into());
        }
        if !(self.beta() > 0.0) || !(self.eta() > 0.0) || !(self.gamma > 0.0) {
            return bad("beta, eta and gamma must be positive".into());
        }
        if !(self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.hidden == 0 || self.embed == 0 {
            return bad("hidden and embed must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(self.fraction_held > 0.0 && self.fraction_held < 1.0) {
            return bad(format!("fraction_held must be in (0, 1), got {}", self.fraction_held));
        }
        if self.pipage_trials == 0 {
            return bad("pipage_trials must be positive".into());
        }
        if self.kmeans.initial == 0 || self.kmeans.later == 0 {
            return bad("k-means updates per iteration must be positive".into());
        }
        self.link.validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads TOML or JSON by extension.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}
