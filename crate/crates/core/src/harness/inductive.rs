use serde::{Deserialize, Serialize};

use super::clusternet::{infer, train, ClusterNet, WarmStart};
use super::config::{DatasetSpec, RunConfig, RunMode, Task};
use super::data::{load_dataset, prepare_graph, restrict_for_task, FullGraph, Instance, ObservedGraph, Problem};
use super::run::{finish, run_on, ExperimentResult, Method};
use crate::baselines::BaselineName;
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Training and test graph lists plus what to run on the test graphs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InductiveConfig {
    pub run: RunConfig,
    pub train: Vec<DatasetSpec>,
    pub test: Vec<DatasetSpec>,
    /// Fraction of each test graph's edges hidden at test time.
    pub test_fraction_held: f64,
    /// ClusterNet protocols among inductive, finetune, finetune-only and one-train.
    pub modes: Vec<RunMode>,
    /// Baselines run on each test graph's observed edges.
    pub baselines: Vec<String>,
    /// Fine-tuning steps; defaults to `run.iters`.
    pub finetune_iters: Option<usize>,
}

impl Default for InductiveConfig {
    fn default() -> Self {
        InductiveConfig {
            run: RunConfig::inductive_defaults(),
            train: Vec::new(),
            test: Vec::new(),
            test_fraction_held: 0.6,
            modes: vec![RunMode::Inductive, RunMode::OneTrain, RunMode::Finetune, RunMode::FinetuneOnly],
            baselines: vec!["train-cnm".into(), "train-newman".into(), "train-sc".into()],
            finetune_iters: None,
        }
    }
}

impl InductiveConfig {
    /// `train + test` SBM graphs with consecutive generator seeds.
    pub fn sbm_family(train: usize, test: usize, blocks: &[usize], p_in: f64, p_out: f64, seed: u64) -> Self {
        let spec = |i: usize| DatasetSpec::Sbm {
            blocks: blocks.to_vec(),
            p_in,
            p_out,
            seed: seed + i as u64,
        };
        InductiveConfig {
            train: (0..train).map(spec).collect(),
            test: (train..train + test).map(spec).collect(),
            ..InductiveConfig::default()
        }
    }

    /// Parses TOML; fields of `[run]` that are not given keep the inductive
    /// defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg_err = |e: &dyn std::fmt::Display| Error::Config(e.to_string());
        let user: toml::Table = toml::from_str(text).map_err(|e| cfg_err(&e))?;
        let mut base = toml::Table::try_from(InductiveConfig::default()).map_err(|e| cfg_err(&e))?;
        merge(&mut base, user);
        let cfg: InductiveConfig = base.try_into().map_err(|e: toml::de::Error| cfg_err(&e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.run.validate()?;
        if self.train.is_empty() {
            return Err(Error::Config("inductive runs need at least one training graph".into()));
        }
        if self.test.is_empty() {
            return Err(Error::Config("inductive runs need at least one test graph".into()));
        }
        if !(self.test_fraction_held > 0.0 && self.test_fraction_held < 1.0) {
            return Err(Error::Config(format!(
                "test_fraction_held must be in (0, 1), got {}",
                self.test_fraction_held
            )));
        }
        if let Some(m) = self.modes.iter().find(|m| !m.is_inductive()) {
            return Err(Error::Config(format!("{} is not an inductive mode", m.as_str())));
        }
        for b in &self.baselines {
            let m: Method = b.parse()?;
            if !matches!(m, Method::Train(_)) || !m.supports(self.run.task) {
                return Err(Error::Config(format!("{b} cannot run on {} test graphs", self.run.task.as_str())));
            }
        }
        Ok(())
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Loaded graphs for an inductive run.
pub struct InductiveGraphs {
    pub train: Vec<Instance>,
    pub test: Vec<Problem>,
}

impl InductiveGraphs {
    pub fn load(cfg: &InductiveConfig) -> Result<Self> {
        let run = &cfg.run;
        let train = cfg
            .train
            .iter()
            .map(|spec| {
                let g = restrict_for_task(load_dataset(spec)?, run.task)?;
                let full = FullGraph::new(g, run.task);
                Instance::new(ObservedGraph::whole(&full), run.task, run, run.seed)
            })
            .collect::<Result<Vec<_>>>()?;
        let split_cfg = RunConfig {
            fraction_held: cfg.test_fraction_held,
            ..run.clone()
        };
        let test = cfg
            .test
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let g = load_dataset(spec)?;
                prepare_graph(g, &split_cfg, RunMode::LearnOpt, spec.name(), run.seed.wrapping_add(i as u64))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(train, test)
    }

    pub fn from_parts(train: Vec<Instance>, test: Vec<Problem>) -> Result<Self> {
        let dims: Vec<usize> = train
            .iter()
            .chain(test.iter().map(|p| &p.instance))
            .map(|i| i.features().cols())
            .collect();
        if dims.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::Config(format!("feature dimensions differ across graphs: {dims:?}")));
        }
        Ok(InductiveGraphs { train, test })
    }
}

/// Graphs for tests: a list of graphs used as training instances.
pub fn training_instances(graphs: Vec<Graph>, cfg: &RunConfig) -> Result<Vec<Instance>> {
    graphs
        .into_iter()
        .map(|g| {
            let full = FullGraph::new(restrict_for_task(g, cfg.task)?, cfg.task);
            Instance::new(ObservedGraph::whole(&full), cfg.task, cfg, cfg.seed)
        })
        .collect()
}

fn trained(graphs: &InductiveGraphs, cfg: &RunConfig, count: usize) -> Result<(ClusterNet, f64)> {
    let dim = graphs.train[0].features().cols();
    let mut model = ClusterNet::new(dim, cfg)?;
    let refs: Vec<&Instance> = graphs.train.iter().take(count).collect();
    let mut warm = WarmStart::new(refs.len());
    let report = train(&mut model, &refs, cfg, cfg.iters, &mut warm)?;
    Ok((model, report.runtime_s))
}

/// Runs every requested protocol and baseline; one result per test graph
/// and method.
pub fn run_inductive(cfg: &InductiveConfig) -> Result<Vec<ExperimentResult>> {
    cfg.validate()?;
    let graphs = InductiveGraphs::load(cfg)?;
    run_inductive_on(&graphs, cfg)
}

pub fn run_inductive_on(graphs: &InductiveGraphs, cfg: &InductiveConfig) -> Result<Vec<ExperimentResult>> {
    if graphs.train.is_empty() {
        return Err(Error::Config("inductive runs need at least one training graph".into()));
    }
    let run = &cfg.run;
    let finetune_iters = cfg.finetune_iters.unwrap_or(run.iters);
    let mut results = Vec::new();
    let mut shared: Option<(ClusterNet, f64)> = None;
    for &mode in &cfg.modes {
        let cfg_mode = RunConfig { mode, ..run.clone() };
        let base = match mode {
            RunMode::Inductive | RunMode::Finetune => {
                if shared.is_none() {
                    shared = Some(trained(graphs, run, graphs.train.len())?);
                }
                shared.clone()
            }
            RunMode::OneTrain => Some(trained(graphs, run, 1)?),
            _ => None,
        };
        for (i, p) in graphs.test.iter().enumerate() {
            let (model, train_s) = match (mode, &base) {
                (RunMode::Inductive | RunMode::OneTrain, Some((m, s))) => (m.clone(), *s),
                (RunMode::Finetune, Some((m, s))) => {
                    let mut m = m.clone();
                    m.reset_optimizer(run.lr);
                    let r = train(&mut m, &[&p.instance], run, finetune_iters, &mut WarmStart::new(1))?;
                    (m, s + r.runtime_s)
                }
                (RunMode::FinetuneOnly, _) => {
                    let mut m = ClusterNet::new(p.instance.features().cols(), run)?;
                    let r = train(&mut m, &[&p.instance], run, finetune_iters, &mut WarmStart::new(1))?;
                    (m, r.runtime_s)
                }
                _ => unreachable!("validated modes"),
            };
            let before = model.gradient_updates();
            let inf = infer(&model, &p.instance, run, None)?;
            if model.gradient_updates() != before {
                return Err(Error::invalid("test-time inference changed the parameters"));
            }
            let test_updates = match mode {
                RunMode::Finetune | RunMode::FinetuneOnly => finetune_iters,
                _ => 0,
            };
            results.push(finish(
                p,
                &cfg_mode,
                Method::ClusterNet,
                mode,
                Some(i),
                inf.solution,
                (train_s, inf.runtime_s),
                test_updates,
                (None, None),
            )?);
        }
    }
    for name in &cfg.baselines {
        let method: Method = name.parse()?;
        for (i, p) in graphs.test.iter().enumerate() {
            let cfg_mode = RunConfig {
                mode: RunMode::Inductive,
                ..run.clone()
            };
            let mut r = run_on(p, &cfg_mode, method)?;
            r.graph_index = Some(i);
            results.push(r);
        }
    }
    Ok(results)
}

/// Default baselines for a task.
pub fn default_baselines(task: Task) -> Vec<String> {
    BaselineName::ALL
        .into_iter()
        .filter(|&b| Method::Train(b).supports(task) && b != BaselineName::GcnE2e)
        .map(|b| Method::Train(b).to_string())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> InductiveConfig {
        let mut c = InductiveConfig::sbm_family(2, 2, &[10, 10], 0.6, 0.05, 5);
        c.run.k = 2;
        c.run.iters = 5;
        c.finetune_iters = Some(3);
        c.baselines = vec!["train-cnm".into()];
        c
    }

    #[test]
    fn one_result_per_test_graph_and_method() {
        let c = tiny();
        let rs = run_inductive(&c).unwrap();
        assert_eq!(rs.len(), 2 * (c.modes.len() + 1));
        for r in rs.iter().filter(|r| r.mode == RunMode::Inductive && r.method == "clusternet") {
            assert_eq!(r.gradient_updates, 0);
        }
        let ft = rs.iter().find(|r| r.mode == RunMode::Finetune).unwrap();
        assert_eq!(ft.gradient_updates, 3);
    }

    #[test]
    fn partial_toml_keeps_inductive_defaults() {
        let text = "baselines = [\"train-cnm\"]\n[run]\nk = 4\n[[train]]\nkind = \"sbm\"\nblocks = [5, 5]\np_in = 0.5\np_out = 0.1\nseed = 0\n[[test]]\nkind = \"sbm\"\nblocks = [5, 5]\np_in = 0.5\np_out = 0.1\nseed = 1\n";
        let c = InductiveConfig::from_toml(text).unwrap();
        assert_eq!(c.run.k, 4);
        assert_eq!((c.run.beta(), c.run.lr, c.run.iters), (70.0, 0.001, 70));
        assert_eq!(c.train.len(), 1);
    }

    #[test]
    fn requires_training_graph() {
        let mut c = tiny();
        c.train.clear();
        assert!(matches!(run_inductive(&c), Err(Error::Config(_))));
    }

    #[test]
    fn default_baselines_by_task() {
        assert_eq!(default_baselines(Task::Facility), vec!["train-greedy", "train-gonzalez"]);
        assert_eq!(default_baselines(Task::Community).len(), 3);
    }
}
