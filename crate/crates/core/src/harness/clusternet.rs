use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ClusterBackward, RunConfig};
use super::data::{Instance, Target};
use crate::decisions::{facility_value, pipage_round, round_partition, select_from_clusters, HardSolution, SelectionParams};
use crate::error::{Error, Result};
use crate::gcn::{gcn_forward, GcnParams, GcnVars, Mode};
use crate::softkmeans::{exact_layer, kmeans_forward, kmeans_plus_plus, one_step, ClusterConfig, ClusterOutput};
use crate::tensor::{Adam, Tape, Tensor, Var};

/// GCN weights plus the optimizer state that carries across calls to
/// [`train`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClusterNet {
    pub params: GcnParams,
    adam: Adam,
    updates: usize,
}

impl ClusterNet {
    pub fn new(input_dim: usize, cfg: &RunConfig) -> Result<Self> {
        let params = GcnParams::init(input_dim, cfg.hidden, cfg.embed, cfg.dropout, cfg.seed)?;
        Ok(ClusterNet {
            params,
            adam: Adam::new(cfg.lr),
            updates: 0,
        })
    }

    /// Optimizer steps taken so far.
    pub fn gradient_updates(&self) -> usize {
        self.updates
    }

    /// Fresh optimizer state with learning rate `lr`; the weights are kept.
    pub fn reset_optimizer(&mut self, lr: f64) {
        self.adam = Adam::new(lr);
    }
}

/// Cluster centers carried between iterations, one slot per instance.
#[derive(Clone, Debug, Default)]
pub struct WarmStart {
    centers: Vec<Option<Tensor>>,
}

impl WarmStart {
    pub fn new(instances: usize) -> Self {
        WarmStart {
            centers: vec![None; instances],
        }
    }

    pub fn get(&self, i: usize) -> Option<&Tensor> {
        self.centers.get(i).and_then(|c| c.as_ref())
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub iterations: usize,
    pub gradient_updates: usize,
    /// Summed decision loss over instances, per iteration.
    pub losses: Vec<f64>,
    pub runtime_s: f64,
}

/// Soft decision and its rounding.
#[derive(Clone, Debug)]
pub struct Inference {
    pub soft: Tensor,
    pub centers: Tensor,
    pub solution: HardSolution,
    pub runtime_s: f64,
}

fn initial_centers(z: &Tensor, k: usize, warm: Option<&Tensor>, seed: u64) -> Result<Tensor> {
    match warm {
        Some(c) if c.shape() == (k, z.cols()) => Ok(c.clone()),
        _ => kmeans_plus_plus(z, k, seed),
    }
}

fn selection_params(cfg: &RunConfig) -> SelectionParams {
    SelectionParams {
        eta: cfg.eta(),
        gamma: cfg.gamma,
        budget: cfg.k,
        squash: cfg.squash,
    }
}

/// Embeddings, cluster layer and soft decision on one instance. Returns the
/// soft decision and the forward fixed point.
fn forward<'t>(
    tape: &'t Tape,
    w: &GcnVars<'t>,
    inst: &Instance,
    cfg: &RunConfig,
    mode: Mode,
    kmeans: &ClusterConfig,
    warm: Option<&Tensor>,
    backward: ClusterBackward,
) -> Result<(Var<'t>, Tensor)> {
    let adj = tape.constant(inst.adjacency().clone());
    let feats = tape.constant(inst.features().clone());
    let z = gcn_forward(adj, feats, w, mode)?;
    let zv = z.value();
    if !zv.is_finite() {
        return Err(Error::NonFinite("gcn embeddings".into()));
    }
    let init = initial_centers(&zv, cfg.k, warm, cfg.seed)?;
    let state = kmeans_forward(&zv, &init, kmeans)?;
    let ClusterOutput { centers, assignments } = match backward {
        ClusterBackward::OneStep => one_step(z, &state.centers, kmeans.beta)?,
        ClusterBackward::Exact => exact_layer(z, &state, kmeans.beta)?,
    };
    let soft = match inst.target() {
        Target::Community { .. } => assignments,
        Target::Facility { .. } => select_from_clusters(z, centers, &selection_params(cfg))?.x,
    };
    Ok((soft, state.centers))
}

/// Runs `iters` optimizer steps on the summed decision loss of `instances`.
pub fn train(
    model: &mut ClusterNet,
    instances: &[&Instance],
    cfg: &RunConfig,
    iters: usize,
    warm: &mut WarmStart,
) -> Result<TrainReport> {
    if instances.is_empty() {
        return Err(Error::invalid("no training instances"));
    }
    if warm.centers.len() != instances.len() {
        *warm = WarmStart::new(instances.len());
    }
    let start = Instant::now();
    let mut losses = Vec::with_capacity(iters);
    for it in 0..iters {
        let kmeans = ClusterConfig::new(cfg.k, cfg.beta()).fixed_steps(cfg.kmeans.at(it));
        let tape = Tape::new();
        let w = model.params.leaves(&tape);
        let mut total: Option<Var<'_>> = None;
        for (i, inst) in instances.iter().enumerate() {
            let mode = Mode::Train {
                seed: cfg.seed ^ ((model.updates as u64) << 16) ^ i as u64,
            };
            let (soft, centers) = forward(&tape, &w, inst, cfg, mode, &kmeans, warm.get(i), cfg.backward)?;
            warm.centers[i] = Some(centers);
            let loss = inst.objective(cfg).loss(soft)?;
            total = Some(match total {
                Some(t) => t.add(loss)?,
                None => loss,
            });
        }
        let total = total.expect("non-empty");
        let value = total.item();
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("decision loss at iteration {it}")));
        }
        let grads = total.backward()?;
        let g = vec![grads.wrt(w.w1), grads.wrt(w.w2)];
        if g.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite(format!("gradient at iteration {it}")));
        }
        let mut ts = model.params.tensors();
        model.adam.step(&mut ts, &g)?;
        model.params.set_tensors(ts)?;
        model.updates += 1;
        losses.push(value);
        log::debug!("iteration {it}: loss {value:.6}");
    }
    Ok(TrainReport {
        iterations: iters,
        gradient_updates: iters,
        losses,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

/// Forward pass with k-means run to convergence, then rounding. Pipage
/// trials are scored on the instance's observed distances.
pub fn infer(model: &ClusterNet, inst: &Instance, cfg: &RunConfig, warm: Option<&Tensor>) -> Result<Inference> {
    let start = Instant::now();
    let tape = Tape::new();
    let w = model.params.leaves(&tape);
    let kmeans = ClusterConfig::new(cfg.k, cfg.beta());
    let (soft, centers) = forward(&tape, &w, inst, cfg, Mode::Eval, &kmeans, warm, ClusterBackward::OneStep)?;
    let soft = soft.value().as_ref().clone();
    let solution = match inst.target() {
        Target::Community { .. } => HardSolution::Partition {
            labels: round_partition(&soft),
        },
        Target::Facility { dist, .. } => {
            let loss = |s: &[usize]| facility_value(s, dist).unwrap_or(f64::INFINITY);
            HardSolution::Selection {
                nodes: pipage_round(soft.data(), cfg.pipage_trials, cfg.seed, &loss)?,
            }
        }
    };
    Ok(Inference {
        soft,
        centers,
        solution,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{DatasetSpec, RunMode, Task};
    use crate::harness::data::prepare;

    fn small(task: Task) -> RunConfig {
        RunConfig {
            task,
            mode: RunMode::OptOnly,
            k: 2,
            iters: 30,
            dataset: DatasetSpec::Sbm {
                blocks: vec![12, 12],
                p_in: 0.5,
                p_out: 0.02,
                seed: 3,
            },
            ..RunConfig::default()
        }
    }

    #[test]
    fn training_is_deterministic_and_counts_updates() {
        let cfg = small(Task::Community);
        let p = prepare(&cfg).unwrap();
        let run = || {
            let mut m = ClusterNet::new(p.instance.features().cols(), &cfg).unwrap();
            let mut warm = WarmStart::new(1);
            let r = train(&mut m, &[&p.instance], &cfg, cfg.iters, &mut warm).unwrap();
            (m, r)
        };
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(a.params, b.params);
        assert_eq!(ra.losses, rb.losses);
        assert_eq!(a.gradient_updates(), 30);
    }

    #[test]
    fn community_training_lowers_loss() {
        let cfg = small(Task::Community);
        let p = prepare(&cfg).unwrap();
        let mut m = ClusterNet::new(p.instance.features().cols(), &cfg).unwrap();
        let mut warm = WarmStart::new(1);
        let r = train(&mut m, &[&p.instance], &cfg, cfg.iters, &mut warm).unwrap();
        assert!(r.losses.last().unwrap() < r.losses.first().unwrap());
        let inf = infer(&m, &p.instance, &cfg, warm.get(0)).unwrap();
        assert!(p.full.evaluate(&inf.solution).unwrap() > 0.2);
    }

    #[test]
    fn facility_inference_respects_budget() {
        let cfg = small(Task::Facility);
        let p = prepare(&cfg).unwrap();
        let mut m = ClusterNet::new(p.instance.features().cols(), &cfg).unwrap();
        let mut warm = WarmStart::new(1);
        train(&mut m, &[&p.instance], &cfg, 10, &mut warm).unwrap();
        let inf = infer(&m, &p.instance, &cfg, warm.get(0)).unwrap();
        assert!(inf.solution.size() <= cfg.k);
        assert!(p.full.evaluate(&inf.solution).unwrap().is_finite());
    }

    #[test]
    fn exact_backward_trains() {
        let cfg = RunConfig {
            backward: ClusterBackward::Exact,
            kmeans: crate::harness::config::KmeansSchedule::fixed(30),
            ..small(Task::Community)
        };
        let p = prepare(&cfg).unwrap();
        let mut m = ClusterNet::new(p.instance.features().cols(), &cfg).unwrap();
        let mut warm = WarmStart::new(1);
        let r = train(&mut m, &[&p.instance], &cfg, 5, &mut warm).unwrap();
        assert!(r.losses.iter().all(|l| l.is_finite()));
    }
}
