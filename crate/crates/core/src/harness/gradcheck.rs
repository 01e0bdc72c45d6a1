use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decisions::{modularity_loss, select_from_clusters, FacilityObjective, ModularityRelaxation, SelectionParams, Squash};
use crate::error::Result;
use crate::graph::{all_pairs_bfs, modularity_matrix, Graph};
use crate::softkmeans::{assignment_var, exact_backward, kmeans_forward, kmeans_plus_plus, one_step, ClusterConfig, ClusterState};
use crate::tensor::check::{chain_check, check_gradients, primitive_suite, relative_error, GradCheck, TapeFn};
use crate::tensor::Tensor;

pub const PRIMITIVE_TOL: f64 = 1e-5;
pub const FIXED_POINT_TOL: f64 = 1e-4;
pub const DECISION_TOL: f64 = 1e-5;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub checks: Vec<GradCheck>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&GradCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn to_table(&self) -> String {
        let mut s = String::from("| check | max rel err | tol | result |\n|---|---|---|---|\n");
        for c in &self.checks {
            let verdict = if c.passed { "pass" } else { "FAIL" };
            let _ = writeln!(s, "| {} | {:.3e} | {:.0e} | {verdict} |", c.name, c.max_rel_err, c.tol);
        }
        s
    }
}

/// Keeps the worst error per check name, in first-seen order.
fn worst(checks: impl IntoIterator<Item = GradCheck>) -> Vec<GradCheck> {
    let mut order = Vec::new();
    let mut by_name: BTreeMap<String, GradCheck> = BTreeMap::new();
    for c in checks {
        match by_name.get_mut(&c.name) {
            Some(w) if w.max_rel_err >= c.max_rel_err || c.max_rel_err.is_nan() && w.max_rel_err.is_nan() => {}
            Some(w) => *w = c,
            None => {
                order.push(c.name.clone());
                by_name.insert(c.name.clone(), c);
            }
        }
    }
    order.into_iter().map(|n| by_name.remove(&n).expect("present")).collect()
}

fn converge(x: &Tensor, init: &Tensor, k: usize, beta: f64) -> Result<ClusterState> {
    kmeans_forward(x, init, &ClusterConfig::new(k, beta).with_tol(1e-14, 20_000))
}

/// `⟨g_μ, μ*(X)⟩ + ⟨g_r, r(X, μ*(X))⟩` with re-convergence warm-started from
/// the unperturbed fixed point.
fn fixed_point_objective(x: &Tensor, warm: &Tensor, beta: f64, g_mu: &Tensor, g_r: &Tensor) -> Result<f64> {
    let s = converge(x, warm, warm.rows(), beta)?;
    Ok(s.centers.hadamard(g_mu)?.sum() + s.assignments.hadamard(g_r)?.sum())
}

/// Exact fixed-point gradient against central differences on one random
/// instance with `n ≤ 20`, `p ≤ 4`, `K ≤ 3`.
pub fn fixed_point_check(seed: u64, tol: f64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let n = rng.random_range(6..=20);
        let p = rng.random_range(2..=4);
        let k = rng.random_range(2..=3);
        let beta = rng.random_range(2.0..6.0);
        let x = Tensor::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
        let init = kmeans_plus_plus(&x, k, rng.random())?;
        let st = converge(&x, &init, k, beta)?;
        if !st.converged || !st.rescued.is_empty() {
            continue;
        }
        let g_mu = Tensor::from_fn(k, p, |_, _| rng.random_range(-1.0..1.0));
        let g_r = Tensor::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
        let ours = match exact_backward(&x, &st, beta, &g_mu, &g_r) {
            Ok(g) => g,
            Err(crate::Error::Singular(_)) => continue,
            Err(e) => return Err(e),
        };
        let h = 1e-5;
        let mut fd = Tensor::zeros(n, p);
        for i in 0..n {
            for j in 0..p {
                let mut xp = x.clone();
                xp.set(i, j, x.get(i, j) + h);
                let plus = fixed_point_objective(&xp, &st.centers, beta, &g_mu, &g_r)?;
                xp.set(i, j, x.get(i, j) - h);
                let minus = fixed_point_objective(&xp, &st.centers, beta, &g_mu, &g_r)?;
                fd.set(i, j, (plus - minus) / (2.0 * h));
            }
        }
        let err = relative_error(&ours, &fd);
        return Ok(GradCheck {
            name: "softkmeans/exact-vs-fd".into(),
            max_rel_err: err,
            tol,
            passed: err <= tol,
        });
    }
}

fn ring_of_cliques() -> Graph {
    let mut e = Vec::new();
    for c in 0..3 {
        let b = 4 * c;
        for i in 0..4 {
            for j in i + 1..4 {
                e.push((b + i, b + j));
            }
        }
        e.push((b + 3, (b + 4) % 12));
    }
    Graph::from_edges(12, &e).expect("valid")
}

/// Decision losses and the cluster layer against central differences.
pub fn decision_checks(seed: u64, tol: f64) -> Result<Vec<GradCheck>> {
    let g = ring_of_cliques();
    let b = modularity_matrix(&g)?;
    let dist = all_pairs_bfs(&g);
    let fac = FacilityObjective::new(&dist)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let logits = Tensor::from_fn(12, 3, |_, _| rng.random_range(-1.0..1.0));
    let emb = Tensor::from_fn(12, 4, |_, _| rng.random_range(-1.0..1.0));
    let xsel = Tensor::from_fn(12, 1, |_, _| rng.random_range(0.1..0.9));
    let centers = kmeans_plus_plus(&emb, 3, seed)?;
    let sel = SelectionParams {
        eta: 5.0,
        gamma: 1.0,
        budget: 3,
        squash: Squash::Shifted,
    };

    let mut out = Vec::new();
    for relax in [ModularityRelaxation::Expected, ModularityRelaxation::Trace] {
        let b = b.clone();
        let f: Box<TapeFn> = Box::new(move |_t, x| modularity_loss(x[0].softmax_rows(1.0), &b, relax));
        let name = format!("decisions/modularity-{}", if relax == ModularityRelaxation::Expected { "expected" } else { "trace" });
        out.push(check_gradients(&name, f.as_ref(), std::slice::from_ref(&logits), 1e-6, tol)?);
    }
    let fac2 = fac.clone();
    let f: Box<TapeFn> = Box::new(move |_t, x| fac2.expected_var(x[0]).map(|e| e.sum()));
    out.push(check_gradients("decisions/facility-expected", f.as_ref(), std::slice::from_ref(&xsel), 1e-6, tol)?);
    let fac2 = fac.clone();
    let f: Box<TapeFn> = Box::new(move |_t, x| fac2.loss(x[0], 5.0));
    out.push(check_gradients("decisions/facility-smooth-max", f.as_ref(), &[xsel], 1e-6, tol)?);
    let f: Box<TapeFn> = Box::new(move |_t, x| {
        let s = select_from_clusters(x[0], x[1], &sel)?;
        Ok(s.b.mul(s.b)?.sum())
    });
    out.push(check_gradients("decisions/selection-mass", f.as_ref(), &[emb.clone(), centers.clone()], 1e-6, tol)?);
    let b2 = b.clone();
    let c2 = centers.clone();
    let f: Box<TapeFn> = Box::new(move |_t, x| {
        let o = one_step(x[0], &c2, 4.0)?;
        modularity_loss(o.assignments, &b2, ModularityRelaxation::Expected)
    });
    out.push(check_gradients("softkmeans/one-step-modularity", f.as_ref(), std::slice::from_ref(&emb), 1e-6, tol)?);
    let f: Box<TapeFn> = Box::new(move |t, x| {
        let r = assignment_var(x[0], x[1], 4.0)?;
        let w = t.constant(Tensor::from_fn(12, 3, |i, j| ((i * 3 + j) as f64).sin()));
        Ok(r.mul(w)?.sum())
    });
    out.push(check_gradients("softkmeans/assignment", f.as_ref(), &[emb, centers], 1e-6, tol)?);
    Ok(out)
}

/// Every suite: tape primitives over `seeds` seeds, a composite chain, the
/// exact fixed-point gradient on `seeds` instances, and the decision losses.
pub fn gradcheck_report(seeds: u64) -> Result<GradcheckReport> {
    let mut prims = Vec::new();
    for s in 0..seeds {
        for mut c in primitive_suite(s, PRIMITIVE_TOL)? {
            c.name = format!("tensor/{}", c.name);
            prims.push(c);
        }
        let mut c = chain_check(s, PRIMITIVE_TOL)?;
        c.name = "tensor/chain".into();
        prims.push(c);
    }
    let mut checks = worst(prims);
    let fixed: Vec<GradCheck> = (0..seeds).map(|s| fixed_point_check(s, FIXED_POINT_TOL)).collect::<Result<_>>()?;
    checks.extend(worst(fixed));
    let mut dec = Vec::new();
    for s in 0..seeds.min(5) {
        dec.extend(decision_checks(s, DECISION_TOL)?);
    }
    checks.extend(worst(dec));
    Ok(GradcheckReport { checks })
}
