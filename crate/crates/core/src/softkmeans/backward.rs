use nalgebra::DMatrix;

use super::{soft_assign, ClusterState, COSINE_EPS};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Centers and assignments produced on a tape.
#[derive(Clone, Copy, Debug)]
pub struct ClusterOutput<'t> {
    pub centers: Var<'t>,
    pub assignments: Var<'t>,
}

/// `−cos(x_j, μ_k)` on the tape.
pub fn distance_var<'t>(x: Var<'t>, mu: Var<'t>) -> Result<Var<'t>> {
    Ok(x.cosine_similarity(mu, COSINE_EPS)?.scale(-1.0))
}

pub fn assignment_var<'t>(x: Var<'t>, mu: Var<'t>, beta: f64) -> Result<Var<'t>> {
    Ok(distance_var(x, mu)?.softmin_rows(beta))
}

/// `μ_k = Σ_j r_jk x_j / Σ_j r_jk` on the tape.
pub fn update_var<'t>(x: Var<'t>, r: Var<'t>) -> Result<Var<'t>> {
    let weighted = r.transpose().matmul(x)?;
    let inv_mass = r.col_sum().transpose().recip();
    weighted.scale_rows(inv_mass)
}

/// One differentiable update from detached `centers`. Gradients flow into
/// `x` only, which amounts to taking `∂f/∂μ ≈ I` at the fixed point.
pub fn one_step<'t>(x: Var<'t>, centers: &Tensor, beta: f64) -> Result<ClusterOutput<'t>> {
    let mu0 = x.tape().constant(centers.clone());
    let r0 = assignment_var(x, mu0, beta)?;
    let mu = update_var(x, r0)?;
    let r = assignment_var(x, mu, beta)?;
    Ok(ClusterOutput {
        centers: mu,
        assignments: r,
    })
}

/// Quantities shared by both closed-form Jacobians at a fixed point.
struct Linearization {
    n: usize,
    k: usize,
    p: usize,
    beta: f64,
    x: Tensor,
    xhat: Tensor,
    xnorm: Vec<f64>,
    muhat: Tensor,
    munorm: Vec<f64>,
    cos: Tensor,
    r: Tensor,
    mass: Vec<f64>,
    /// `T_i = C_i / R_i`, one update from the given centers.
    t: Tensor,
}

fn row_norms(t: &Tensor) -> Vec<f64> {
    (0..t.rows())
        .map(|i| t.row(i).iter().map(|v| v * v).sum::<f64>().sqrt().max(COSINE_EPS))
        .collect()
}

impl Linearization {
    fn new(x: &Tensor, centers: &Tensor, beta: f64) -> Result<Self> {
        if x.cols() != centers.cols() {
            return Err(Error::shape("fixed_point", x.shape(), centers.shape()));
        }
        let (n, p, k) = (x.rows(), x.cols(), centers.rows());
        let xhat = x.normalize_rows(COSINE_EPS);
        let muhat = centers.normalize_rows(COSINE_EPS);
        let cos = xhat.matmul_t(&muhat)?;
        let r = soft_assign(x, centers, beta)?;
        let mass = r.col_sums();
        if let Some(i) = mass.iter().position(|&m| m < super::EMPTY_MASS) {
            return Err(Error::Singular(format!("cluster {i} has no mass")));
        }
        let mut t = r.t_matmul(x)?;
        for (i, &m) in mass.iter().enumerate() {
            t.row_mut(i).iter_mut().for_each(|v| *v /= m);
        }
        Ok(Linearization {
            n,
            k,
            p,
            beta,
            x: x.clone(),
            xhat,
            xnorm: row_norms(x),
            muhat,
            munorm: row_norms(centers),
            cos,
            r,
            mass,
            t,
        })
    }

    /// `∂T/∂μ` as a dense (Kp)×(Kp) matrix, row `(i, a)`, column `(k, b)`.
    fn dt_dmu(&self) -> Tensor {
        let (n, kk, p) = (self.n, self.k, self.p);
        let mut m = Tensor::zeros(kk * p, kk * p);
        let mut w = vec![0.0; p];
        let mut diff = vec![0.0; p];
        for j in 0..n {
            let xj = self.x.row(j);
            for k in 0..kk {
                let c = self.cos.get(j, k);
                let inv_b = 1.0 / self.munorm[k];
                for (b, wb) in w.iter_mut().enumerate() {
                    *wb = (self.xhat.get(j, b) - c * self.muhat.get(k, b)) * inv_b;
                }
                let rk = self.r.get(j, k);
                for i in 0..kk {
                    let ri = self.r.get(j, i);
                    let jac = if i == k { ri * (1.0 - ri) } else { -ri * rk };
                    if jac == 0.0 {
                        continue;
                    }
                    let coef = self.beta * jac / self.mass[i];
                    for (a, d) in diff.iter_mut().enumerate() {
                        *d = coef * (xj[a] - self.t.get(i, a));
                    }
                    for (a, &d) in diff.iter().enumerate() {
                        let row = m.row_mut(i * p + a);
                        for (b, &wb) in w.iter().enumerate() {
                            row[k * p + b] += d * wb;
                        }
                    }
                }
            }
        }
        m
    }

    /// Vector-Jacobian product `vᵀ ∂T/∂X` for `v` of shape K×p.
    fn vjp_x(&self, v: &Tensor) -> Tensor {
        let (n, kk, p) = (self.n, self.k, self.p);
        let mut g = Tensor::zeros(n, p);
        let mut s = vec![0.0; kk];
        for j in 0..n {
            let xj = self.x.row(j);
            let mut rs = 0.0;
            for i in 0..kk {
                let dot: f64 = (0..p).map(|a| (xj[a] - self.t.get(i, a)) * v.get(i, a)).sum();
                s[i] = dot / self.mass[i];
                rs += s[i] * self.r.get(j, i);
            }
            let inv_a = 1.0 / self.xnorm[j];
            let gj = g.row_mut(j);
            for i in 0..kk {
                let rji = self.r.get(j, i);
                let direct = rji / self.mass[i];
                let tk = self.beta * rji * (s[i] - rs);
                let c = self.cos.get(j, i);
                for a in 0..p {
                    let u = (self.muhat.get(i, a) - c * self.xhat.get(j, a)) * inv_a;
                    gj[a] += direct * v.get(i, a) + tk * u;
                }
            }
        }
        g
    }
}

/// `∂f/∂μ = I − ∂T/∂μ` for the fixed-point map `f(μ, X) = μ − T(μ, X)`,
/// evaluated at `centers`. Row/column index `(k, a)` maps to `k·p + a`.
pub fn fixed_point_jacobian(x: &Tensor, centers: &Tensor, beta: f64) -> Result<Tensor> {
    let lin = Linearization::new(x, centers, beta)?;
    let dim = lin.k * lin.p;
    let mut j = lin.dt_dmu().scale(-1.0);
    for d in 0..dim {
        j.set(d, d, j.get(d, d) + 1.0);
    }
    Ok(j)
}

/// Centers as a differentiable function of `x` at the converged state, with
/// the backward rule `∂μ/∂X = [∂f/∂μ]⁻¹ ∂T/∂X`. Assignments are recomputed
/// from those centers on the tape.
pub fn exact_layer<'t>(x: Var<'t>, state: &ClusterState, beta: f64) -> Result<ClusterOutput<'t>> {
    let xv = x.value();
    let lin = Linearization::new(&xv, &state.centers, beta)?;
    let dim = lin.k * lin.p;
    let jac = fixed_point_jacobian(&xv, &state.centers, beta)?;
    // transpose solve: v = [∂f/∂μ]^{-T} g
    let jt = DMatrix::from_row_slice(dim, dim, jac.transpose().data());
    let lu = jt.lu();
    let diag: Vec<f64> = (0..dim).map(|d| lu.u()[(d, d)].abs()).collect();
    let top = diag.iter().cloned().fold(0.0, f64::max);
    let low = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(low > 1e-12 * top.max(1.0)) {
        return Err(Error::Singular(
            "fixed-point Jacobian is singular; use the one-step approximate backward".into(),
        ));
    }
    let (k, p) = (lin.k, lin.p);
    let backward = Box::new(move |g: &Tensor| {
        let rhs = DMatrix::from_row_slice(dim, 1, g.data());
        let v = match lu.solve(&rhs) {
            Some(v) => Tensor::from_vec(k, p, v.as_slice().to_vec()).expect("K×p"),
            None => Tensor::filled(k, p, f64::NAN),
        };
        vec![lin.vjp_x(&v)]
    });
    let centers = x.tape().custom(&[x], state.centers.clone(), backward);
    let assignments = assignment_var(x, centers, beta)?;
    Ok(ClusterOutput { centers, assignments })
}

fn pull_back<'t>(tape: &'t Tape, out: ClusterOutput<'t>, g_mu: &Tensor, g_r: &Tensor) -> Result<Var<'t>> {
    let a = out.centers.mul(tape.constant(g_mu.clone()))?.sum();
    let b = out.assignments.mul(tape.constant(g_r.clone()))?.sum();
    a.add(b)
}

/// Gradient wrt `x` of `⟨g_mu, μ⟩ + ⟨g_r, r⟩` through one detached update.
pub fn approx_backward(x: &Tensor, state: &ClusterState, beta: f64, g_mu: &Tensor, g_r: &Tensor) -> Result<Tensor> {
    let tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let out = one_step(xv, &state.centers, beta)?;
    let grads = pull_back(&tape, out, g_mu, g_r)?.backward()?;
    Ok(grads.wrt(xv))
}

/// Gradient wrt `x` of `⟨g_mu, μ⟩ + ⟨g_r, r⟩` through the implicit function
/// theorem at the fixed point.
pub fn exact_backward(x: &Tensor, state: &ClusterState, beta: f64, g_mu: &Tensor, g_r: &Tensor) -> Result<Tensor> {
    let tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let out = exact_layer(xv, state, beta)?;
    let grads = pull_back(&tape, out, g_mu, g_r)?.backward()?;
    Ok(grads.wrt(xv))
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::super::{kmeans_forward, kmeans_plus_plus, ClusterConfig};
    use super::*;
    use crate::tensor::check::relative_error;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn converge(x: &Tensor, init: &Tensor, k: usize, beta: f64) -> ClusterState {
        let cfg = ClusterConfig::new(k, beta).with_tol(1e-14, 20_000);
        kmeans_forward(x, init, &cfg).unwrap()
    }

    /// Central differences of `⟨g, μ(X)⟩` with warm-started re-convergence.
    fn fd_fixed_point(x: &Tensor, st: &ClusterState, beta: f64, g: &Tensor, h: f64) -> Tensor {
        let k = st.k();
        let f = |xp: &Tensor| {
            let s = converge(xp, &st.centers, k, beta);
            s.centers.hadamard(g).unwrap().sum()
        };
        Tensor::from_fn(x.rows(), x.cols(), |i, j| {
            let mut xp = x.clone();
            xp.set(i, j, x.get(i, j) + h);
            let plus = f(&xp);
            xp.set(i, j, x.get(i, j) - h);
            plus.mul_add(1.0, -f(&xp)) / (2.0 * h)
        })
    }

    #[test]
    fn jacobian_matches_finite_differences_of_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&mut rng, 8, 3);
        let mu = random(&mut rng, 2, 3);
        let beta = 3.0;
        let t_of = |m: &Tensor| {
            let tape = Tape::new();
            let xv = tape.constant(x.clone());
            let r = assignment_var(xv, tape.constant(m.clone()), beta).unwrap();
            update_var(xv, r).unwrap().value().as_ref().clone()
        };
        let dt = Linearization::new(&x, &mu, beta).unwrap().dt_dmu();
        let h = 1e-6;
        for col in 0..6 {
            let (mut a, mut b) = (mu.clone(), mu.clone());
            a.data_mut()[col] += h;
            b.data_mut()[col] -= h;
            let fd = t_of(&a).sub(&t_of(&b)).unwrap().scale(0.5 / h);
            for row in 0..6 {
                assert!((dt.get(row, col) - fd.data()[row]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn update_vjp_matches_tape() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random(&mut rng, 7, 3);
        let mu = random(&mut rng, 3, 3);
        let v = random(&mut rng, 3, 3);
        let beta = 4.0;
        let tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let r = assignment_var(xv, tape.constant(mu.clone()), beta).unwrap();
        let t = update_var(xv, r).unwrap();
        let g = t.mul(tape.constant(v.clone())).unwrap().sum().backward().unwrap().wrt(xv);
        let ours = Linearization::new(&x, &mu, beta).unwrap().vjp_x(&v);
        assert!(relative_error(&ours, &g) < 1e-12);
    }

    #[test]
    fn single_cluster_gradient_is_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&mut rng, 6, 3);
        let st = converge(&x, &kmeans_plus_plus(&x, 1, 0).unwrap(), 1, 10.0);
        let g = random(&mut rng, 1, 3);
        let zero_r = Tensor::zeros(6, 1);
        let want = Tensor::from_fn(6, 3, |_, j| g.get(0, j) / 6.0);
        for grad in [
            exact_backward(&x, &st, 10.0, &g, &zero_r).unwrap(),
            approx_backward(&x, &st, 10.0, &g, &zero_r).unwrap(),
        ] {
            assert!(grad.sub(&want).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn zero_upstream_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&mut rng, 6, 2);
        let st = converge(&x, &kmeans_plus_plus(&x, 2, 0).unwrap(), 2, 5.0);
        let g = approx_backward(&x, &st, 5.0, &Tensor::zeros(2, 2), &Tensor::zeros(6, 2)).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn exact_matches_fixed_point_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random(&mut rng, 10, 3);
        let beta = 4.0;
        let st = converge(&x, &kmeans_plus_plus(&x, 2, 3).unwrap(), 2, beta);
        let g = random(&mut rng, 2, 3);
        let ours = exact_backward(&x, &st, beta, &g, &Tensor::zeros(10, 2)).unwrap();
        let fd = fd_fixed_point(&x, &st, beta, &g, 1e-5);
        let err = relative_error(&ours, &fd);
        assert!(err < 1e-4, "rel err {err}");
    }

    #[test]
    fn exact_matches_long_unroll() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&mut rng, 9, 3);
        let beta = 3.0;
        let st = converge(&x, &kmeans_plus_plus(&x, 2, 1).unwrap(), 2, beta);
        let g = random(&mut rng, 2, 3);
        let gr = random(&mut rng, 9, 2);
        let tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let mut mu = tape.constant(st.centers.clone());
        for _ in 0..400 {
            let r = assignment_var(xv, mu, beta).unwrap();
            mu = update_var(xv, r).unwrap();
        }
        let r = assignment_var(xv, mu, beta).unwrap();
        let out = ClusterOutput { centers: mu, assignments: r };
        let unrolled = pull_back(&tape, out, &g, &gr).unwrap().backward().unwrap().wrt(xv);
        let exact = exact_backward(&x, &st, beta, &g, &gr).unwrap();
        assert!(relative_error(&exact, &unrolled) < 1e-8);
    }

    #[test]
    fn mirror_symmetry_is_exact() {
        // points mirrored through the first axis, centers mirrored likewise
        let half = [[1.0, 0.3], [0.8, 0.5], [0.9, 0.1]];
        let mut rows = Vec::new();
        for p in half {
            rows.push(vec![p[0], p[1]]);
        }
        for p in half {
            rows.push(vec![-p[0], p[1]]);
        }
        let x = Tensor::from_rows(&rows).unwrap();
        let init = Tensor::from_rows(&[vec![1.0, 0.3], vec![-1.0, 0.3]]).unwrap();
        let st = converge(&x, &init, 2, 5.0);
        let g = Tensor::from_rows(&[vec![0.7, -0.2], vec![-0.7, -0.2]]).unwrap();
        let grad = exact_backward(&x, &st, 5.0, &g, &Tensor::zeros(6, 2)).unwrap();
        for j in 0..3 {
            assert!((grad.get(j, 0) + grad.get(j + 3, 0)).abs() < 1e-12);
            assert!((grad.get(j, 1) - grad.get(j + 3, 1)).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_cluster_is_singular() {
        let x = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.9, 0.1]]).unwrap();
        let st = ClusterState {
            centers: Tensor::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap(),
            assignments: Tensor::zeros(2, 2),
            iterations: 0,
            converged: true,
            rescued: vec![],
        };
        let tape = Tape::new();
        let xv = tape.leaf(x);
        assert!(matches!(exact_layer(xv, &st, 500.0), Err(Error::Singular(_))));
    }
}
