//! Central finite-difference gradient checking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Tape, Tensor, Var};
use crate::error::Result;

/// Outcome of one gradient check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub tol: f64,
    pub passed: bool,
}

/// `max |a − n| / max(max |n|, floor)`.
pub fn relative_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    let scale = numeric.max_abs().max(analytic.max_abs()).max(1e-8);
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .fold(0.0_f64, |m, (a, n)| m.max((a - n).abs()))
        / scale
}

/// Central differences of a scalar function of several matrices.
pub fn finite_difference(f: &dyn Fn(&[Tensor]) -> Result<f64>, inputs: &[Tensor], h: f64) -> Result<Vec<Tensor>> {
    let mut work = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for k in 0..inputs.len() {
        let mut g = Tensor::zeros(inputs[k].rows(), inputs[k].cols());
        for idx in 0..inputs[k].len() {
            let orig = work[k].data()[idx];
            work[k].data_mut()[idx] = orig + h;
            let plus = f(&work)?;
            work[k].data_mut()[idx] = orig - h;
            let minus = f(&work)?;
            work[k].data_mut()[idx] = orig;
            g.data_mut()[idx] = (plus - minus) / (2.0 * h);
        }
        out.push(g);
    }
    Ok(out)
}

/// Scalar-valued computation on a fresh tape.
pub type TapeFn = dyn for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>;

/// Compares tape gradients of `f` against central differences.
pub fn check_gradients(name: &str, f: &TapeFn, inputs: &[Tensor], h: f64, tol: f64) -> Result<GradCheck> {
    let tape = Tape::new();
    let leaves: Vec<Var<'_>> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&tape, &leaves)?;
    let grads = loss.backward()?;
    let analytic: Vec<Tensor> = leaves.iter().map(|&l| grads.wrt(l)).collect();
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let leaves: Vec<Var<'_>> = xs.iter().map(|t| tape.constant(t.clone())).collect();
        Ok(f(&tape, &leaves)?.item())
    };
    let numeric = finite_difference(&eval, inputs, h)?;
    let max_rel_err = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| relative_error(a, n))
        .fold(0.0, f64::max);
    Ok(GradCheck {
        name: name.to_string(),
        max_rel_err,
        tol,
        passed: max_rel_err <= tol,
    })
}

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

/// Entries with magnitude in [0.2, 1.5] and random sign; keeps kinks of relu
/// and clamp out of the finite-difference stencil.
fn away_from_zero(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| {
        let m = rng.random_range(0.2..1.5);
        if rng.random::<bool>() {
            m
        } else {
            -m
        }
    })
}

/// Weighted sum `Σ w ∘ y` with fixed random weights, so every output entry
/// contributes a distinct coefficient to the scalar.
fn weighted<'t>(tape: &'t Tape, y: Var<'t>, seed: u64) -> Result<Var<'t>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let (r, c) = y.shape();
    let w = tape.constant(random(&mut rng, r, c, -1.0, 1.0));
    Ok(y.mul(w)?.sum())
}

/// Gradient checks for every tape primitive at one random seed.
pub fn primitive_suite(seed: u64, tol: f64) -> Result<Vec<GradCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-6;
    let a54 = random(&mut rng, 5, 4, -1.0, 1.0);
    let b43 = random(&mut rng, 4, 3, -1.0, 1.0);
    let c54 = random(&mut rng, 5, 4, -1.0, 1.0);
    let pos54 = random(&mut rng, 5, 4, 0.5, 2.0);
    let row14 = random(&mut rng, 1, 4, -1.0, 1.0);
    let col51 = random(&mut rng, 5, 1, -1.0, 1.0);
    let kinked = away_from_zero(&mut rng, 5, 4);
    let b34 = random(&mut rng, 3, 4, -1.0, 1.0);
    let s = seed;

    type Case = (&'static str, Box<TapeFn>, Vec<Tensor>);
    let cases: Vec<Case> = vec![
        ("matmul", Box::new(move |t, x| weighted(t, x[0].matmul(x[1])?, s)), vec![a54.clone(), b43.clone()]),
        ("add", Box::new(move |t, x| weighted(t, x[0].add(x[1])?, s)), vec![a54.clone(), c54.clone()]),
        ("sub", Box::new(move |t, x| weighted(t, x[0].sub(x[1])?, s)), vec![a54.clone(), c54.clone()]),
        ("mul", Box::new(move |t, x| weighted(t, x[0].mul(x[1])?, s)), vec![a54.clone(), c54.clone()]),
        ("scale", Box::new(move |t, x| weighted(t, x[0].scale(-1.7), s)), vec![a54.clone()]),
        ("add_row", Box::new(move |t, x| weighted(t, x[0].add_row(x[1])?, s)), vec![a54.clone(), row14.clone()]),
        ("scale_rows", Box::new(move |t, x| weighted(t, x[0].scale_rows(x[1])?, s)), vec![a54.clone(), col51.clone()]),
        ("row_sum", Box::new(move |t, x| weighted(t, x[0].row_sum(), s)), vec![a54.clone()]),
        ("col_sum", Box::new(move |t, x| weighted(t, x[0].col_sum(), s)), vec![a54.clone()]),
        ("sigmoid", Box::new(move |t, x| weighted(t, x[0].scale(3.0).sigmoid(), s)), vec![a54.clone()]),
        ("exp", Box::new(move |t, x| weighted(t, x[0].exp(), s)), vec![a54.clone()]),
        ("log", Box::new(move |t, x| weighted(t, x[0].log(), s)), vec![pos54.clone()]),
        ("recip", Box::new(move |t, x| weighted(t, x[0].recip(), s)), vec![pos54.clone()]),
        ("relu", Box::new(move |t, x| weighted(t, x[0].relu(), s)), vec![kinked.clone()]),
        ("log_sigmoid", Box::new(move |t, x| weighted(t, x[0].scale(4.0).log_sigmoid(), s)), vec![a54.clone()]),
        ("softmax_rows", Box::new(move |t, x| weighted(t, x[0].softmax_rows(2.5), s)), vec![a54.clone()]),
        ("softmin_rows", Box::new(move |t, x| weighted(t, x[0].softmin_rows(7.0), s)), vec![a54.clone()]),
        ("normalize_rows", Box::new(move |t, x| weighted(t, x[0].normalize_rows(1e-12), s)), vec![a54.clone()]),
        (
            "cosine_similarity",
            Box::new(move |t, x| weighted(t, x[0].cosine_similarity(x[1], 1e-12)?, s)),
            vec![a54.clone(), b34.clone()],
        ),
        ("dropout", Box::new(move |t, x| weighted(t, x[0].dropout(0.3, 11), s)), vec![a54.clone()]),
        ("concat_cols", Box::new(move |t, x| weighted(t, x[0].concat_cols(x[1])?, s)), vec![a54.clone(), col51.clone()]),
        ("transpose", Box::new(move |t, x| weighted(t, x[0].transpose(), s)), vec![a54.clone()]),
        (
            "gather_rows",
            Box::new(move |t, x| weighted(t, x[0].gather_rows(&[4, 0, 4, 2, 1, 1])?, s)),
            vec![a54.clone()],
        ),
        ("clamp", Box::new(move |t, x| weighted(t, x[0].clamp(-0.1, 0.1), s)), vec![kinked.clone()]),
        ("sum", Box::new(move |_t, x| Ok(x[0].mul(x[0])?.sum())), vec![a54.clone()]),
    ];
    cases
        .into_iter()
        .map(|(name, f, inputs)| check_gradients(name, f.as_ref(), &inputs, h, tol))
        .collect()
}

/// A three-op chain `sum(sigmoid(A·B) ∘ exp(C))` for end-to-end checks.
pub fn chain_check(seed: u64, tol: f64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random(&mut rng, 3, 4, -1.0, 1.0);
    let b = random(&mut rng, 4, 2, -1.0, 1.0);
    let c = random(&mut rng, 3, 2, -1.0, 1.0);
    check_gradients(
        "chain",
        &|_t, x| Ok(x[0].matmul(x[1])?.sigmoid().mul(x[2].exp())?.sum()),
        &[a, b, c],
        1e-6,
        tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitives_pass_at_one_seed() {
        for r in primitive_suite(3, 1e-5).unwrap() {
            assert!(r.passed, "{} rel err {}", r.name, r.max_rel_err);
        }
    }

    #[test]
    fn wrong_backward_rule_is_detected() {
        // exp with a sign-flipped backward rule
        let bad: Box<TapeFn> = Box::new(|tape, x| {
            let v = x[0].value().map(f64::exp);
            let y = tape.custom(
                &[x[0]],
                v.clone(),
                Box::new(move |g| vec![g.hadamard(&v).unwrap().scale(-1.0)]),
            );
            Ok(y.sum())
        });
        let r = check_gradients("bad_exp", bad.as_ref(), &[Tensor::filled(2, 2, 0.3)], 1e-6, 1e-5).unwrap();
        assert!(!r.passed);
    }
}
