use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const INTEGRAL_EPS: f64 = 1e-9;

/// Row-wise argmax; ties go to the lowest index.
pub fn round_partition(r: &Tensor) -> Vec<usize> {
    (0..r.rows())
        .map(|j| {
            let row = r.row(j);
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

fn is_fractional(v: f64) -> bool {
    v > INTEGRAL_EPS && v < 1.0 - INTEGRAL_EPS
}

/// One randomized pipage pass. Fractional coordinates are paired in index
/// order; each step moves mass between the pair so one becomes integral,
/// with direction probabilities that keep every marginal unchanged. A
/// leftover fractional coordinate is rounded to nearest, so the result has
/// `round(Σx)` ones.
pub fn pipage_once(x: &[f64], rng: &mut impl Rng) -> Vec<usize> {
    let mut y = x.to_vec();
    let mut carry: Option<usize> = None;
    for j in 0..y.len() {
        if !is_fractional(y[j]) {
            continue;
        }
        let Some(i) = carry else {
            carry = Some(j);
            continue;
        };
        let up = (1.0 - y[i]).min(y[j]);
        let down = y[i].min(1.0 - y[j]);
        if rng.random::<f64>() * (up + down) < down {
            y[i] += up;
            y[j] -= up;
        } else {
            y[i] -= down;
            y[j] += down;
        }
        carry = [i, j].into_iter().find(|&c| is_fractional(y[c]));
    }
    if let Some(i) = carry {
        y[i] = if y[i] >= 0.5 { 1.0 } else { 0.0 };
    }
    (0..y.len()).filter(|&j| y[j] > 0.5).collect()
}

/// Best of `trials` pipage roundings under `loss` (lower is better).
pub fn pipage_round(x: &[f64], trials: usize, seed: u64, loss: &dyn Fn(&[usize]) -> f64) -> Result<Vec<usize>> {
    if trials == 0 {
        return Err(Error::invalid("pipage rounding needs at least one trial"));
    }
    if let Some(v) = x.iter().find(|v| !(-INTEGRAL_EPS..=1.0 + INTEGRAL_EPS).contains(*v)) {
        return Err(Error::invalid(format!("probability {v} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..trials {
        let s = pipage_once(x, &mut rng);
        let l = loss(&s);
        if best.as_ref().is_none_or(|(b, _)| l < *b) {
            best = Some((l, s));
        }
    }
    Ok(best.expect("trials ≥ 1").1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_with_ties() {
        let r = Tensor::from_rows(&[vec![0.5, 0.5], vec![0.1, 0.9], vec![1.0, 0.0]]).unwrap();
        assert_eq!(round_partition(&r), vec![0, 1, 0]);
    }

    #[test]
    fn integral_input_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(pipage_once(&[1.0, 0.0, 1.0, 0.0], &mut rng), vec![0, 2]);
    }

    #[test]
    fn half_half_pair_is_fair_coin() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut first = 0;
        let trials = 20_000;
        for _ in 0..trials {
            let s = pipage_once(&[0.5, 0.5, 1.0], &mut rng);
            assert!(s == vec![0, 2] || s == vec![1, 2]);
            if s[0] == 0 {
                first += 1;
            }
        }
        let p = first as f64 / trials as f64;
        assert!((p - 0.5).abs() < 3.0 * (0.25f64 / trials as f64).sqrt());
    }

    #[test]
    fn count_is_rounded_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let x: Vec<f64> = (0..13).map(|_| rng.random::<f64>()).collect();
            let s = pipage_once(&x, &mut rng);
            assert_eq!(s.len() as f64, x.iter().sum::<f64>().round());
        }
    }

    #[test]
    fn best_trial_is_kept() {
        let x = [0.5, 0.5, 0.5, 0.5];
        // adjacent pairing keeps exactly one of {0, 1} and one of {2, 3}
        let s = pipage_round(&x, 30, 2, &|s: &[usize]| s.iter().sum::<usize>() as f64).unwrap();
        assert_eq!(s, vec![0, 2]);
        assert!(pipage_round(&x, 0, 0, &|_: &[usize]| 0.0).is_err());
        assert!(pipage_round(&[1.5], 1, 0, &|_: &[usize]| 0.0).is_err());
    }
}
