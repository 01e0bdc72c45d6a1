use super::eigen::{leading_eigenpair, SparseModularity, SymOperator, POWER_MAX_ITERS, POWER_TOL};
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Modularity matrix of a group with the row-sum correction on its diagonal.
struct GroupOperator<'a> {
    base: &'a SparseModularity<'a>,
    members: &'a [usize],
    local: Vec<usize>,
    row_sums: Vec<f64>,
    group_degree: f64,
    shift: f64,
}

impl<'a> GroupOperator<'a> {
    fn new(base: &'a SparseModularity<'a>, members: &'a [usize]) -> Self {
        let g = base.graph();
        let deg = base.degrees();
        let two_m = base.two_m();
        let mut local = vec![usize::MAX; g.n()];
        for (i, &v) in members.iter().enumerate() {
            local[v] = i;
        }
        let group_degree: f64 = members.iter().map(|&v| deg[v]).sum();
        let mut row_sums = Vec::with_capacity(members.len());
        let mut shift: f64 = 0.0;
        for &v in members {
            let inside = g.neighbors(v).iter().filter(|&&u| local[u] != usize::MAX).count() as f64;
            let rs = inside - deg[v] * group_degree / two_m;
            shift = shift.max(inside + deg[v] * group_degree / two_m + rs.abs());
            row_sums.push(rs);
        }
        GroupOperator {
            base,
            members,
            local,
            row_sums,
            group_degree,
            shift,
        }
    }
}

impl SymOperator for GroupOperator<'_> {
    fn dim(&self) -> usize {
        self.members.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let g = self.base.graph();
        let deg = self.base.degrees();
        let dx: f64 = self.members.iter().zip(x).map(|(&v, xi)| deg[v] * xi).sum::<f64>() / self.base.two_m();
        for (i, &v) in self.members.iter().enumerate() {
            let ax: f64 = g
                .neighbors(v)
                .iter()
                .filter(|&&u| self.local[u] != usize::MAX)
                .map(|&u| x[self.local[u]])
                .sum();
            out[i] = ax - deg[v] * dx - self.row_sums[i] * x[i];
        }
    }

    fn shift(&self) -> f64 {
        self.shift
    }
}

/// Best bisection of one group, if it has positive gain.
fn try_split(base: &SparseModularity<'_>, members: &[usize], seed: u64) -> Option<(f64, Vec<usize>, Vec<usize>)> {
    if members.len() < 2 {
        return None;
    }
    let op = GroupOperator::new(base, members);
    if op.group_degree == 0.0 {
        return None;
    }
    let (lambda, v) = match leading_eigenpair(&op, &[], seed, POWER_MAX_ITERS, POWER_TOL) {
        Some(p) => p,
        None => {
            log::warn!("leading eigenvector did not converge for a group of {}; not splitting", members.len());
            return None;
        }
    };
    if lambda <= 1e-10 {
        return None;
    }
    let s: Vec<f64> = v.iter().map(|&x| if x >= 0.0 { 1.0 } else { -1.0 }).collect();
    let mut bs = vec![0.0; s.len()];
    op.apply(&s, &mut bs);
    let gain = s.iter().zip(&bs).map(|(a, b)| a * b).sum::<f64>() / (2.0 * base.two_m());
    if gain <= 1e-10 {
        return None;
    }
    let pos: Vec<usize> = members.iter().zip(&s).filter(|(_, &si)| si > 0.0).map(|(&v, _)| v).collect();
    let neg: Vec<usize> = members.iter().zip(&s).filter(|(_, &si)| si < 0.0).map(|(&v, _)| v).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    Some((gain, pos, neg))
}

/// Recursive leading-eigenvector bisection. The group whose split gains the
/// most is split next, while the gain is positive and fewer than `k`
/// communities exist.
pub fn newman_leading_eigenvector(g: &Graph, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::invalid("community count must be positive"));
    }
    let base = SparseModularity::new(g)?;
    let mut groups: Vec<Vec<usize>> = vec![(0..g.n()).collect()];
    let mut candidates: Vec<Option<(f64, Vec<usize>, Vec<usize>)>> = vec![try_split(&base, &groups[0], seed)];
    while groups.len() < k {
        let best = candidates
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.as_ref().map(|(gain, _, _)| (i, *gain)))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        let Some((i, _)) = best else { break };
        let (_, pos, neg) = candidates[i].take().expect("selected");
        let s = seed.wrapping_add(groups.len() as u64);
        candidates[i] = try_split(&base, &pos, s);
        candidates.push(try_split(&base, &neg, s.wrapping_add(7919)));
        groups[i] = pos;
        groups.push(neg);
    }
    let mut labels = vec![0; g.n()];
    for (c, members) in groups.iter().enumerate() {
        for &v in members {
            labels[v] = c;
        }
    }
    Ok(labels)
}
