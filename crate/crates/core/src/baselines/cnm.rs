use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// One agglomeration step: community `absorbed` joins `into`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub into: usize,
    pub absorbed: usize,
    pub gain: f64,
    pub modularity: f64,
    pub communities: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnmOutcome {
    pub labels: Vec<usize>,
    pub modularity: f64,
    pub communities: usize,
    /// Every merge down to a single community.
    pub history: Vec<Merge>,
}

/// Greedy modularity agglomeration.
///
/// Adjacent communities are merged by largest `ΔQ = 2(e_ij − a_i a_j)` (ties
/// to the lowest pair) all the way to one community; once no adjacent pair
/// is left, the pair with smallest `a_i a_j` goes next. The returned level is
/// the best modularity among levels with at most `k` communities.
pub fn cnm(g: &Graph, k: usize) -> Result<CnmOutcome> {
    if g.m() == 0 {
        return Err(Error::EmptyGraph);
    }
    if k == 0 {
        return Err(Error::invalid("community count must be positive"));
    }
    let n = g.n();
    let two_m = 2.0 * g.m() as f64;
    let mut e: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    for &(u, v) in g.edges() {
        *e[u].entry(v).or_insert(0.0) += 1.0 / two_m;
        *e[v].entry(u).or_insert(0.0) += 1.0 / two_m;
    }
    let mut a: Vec<f64> = (0..n).map(|v| g.degree(v) as f64 / two_m).collect();
    let mut alive = vec![true; n];
    let mut q: f64 = -a.iter().map(|x| x * x).sum::<f64>();
    let mut history = Vec::with_capacity(n.saturating_sub(1));
    let (mut best_q, mut best_level) = if n <= k { (q, 0) } else { (f64::NEG_INFINITY, usize::MAX) };

    for step in 1..n {
        let mut pick: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            for (&j, &eij) in e[i].range(i + 1..) {
                let gain = 2.0 * (eij - a[i] * a[j]);
                if pick.is_none_or(|(_, _, b)| gain > b) {
                    pick = Some((i, j, gain));
                }
            }
        }
        let (i, j, gain) = match pick {
            Some(p) => p,
            None => {
                let mut ids: Vec<usize> = (0..n).filter(|&c| alive[c]).collect();
                ids.sort_by(|&x, &y| a[x].total_cmp(&a[y]).then(x.cmp(&y)));
                let (x, y) = (ids[0].min(ids[1]), ids[0].max(ids[1]));
                (x, y, -2.0 * a[x] * a[y])
            }
        };
        let absorbed = std::mem::take(&mut e[j]);
        for (c, w) in absorbed {
            if c == i {
                continue;
            }
            *e[i].entry(c).or_insert(0.0) += w;
            e[c].remove(&j);
            *e[c].entry(i).or_insert(0.0) += w;
        }
        e[i].remove(&j);
        a[i] += a[j];
        a[j] = 0.0;
        alive[j] = false;
        q += gain;
        let communities = n - step;
        history.push(Merge {
            into: i,
            absorbed: j,
            gain,
            modularity: q,
            communities,
        });
        if communities <= k && q > best_q + 1e-12 {
            best_q = q;
            best_level = step;
        }
    }
    let labels = labels_after(n, &history[..best_level.min(history.len())]);
    let communities = labels.iter().max().map_or(0, |&l| l + 1);
    Ok(CnmOutcome {
        labels,
        modularity: best_q,
        communities,
        history,
    })
}

/// Dense labels after replaying `merges`, numbered by first appearance.
pub fn labels_after(n: usize, merges: &[Merge]) -> Vec<usize> {
    let mut owner: Vec<usize> = (0..n).collect();
    for m in merges {
        for o in owner.iter_mut() {
            if *o == m.absorbed {
                *o = m.into;
            }
        }
    }
    let mut map = vec![usize::MAX; n];
    let mut next = 0;
    owner
        .into_iter()
        .map(|o| {
            if map[o] == usize::MAX {
                map[o] = next;
                next += 1;
            }
            map[o]
        })
        .collect()
}
