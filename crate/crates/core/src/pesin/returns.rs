use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::flow::Trajectory;

/// A pair of block-member samples `i < j` with `d(x_i, x_j) <= D |X(x_i)|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnCandidate {
    pub i: usize,
    pub j: usize,
    pub gap: f64,
    pub rel_gap: f64,
}

impl ReturnCandidate {
    /// Recomputes the gap from the trajectory samples.
    pub fn verify(
        &self,
        traj: &Trajectory,
        members: &[usize],
        d_rel: f64,
        opts: &ReturnOptions,
    ) -> bool {
        let n = traj.len();
        if self.i >= self.j
            || self.j >= n
            || !members.contains(&self.i)
            || !members.contains(&self.j)
        {
            return false;
        }
        let sep = self.j - self.i;
        if sep < opts.min_separation || opts.max_separation.is_some_and(|m| sep > m) {
            return false;
        }
        let gap = (&traj.states()[self.j] - &traj.states()[self.i]).norm();
        let rel = gap / traj.field_norms()[self.i];
        rel <= d_rel
            && (gap - self.gap).abs() <= 1e-12 * (1.0 + gap)
            && (rel - self.rel_gap).abs() <= 1e-12 * (1.0 + rel)
    }

    fn key(&self) -> (f64, usize, usize) {
        (self.rel_gap, self.i, self.j)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnOptions {
    /// Smallest accepted `j - i`.
    pub min_separation: usize,
    /// Largest accepted `j - i`.
    pub max_separation: Option<usize>,
    /// Number of best candidates kept.
    pub max_candidates: usize,
}

impl Default for ReturnOptions {
    fn default() -> Self {
        Self {
            min_separation: 3,
            max_separation: None,
            max_candidates: 1000,
        }
    }
}

struct Ranked(ReturnCandidate);

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.0.key(), other.0.key());
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    }
}

/// Near returns with default options.
pub fn near_return_detect(
    traj: &Trajectory,
    members: &[usize],
    d_rel: f64,
) -> Vec<ReturnCandidate> {
    near_return_detect_with(traj, members, d_rel, &ReturnOptions::default())
}

/// Pairs of member samples closer than `d_rel |X(x_i)|`, sorted by relative
/// gap. Uses a uniform grid with cell size `d_rel * median |X|`.
pub fn near_return_detect_with(
    traj: &Trajectory,
    members: &[usize],
    d_rel: f64,
    opts: &ReturnOptions,
) -> Vec<ReturnCandidate> {
    let mut members: Vec<usize> = members
        .iter()
        .copied()
        .filter(|&i| i < traj.len())
        .collect();
    members.sort_unstable();
    members.dedup();
    if members.len() < 2 || !(d_rel > 0.0) || opts.max_candidates == 0 {
        return Vec::new();
    }
    let states = traj.states();
    let norms = traj.field_norms();
    let mut speeds: Vec<f64> = members.iter().map(|&i| norms[i]).collect();
    speeds.sort_by(f64::total_cmp);
    let cell = d_rel * speeds[speeds.len() / 2];
    if !(cell > 0.0) {
        return Vec::new();
    }
    let key = |x: &nalgebra::DVector<f64>| -> Vec<i64> {
        x.iter().map(|v| (v / cell).floor() as i64).collect()
    };
    let mut grid: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for &i in &members {
        grid.entry(key(&states[i])).or_default().push(i);
    }
    let dim = traj.dimension();
    let mut heap: BinaryHeap<Ranked> = BinaryHeap::new();
    for &i in &members {
        let radius = d_rel * norms[i];
        let reach = (radius / cell).ceil() as i64;
        let base = key(&states[i]);
        let mut offset = vec![-reach; dim];
        loop {
            let cellkey: Vec<i64> = base.iter().zip(&offset).map(|(b, o)| b + o).collect();
            if let Some(list) = grid.get(&cellkey) {
                for &j in list {
                    if j <= i
                        || j - i < opts.min_separation
                        || opts.max_separation.is_some_and(|m| j - i > m)
                    {
                        continue;
                    }
                    let gap = (&states[j] - &states[i]).norm();
                    let rel_gap = gap / norms[i];
                    if rel_gap > d_rel {
                        continue;
                    }
                    let cand = Ranked(ReturnCandidate { i, j, gap, rel_gap });
                    if heap.len() < opts.max_candidates {
                        heap.push(cand);
                    } else if cand < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            // odometer over the neighbourhood offsets
            let mut d = 0;
            while d < dim {
                offset[d] += 1;
                if offset[d] <= reach {
                    break;
                }
                offset[d] = -reach;
                d += 1;
            }
            if d == dim {
                break;
            }
        }
    }
    let mut out: Vec<ReturnCandidate> = heap.into_vec().into_iter().map(|r| r.0).collect();
    out.sort_by_key(|a| Ranked(a.clone()));
    out
}
