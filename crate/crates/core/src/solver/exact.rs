//! Exact branch and bound over canonical partitions.
//!
//! Sample `i` may join any open cohort `0..used` or open cohort `used`, so
//! each set partition is enumerated exactly once and in lexicographic order of
//! its canonical label vector (value-precedence symmetry breaking).
//!
//! Bounds:
//! * descriptiveness: a cohort's shared-tag set only shrinks as members join.
//!   The final value is at most the popcount of every open cohort's running
//!   AND, and for each unassigned sample `j` at most the best popcount it can
//!   reach in any cohort it may join (`and_t & D_j`, or `D_j` alone while new
//!   cohorts can still be opened).
//! * compactness: pairwise costs only grow. Each unassigned sample adds at
//!   least its cheapest feasible insertion cost against current members
//!   (zero when it may go to a cohort opened later).

use crate::bits;
use crate::error::{Error, Result};
use crate::objective::CohortSums;
use crate::types::{validate_inputs, ImportanceMatrix, Partition, TagMatrix};

use super::Problem;

const TIME_CHECK_INTERVAL: u64 = 1024;

pub(crate) struct ExactOutcome {
    /// Best partition found: the phase 2 incumbent, else the warm start when it
    /// still satisfies the phase 1 optimum, else the phase 1 witness.
    pub labels: Option<Vec<usize>>,
    pub q: usize,
    pub phase1_complete: bool,
    pub phase2_complete: bool,
    pub nodes: u64,
    pub timed_out: bool,
}

struct Search<'p, 'a> {
    pb: &'p Problem<'a>,
    labels: Vec<usize>,
    used: usize,
    /// `k * words` running AND per cohort.
    ands: Vec<u64>,
    sums: Vec<CohortSums>,
    cost: f64,
    /// Saved AND limbs for backtracking.
    undo: Vec<u64>,
    nodes: u64,
    timed_out: bool,
    /// Phase 1 incumbent value and witness.
    best_q: Option<usize>,
    best_q_labels: Option<Vec<usize>>,
    /// Phase 2 threshold, incumbent cost and witness.
    q: usize,
    best_cost: f64,
    best_labels: Option<Vec<usize>>,
}

impl<'p, 'a> Search<'p, 'a> {
    fn new(pb: &'p Problem<'a>) -> Self {
        Self {
            pb,
            labels: vec![usize::MAX; pb.n],
            used: 0,
            ands: vec![0; pb.k * pb.words],
            sums: vec![CohortSums::new(pb.m); pb.k],
            cost: 0.0,
            undo: Vec::new(),
            nodes: 0,
            timed_out: false,
            best_q: None,
            best_q_labels: None,
            q: 0,
            best_cost: f64::INFINITY,
            best_labels: None,
        }
    }

    #[inline]
    fn and_of(&self, t: usize) -> &[u64] {
        &self.ands[t * self.pb.words..(t + 1) * self.pb.words]
    }

    fn assign(&mut self, i: usize, t: usize) {
        let pb = self.pb;
        let w = pb.words;
        let row = pb.row(i);
        self.cost += self.sums[t].insert_cost(row, pb.row_sq[i]);
        self.sums[t].insert(row, pb.row_sq[i]);
        self.undo.extend_from_slice(&self.ands[t * w..(t + 1) * w]);
        if t == self.used {
            self.ands[t * w..(t + 1) * w].copy_from_slice(pb.tag_row(i));
            self.used += 1;
        } else {
            bits::and_assign(&mut self.ands[t * w..(t + 1) * w], pb.tag_row(i));
        }
        self.labels[i] = t;
    }

    fn unassign(&mut self, i: usize, t: usize, saved_cost: f64) {
        let pb = self.pb;
        let w = pb.words;
        self.sums[t].remove(pb.row(i), pb.row_sq[i]);
        self.cost = saved_cost;
        let at = self.undo.len() - w;
        self.ands[t * w..(t + 1) * w].copy_from_slice(&self.undo[at..]);
        self.undo.truncate(at);
        if self.sums[t].count == 0 {
            self.used -= 1;
        }
        self.labels[i] = usize::MAX;
    }

    fn tick(&mut self) -> bool {
        self.nodes += 1;
        if self.nodes.is_multiple_of(TIME_CHECK_INTERVAL) && self.pb.expired() {
            self.timed_out = true;
        }
        self.timed_out
    }

    fn open_min_popcount(&self) -> usize {
        (0..self.used)
            .map(|t| bits::popcount(self.and_of(t)))
            .min()
            .unwrap_or(usize::MAX)
    }

    /// Upper bound on the descriptiveness of any completion of samples `0..i`.
    fn desc_upper_bound(&self, i: usize) -> usize {
        let pb = self.pb;
        let mut ub = self.open_min_popcount();
        for j in i..pb.n {
            let dj = pb.tag_row(j);
            let reach = if self.used < pb.k {
                bits::popcount(dj)
            } else {
                (0..self.used)
                    .map(|t| bits::and_popcount(self.and_of(t), dj))
                    .max()
                    .unwrap_or(0)
            };
            ub = ub.min(reach);
        }
        ub
    }

    /// Lower bound on the compactness of any completion of samples `0..i` whose
    /// descriptiveness stays at least `self.q`; `None` when no such completion exists.
    fn cost_lower_bound(&self, i: usize) -> Option<f64> {
        let pb = self.pb;
        if self.open_min_popcount() < self.q {
            return None;
        }
        let mut lb = self.cost;
        for j in i..pb.n {
            let dj = pb.tag_row(j);
            let fresh_ok = self.used < pb.k && bits::popcount(dj) >= self.q;
            if fresh_ok {
                continue;
            }
            let mut cheapest = f64::INFINITY;
            for t in 0..self.used {
                if bits::and_popcount(self.and_of(t), dj) >= self.q {
                    cheapest = cheapest.min(self.sums[t].insert_cost(pb.row(j), pb.row_sq[j]));
                }
            }
            if cheapest.is_infinite() {
                return None;
            }
            lb += cheapest.max(0.0);
        }
        Some(lb)
    }

    /// Open cohorts sample `i` may join while leaving enough samples to fill
    /// the cohorts not yet opened.
    fn join_limit(&self, i: usize) -> usize {
        let remaining_after = self.pb.n - i - 1;
        if self.pb.k - self.used <= remaining_after {
            self.used
        } else {
            0
        }
    }

    fn phase1(&mut self, i: usize) {
        if self.tick() {
            return;
        }
        let pb = self.pb;
        if i == pb.n {
            let value = self.open_min_popcount();
            if self.best_q.is_none_or(|b| value > b) {
                self.best_q = Some(value);
                self.best_q_labels = Some(self.labels.clone());
            }
            return;
        }
        if let Some(best) = self.best_q {
            if self.desc_upper_bound(i) <= best {
                return;
            }
        }
        // Most promising cohort first; order does not matter for the value.
        let di = pb.tag_row(i);
        let mut options: Vec<(usize, usize)> = (0..self.join_limit(i))
            .map(|t| (bits::and_popcount(self.and_of(t), di), t))
            .collect();
        if self.used < pb.k {
            options.push((bits::popcount(di), self.used));
        }
        options.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for (_, t) in options {
            let saved = self.cost;
            self.assign(i, t);
            self.phase1(i + 1);
            self.unassign(i, t, saved);
            if self.timed_out {
                return;
            }
        }
    }

    fn phase2(&mut self, i: usize) {
        if self.tick() {
            return;
        }
        let pb = self.pb;
        if i == pb.n {
            if self.open_min_popcount() >= self.q && self.cost < self.best_cost - pb.tol {
                self.best_cost = self.cost;
                self.best_labels = Some(self.labels.clone());
            }
            return;
        }
        match self.cost_lower_bound(i) {
            Some(lb) if lb < self.best_cost - pb.tol => {}
            _ => return,
        }
        let di = pb.tag_row(i);
        // Ascending label order visits canonical vectors lexicographically, so
        // the first optimum found is the lexicographically smallest one.
        for t in 0..self.join_limit(i) {
            if bits::and_popcount(self.and_of(t), di) < self.q {
                continue;
            }
            let saved = self.cost;
            self.assign(i, t);
            self.phase2(i + 1);
            self.unassign(i, t, saved);
            if self.timed_out {
                return;
            }
        }
        if self.used < pb.k && bits::popcount(di) >= self.q {
            let t = self.used;
            let saved = self.cost;
            self.assign(i, t);
            self.phase2(i + 1);
            self.unassign(i, t, saved);
        }
    }
}

/// Runs both phases. `warm` is an optional feasible `(labels, q, cost)`.
pub(crate) fn run(pb: &Problem<'_>, warm: Option<(&[usize], usize, f64)>) -> ExactOutcome {
    let mut s = Search::new(pb);
    if let Some((labels, q, _)) = warm {
        s.best_q = Some(q);
        s.best_q_labels = Some(labels.to_vec());
    }
    s.phase1(0);
    let phase1_complete = !s.timed_out;
    let Some(q) = s.best_q else {
        return ExactOutcome {
            labels: None,
            q: 0,
            phase1_complete,
            phase2_complete: false,
            nodes: s.nodes,
            timed_out: s.timed_out,
        };
    };
    let phase1_labels = s.best_q_labels.take();
    s.q = q;

    // The warm start is only a valid incumbent when it reaches the phase 1 optimum.
    let warm_ok = warm.filter(|&(_, wq, _)| wq >= q);
    if let Some((_, _, cost)) = warm_ok {
        // Slack so the warm partition itself stays reachable despite rounding.
        s.best_cost = cost + 2.0 * pb.tol.max(1e-12 * cost.abs());
    }
    if !s.timed_out {
        s.phase2(0);
    }
    let phase2_complete = !s.timed_out;
    let labels = s
        .best_labels
        .take()
        .or_else(|| warm_ok.map(|(l, _, _)| l.to_vec()))
        .or(phase1_labels);
    ExactOutcome {
        labels,
        q,
        phase1_complete,
        phase2_complete,
        nodes: s.nodes,
        timed_out: s.timed_out,
    }
}

fn search_at_prefix<'p, 'a>(pb: &'p Problem<'a>, prefix: &[usize]) -> Result<Search<'p, 'a>> {
    let mut s = Search::new(pb);
    for (i, &t) in prefix.iter().enumerate() {
        if t > s.used || t >= pb.k {
            return Err(Error::NotCanonical {
                label: t + 1,
                previous: s.used + 1,
            });
        }
        s.assign(i, t);
    }
    Ok(s)
}

/// Descriptiveness bound the search uses at the node where samples
/// `0..prefix.len()` carry the given 0-based canonical labels.
pub fn descriptiveness_upper_bound(d: &TagMatrix, prefix: &[usize], k: usize) -> Result<usize> {
    let w = ImportanceMatrix::new(vec![0.0; d.n_rows()], vec!["_".into()])?;
    let pb = Problem::new(&w, d, k, 0.0);
    let s = search_at_prefix(&pb, prefix)?;
    Ok(s.desc_upper_bound(prefix.len()))
}

/// Compactness bound the search uses at a prefix node when descriptiveness
/// must stay at least `q`; `None` when the node is proven infeasible.
pub fn compactness_lower_bound(
    w: &ImportanceMatrix,
    d: &TagMatrix,
    prefix: &[usize],
    k: usize,
    q: usize,
) -> Result<Option<f64>> {
    validate_inputs(w, d)?;
    let pb = Problem::new(w, d, k, 0.0);
    let mut s = search_at_prefix(&pb, prefix)?;
    s.q = q;
    Ok(s.cost_lower_bound(prefix.len()))
}

/// Convenience wrapper: exact two-phase optimum without time limit.
pub fn solve_exact(w: &ImportanceMatrix, d: &TagMatrix, k: usize, tol: f64) -> Result<(Partition, usize)> {
    validate_inputs(w, d)?;
    if k == 0 || k > w.n_rows() {
        return Err(Error::InfeasibleK { k, n: w.n_rows() });
    }
    let pb = Problem::new(w, d, k, tol);
    let out = run(&pb, None);
    let labels = out.labels.ok_or(Error::Timeout)?;
    Ok((Partition::from_canonical_unchecked(labels, k), out.q))
}
