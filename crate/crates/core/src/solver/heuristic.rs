//! Anytime multi-restart local search.
//!
//! Each restart seeds `k` cohorts with samples whose tag rows overlap as little
//! as possible, assigns the remaining samples greedily, then climbs with
//! single-sample relocations in two stages:
//!
//! 1. raise descriptiveness (ties: fewer cohorts sitting at the minimum, then
//!    lower compactness);
//! 2. once the best descriptiveness `q` over all restarts is known, lower
//!    compactness with moves that keep descriptiveness at least `q`.
//!
//! Restarts run in parallel with independent seeded generators and are reduced
//! in restart order, so results depend only on the seed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bits;
use crate::objective::CohortSums;

use super::Problem;

const MAX_PASSES: usize = 10_000;

pub(crate) struct HeuristicOutcome {
    /// Canonical 0-based labels.
    pub labels: Vec<usize>,
    pub q: usize,
    pub cost: f64,
    pub moves: u64,
    pub timed_out: bool,
}

#[derive(Clone)]
struct State<'p, 'a> {
    pb: &'p Problem<'a>,
    labels: Vec<usize>,
    sizes: Vec<usize>,
    /// `k * r` member counts per tag.
    counts: Vec<u32>,
    /// `k * words` shared-tag rows.
    ands: Vec<u64>,
    pcs: Vec<usize>,
    sums: Vec<CohortSums>,
    cost: f64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Stage {
    Descriptive,
    Compact { q: usize },
}

impl<'p, 'a> State<'p, 'a> {
    fn from_labels(pb: &'p Problem<'a>, labels: Vec<usize>) -> Self {
        let r = pb.tags.n_tags();
        let mut s = Self {
            pb,
            sizes: vec![0; pb.k],
            counts: vec![0; pb.k * r],
            ands: vec![0; pb.k * pb.words],
            pcs: vec![0; pb.k],
            sums: vec![CohortSums::new(pb.m); pb.k],
            cost: 0.0,
            labels,
        };
        for i in 0..pb.n {
            let t = s.labels[i];
            s.sizes[t] += 1;
            for p in 0..r {
                if pb.tags.get(i, p) {
                    s.counts[t * r + p] += 1;
                }
            }
            s.cost += s.sums[t].insert_cost(pb.row(i), pb.row_sq[i]);
            s.sums[t].insert(pb.row(i), pb.row_sq[i]);
        }
        for t in 0..pb.k {
            s.rebuild_and(t);
        }
        s
    }

    fn rebuild_and(&mut self, t: usize) {
        let r = self.pb.tags.n_tags();
        let w = self.pb.words;
        let row = &mut self.ands[t * w..(t + 1) * w];
        row.fill(0);
        let size = self.sizes[t] as u32;
        for p in 0..r {
            if size > 0 && self.counts[t * r + p] == size {
                bits::set(row, p);
            }
        }
        self.pcs[t] = bits::popcount(row);
    }

    fn desc(&self) -> usize {
        self.pcs.iter().copied().min().unwrap_or(0)
    }

    fn at_min(&self) -> usize {
        let d = self.desc();
        self.pcs.iter().filter(|&&p| p == d).count()
    }

    /// Shared-tag count of cohort `a` once `i` leaves it.
    fn removal_pc(&self, i: usize, a: usize) -> usize {
        let r = self.pb.tags.n_tags();
        let target = (self.sizes[a] - 1) as u32;
        let gained = (0..r)
            .filter(|&p| !self.pb.tags.get(i, p) && self.counts[a * r + p] == target)
            .count();
        self.pcs[a] + gained
    }

    fn insertion_pc(&self, i: usize, b: usize) -> usize {
        let w = self.pb.words;
        bits::and_popcount(&self.ands[b * w..(b + 1) * w], self.pb.tag_row(i))
    }

    fn apply_move(&mut self, i: usize, b: usize, delta: f64) {
        let pb = self.pb;
        let r = pb.tags.n_tags();
        let a = self.labels[i];
        self.sums[a].remove(pb.row(i), pb.row_sq[i]);
        self.sums[b].insert(pb.row(i), pb.row_sq[i]);
        self.sizes[a] -= 1;
        self.sizes[b] += 1;
        for p in 0..r {
            if pb.tags.get(i, p) {
                self.counts[a * r + p] -= 1;
                self.counts[b * r + p] += 1;
            }
        }
        self.labels[i] = b;
        self.cost += delta;
        self.rebuild_and(a);
        self.rebuild_and(b);
    }

    /// Descriptiveness and number of cohorts at the minimum after moving `i`
    /// from `a` to `b`.
    fn profile_after(&self, a: usize, pa: usize, b: usize, pb_: usize) -> (usize, usize) {
        let mut min = usize::MAX;
        let mut count = 0;
        for t in 0..self.pcs.len() {
            let v = if t == a {
                pa
            } else if t == b {
                pb_
            } else {
                self.pcs[t]
            };
            if v < min {
                min = v;
                count = 1;
            } else if v == min {
                count += 1;
            }
        }
        (min, count)
    }

    /// First-improvement relocation search. Returns (moves evaluated, timed out).
    fn climb(&mut self, stage: Stage, tol: f64, rng: &mut ChaCha8Rng) -> (u64, bool) {
        let pb = self.pb;
        let mut order: Vec<usize> = (0..pb.n).collect();
        let mut evaluated = 0u64;
        for _ in 0..MAX_PASSES {
            order.shuffle(rng);
            let mut improved = false;
            for &i in &order {
                if pb.expired() {
                    return (evaluated, true);
                }
                let a = self.labels[i];
                if self.sizes[a] == 1 {
                    continue;
                }
                let pa = self.removal_pc(i, a);
                let removed = self.sums[a].remove_cost(pb.row(i), pb.row_sq[i]);
                let (desc, at_min) = (self.desc(), self.at_min());
                for b in 0..pb.k {
                    if b == a {
                        continue;
                    }
                    evaluated += 1;
                    let pbv = self.insertion_pc(i, b);
                    let delta = self.sums[b].insert_cost(pb.row(i), pb.row_sq[i]) - removed;
                    let (nd, nat) = self.profile_after(a, pa, b, pbv);
                    let accept = match stage {
                        Stage::Descriptive => {
                            nd > desc
                                || (nd == desc && nat < at_min)
                                || (nd == desc && nat == at_min && delta < -tol)
                        }
                        Stage::Compact { q } => nd >= q && delta < -tol,
                    };
                    if accept {
                        self.apply_move(i, b, delta);
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        (evaluated, false)
    }

    fn exact_cost(&self) -> f64 {
        let pb = self.pb;
        let mut sums = vec![CohortSums::new(pb.m); pb.k];
        for (i, &t) in self.labels.iter().enumerate() {
            sums[t].insert(pb.row(i), pb.row_sq[i]);
        }
        sums.iter().map(CohortSums::cost).sum()
    }
}

pub(crate) fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut map: Vec<Option<usize>> = vec![None; labels.iter().max().map_or(0, |m| m + 1)];
    let mut next = 0;
    labels
        .iter()
        .map(|&l| {
            *map[l].get_or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

/// Greedy start: `k` mutually dissimilar seeds, then each remaining sample
/// joins the cohort that keeps the most shared tags (ties: cheapest insertion).
fn seed_labels(pb: &Problem<'_>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = pb.n;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut labels = vec![usize::MAX; n];
    let first = order[rng.random_range(0..n)];
    labels[first] = 0;
    let mut overlap: Vec<usize> = (0..n)
        .map(|j| bits::and_popcount(pb.tag_row(j), pb.tag_row(first)))
        .collect();
    let dist = |a: usize, b: usize| -> f64 {
        pb.row(a)
            .iter()
            .zip(pb.row(b))
            .map(|(x, y)| (x - y) * (x - y))
            .sum()
    };
    let mut nearest: Vec<f64> = (0..n).map(|j| dist(j, first)).collect();
    for t in 1..pb.k {
        let pick = order
            .iter()
            .copied()
            .filter(|&j| labels[j] == usize::MAX)
            .min_by(|&x, &y| {
                overlap[x]
                    .cmp(&overlap[y])
                    .then(nearest[y].total_cmp(&nearest[x]))
            })
            .expect("k <= n leaves a free sample");
        labels[pick] = t;
        for j in 0..n {
            overlap[j] = overlap[j].max(bits::and_popcount(pb.tag_row(j), pb.tag_row(pick)));
            nearest[j] = nearest[j].min(dist(j, pick));
        }
    }

    let mut ands: Vec<Vec<u64>> = vec![Vec::new(); pb.k];
    let mut sums = vec![CohortSums::new(pb.m); pb.k];
    for (j, &t) in labels.iter().enumerate() {
        if t != usize::MAX {
            ands[t] = pb.tag_row(j).to_vec();
            sums[t].insert(pb.row(j), pb.row_sq[j]);
        }
    }
    for &j in &order {
        if labels[j] != usize::MAX {
            continue;
        }
        let dj = pb.tag_row(j);
        let best = (0..pb.k)
            .map(|t| {
                let keep = bits::and_popcount(&ands[t], dj);
                let cost = sums[t].insert_cost(pb.row(j), pb.row_sq[j]);
                (t, keep, cost)
            })
            .max_by(|x, y| x.1.cmp(&y.1).then(y.2.total_cmp(&x.2)).then(y.0.cmp(&x.0)))
            .map(|(t, _, _)| t)
            .expect("k >= 1");
        labels[j] = best;
        bits::and_assign(&mut ands[best], dj);
        sums[best].insert(pb.row(j), pb.row_sq[j]);
    }
    labels
}

fn effective_tol(pb: &Problem<'_>) -> f64 {
    let scale: f64 = pb.row_sq.iter().sum::<f64>() * pb.n as f64;
    pb.tol.max(1e-12 * scale)
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

/// Runs all restarts and returns the best partition under the lexicographic
/// objective; ties on compactness go to the lexicographically smallest labels.
pub(crate) fn run(pb: &Problem<'_>, restarts: usize, seed: u64) -> HeuristicOutcome {
    let tol = effective_tol(pb);
    let climbed: Vec<(State<'_, '_>, ChaCha8Rng, u64, bool)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = restart_rng(seed, r);
            let labels = seed_labels(pb, &mut rng);
            let mut state = State::from_labels(pb, labels);
            let (moves, timed_out) = state.climb(Stage::Descriptive, tol, &mut rng);
            (state, rng, moves, timed_out)
        })
        .collect();
    let q = climbed.iter().map(|(s, ..)| s.desc()).max().unwrap_or(0);

    let finished: Vec<(Vec<usize>, f64, u64, bool)> = climbed
        .into_par_iter()
        .filter(|(s, ..)| s.desc() == q)
        .map(|(mut state, mut rng, moves, timed_out)| {
            let (more, late) = state.climb(Stage::Compact { q }, tol, &mut rng);
            let cost = state.exact_cost();
            (canonical(&state.labels), cost, moves + more, timed_out || late)
        })
        .collect();

    let moves = finished.iter().map(|f| f.2).sum();
    let timed_out = finished.iter().any(|f| f.3);
    let (labels, cost) = finished
        .into_iter()
        .map(|(l, c, ..)| (l, c))
        .reduce(|best, cand| {
            if cand.1 < best.1 - tol || (cand.1 <= best.1 + tol && cand.0 < best.0) {
                cand
            } else {
                best
            }
        })
        .expect("at least one restart reaches the best descriptiveness");
    HeuristicOutcome {
        labels,
        q,
        cost,
        moves,
        timed_out,
    }
}

/// Compactness descent from a given partition, keeping descriptiveness >= `q`.
pub(crate) fn polish(pb: &Problem<'_>, labels: Vec<usize>, q: usize) -> Vec<usize> {
    let mut state = State::from_labels(pb, labels);
    let mut rng = restart_rng(0, 0);
    state.climb(Stage::Compact { q }, effective_tol(pb), &mut rng);
    canonical(&state.labels)
}
