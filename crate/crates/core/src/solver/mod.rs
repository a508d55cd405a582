//! Two-phase solver for tag-described cohorts.
//!
//! Phase 1 finds the largest achievable descriptiveness `q` over all
//! canonical partitions into `k` cohorts. Phase 2 then minimises compactness
//! among partitions whose descriptiveness is at least `q`.
//!
//! Two engines implement this contract:
//!
//! * [`exact`]: depth-first branch and bound that assigns samples in index
//!   order to an already open cohort or to the next unopened one, so every
//!   partition is visited once, in canonical form.
//! * [`heuristic`]: multi-restart greedy seeding followed by first-improvement
//!   relocation search on the lexicographic objective (descriptiveness, then
//!   compactness).
//!
//! [`SolveMode::Auto`] runs the heuristic and, when the instance is small
//! enough, hands its result to the exact search as a warm start.

pub mod exact;
pub mod heuristic;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::centered_rows;
use crate::types::{validate_inputs, CohortModel, ImportanceMatrix, Partition, TagMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    Exact,
    Heuristic,
    #[default]
    Auto,
}

impl std::str::FromStr for SolveMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(SolveMode::Exact),
            "heuristic" => Ok(SolveMode::Heuristic),
            "auto" => Ok(SolveMode::Auto),
            other => Err(Error::InvalidConfig(format!("unknown solver mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub mode: SolveMode,
    /// Wall-clock budget in seconds.
    pub time_limit: Option<f64>,
    /// `Auto` runs the exact search only up to this many samples.
    pub exact_sample_limit: usize,
    pub restarts: usize,
    pub rng_seed: u64,
    /// Absolute tolerance for compactness comparisons.
    pub compactness_tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            mode: SolveMode::Auto,
            time_limit: None,
            exact_sample_limit: 30,
            restarts: 16,
            rng_seed: 0,
            compactness_tolerance: 1e-9,
        }
    }
}

impl SolverOptions {
    pub fn exact() -> Self {
        Self {
            mode: SolveMode::Exact,
            ..Self::default()
        }
    }

    pub fn heuristic() -> Self {
        Self {
            mode: SolveMode::Heuristic,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.time_limit {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidConfig(format!("time_limit must be positive, got {t}")));
            }
        }
        if self.exact_sample_limit == 0 {
            return Err(Error::InvalidConfig("exact_sample_limit must be positive".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidConfig("restarts must be positive".into()));
        }
        if !(self.compactness_tolerance >= 0.0 && self.compactness_tolerance.is_finite()) {
            return Err(Error::InvalidConfig("compactness_tolerance must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub model: CohortModel,
    /// Both phases finished an exhaustive search.
    pub proven_optimal: bool,
    /// Best descriptiveness found in phase 1.
    pub phase1_descriptiveness: usize,
    pub nodes_explored: u64,
    pub wall_time: Duration,
    /// The time limit cut the search short; `model` is the best found so far.
    pub timed_out: bool,
    /// Engine that produced the final partition.
    pub engine: SolveMode,
}

/// Read-only view of one instance shared by both engines.
pub(crate) struct Problem<'a> {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub words: usize,
    pub tags: &'a TagMatrix,
    /// Importance rows centred on the dataset mean, row-major.
    pub rows: Vec<f64>,
    pub row_sq: Vec<f64>,
    pub tol: f64,
    pub deadline: Option<Instant>,
}

impl<'a> Problem<'a> {
    pub fn new(w: &ImportanceMatrix, d: &'a TagMatrix, k: usize, tol: f64) -> Self {
        let (rows, row_sq) = centered_rows(w);
        Self {
            n: w.n_rows(),
            m: w.n_features(),
            k,
            words: d.words(),
            tags: d,
            rows,
            row_sq,
            tol,
            deadline: None,
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.m..(i + 1) * self.m]
    }

    #[inline]
    pub fn tag_row(&self, i: usize) -> &[u64] {
        self.tags.row(i)
    }

    pub fn expired(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }
}

/// Solves the two-phase problem for `k` cohorts.
pub fn solve(
    w: &ImportanceMatrix,
    d: &TagMatrix,
    k: usize,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    let start = Instant::now();
    validate_inputs(w, d)?;
    opts.validate()?;
    let n = w.n_rows();
    if k == 0 || k > n {
        return Err(Error::InfeasibleK { k, n });
    }
    let mut problem = Problem::new(w, d, k, opts.compactness_tolerance);
    problem.deadline = opts
        .time_limit
        .map(|secs| start + Duration::from_secs_f64(secs));

    // k = 1 and k = n each admit a single canonical partition.
    if k == 1 || k == n {
        let labels = if k == 1 { vec![0; n] } else { (0..n).collect() };
        let model = CohortModel::fit(w, d, Partition::from_canonical_unchecked(labels, k))?;
        return Ok(SolveResult {
            phase1_descriptiveness: model.descriptiveness,
            model,
            proven_optimal: true,
            nodes_explored: 1,
            wall_time: start.elapsed(),
            timed_out: false,
            engine: SolveMode::Exact,
        });
    }

    let use_exact = match opts.mode {
        SolveMode::Exact => true,
        SolveMode::Heuristic => false,
        SolveMode::Auto => n <= opts.exact_sample_limit,
    };
    let warm = if opts.mode == SolveMode::Exact {
        None
    } else {
        Some(heuristic::run(&problem, opts.restarts, opts.rng_seed))
    };

    let (labels, q, proven, nodes, timed_out, engine) = if use_exact {
        let out = exact::run(&problem, warm.as_ref().map(|h| (h.labels.as_slice(), h.q, h.cost)));
        match out.labels {
            Some(labels) => {
                let labels = if out.phase2_complete {
                    labels
                } else {
                    heuristic::polish(&problem, labels, out.q)
                };
                let proven = out.phase1_complete && out.phase2_complete;
                (labels, out.q, proven, out.nodes, out.timed_out, SolveMode::Exact)
            }
            None => return Err(Error::Timeout),
        }
    } else {
        let h = warm.expect("heuristic result present outside exact mode");
        (h.labels, h.q, false, h.moves, h.timed_out, SolveMode::Heuristic)
    };

    let model = CohortModel::fit(w, d, Partition::from_canonical_unchecked(labels, k))?;
    debug_assert!(model.descriptiveness >= q);
    Ok(SolveResult {
        model,
        proven_optimal: proven,
        phase1_descriptiveness: q,
        nodes_explored: nodes,
        wall_time: start.elapsed(),
        timed_out,
        engine,
    })
}
