//! Choosing `k` by cross-validated importance prediction error.
//!
//! Tags are derived once on the full dataset; only the cohort fit sees the
//! training folds. Every `(k, fold)` pair is an independent job.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::importance_prediction_error;
use crate::objective::{compactness, descriptiveness};
use crate::repid::{fit_tree_with, tree_prediction_error, TreeOptions};
use crate::solver::{solve, SolverOptions};
use crate::types::{validate_inputs, ImportanceMatrix, TagMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CohortMethod {
    /// Tag-described cohorts from the two-phase solver.
    #[default]
    Tags,
    /// Decision-tree leaves split on tags.
    Tree { min_leaf: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub k_values: Vec<usize>,
    pub folds: usize,
    pub rng_seed: u64,
    pub solver: SolverOptions,
    /// Mean errors within this of the minimum count as ties, which go to
    /// the smaller `k`.
    pub selection_tolerance: f64,
    pub method: CohortMethod,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            k_values: vec![1, 2, 3, 4],
            folds: 5,
            rng_seed: 0,
            solver: SolverOptions::default(),
            selection_tolerance: 1e-9,
            method: CohortMethod::Tags,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidConfig(format!("folds must be at least 2, got {}", self.folds)));
        }
        if self.k_values.is_empty() {
            return Err(Error::InvalidConfig("k_values must not be empty".into()));
        }
        if self.k_values.contains(&0) {
            return Err(Error::InvalidConfig("every k must be at least 1".into()));
        }
        if !(self.selection_tolerance >= 0.0 && self.selection_tolerance.is_finite()) {
            return Err(Error::InvalidConfig("selection_tolerance must be >= 0".into()));
        }
        self.solver.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldResult {
    pub k: usize,
    pub fold: usize,
    pub train_size: usize,
    pub validation_size: usize,
    /// Cohorts actually fitted; a tree may stop short of `k`.
    pub cohorts: usize,
    pub train_compactness: f64,
    pub train_descriptiveness: usize,
    pub validation_error_sum: f64,
    pub validation_error_mean: f64,
    pub fallback_rate: f64,
    pub proven_optimal: bool,
    pub timed_out: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation across folds.
    pub std: f64,
}

impl Stat {
    fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = if v.len() > 1 {
            (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KSummary {
    pub k: usize,
    /// Per-sample validation error; selection uses its mean.
    pub validation_error: Stat,
    pub validation_error_sum: Stat,
    pub train_compactness: Stat,
    pub train_descriptiveness: Stat,
    pub fallback_rate: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub method: CohortMethod,
    pub folds: usize,
    /// Ordered by `k`, then fold.
    pub runs: Vec<FoldResult>,
    /// Ordered by `k`.
    pub summary: Vec<KSummary>,
    pub selected_k: usize,
}

impl SweepReport {
    pub fn summary_for(&self, k: usize) -> Option<&KSummary> {
        self.summary.iter().find(|s| s.k == k)
    }
}

/// Fold index of every sample: a seeded shuffle dealt round-robin, so fold
/// sizes differ by at most one.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut crate::rng(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

struct Split {
    w_train: ImportanceMatrix,
    d_train: TagMatrix,
    w_val: ImportanceMatrix,
    d_val: TagMatrix,
}

fn run_one(split: &Split, k: usize, fold: usize, config: &SweepConfig) -> Result<FoldResult> {
    let base = FoldResult {
        k,
        fold,
        train_size: split.w_train.n_rows(),
        validation_size: split.w_val.n_rows(),
        cohorts: 0,
        train_compactness: 0.0,
        train_descriptiveness: 0,
        validation_error_sum: 0.0,
        validation_error_mean: 0.0,
        fallback_rate: 0.0,
        proven_optimal: false,
        timed_out: false,
    };
    match config.method {
        CohortMethod::Tags => {
            let res = solve(&split.w_train, &split.d_train, k, &config.solver)?;
            let err = importance_prediction_error(&res.model, &split.w_val, &split.d_val)?;
            Ok(FoldResult {
                cohorts: res.model.k(),
                train_compactness: res.model.compactness,
                train_descriptiveness: res.model.descriptiveness,
                validation_error_sum: err.total,
                validation_error_mean: err.mean,
                fallback_rate: err.fallback_rate(),
                proven_optimal: res.proven_optimal,
                timed_out: res.timed_out,
                ..base
            })
        }
        CohortMethod::Tree { min_leaf } => {
            let tree = fit_tree_with(&split.w_train, &split.d_train, k, &TreeOptions { min_leaf })?;
            let part = tree.partition();
            let err = tree_prediction_error(&tree, &split.w_val, &split.d_val)?;
            Ok(FoldResult {
                cohorts: tree.k(),
                train_compactness: compactness(&split.w_train, &part)?,
                train_descriptiveness: descriptiveness(&split.d_train, &part)?,
                validation_error_sum: err.total,
                validation_error_mean: err.mean,
                ..base
            })
        }
    }
}

pub fn sweep(w: &ImportanceMatrix, d: &TagMatrix, config: &SweepConfig) -> Result<SweepReport> {
    validate_inputs(w, d)?;
    config.validate()?;
    let n = w.n_rows();
    if config.folds > n {
        return Err(Error::InvalidConfig(format!(
            "folds ({}) exceeds sample count ({n})",
            config.folds
        )));
    }
    let mut k_values = config.k_values.clone();
    k_values.sort_unstable();
    k_values.dedup();

    let fold_of = fold_assignment(n, config.folds, config.rng_seed);
    let splits: Vec<Split> = (0..config.folds)
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
            let val: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
            Split {
                w_train: w.select_rows(&train),
                d_train: d.select_rows(&train),
                w_val: w.select_rows(&val),
                d_val: d.select_rows(&val),
            }
        })
        .collect();
    let smallest_train = splits.iter().map(|s| s.w_train.n_rows()).min().unwrap_or(0);
    let k_max = *k_values.last().expect("k_values validated non-empty");
    if k_max > smallest_train {
        return Err(Error::KTooLarge {
            k: k_max,
            fold_size: smallest_train,
        });
    }

    let jobs: Vec<(usize, usize)> = k_values
        .iter()
        .flat_map(|&k| (0..config.folds).map(move |f| (k, f)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(k, f)| run_one(&splits[f], k, f, config))
        .collect::<Result<Vec<_>>>()?;

    let summary: Vec<KSummary> = k_values
        .iter()
        .map(|&k| {
            let rs: Vec<&FoldResult> = runs.iter().filter(|r| r.k == k).collect();
            KSummary {
                k,
                validation_error: Stat::of(rs.iter().map(|r| r.validation_error_mean)),
                validation_error_sum: Stat::of(rs.iter().map(|r| r.validation_error_sum)),
                train_compactness: Stat::of(rs.iter().map(|r| r.train_compactness)),
                train_descriptiveness: Stat::of(rs.iter().map(|r| r.train_descriptiveness as f64)),
                fallback_rate: Stat::of(rs.iter().map(|r| r.fallback_rate)),
            }
        })
        .collect();

    let best = summary
        .iter()
        .map(|s| s.validation_error.mean)
        .fold(f64::INFINITY, f64::min);
    let selected_k = summary
        .iter()
        .find(|s| s.validation_error.mean <= best + config.selection_tolerance)
        .map(|s| s.k)
        .expect("summary is non-empty");

    Ok(SweepReport {
        method: config.method,
        folds: config.folds,
        runs,
        summary,
        selected_k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (ImportanceMatrix, TagMatrix) {
        let w = ImportanceMatrix::from_rows_unnamed(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.1],
            vec![0.1, 1.0],
            vec![0.9, 0.0],
            vec![0.0, 0.9],
        ])
        .unwrap();
        let d = TagMatrix::from_rows_unnamed(&[
            vec![1, 0, 1],
            vec![0, 1, 1],
            vec![1, 0, 0],
            vec![0, 1, 0],
            vec![1, 0, 1],
            vec![0, 1, 0],
        ])
        .unwrap();
        (w, d)
    }

    #[test]
    fn folds_cover_every_sample_once() {
        let f = fold_assignment(23, 5, 7);
        let mut sizes = [0; 5];
        f.iter().for_each(|&x| sizes[x] += 1);
        assert_eq!(sizes.iter().sum::<usize>(), 23);
        assert!(sizes.iter().all(|&s| s == 4 || s == 5));
        assert_eq!(f, fold_assignment(23, 5, 7));
    }

    #[test]
    fn single_candidate_is_selected() {
        let (w, d) = small();
        let cfg = SweepConfig { k_values: vec![1], folds: 3, ..Default::default() };
        let rep = sweep(&w, &d, &cfg).unwrap();
        assert_eq!(rep.selected_k, 1);
        assert_eq!(rep.runs.len(), 3);
    }

    #[test]
    fn leave_one_out_runs() {
        let (w, d) = small();
        let cfg = SweepConfig { k_values: vec![1, 2], folds: 6, ..Default::default() };
        let rep = sweep(&w, &d, &cfg).unwrap();
        assert_eq!(rep.runs.len(), 12);
        assert!(rep.runs.iter().all(|r| r.validation_size == 1));
    }

    #[test]
    fn rejects_bad_configs() {
        let (w, d) = small();
        let too_big = SweepConfig { k_values: vec![5], folds: 3, ..Default::default() };
        assert_eq!(sweep(&w, &d, &too_big), Err(Error::KTooLarge { k: 5, fold_size: 4 }));
        let one_fold = SweepConfig { folds: 1, ..Default::default() };
        assert!(matches!(sweep(&w, &d, &one_fold), Err(Error::InvalidConfig(_))));
        let zero_k = SweepConfig { k_values: vec![0, 1], ..Default::default() };
        assert!(matches!(sweep(&w, &d, &zero_k), Err(Error::InvalidConfig(_))));
        let many_folds = SweepConfig { folds: 7, ..Default::default() };
        assert!(matches!(sweep(&w, &d, &many_folds), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn reproducible() {
        let (w, d) = small();
        let cfg = SweepConfig { k_values: vec![1, 2, 3], folds: 3, rng_seed: 4, ..Default::default() };
        assert_eq!(sweep(&w, &d, &cfg).unwrap(), sweep(&w, &d, &cfg).unwrap());
    }

    #[test]
    fn tree_method_runs() {
        let (w, d) = small();
        let cfg = SweepConfig {
            k_values: vec![1, 2],
            folds: 3,
            method: CohortMethod::Tree { min_leaf: 1 },
            ..Default::default()
        };
        let rep = sweep(&w, &d, &cfg).unwrap();
        assert_eq!(rep.selected_k, 2);
        assert!(rep.runs.iter().all(|r| r.cohorts <= r.k));
    }

    #[test]
    fn ties_go_to_smaller_k() {
        // Constant importances: every k predicts perfectly.
        let w = ImportanceMatrix::from_rows_unnamed(&vec![vec![0.5, -0.5]; 6]).unwrap();
        let (_, d) = small();
        let cfg = SweepConfig { k_values: vec![3, 1, 2], folds: 2, ..Default::default() };
        assert_eq!(sweep(&w, &d, &cfg).unwrap().selected_k, 1);
    }
}
