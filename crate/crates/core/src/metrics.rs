//! Evaluation of cohort models on held-out samples.
//!
//! A held-out sample matches every cohort whose full tag description it
//! satisfies; cohorts are not disjoint, so a sample may match several or none.
//! Its predicted importance is the average of the matched cohorts' means, or
//! the training-set mean when nothing matches (reported as fallback).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::{CohortModel, ImportanceMatrix, TagMatrix};

/// Matched cohorts (0-based) per evaluation sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchSet {
    pub matches: Vec<Vec<usize>>,
    /// Some sample matched no cohort.
    pub fallback_used: bool,
}

impl MatchSet {
    pub fn fallback_count(&self) -> usize {
        self.matches.iter().filter(|z| z.is_empty()).count()
    }
}

fn check_dictionary(model: &CohortModel, d: &TagMatrix) -> Result<()> {
    if model.tag_labels.as_slice() != d.labels() {
        return Err(Error::DictionaryMismatch(format!(
            "model has {} tags, evaluation data has {}",
            model.tag_labels.len(),
            d.n_tags()
        )));
    }
    Ok(())
}

pub fn match_cohorts(model: &CohortModel, d_eval: &TagMatrix) -> Result<MatchSet> {
    check_dictionary(model, d_eval)?;
    let matches: Vec<Vec<usize>> = (0..d_eval.n_rows())
        .map(|i| {
            let row = d_eval.row(i);
            model
                .tag_sets
                .iter()
                .enumerate()
                .filter(|(_, s)| s.is_satisfied_by(row))
                .map(|(t, _)| t)
                .collect()
        })
        .collect();
    let fallback_used = matches.iter().any(Vec::is_empty);
    Ok(MatchSet {
        matches,
        fallback_used,
    })
}

/// Predicted importance rows for the evaluation tags, with the match sets used.
pub fn predict_importance(model: &CohortModel, d_eval: &TagMatrix) -> Result<(Vec<Vec<f64>>, MatchSet)> {
    let set = match_cohorts(model, d_eval)?;
    let m = model.dataset_mean.len();
    let predictions = set
        .matches
        .iter()
        .map(|z| {
            if z.is_empty() {
                return model.dataset_mean.clone();
            }
            let mut acc = vec![0.0; m];
            for &t in z {
                for (a, v) in acc.iter_mut().zip(&model.cohort_means[t]) {
                    *a += v;
                }
            }
            acc.iter().map(|a| a / z.len() as f64).collect()
        })
        .collect();
    Ok((predictions, set))
}

/// Squared prediction error summed over samples, plus the per-sample mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PredictionError {
    pub total: f64,
    pub mean: f64,
    pub samples: usize,
    pub fallback_count: usize,
}

impl PredictionError {
    pub fn fallback_rate(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.fallback_count as f64 / self.samples as f64
        }
    }
}

/// `sum_i |actual_i - predicted_i|^2` over the rows of `actual`.
pub fn squared_error(actual: &ImportanceMatrix, predicted: &[Vec<f64>]) -> Result<f64> {
    if predicted.len() != actual.n_rows() {
        return Err(Error::DimensionMismatch {
            what: "prediction count",
            expected: actual.n_rows(),
            actual: predicted.len(),
        });
    }
    let mut total = 0.0;
    for (row, pred) in actual.rows().zip(predicted) {
        if pred.len() != row.len() {
            return Err(Error::DimensionMismatch {
                what: "prediction width",
                expected: row.len(),
                actual: pred.len(),
            });
        }
        total += row.iter().zip(pred).map(|(a, p)| (a - p) * (a - p)).sum::<f64>();
    }
    Ok(total)
}

pub(crate) fn error_summary(total: f64, samples: usize, fallback_count: usize) -> PredictionError {
    PredictionError {
        total,
        mean: if samples == 0 { 0.0 } else { total / samples as f64 },
        samples,
        fallback_count,
    }
}

/// Importance prediction error of a tag-described cohort model.
pub fn importance_prediction_error(
    model: &CohortModel,
    w_eval: &ImportanceMatrix,
    d_eval: &TagMatrix,
) -> Result<PredictionError> {
    if w_eval.n_rows() != d_eval.n_rows() {
        return Err(Error::DimensionMismatch {
            what: "evaluation tag rows",
            expected: w_eval.n_rows(),
            actual: d_eval.n_rows(),
        });
    }
    if w_eval.n_features() != model.dataset_mean.len() {
        return Err(Error::DimensionMismatch {
            what: "importance features",
            expected: model.dataset_mean.len(),
            actual: w_eval.n_features(),
        });
    }
    let (predictions, set) = predict_importance(model, d_eval)?;
    let total = squared_error(w_eval, &predictions)?;
    Ok(error_summary(total, w_eval.n_rows(), set.fallback_count()))
}

/// Everything reported about one fitted model on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationEntry {
    pub k: usize,
    pub compactness: f64,
    pub descriptiveness: usize,
    pub cohort_sizes: Vec<usize>,
    pub cohort_tags: Vec<Vec<String>>,
    pub cohort_means: Vec<Vec<f64>>,
    /// Cohort mean minus dataset mean.
    pub relative_means: Vec<Vec<f64>>,
    pub prediction_error: PredictionError,
    pub fallback_rate: f64,
}

pub fn evaluate_model(
    model: &CohortModel,
    w: &ImportanceMatrix,
    d: &TagMatrix,
) -> Result<EvaluationEntry> {
    let prediction_error = importance_prediction_error(model, w, d)?;
    Ok(EvaluationEntry {
        k: model.k(),
        compactness: model.compactness,
        descriptiveness: model.descriptiveness,
        cohort_sizes: model.partition.sizes(),
        cohort_tags: (0..model.k())
            .map(|t| model.cohort_tags(t).into_iter().map(String::from).collect())
            .collect(),
        cohort_means: model.cohort_means.clone(),
        relative_means: model.relative_means(),
        fallback_rate: prediction_error.fallback_rate(),
        prediction_error,
    })
}

/// Adjusted Rand index between two labelings of the same samples.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must have equal length");
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![0u64; ka * kb];
    let mut rows = vec![0u64; ka];
    let mut cols = vec![0u64; kb];
    for (&x, &y) in a.iter().zip(b) {
        table[x * kb + y] += 1;
        rows[x] += 1;
        cols[y] += 1;
    }
    let pairs = |c: u64| (c * c.saturating_sub(1) / 2) as f64;
    let index: f64 = table.iter().map(|&c| pairs(c)).sum();
    let row_sum: f64 = rows.iter().map(|&c| pairs(c)).sum();
    let col_sum: f64 = cols.iter().map(|&c| pairs(c)).sum();
    let total = pairs(n as u64);
    if total == 0.0 {
        return 1.0;
    }
    let expected = row_sum * col_sum / total;
    let max = 0.5 * (row_sum + col_sum);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
