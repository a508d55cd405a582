//! Shared data model: importance and tag matrices, partitions, cohort models.
//!
//! All types are immutable once constructed; constructors enforce the
//! invariants so downstream code can index without re-checking.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::bits::{self, TagSet};
use crate::error::{Error, Result};
use crate::objective;

fn check_unique(names: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(names.len());
    for name in names {
        if !seen.insert(name.as_str()) {
            return Err(Error::DuplicateName(name.clone()));
        }
    }
    Ok(())
}

/// Dense `n x m` matrix of local importance scores, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceMatrix {
    values: Vec<f64>,
    n_rows: usize,
    feature_names: Vec<String>,
}

impl ImportanceMatrix {
    /// Builds from row-major `values`; the column count is `feature_names.len()`.
    pub fn new(values: Vec<f64>, feature_names: Vec<String>) -> Result<Self> {
        let m = feature_names.len();
        if m == 0 {
            return Err(Error::Empty("importance matrix has no features"));
        }
        if values.is_empty() {
            return Err(Error::Empty("importance matrix has no rows"));
        }
        if !values.len().is_multiple_of(m) {
            return Err(Error::DimensionMismatch {
                what: "importance values per row",
                expected: m,
                actual: values.len() % m,
            });
        }
        check_unique(&feature_names)?;
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / m,
                col: pos % m,
            });
        }
        Ok(Self {
            n_rows: values.len() / m,
            values,
            feature_names,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], feature_names: Vec<String>) -> Result<Self> {
        let m = feature_names.len();
        let mut values = Vec::with_capacity(rows.len() * m);
        for row in rows {
            if row.len() != m {
                return Err(Error::DimensionMismatch {
                    what: "importance row length",
                    expected: m,
                    actual: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::new(values, feature_names)
    }

    /// Convenience constructor naming features `f0..f{m-1}`.
    pub fn from_rows_unnamed(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        Self::from_rows(rows, (0..m).map(|j| format!("f{j}")).collect())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.n_features();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_features())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Column-wise arithmetic mean.
    pub fn mean(&self) -> Vec<f64> {
        mean_of_rows(self, 0..self.n_rows)
    }

    /// New matrix holding the given rows in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * self.n_features());
        for &i in rows {
            values.extend_from_slice(self.row(i));
        }
        Self {
            values,
            n_rows: rows.len(),
            feature_names: self.feature_names.clone(),
        }
    }
}

/// Arithmetic mean of the selected rows (zero vector when the selection is empty).
pub(crate) fn mean_of_rows(
    w: &ImportanceMatrix,
    rows: impl IntoIterator<Item = usize>,
) -> Vec<f64> {
    let mut acc = vec![0.0; w.n_features()];
    let mut count = 0usize;
    for i in rows {
        for (a, v) in acc.iter_mut().zip(w.row(i)) {
            *a += v;
        }
        count += 1;
    }
    if count > 0 {
        for a in &mut acc {
            *a /= count as f64;
        }
    }
    acc
}

/// Binary `n x r` tag matrix with its dictionary of tag labels.
///
/// Rows are stored as packed bit rows of `words` limbs each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagMatrix {
    bits: Vec<u64>,
    n_rows: usize,
    words: usize,
    labels: Vec<String>,
}

impl TagMatrix {
    pub fn from_rows(rows: &[Vec<u8>], labels: Vec<String>) -> Result<Self> {
        check_unique(&labels)?;
        let r = labels.len();
        let words = bits::words_for(r);
        let mut packed = vec![0u64; rows.len() * words];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != r {
                return Err(Error::DimensionMismatch {
                    what: "tag row length",
                    expected: r,
                    actual: row.len(),
                });
            }
            let dst = &mut packed[i * words..(i + 1) * words];
            for (p, &v) in row.iter().enumerate() {
                match v {
                    0 => {}
                    1 => bits::set(dst, p),
                    value => return Err(Error::NonBinary { row: i, col: p, value }),
                }
            }
        }
        Ok(Self {
            bits: packed,
            n_rows: rows.len(),
            words,
            labels,
        })
    }

    /// Builds from boolean rows; binariness holds by construction.
    pub fn from_bool_rows(rows: &[Vec<bool>], labels: Vec<String>) -> Result<Self> {
        let rows: Vec<Vec<u8>> = rows
            .iter()
            .map(|r| r.iter().map(|&b| u8::from(b)).collect())
            .collect();
        Self::from_rows(&rows, labels)
    }

    /// Convenience constructor labelling tags `t0..t{r-1}`.
    pub fn from_rows_unnamed(rows: &[Vec<u8>]) -> Result<Self> {
        let r = rows.first().map_or(0, Vec::len);
        Self::from_rows(rows, (0..r).map(|p| format!("t{p}")).collect())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_tags(&self) -> usize {
        self.labels.len()
    }

    /// Limbs per packed row.
    pub fn words(&self) -> usize {
        self.words
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    pub fn get(&self, i: usize, p: usize) -> bool {
        bits::get(self.row(i), p)
    }

    /// Number of tags carried by sample `i`.
    pub fn row_count(&self, i: usize) -> usize {
        bits::popcount(self.row(i))
    }

    pub fn row_set(&self, i: usize) -> TagSet {
        TagSet::from_words(self.row(i).to_vec(), self.n_tags())
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut packed = Vec::with_capacity(rows.len() * self.words);
        for &i in rows {
            packed.extend_from_slice(self.row(i));
        }
        Self {
            bits: packed,
            n_rows: rows.len(),
            words: self.words,
            labels: self.labels.clone(),
        }
    }

    /// Errors unless `other` uses the identical tag dictionary.
    pub fn check_same_dictionary(&self, other: &TagMatrix) -> Result<()> {
        if self.labels != other.labels {
            return Err(Error::DictionaryMismatch(format!(
                "expected {} tags, got {} (or labels differ)",
                self.n_tags(),
                other.n_tags()
            )));
        }
        Ok(())
    }
}

/// Checks that an importance matrix and tag matrix describe the same samples.
pub fn validate_inputs(w: &ImportanceMatrix, d: &TagMatrix) -> Result<()> {
    if w.n_rows() != d.n_rows() {
        return Err(Error::DimensionMismatch {
            what: "tag matrix rows",
            expected: w.n_rows(),
            actual: d.n_rows(),
        });
    }
    Ok(())
}

/// Assignment of samples to `k` non-empty cohorts in canonical form.
///
/// Internally labels are 0-based; [`Partition::to_one_based`] gives the
/// user-facing 1-based labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    labels: Vec<usize>,
    k: usize,
}

impl Partition {
    /// Relabels cohorts by order of first occurrence. Any label values are
    /// accepted; only co-membership matters.
    pub fn canonicalize(assignment: &[usize]) -> Result<Self> {
        if assignment.is_empty() {
            return Err(Error::EmptyAssignment);
        }
        let mut map: Vec<(usize, usize)> = Vec::new();
        let labels = assignment
            .iter()
            .map(|&a| match map.iter().find(|(from, _)| *from == a) {
                Some(&(_, to)) => to,
                None => {
                    let to = map.len();
                    map.push((a, to));
                    to
                }
            })
            .collect();
        Ok(Self { labels, k: map.len() })
    }

    /// Validates a 1-based assignment that must already be canonical with
    /// exactly `k` non-empty cohorts.
    pub fn from_one_based(assignment: &[usize], k: usize) -> Result<Self> {
        if assignment.is_empty() {
            return Err(Error::EmptyAssignment);
        }
        if k == 0 || k > assignment.len() {
            return Err(Error::InfeasibleK {
                k,
                n: assignment.len(),
            });
        }
        let labels: Vec<usize> = assignment
            .iter()
            .map(|&a| {
                if a == 0 || a > k {
                    Err(Error::InvalidConfig(format!("cohort label {a} outside 1..={k}")))
                } else {
                    Ok(a - 1)
                }
            })
            .collect::<Result<_>>()?;
        Self::from_labels(labels, k)
    }

    /// Validates a 0-based canonical assignment.
    pub fn from_labels(labels: Vec<usize>, k: usize) -> Result<Self> {
        let mut next = 0usize;
        for &l in &labels {
            if l > next {
                return Err(Error::NotCanonical {
                    label: l + 1,
                    previous: next + 1,
                });
            }
            if l == next {
                next += 1;
            }
        }
        if next < k {
            return Err(Error::EmptyCohort(next + 1));
        }
        if next > k {
            return Err(Error::InvalidConfig(format!("labels exceed k={k}")));
        }
        Ok(Self { labels, k })
    }

    pub(crate) fn from_canonical_unchecked(labels: Vec<usize>, k: usize) -> Self {
        debug_assert!(Self::from_labels(labels.clone(), k).is_ok());
        Self { labels, k }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// 0-based cohort label per sample.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l + 1).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn members(&self, cohort: usize) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(move |(_, &l)| l == cohort)
            .map(|(i, _)| i)
    }

    /// True when samples `i` and `j` share a cohort.
    pub fn same_cohort(&self, i: usize, j: usize) -> bool {
        self.labels[i] == self.labels[j]
    }
}

/// Tag-described cohort explanation: partition, per-cohort tag sets and
/// per-cohort mean importance vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortModel {
    pub partition: Partition,
    /// Exactly the tags shared by every member of each cohort.
    pub tag_sets: Vec<TagSet>,
    /// `k x m` mean importance per cohort.
    pub cohort_means: Vec<Vec<f64>>,
    /// Mean importance over the whole training set; used for relative views and
    /// as the fallback prediction for samples matching no cohort.
    pub dataset_mean: Vec<f64>,
    pub descriptiveness: usize,
    pub compactness: f64,
    pub tag_labels: Vec<String>,
    pub feature_names: Vec<String>,
}

impl CohortModel {
    /// Derives every model field from the partition and the training data.
    pub fn fit(w: &ImportanceMatrix, d: &TagMatrix, partition: Partition) -> Result<Self> {
        validate_inputs(w, d)?;
        if partition.len() != w.n_rows() {
            return Err(Error::DimensionMismatch {
                what: "partition length",
                expected: w.n_rows(),
                actual: partition.len(),
            });
        }
        let tag_sets = objective::derive_tag_sets(d, &partition)?;
        let cohort_means = (0..partition.k())
            .map(|t| mean_of_rows(w, partition.members(t)))
            .collect();
        let descriptiveness = tag_sets.iter().map(TagSet::len).min().unwrap_or(0);
        let compactness = objective::compactness(w, &partition)?;
        Ok(Self {
            dataset_mean: w.mean(),
            partition,
            tag_sets,
            cohort_means,
            descriptiveness,
            compactness,
            tag_labels: d.labels().to_vec(),
            feature_names: w.feature_names().to_vec(),
        })
    }

    pub fn k(&self) -> usize {
        self.partition.k()
    }

    /// Human-readable tag labels describing cohort `t` (0-based).
    pub fn cohort_tags(&self, t: usize) -> Vec<&str> {
        self.tag_sets[t]
            .indices()
            .map(|p| self.tag_labels[p].as_str())
            .collect()
    }

    /// Cohort mean minus dataset mean, per cohort.
    pub fn relative_means(&self) -> Vec<Vec<f64>> {
        self.cohort_means
            .iter()
            .map(|mean| {
                mean.iter()
                    .zip(&self.dataset_mean)
                    .map(|(c, g)| c - g)
                    .collect()
            })
            .collect()
    }
}

/// How one descriptor column becomes binary tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagRule {
    /// Continuous column split at its `q`-quantiles.
    Quantile(usize),
    /// Categorical column, one tag per observed category.
    OneHot,
    /// Already-binary column, tags `col=yes` / `col=no`.
    Passthrough,
}

impl TagRule {
    pub fn name(&self) -> &'static str {
        match self {
            TagRule::Quantile(_) => "quantile",
            TagRule::OneHot => "one_hot",
            TagRule::Passthrough => "passthrough",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptorRule {
    pub column: String,
    pub rule: TagRule,
}

/// Ordered list of descriptor columns and their tag rules.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TagDerivationConfig {
    pub rules: Vec<DescriptorRule>,
}

impl TagDerivationConfig {
    pub fn new(rules: impl IntoIterator<Item = (impl Into<String>, TagRule)>) -> Self {
        Self {
            rules: rules
                .into_iter()
                .map(|(column, rule)| DescriptorRule {
                    column: column.into(),
                    rule,
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.rules {
            if !seen.insert(r.column.as_str()) {
                return Err(Error::DuplicateName(r.column.clone()));
            }
            if let TagRule::Quantile(q) = r.rule {
                if q < 2 {
                    return Err(Error::InvalidConfig(format!(
                        "quantile rule on `{}` needs q >= 2, got {q}",
                        r.column
                    )));
                }
            }
        }
        Ok(())
    }
}
