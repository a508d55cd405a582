//! Turning raw descriptor columns into binary tags.
//!
//! Continuous columns are cut at empirical quantiles into half-open bins
//! `[lo, hi)`, categorical columns are one-hot encoded in order of first
//! appearance, and binary columns become a `yes`/`no` tag pair. Each
//! descriptor therefore contributes a group of tags of which every sample
//! carries exactly one.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::numfmt::fmt_sig;
use crate::types::{TagDerivationConfig, TagMatrix, TagRule};

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Continuous(Vec<f64>),
    Categorical(Vec<String>),
    Binary(Vec<bool>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Continuous(v) => v.len(),
            Column::Categorical(v) => v.len(),
            Column::Binary(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Column::Continuous(_) => "continuous",
            Column::Categorical(_) => "categorical",
            Column::Binary(_) => "binary",
        }
    }
}

/// Descriptor features, one typed column per name, no missing values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    names: Vec<String>,
    columns: Vec<Column>,
    n_rows: usize,
}

impl FeatureTable {
    pub fn new(columns: Vec<(String, Column)>) -> Result<Self> {
        let n_rows = columns.first().map_or(0, |(_, c)| c.len());
        let mut seen = HashSet::new();
        for (name, col) in &columns {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateName(name.clone()));
            }
            if col.len() != n_rows {
                return Err(Error::DimensionMismatch {
                    what: "feature column length",
                    expected: n_rows,
                    actual: col.len(),
                });
            }
            if let Column::Continuous(values) = col {
                if let Some(row) = values.iter().position(|v| !v.is_finite()) {
                    return Err(Error::MissingValue {
                        column: name.clone(),
                        row,
                    });
                }
            }
        }
        let (names, columns) = columns.into_iter().unzip();
        Ok(Self {
            names,
            columns,
            n_rows,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.columns[i])
    }

    pub fn columns(&self) -> impl Iterator<Item = (&str, &Column)> {
        self.names.iter().map(String::as_str).zip(&self.columns)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let columns = self
            .columns
            .iter()
            .map(|c| match c {
                Column::Continuous(v) => Column::Continuous(rows.iter().map(|&i| v[i]).collect()),
                Column::Categorical(v) => {
                    Column::Categorical(rows.iter().map(|&i| v[i].clone()).collect())
                }
                Column::Binary(v) => Column::Binary(rows.iter().map(|&i| v[i]).collect()),
            })
            .collect();
        Self {
            names: self.names.clone(),
            columns,
            n_rows: rows.len(),
        }
    }
}

/// Interior bin edges at the `i/q` empirical quantiles (linear interpolation
/// between order statistics), for `i = 1..q`.
///
/// Duplicate edges are merged, and edges at or below the column minimum are
/// dropped because they would only bound an empty lowest bin.
pub fn quantile_edges(values: &[f64], q: usize) -> Result<Vec<f64>> {
    if q < 2 {
        return Err(Error::InvalidConfig(format!("quantile count must be >= 2, got {q}")));
    }
    if values.is_empty() {
        return Err(Error::Empty("no values to bin"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let min = sorted[0];
    let mut edges: Vec<f64> = Vec::with_capacity(q - 1);
    for i in 1..q {
        let h = (n - 1) as f64 * i as f64 / q as f64;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        let e = sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]);
        if e > min && edges.last().is_none_or(|&last| e > last) {
            edges.push(e);
        }
    }
    if edges.is_empty() {
        return Err(Error::DegenerateBins("<values>".into()));
    }
    Ok(edges)
}

/// Index of the half-open bin containing `v`; values equal to an edge fall in
/// the bin above it.
pub fn bin_index(edges: &[f64], v: f64) -> usize {
    edges.partition_point(|&e| e <= v)
}

fn bin_labels(name: &str, edges: &[f64]) -> Vec<String> {
    let mut labels = Vec::with_capacity(edges.len() + 1);
    labels.push(format!("{name}<{}", fmt_sig(edges[0])));
    for pair in edges.windows(2) {
        labels.push(format!("{}<={name}<{}", fmt_sig(pair[0]), fmt_sig(pair[1])));
    }
    labels.push(format!("{}<={name}", fmt_sig(edges[edges.len() - 1])));
    labels
}

/// One descriptor's contribution: its tag labels and the active tag per row.
struct TagGroup {
    labels: Vec<String>,
    active: Vec<usize>,
}

fn derive_group(name: &str, column: &Column, rule: TagRule) -> Result<TagGroup> {
    let mismatch = |expected| Error::KindMismatch {
        column: name.to_string(),
        rule: rule.name(),
        expected,
        actual: column.kind(),
    };
    match (rule, column) {
        (TagRule::Quantile(q), Column::Continuous(values)) => {
            let edges = quantile_edges(values, q).map_err(|e| match e {
                Error::DegenerateBins(_) => Error::DegenerateBins(name.to_string()),
                other => other,
            })?;
            Ok(TagGroup {
                labels: bin_labels(name, &edges),
                active: values.iter().map(|&v| bin_index(&edges, v)).collect(),
            })
        }
        (TagRule::Quantile(_), _) => Err(mismatch("continuous")),
        (TagRule::OneHot, Column::Categorical(values)) => {
            let mut categories: Vec<&str> = Vec::new();
            let active = values
                .iter()
                .map(|v| match categories.iter().position(|c| c == v) {
                    Some(i) => i,
                    None => {
                        categories.push(v);
                        categories.len() - 1
                    }
                })
                .collect();
            Ok(TagGroup {
                labels: categories.iter().map(|c| format!("{name}={c}")).collect(),
                active,
            })
        }
        (TagRule::OneHot, _) => Err(mismatch("categorical")),
        (TagRule::Passthrough, Column::Binary(values)) => Ok(TagGroup {
            labels: vec![format!("{name}=yes"), format!("{name}=no")],
            active: values.iter().map(|&b| usize::from(!b)).collect(),
        }),
        (TagRule::Passthrough, _) => Err(mismatch("binary")),
    }
}

/// Applies every descriptor rule and concatenates the tag groups in rule order.
pub fn derive_tags(table: &FeatureTable, config: &TagDerivationConfig) -> Result<TagMatrix> {
    config.validate()?;
    let mut labels = Vec::new();
    let mut rows = vec![Vec::new(); table.n_rows()];
    for rule in &config.rules {
        let column = table
            .column(&rule.column)
            .ok_or_else(|| Error::UnknownColumn(rule.column.clone()))?;
        let group = derive_group(&rule.column, column, rule.rule)?;
        let width = group.labels.len();
        for (row, &a) in rows.iter_mut().zip(&group.active) {
            row.extend((0..width).map(|b| u8::from(b == a)));
        }
        labels.extend(group.labels);
    }
    TagMatrix::from_rows(&rows, labels)
}
