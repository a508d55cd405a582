//! Decision-tree cohort baseline (REPID-style).
//!
//! The tree splits on tag columns (tag present / absent), growing best-first:
//! at every step the leaf whose best split removes the most within-leaf sum
//! of squared deviations of importance vectors is split, until `k` leaves
//! exist or no split reduces the error. Leaves are disjoint cohorts, so every
//! sample routes to exactly one of them.
//!
//! This differs from the original REPID, which partitions on raw features;
//! splitting on tags puts the baseline on the same description vocabulary.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{error_summary, squared_error, PredictionError};
use crate::types::{mean_of_rows, ImportanceMatrix, Partition, TagMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TreeOptions {
    /// Smallest number of samples a leaf may hold.
    pub min_leaf: usize,
}

impl Default for TreeOptions {
    fn default() -> Self {
        Self { min_leaf: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(usize),
    Split {
        tag: usize,
        present: Box<Node>,
        absent: Box<Node>,
    },
}

/// One leaf: the path of (tag, present?) tests leading to it and its members.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeLeaf {
    pub path: Vec<(usize, bool)>,
    pub members: Vec<usize>,
    pub mean: Vec<f64>,
    /// Within-leaf sum of squared deviations from `mean`.
    pub sse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeCohortModel {
    root: Node,
    /// Ordered by each leaf's first training member.
    pub leaves: Vec<TreeLeaf>,
    /// Growth stopped before `k` leaves because no split helped.
    pub early_stop: bool,
    /// Gain of each accepted split, in acceptance order.
    pub split_gains: Vec<f64>,
    pub tag_labels: Vec<String>,
    pub feature_names: Vec<String>,
    pub dataset_mean: Vec<f64>,
}

struct Candidate {
    gain: f64,
    tag: usize,
}

fn leaf_stats(rows: &[f64], m: usize, members: &[usize]) -> f64 {
    let mut sum = vec![0.0; m];
    let mut sq = 0.0;
    for &i in members {
        for (s, v) in sum.iter_mut().zip(&rows[i * m..(i + 1) * m]) {
            *s += v;
            sq += v * v;
        }
    }
    let norm: f64 = sum.iter().map(|s| s * s).sum();
    (sq - norm / members.len().max(1) as f64).max(0.0)
}

fn best_split(
    rows: &[f64],
    m: usize,
    d: &TagMatrix,
    members: &[usize],
    opts: &TreeOptions,
) -> Option<Candidate> {
    let parent = leaf_stats(rows, m, members);
    let mut best: Option<Candidate> = None;
    for tag in 0..d.n_tags() {
        let (present, absent): (Vec<usize>, Vec<usize>) =
            members.iter().partition(|&&i| d.get(i, tag));
        if present.len() < opts.min_leaf.max(1) || absent.len() < opts.min_leaf.max(1) {
            continue;
        }
        let gain = parent - leaf_stats(rows, m, &present) - leaf_stats(rows, m, &absent);
        if best.as_ref().is_none_or(|b| gain > b.gain) {
            best = Some(Candidate { gain, tag });
        }
    }
    best
}

fn replace_leaf(node: &mut Node, target: usize, tag: usize, present: usize, absent: usize) {
    match node {
        Node::Leaf(l) if *l == target => {
            *node = Node::Split {
                tag,
                present: Box::new(Node::Leaf(present)),
                absent: Box::new(Node::Leaf(absent)),
            };
        }
        Node::Leaf(_) => {}
        Node::Split { present: p, absent: a, .. } => {
            replace_leaf(p, target, tag, present, absent);
            replace_leaf(a, target, tag, present, absent);
        }
    }
}

fn relabel(node: &mut Node, map: &[usize]) {
    match node {
        Node::Leaf(l) => *l = map[*l],
        Node::Split { present, absent, .. } => {
            relabel(present, map);
            relabel(absent, map);
        }
    }
}

pub fn fit_tree(w: &ImportanceMatrix, d: &TagMatrix, k: usize) -> Result<TreeCohortModel> {
    fit_tree_with(w, d, k, &TreeOptions::default())
}

pub fn fit_tree_with(
    w: &ImportanceMatrix,
    d: &TagMatrix,
    k: usize,
    opts: &TreeOptions,
) -> Result<TreeCohortModel> {
    crate::types::validate_inputs(w, d)?;
    let n = w.n_rows();
    if k == 0 || k > n {
        return Err(Error::KTooLarge { k, fold_size: n });
    }
    let m = w.n_features();
    let dataset_mean = w.mean();
    let mut rows = Vec::with_capacity(n * m);
    for row in w.rows() {
        rows.extend(row.iter().zip(&dataset_mean).map(|(v, mu)| v - mu));
    }
    // Splits must beat rounding noise relative to the raw importance scale.
    let scale: f64 = w.as_slice().iter().map(|v| v * v).sum();
    let min_gain = 1e-12 * scale;

    let mut members: Vec<Vec<usize>> = vec![(0..n).collect()];
    let mut paths: Vec<Vec<(usize, bool)>> = vec![Vec::new()];
    let mut candidates: Vec<Option<Candidate>> = vec![best_split(&rows, m, d, &members[0], opts)];
    let mut root = Node::Leaf(0);
    let mut split_gains = Vec::new();
    let mut early_stop = false;

    while members.len() < k {
        let pick = candidates
            .iter()
            .enumerate()
            .filter_map(|(l, c)| c.as_ref().map(|c| (l, c.gain, c.tag)))
            .fold(None, |best: Option<(usize, f64, usize)>, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            });
        let Some((leaf, gain, tag)) = pick.filter(|&(_, g, _)| g > min_gain) else {
            early_stop = true;
            break;
        };
        let (present, absent): (Vec<usize>, Vec<usize>) =
            members[leaf].iter().partition(|&&i| d.get(i, tag));
        let base = paths[leaf].clone();
        let new_leaf = members.len();
        replace_leaf(&mut root, leaf, tag, leaf, new_leaf);
        candidates[leaf] = best_split(&rows, m, d, &present, opts);
        candidates.push(best_split(&rows, m, d, &absent, opts));
        paths[leaf] = [base.as_slice(), &[(tag, true)]].concat();
        paths.push([base.as_slice(), &[(tag, false)]].concat());
        members[leaf] = present;
        members.push(absent);
        split_gains.push(gain);
    }

    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by_key(|&l| members[l][0]);
    let mut map = vec![0; members.len()];
    for (new, &old) in order.iter().enumerate() {
        map[old] = new;
    }
    relabel(&mut root, &map);
    let leaves = order
        .iter()
        .map(|&l| TreeLeaf {
            path: paths[l].clone(),
            mean: mean_of_rows(w, members[l].iter().copied()),
            sse: leaf_stats(&rows, m, &members[l]),
            members: members[l].clone(),
        })
        .collect();

    Ok(TreeCohortModel {
        root,
        leaves,
        early_stop,
        split_gains,
        tag_labels: d.labels().to_vec(),
        feature_names: w.feature_names().to_vec(),
        dataset_mean,
    })
}

impl TreeCohortModel {
    pub fn k(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaf_sizes(&self) -> Vec<usize> {
        self.leaves.iter().map(|l| l.members.len()).collect()
    }

    /// Leaf reached by a packed tag row.
    pub fn route(&self, row: &[u64]) -> usize {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf(l) => return *l,
                Node::Split { tag, present, absent } => {
                    node = if crate::bits::get(row, *tag) { present } else { absent };
                }
            }
        }
    }

    /// Canonical partition of the training samples into leaves.
    pub fn partition(&self) -> Partition {
        let n = self.leaves.iter().map(|l| l.members.len()).sum();
        let mut labels = vec![0; n];
        for (t, leaf) in self.leaves.iter().enumerate() {
            for &i in &leaf.members {
                labels[i] = t;
            }
        }
        Partition::from_canonical_unchecked(labels, self.leaves.len())
    }

    /// Human-readable conditions on the path to leaf `t`.
    pub fn leaf_description(&self, t: usize) -> Vec<String> {
        self.leaves[t]
            .path
            .iter()
            .map(|&(tag, present)| {
                let label = &self.tag_labels[tag];
                if present {
                    label.clone()
                } else {
                    format!("not({label})")
                }
            })
            .collect()
    }
}

/// Leaf-mean prediction for every evaluation row.
pub fn tree_predict_importance(model: &TreeCohortModel, d_eval: &TagMatrix) -> Result<Vec<Vec<f64>>> {
    if model.tag_labels.as_slice() != d_eval.labels() {
        return Err(Error::DictionaryMismatch(format!(
            "tree has {} tags, evaluation data has {}",
            model.tag_labels.len(),
            d_eval.n_tags()
        )));
    }
    Ok((0..d_eval.n_rows())
        .map(|i| model.leaves[model.route(d_eval.row(i))].mean.clone())
        .collect())
}

pub fn tree_prediction_error(
    model: &TreeCohortModel,
    w_eval: &ImportanceMatrix,
    d_eval: &TagMatrix,
) -> Result<PredictionError> {
    let predictions = tree_predict_importance(model, d_eval)?;
    let total = squared_error(w_eval, &predictions)?;
    Ok(error_summary(total, w_eval.n_rows(), 0))
}
