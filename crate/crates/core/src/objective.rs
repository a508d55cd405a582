//! The two objectives of tag-described clustering.
//!
//! * compactness: sum over cohorts of the squared Euclidean distance between
//!   every unordered pair of member importance rows. Lower is better.
//! * descriptiveness: the smallest number of tags shared by all members of a
//!   cohort, taken over cohorts. Higher is better.

use crate::bits::{self, TagSet};
use crate::error::{Error, Result};
use crate::types::{ImportanceMatrix, Partition, TagMatrix};

fn check_len(what: &'static str, expected: usize, p: &Partition) -> Result<()> {
    if p.len() != expected {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            actual: p.len(),
        });
    }
    Ok(())
}

/// Running sums for one cohort; the pairwise cost follows from
/// `sum_{i<j} |w_i - w_j|^2 = n * sum |w_i|^2 - |sum w_i|^2`.
#[derive(Debug, Clone)]
pub(crate) struct CohortSums {
    pub count: usize,
    pub sum: Vec<f64>,
    pub sum_sq: f64,
}

impl CohortSums {
    pub fn new(m: usize) -> Self {
        Self {
            count: 0,
            sum: vec![0.0; m],
            sum_sq: 0.0,
        }
    }

    /// Pairwise cost added by inserting `row` into this cohort.
    #[inline]
    pub fn insert_cost(&self, row: &[f64], row_sq: f64) -> f64 {
        let dot: f64 = row.iter().zip(&self.sum).map(|(a, b)| a * b).sum();
        self.count as f64 * row_sq - 2.0 * dot + self.sum_sq
    }

    /// Pairwise cost removed by taking `row` (a current member) out.
    #[inline]
    pub fn remove_cost(&self, row: &[f64], row_sq: f64) -> f64 {
        let dot: f64 = row.iter().zip(&self.sum).map(|(a, b)| a * b).sum();
        // Pairs between `row` and the other members: (n-1)|x|^2 - 2x.(S-x) + (Q-|x|^2)
        (self.count as f64 - 1.0) * row_sq - 2.0 * (dot - row_sq) + (self.sum_sq - row_sq)
    }

    pub fn insert(&mut self, row: &[f64], row_sq: f64) {
        self.count += 1;
        for (s, v) in self.sum.iter_mut().zip(row) {
            *s += v;
        }
        self.sum_sq += row_sq;
    }

    pub fn remove(&mut self, row: &[f64], row_sq: f64) {
        self.count -= 1;
        for (s, v) in self.sum.iter_mut().zip(row) {
            *s -= v;
        }
        self.sum_sq -= row_sq;
    }

    pub fn cost(&self) -> f64 {
        let norm_sq: f64 = self.sum.iter().map(|s| s * s).sum();
        (self.count as f64 * self.sum_sq - norm_sq).max(0.0)
    }
}

/// Importance rows shifted by the dataset mean. Pairwise distances are
/// translation invariant, and centring keeps the sum identity well conditioned.
pub(crate) fn centered_rows(w: &ImportanceMatrix) -> (Vec<f64>, Vec<f64>) {
    let mean = w.mean();
    let m = w.n_features();
    let mut rows = Vec::with_capacity(w.n_rows() * m);
    let mut sq = Vec::with_capacity(w.n_rows());
    for row in w.rows() {
        let mut s = 0.0;
        for (v, mu) in row.iter().zip(&mean) {
            let c = v - mu;
            rows.push(c);
            s += c * c;
        }
        sq.push(s);
    }
    (rows, sq)
}

/// Total within-cohort pairwise squared distance, each unordered pair once.
pub fn compactness(w: &ImportanceMatrix, p: &Partition) -> Result<f64> {
    check_len("partition length", w.n_rows(), p)?;
    let m = w.n_features();
    let (rows, sq) = centered_rows(w);
    let mut sums = vec![CohortSums::new(m); p.k()];
    for (i, &t) in p.labels().iter().enumerate() {
        sums[t].insert(&rows[i * m..(i + 1) * m], sq[i]);
    }
    Ok(sums.iter().map(CohortSums::cost).sum())
}

/// Per cohort, the set of tags carried by every member.
pub fn derive_tag_sets(d: &TagMatrix, p: &Partition) -> Result<Vec<TagSet>> {
    check_len("partition length", d.n_rows(), p)?;
    let words = d.words();
    let mut acc = vec![u64::MAX; p.k() * words];
    for (i, &t) in p.labels().iter().enumerate() {
        bits::and_assign(&mut acc[t * words..(t + 1) * words], d.row(i));
    }
    Ok((0..p.k())
        .map(|t| {
            let w = acc[t * words..(t + 1) * words].to_vec();
            TagSet::from_words(mask_tail(w, d.n_tags()), d.n_tags())
        })
        .collect())
}

fn mask_tail(mut words: Vec<u64>, width: usize) -> Vec<u64> {
    if !width.is_multiple_of(64) {
        if let Some(last) = words.last_mut() {
            *last &= (1u64 << (width % 64)) - 1;
        }
    }
    words
}

/// Minimum over cohorts of the number of tags shared by all members.
pub fn descriptiveness(d: &TagMatrix, p: &Partition) -> Result<usize> {
    Ok(derive_tag_sets(d, p)?
        .iter()
        .map(TagSet::len)
        .min()
        .unwrap_or(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn part(a: &[usize]) -> Partition {
        Partition::canonicalize(a).unwrap()
    }

    #[test]
    fn singletons_have_zero_compactness() {
        let w = ImportanceMatrix::from_rows_unnamed(&[vec![1.0, 2.0], vec![-3.0, 0.5], vec![7.0, 7.0]])
            .unwrap();
        assert_eq!(compactness(&w, &part(&[1, 2, 3])).unwrap(), 0.0);
    }

    #[test]
    fn single_pair_distance() {
        let w = ImportanceMatrix::from_rows_unnamed(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        assert!((compactness(&w, &part(&[1, 1])).unwrap() - 25.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_point_counts_pairs_once() {
        let w = ImportanceMatrix::from_rows_unnamed(&[vec![0.0, 0.0], vec![3.0, 4.0], vec![3.0, 4.0]])
            .unwrap();
        assert!((compactness(&w, &part(&[1, 1, 1])).unwrap() - 50.0).abs() < 1e-12);
    }

    #[test]
    fn compactness_length_mismatch() {
        let w = ImportanceMatrix::from_rows_unnamed(&[vec![0.0]]).unwrap();
        assert!(matches!(
            compactness(&w, &part(&[1, 1])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn descriptiveness_hand_and() {
        let d = TagMatrix::from_rows_unnamed(&[vec![1, 1, 0, 1], vec![1, 0, 0, 1], vec![0, 1, 1, 1]])
            .unwrap();
        let p = part(&[1, 1, 2]);
        assert_eq!(descriptiveness(&d, &p).unwrap(), 2);
        let sets = derive_tag_sets(&d, &p).unwrap();
        assert_eq!(sets[0].indices().collect::<Vec<_>>(), vec![0, 3]);
        assert_eq!(sets[1].indices().collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn singleton_descriptiveness_is_min_row_count() {
        let d = TagMatrix::from_rows_unnamed(&[vec![1, 1, 0], vec![1, 0, 0], vec![1, 1, 1]]).unwrap();
        assert_eq!(descriptiveness(&d, &part(&[1, 2, 3])).unwrap(), 1);
    }

    #[test]
    fn disjoint_rows_give_empty_set() {
        let d = TagMatrix::from_rows_unnamed(&[vec![1, 0], vec![0, 1]]).unwrap();
        assert_eq!(descriptiveness(&d, &part(&[1, 1])).unwrap(), 0);
    }

    #[test]
    fn tag_sets_examples() {
        let d = TagMatrix::from_rows_unnamed(&[vec![1, 1], vec![1, 0]]).unwrap();
        let sets = derive_tag_sets(&d, &part(&[1, 1])).unwrap();
        assert_eq!(sets[0].indices().collect::<Vec<_>>(), vec![0]);
        let sets = derive_tag_sets(&d, &part(&[1, 2])).unwrap();
        assert_eq!(sets[0].indices().collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(sets[1].indices().collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn empty_dictionary() {
        let d = TagMatrix::from_rows(&[vec![], vec![]], vec![]).unwrap();
        let sets = derive_tag_sets(&d, &part(&[1, 2])).unwrap();
        assert_eq!(sets.len(), 2);
        assert!(sets.iter().all(TagSet::is_empty));
    }

    #[test]
    fn remove_cost_inverts_insert_cost() {
        let rows = [vec![1.0, -2.0], vec![0.5, 3.0], vec![-1.5, 0.25]];
        let mut s = CohortSums::new(2);
        for r in &rows[..2] {
            let sq = r.iter().map(|x| x * x).sum();
            s.insert(r, sq);
        }
        let x = &rows[2];
        let sq: f64 = x.iter().map(|v| v * v).sum();
        let add = s.insert_cost(x, sq);
        s.insert(x, sq);
        assert!((s.remove_cost(x, sq) - add).abs() < 1e-12);
    }
}
