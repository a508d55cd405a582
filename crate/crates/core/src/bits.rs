//! Fixed-width bit rows used for tag membership.
//!
//! Every row of a [`TagMatrix`](crate::TagMatrix) is stored as `words` 64-bit
//! limbs; AND and popcount over these limbs are the inner loop of the solver.

use serde::{Serialize, Serializer};

#[inline]
pub fn words_for(bits: usize) -> usize {
    bits.div_ceil(64)
}

#[inline]
pub fn popcount(row: &[u64]) -> usize {
    row.iter().map(|w| w.count_ones() as usize).sum()
}

/// `popcount(a & b)` without materialising the intersection.
#[inline]
pub fn and_popcount(a: &[u64], b: &[u64]) -> usize {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x & y).count_ones() as usize)
        .sum()
}

#[inline]
pub fn and_assign(acc: &mut [u64], row: &[u64]) {
    for (a, r) in acc.iter_mut().zip(row) {
        *a &= r;
    }
}

/// True when every bit set in `sub` is also set in `sup`.
#[inline]
pub fn is_subset(sub: &[u64], sup: &[u64]) -> bool {
    sub.iter().zip(sup).all(|(s, t)| s & !t == 0)
}

#[inline]
pub fn get(row: &[u64], bit: usize) -> bool {
    row[bit / 64] >> (bit % 64) & 1 == 1
}

#[inline]
pub fn set(row: &mut [u64], bit: usize) {
    row[bit / 64] |= 1 << (bit % 64);
}

/// Owned set of tag indices over a dictionary of known width.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TagSet {
    words: Vec<u64>,
    width: usize,
}

impl TagSet {
    pub fn empty(width: usize) -> Self {
        Self {
            words: vec![0; words_for(width)],
            width,
        }
    }

    /// All `width` tags set.
    pub fn full(width: usize) -> Self {
        let mut s = Self::empty(width);
        for b in 0..width {
            set(&mut s.words, b);
        }
        s
    }

    pub fn from_words(words: Vec<u64>, width: usize) -> Self {
        debug_assert_eq!(words.len(), words_for(width));
        Self { words, width }
    }

    pub fn from_indices(indices: &[usize], width: usize) -> Self {
        let mut s = Self::empty(width);
        for &i in indices {
            assert!(i < width, "tag index {i} out of range {width}");
            set(&mut s.words, i);
        }
        s
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        popcount(&self.words)
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn contains(&self, tag: usize) -> bool {
        tag < self.width && get(&self.words, tag)
    }

    pub fn insert(&mut self, tag: usize) {
        assert!(tag < self.width);
        set(&mut self.words, tag);
    }

    pub fn remove(&mut self, tag: usize) {
        assert!(tag < self.width);
        self.words[tag / 64] &= !(1 << (tag % 64));
    }

    /// True when `row` carries every tag in this set.
    pub fn is_satisfied_by(&self, row: &[u64]) -> bool {
        is_subset(&self.words, row)
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.width).filter(move |&b| get(&self.words, b))
    }
}

impl Serialize for TagSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.indices())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn and_and_popcount_across_words() {
        let mut a = vec![u64::MAX, 0b1011];
        let b = vec![0b110, 0b0011];
        assert_eq!(and_popcount(&a, &b), 4);
        and_assign(&mut a, &b);
        assert_eq!(a, vec![0b110, 0b0011]);
        assert_eq!(popcount(&a), 4);
    }

    #[test]
    fn subset_semantics() {
        let s = TagSet::from_indices(&[1, 70], 80);
        let mut row = vec![0u64; 2];
        set(&mut row, 1);
        assert!(!s.is_satisfied_by(&row));
        set(&mut row, 70);
        set(&mut row, 3);
        assert!(s.is_satisfied_by(&row));
        assert!(TagSet::empty(80).is_satisfied_by(&[0, 0]));
    }

    #[test]
    fn indices_roundtrip() {
        let s = TagSet::from_indices(&[0, 5, 63, 64, 99], 100);
        assert_eq!(s.indices().collect::<Vec<_>>(), vec![0, 5, 63, 64, 99]);
        assert_eq!(s.len(), 5);
        assert_eq!(TagSet::full(65).len(), 65);
    }
}
