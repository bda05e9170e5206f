//! Sparse nonnegative term vectors and the ranking tie rule shared by the
//! index and the metrics.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};

/// Descending score, ties broken by ascending id. Every ranked output in the
/// crate (search results, top-k terms) is ordered by this key.
#[inline]
pub fn rank_cmp(a_score: f64, a_id: u32, b_score: f64, b_id: u32) -> Ordering {
    b_score.total_cmp(&a_score).then(a_id.cmp(&b_id))
}

/// Vocabulary-aligned bag of strictly positive term weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    dim: u32,
    entries: Vec<(u32, f32)>,
}

impl SparseVector {
    pub fn empty(dim: u32) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    /// Validates that ids are strictly increasing and `< dim` and weights are
    /// finite and `> 0`.
    pub fn new(dim: u32, entries: Vec<(u32, f32)>) -> Result<Self> {
        let mut prev: Option<u32> = None;
        for &(t, w) in &entries {
            if t >= dim {
                return Err(Error::Data(alloc::format!("term id {t} >= dimension {dim}")));
            }
            if prev.is_some_and(|p| p >= t) {
                return Err(Error::Data(alloc::format!(
                    "term ids not strictly increasing at {t}"
                )));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::Data(alloc::format!("term {t} has weight {w}")));
            }
            prev = Some(t);
        }
        Ok(Self { dim, entries })
    }

    /// Keeps entries whose weight exceeds `threshold`. Values that underflow
    /// to zero in `f32` are dropped as well.
    pub fn from_dense(row: &[f64], threshold: f64) -> Self {
        let entries = row
            .iter()
            .enumerate()
            .filter_map(|(t, &w)| {
                let w32 = w as f32;
                (w > threshold && w32 > 0.0).then_some((t as u32, w32))
            })
            .collect();
        Self {
            dim: row.len() as u32,
            entries,
        }
    }

    pub fn densify(&self) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.dim as usize];
        for &(t, w) in &self.entries {
            out[t as usize] = f64::from(w);
        }
        out
    }

    #[inline]
    pub fn dim(&self) -> u32 {
        self.dim
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    #[inline]
    pub fn entries(&self) -> &[(u32, f32)] {
        &self.entries
    }

    pub fn terms(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn weight(&self, term: u32) -> Option<f32> {
        self.entries
            .binary_search_by_key(&term, |e| e.0)
            .ok()
            .map(|i| self.entries[i].1)
    }

    /// Dot product accumulated in `f64` over ascending term ids.
    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j) = (0, 0);
        let mut acc = 0.0f64;
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    acc += f64::from(a[i].1) * f64::from(b[j].1);
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    /// Entries whose term appears in `keep` (sorted ascending, duplicates allowed).
    pub fn restrict_to(&self, keep: &[u32]) -> SparseVector {
        let entries = self
            .entries
            .iter()
            .filter(|e| keep.binary_search(&e.0).is_ok())
            .copied()
            .collect();
        Self {
            dim: self.dim,
            entries,
        }
    }

    /// The `k` heaviest term ids under [`rank_cmp`].
    pub fn top_k_terms(&self, k: usize) -> Vec<u32> {
        let mut ranked: Vec<(u32, f32)> = self.entries.clone();
        ranked.sort_by(|a, b| rank_cmp(f64::from(a.1), a.0, f64::from(b.1), b.0));
        ranked.truncate(k);
        ranked.into_iter().map(|e| e.0).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn zero_row_is_empty() {
        assert!(SparseVector::from_dense(&[0.0; 5], 0.0).is_empty());
    }

    #[test]
    fn keeps_positive_entries_in_order() {
        let s = SparseVector::from_dense(&[0.0, 0.5, 0.0, 1.25], 0.0);
        assert_eq!(s.entries(), &[(1, 0.5), (3, 1.25)]);
        assert_eq!(s.dim(), 4);
    }

    #[test]
    fn threshold_is_strict() {
        let s = SparseVector::from_dense(&[0.5, 0.25, 1.0], 0.5);
        assert_eq!(s.entries(), &[(2, 1.0)]);
    }

    #[test]
    fn validation() {
        assert!(SparseVector::new(4, vec![(1, 0.5), (1, 0.2)]).is_err());
        assert!(SparseVector::new(4, vec![(2, 0.5), (1, 0.2)]).is_err());
        assert!(SparseVector::new(4, vec![(4, 0.5)]).is_err());
        assert!(SparseVector::new(4, vec![(0, 0.0)]).is_err());
        assert!(SparseVector::new(4, vec![(0, 1.0), (3, 2.0)]).is_ok());
    }

    #[test]
    fn top_k_breaks_ties_by_term_id() {
        let s = SparseVector::new(6, vec![(0, 1.0), (2, 3.0), (4, 1.0), (5, 3.0)]).unwrap();
        assert_eq!(s.top_k_terms(3), vec![2, 5, 0]);
        assert_eq!(s.top_k_terms(10).len(), 4);
    }

    proptest! {
        #[test]
        fn densify_inverts_sparsify(raw in proptest::collection::vec(0u8..4, 1..40)) {
            // quarter steps are exact in f32
            let row: Vec<f64> = raw.iter().map(|&v| f64::from(v) * 0.25).collect();
            let s = SparseVector::from_dense(&row, 0.0);
            prop_assert_eq!(s.densify(), row);
        }

        #[test]
        fn dot_matches_dense(a in proptest::collection::vec(0u8..3, 30), b in proptest::collection::vec(0u8..3, 30)) {
            let da: Vec<f64> = a.iter().map(|&v| f64::from(v) * 0.5).collect();
            let db: Vec<f64> = b.iter().map(|&v| f64::from(v) * 0.75).collect();
            let want: f64 = da.iter().zip(&db).map(|(x, y)| x * y).sum();
            let got = SparseVector::from_dense(&da, 0.0).dot(&SparseVector::from_dense(&db, 0.0));
            prop_assert!((got - want).abs() < 1e-12);
        }
    }
}
