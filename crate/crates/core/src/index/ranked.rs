use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;
use crate::sparse::{rank_cmp, SparseVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub doc: u32,
    pub score: f64,
}

/// Hits ordered by descending score, then ascending doc id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedList {
    pub hits: Vec<Hit>,
}

impl RankedList {
    /// Sorts `hits` under the shared tie rule and keeps the first `k`.
    pub fn from_unsorted(mut hits: Vec<Hit>, k: usize) -> Self {
        let cmp = |a: &Hit, b: &Hit| rank_cmp(a.score, a.doc, b.score, b.doc);
        if hits.len() > k && k > 0 {
            hits.select_nth_unstable_by(k - 1, cmp);
            hits.truncate(k);
        }
        hits.sort_unstable_by(cmp);
        hits.truncate(k);
        Self { hits }
    }

    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn docs(&self) -> impl Iterator<Item = u32> + '_ {
        self.hits.iter().map(|h| h.doc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageResult {
    pub list: RankedList,
    /// Candidates produced by the original-term stage.
    pub candidates: usize,
    /// Postings traversed in stage one.
    pub stage1_postings: u64,
    /// Posting lookups performed while rescoring.
    pub stage2_lookups: u64,
}

/// Full scan over `(doc_id, vector)` pairs. Documents sharing no term with the
/// query are not returned.
pub fn brute_force_search<'a, I>(docs: I, query: &SparseVector, k: usize) -> RankedList
where
    I: IntoIterator<Item = (u32, &'a SparseVector)>,
{
    let hits = docs
        .into_iter()
        .filter_map(|(doc, v)| {
            let score = query.dot(v);
            (score > 0.0).then_some(Hit { doc, score })
        })
        .collect();
    RankedList::from_unsorted(hits, k)
}

/// Exact inner-product scan over dense rows (row index = doc id).
pub fn dense_search(docs: &DenseMatrix, query: &[f64], k: usize) -> Result<RankedList> {
    if query.len() != docs.cols() {
        return Err(Error::Shape {
            op: "dense_search",
            expected: (1, docs.cols()),
            found: (1, query.len()),
        });
    }
    let hits = docs
        .row_iter()
        .enumerate()
        .map(|(i, row)| Hit {
            doc: i as u32,
            score: crate::numerics::dot(row, query),
        })
        .collect();
    Ok(RankedList::from_unsorted(hits, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn orthonormal_self_match_ranks_first() {
        let docs = DenseMatrix::identity(4);
        for i in 0..4 {
            let r = dense_search(&docs, docs.row(i), 1).unwrap();
            assert_eq!(r.hits[0].doc, i as u32);
        }
        assert!(dense_search(&docs, &[1.0; 3], 1).is_err());
    }

    #[test]
    fn dense_total_order() {
        let docs = DenseMatrix::from_vec(3, 2, vec![1.0, 0.0, 1.0, 0.0, 0.0, 2.0]).unwrap();
        let r = dense_search(&docs, &[1.0, 1.0], 3).unwrap();
        let got: Vec<u32> = r.docs().collect();
        assert_eq!(got, vec![2, 0, 1]);
    }

    #[test]
    fn brute_force_cases() {
        let q = SparseVector::new(5, vec![(3, 2.0)]).unwrap();
        let d0 = SparseVector::new(5, vec![(3, 1.5)]).unwrap();
        let d1 = SparseVector::new(5, vec![(1, 1.0)]).unwrap();
        let r = brute_force_search([(0, &d0), (1, &d1)], &q, 10);
        assert_eq!(r.hits, vec![Hit { doc: 0, score: 3.0 }]);
        let orth = SparseVector::new(5, vec![(0, 1.0)]).unwrap();
        assert!(brute_force_search([(0, &d0), (1, &d1)], &orth, 10).is_empty());
    }

    #[test]
    fn from_unsorted_ties() {
        let hits = vec![
            Hit { doc: 5, score: 1.0 },
            Hit { doc: 2, score: 1.0 },
            Hit { doc: 9, score: 3.0 },
        ];
        let r = RankedList::from_unsorted(hits, 2);
        assert_eq!(r.docs().collect::<Vec<_>>(), vec![9, 2]);
    }
}
