//! MaxScore document-at-a-time traversal.
//!
//! Query terms are ordered by their score bound `q_w · max_w`. Terms whose
//! cumulative bound cannot lift a document past the current k-th score are
//! non-essential: they are only probed for documents found through an
//! essential term, and probing stops as soon as the remaining bound falls
//! short. Per-term contributions are summed in ascending term order so
//! scores equal the term-at-a-time path bit for bit.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::index::{Hit, InvertedIndex, Posting, RankedList};
use crate::sparse::{rank_cmp, SparseVector};

/// Bounds are computed in a different summation order than scores; pruning
/// only when the bound is short by more than this relative slack keeps the
/// traversal exact.
const BOUND_SLACK: f64 = 1e-9;

struct Cursor<'a> {
    /// Position of the term within the query (ascending term id).
    slot: usize,
    weight: f64,
    bound: f64,
    list: &'a [Posting],
    pos: usize,
}

impl Cursor<'_> {
    fn doc(&self) -> Option<u32> {
        self.list.get(self.pos).map(|p| p.doc)
    }

    /// Advances to the first posting with doc id >= `target`.
    fn seek(&mut self, target: u32) {
        let rest = &self.list[self.pos..];
        self.pos += rest.partition_point(|p| p.doc < target);
    }
}

/// Min-heap entry: the worst hit sits on top.
#[derive(PartialEq)]
struct Worst(Hit);

impl Eq for Worst {}

impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        rank_cmp(self.0.score, self.0.doc, other.0.score, other.0.doc)
    }
}

impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn prunable(bound: f64, threshold: Option<f64>) -> bool {
    threshold.is_some_and(|t| bound * (1.0 + BOUND_SLACK) < t)
}

impl InvertedIndex {
    /// Exact top-k with MaxScore skipping. Result-identical to
    /// [`InvertedIndex::search`].
    pub fn search_maxscore(&self, query: &SparseVector, k: usize) -> RankedList {
        if k == 0 || query.is_empty() {
            return RankedList::default();
        }
        let mut cursors: Vec<Cursor<'_>> = query
            .entries()
            .iter()
            .enumerate()
            .filter_map(|(slot, &(t, qw))| {
                let list = self.postings(t);
                (!list.is_empty()).then(|| Cursor {
                    slot,
                    weight: f64::from(qw),
                    bound: f64::from(qw) * f64::from(self.max_weight(t)),
                    list,
                    pos: 0,
                })
            })
            .collect();
        cursors.sort_by(|a, b| a.bound.total_cmp(&b.bound).then(a.slot.cmp(&b.slot)));
        // prefix[i] = bound of cursors[0..=i]
        let prefix: Vec<f64> = cursors
            .iter()
            .scan(0.0, |s, c| {
                *s += c.bound;
                Some(*s)
            })
            .collect();

        let mut heap: BinaryHeap<Worst> = BinaryHeap::with_capacity(k + 1);
        let mut contrib = vec![0.0f64; query.nnz()];
        let mut used: Vec<usize> = Vec::new();
        let mut threshold: Option<f64> = None;
        // cursors[first_essential..] are essential
        let mut first_essential = 0;

        loop {
            while first_essential < cursors.len() && prunable(prefix[first_essential], threshold) {
                first_essential += 1;
            }
            if first_essential == cursors.len() {
                break;
            }
            let Some(doc) = cursors[first_essential..].iter().filter_map(Cursor::doc).min() else {
                break;
            };

            used.clear();
            let mut partial = 0.0;
            for c in &mut cursors[first_essential..] {
                if c.doc() == Some(doc) {
                    let v = c.weight * f64::from(c.list[c.pos].weight);
                    contrib[c.slot] = v;
                    used.push(c.slot);
                    partial += v;
                    c.pos += 1;
                }
            }
            let mut pruned = false;
            for i in (0..first_essential).rev() {
                if prunable(partial + prefix[i], threshold) {
                    pruned = true;
                    break;
                }
                let c = &mut cursors[i];
                c.seek(doc);
                if c.doc() == Some(doc) {
                    let v = c.weight * f64::from(c.list[c.pos].weight);
                    contrib[c.slot] = v;
                    used.push(c.slot);
                    partial += v;
                }
            }
            if !pruned {
                used.sort_unstable();
                let score = used.iter().fold(0.0, |acc, &s| acc + contrib[s]);
                let hit = Hit { doc, score };
                if heap.len() < k {
                    heap.push(Worst(hit));
                } else if heap
                    .peek()
                    .is_some_and(|w| rank_cmp(score, doc, w.0.score, w.0.doc) == Ordering::Less)
                {
                    heap.pop();
                    heap.push(Worst(hit));
                }
                if heap.len() == k {
                    threshold = heap.peek().map(|w| w.0.score);
                }
            }
            for &s in &used {
                contrib[s] = 0.0;
            }
        }
        RankedList::from_unsorted(heap.into_iter().map(|w| w.0).collect(), k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, dim: u32, max_nnz: usize) -> SparseVector {
        let n = rng.gen_range(0..=max_nnz);
        let mut terms: Vec<u32> = (0..n).map(|_| rng.gen_range(0..dim)).collect();
        terms.sort_unstable();
        terms.dedup();
        let entries = terms.into_iter().map(|t| (t, rng.gen_range(0.01f32..2.0))).collect();
        SparseVector::new(dim, entries).unwrap()
    }

    #[test]
    fn agrees_with_term_at_a_time() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for round in 0..20 {
            let dim = 40 + round * 5;
            let docs: Vec<_> = (0..400).map(|_| random_vec(&mut rng, dim, 12)).collect();
            let idx = InvertedIndex::from_docs(dim, &docs).unwrap();
            for _ in 0..50 {
                let q = random_vec(&mut rng, dim, 10);
                for k in [1, 3, 10, 1000] {
                    assert_eq!(idx.search_maxscore(&q, k), idx.search(&q, k));
                }
            }
        }
    }

    #[test]
    fn ties_resolve_by_doc_id() {
        let d = SparseVector::new(4, vec![(1, 1.0)]).unwrap();
        let docs = vec![d.clone(), d.clone(), d.clone(), d];
        let idx = InvertedIndex::from_docs(4, &docs).unwrap();
        let q = SparseVector::new(4, vec![(1, 2.0)]).unwrap();
        let got: Vec<u32> = idx.search_maxscore(&q, 2).docs().collect();
        assert_eq!(got, vec![0, 1]);
    }
}
