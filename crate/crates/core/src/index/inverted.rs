use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::index::{Hit, RankedList, TwoStageResult};
use crate::sparse::SparseVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posting {
    pub doc: u32,
    pub weight: f32,
}

/// Term → postings sorted by doc id, with per-term maximum weights.
/// Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    vocab_size: u32,
    doc_count: u32,
    /// One past the largest doc id; sizes the score accumulator.
    id_bound: u32,
    postings: Vec<Vec<Posting>>,
    max_weights: Vec<f32>,
    total_postings: u64,
}

impl InvertedIndex {
    /// Indexes `(doc_id, vector)` pairs. Doc ids must be unique.
    pub fn build<'a, I>(vocab_size: u32, docs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, &'a SparseVector)>,
    {
        let mut postings: Vec<Vec<Posting>> = vec![Vec::new(); vocab_size as usize];
        let mut seen = BTreeSet::new();
        let mut sorted = true;
        let mut last_doc: Option<u32> = None;
        for (doc, v) in docs {
            if v.dim() != vocab_size {
                return Err(Error::Data(alloc::format!(
                    "doc {doc} has dimension {} but the index has {vocab_size}",
                    v.dim()
                )));
            }
            if !seen.insert(doc) {
                return Err(Error::Data(alloc::format!("duplicate doc id {doc}")));
            }
            sorted &= last_doc.is_none_or(|l| l < doc);
            last_doc = Some(doc);
            for &(t, weight) in v.entries() {
                postings[t as usize].push(Posting { doc, weight });
            }
        }
        if !sorted {
            for list in &mut postings {
                list.sort_unstable_by_key(|p| p.doc);
            }
        }
        let doc_count = seen.len() as u32;
        let id_bound = seen.last().map_or(0, |d| d + 1);
        Ok(Self::assemble(vocab_size, doc_count, id_bound, postings))
    }

    /// Indexes vectors under their positions `0..n`.
    pub fn from_docs(vocab_size: u32, docs: &[SparseVector]) -> Result<Self> {
        Self::build(vocab_size, docs.iter().enumerate().map(|(i, v)| (i as u32, v)))
    }

    /// Reassembles an index from stored postings, checking every invariant.
    pub fn from_postings(vocab_size: u32, doc_count: u32, postings: Vec<Vec<Posting>>) -> Result<Self> {
        if postings.len() != vocab_size as usize {
            return Err(Error::Data(alloc::format!(
                "{} posting lists for a vocabulary of {vocab_size}",
                postings.len()
            )));
        }
        let mut id_bound = 0;
        for (t, list) in postings.iter().enumerate() {
            for w in list.windows(2) {
                if w[0].doc >= w[1].doc {
                    return Err(Error::Data(alloc::format!(
                        "postings of term {t} not strictly ascending at doc {}",
                        w[1].doc
                    )));
                }
            }
            if let Some(p) = list.iter().find(|p| !(p.weight > 0.0) || !p.weight.is_finite()) {
                return Err(Error::Data(alloc::format!(
                    "term {t} doc {} has weight {}",
                    p.doc, p.weight
                )));
            }
            if let Some(p) = list.last() {
                id_bound = id_bound.max(p.doc + 1);
            }
        }
        Ok(Self::assemble(vocab_size, doc_count, id_bound.max(doc_count), postings))
    }

    fn assemble(vocab_size: u32, doc_count: u32, id_bound: u32, postings: Vec<Vec<Posting>>) -> Self {
        let max_weights = postings
            .iter()
            .map(|l| l.iter().fold(0.0f32, |m, p| m.max(p.weight)))
            .collect();
        let total_postings = postings.iter().map(|l| l.len() as u64).sum();
        Self {
            vocab_size,
            doc_count,
            id_bound,
            postings,
            max_weights,
            total_postings,
        }
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn doc_count(&self) -> u32 {
        self.doc_count
    }

    pub fn total_postings(&self) -> u64 {
        self.total_postings
    }

    pub fn postings(&self, term: u32) -> &[Posting] {
        self.postings.get(term as usize).map_or(&[], |l| &l[..])
    }

    pub fn max_weight(&self, term: u32) -> f32 {
        self.max_weights.get(term as usize).copied().unwrap_or(0.0)
    }

    /// Weight of `doc` under `term`, by binary search.
    pub fn lookup(&self, term: u32, doc: u32) -> Option<f32> {
        let list = self.postings(term);
        list.binary_search_by_key(&doc, |p| p.doc).ok().map(|i| list[i].weight)
    }

    /// Exact top-k by dot product, term at a time.
    pub fn search(&self, query: &SparseVector, k: usize) -> RankedList {
        if k == 0 || query.is_empty() {
            return RankedList::default();
        }
        let mut acc = vec![0.0f64; self.id_bound as usize];
        let mut touched = Vec::new();
        for &(t, qw) in query.entries() {
            let qw = f64::from(qw);
            for p in self.postings(t) {
                let slot = &mut acc[p.doc as usize];
                if *slot == 0.0 {
                    touched.push(p.doc);
                }
                *slot += qw * f64::from(p.weight);
            }
        }
        let hits = touched
            .into_iter()
            .map(|doc| Hit {
                doc,
                score: acc[doc as usize],
            })
            .collect();
        RankedList::from_unsorted(hits, k)
    }

    /// Retrieves `pool` candidates with the query restricted to
    /// `original_terms`, then rescores them with the full query.
    ///
    /// Documents that match only expansion terms are never candidates.
    pub fn search_two_stage(
        &self,
        full_query: &SparseVector,
        original_terms: &[u32],
        k: usize,
        pool: usize,
    ) -> Result<TwoStageResult> {
        if pool < k {
            return Err(Error::Config(alloc::format!("pool size {pool} smaller than k = {k}")));
        }
        let mut keep = original_terms.to_vec();
        keep.sort_unstable();
        let restricted = full_query.restrict_to(&keep);
        let stage1_postings = restricted
            .terms()
            .map(|t| self.postings(t).len() as u64)
            .sum();
        let candidates = self.search(&restricted, pool);
        let mut lookups = 0u64;
        let hits = candidates
            .hits
            .iter()
            .map(|c| {
                let mut score = 0.0f64;
                for &(t, qw) in full_query.entries() {
                    lookups += 1;
                    if let Some(w) = self.lookup(t, c.doc) {
                        score += f64::from(qw) * f64::from(w);
                    }
                }
                Hit { doc: c.doc, score }
            })
            .collect();
        Ok(TwoStageResult {
            list: RankedList::from_unsorted(hits, k),
            candidates: candidates.len(),
            stage1_postings,
            stage2_lookups: lookups,
        })
    }
}
