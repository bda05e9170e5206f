//! Efficiency, effectiveness, and faithfulness measures.
//!
//! Runs map a query id to its ranked doc ids (best first); qrels map a query
//! id to its relevant doc ids. Per-query values follow the ascending query-id
//! order of the qrels.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::{dot, DenseMatrix};
use crate::sparse::SparseVector;

pub type Run = BTreeMap<u32, Vec<u32>>;
pub type Qrels = BTreeMap<u32, BTreeSet<u32>>;

/// Tolerance on row norms after normalization.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Per-term static embeddings, L2-normalized at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticEmbeddingTable {
    vectors: DenseMatrix,
}

impl StaticEmbeddingTable {
    /// Row `t` is the embedding of term `t`. Zero or non-finite rows are
    /// rejected since they have no direction.
    pub fn new(mut vectors: DenseMatrix) -> Result<Self> {
        if vectors.cols() == 0 {
            return Err(Error::Data("embedding width is zero".into()));
        }
        for t in 0..vectors.rows() {
            let row = vectors.row_mut(t);
            let norm = libm::sqrt(dot(row, row));
            if !norm.is_finite() || norm == 0.0 {
                return Err(Error::Data(format!("embedding of term {t} has norm {norm}")));
            }
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
        Ok(Self { vectors })
    }

    pub fn vocab_size(&self) -> usize {
        self.vectors.rows()
    }

    pub fn width(&self) -> usize {
        self.vectors.cols()
    }

    pub fn vector(&self, term: u32) -> Option<&[f64]> {
        ((term as usize) < self.vectors.rows()).then(|| self.vectors.row(term as usize))
    }

    pub fn as_matrix(&self) -> &DenseMatrix {
        &self.vectors
    }

    pub fn cosine(&self, a: u32, b: u32) -> Option<f64> {
        Some(dot(self.vector(a)?, self.vector(b)?))
    }
}

/// Mean number of co-activated terms over all caption–image pairs.
pub fn flops(captions: &[SparseVector], images: &[SparseVector]) -> Result<f64> {
    if captions.is_empty() || images.is_empty() {
        return Err(Error::Data("flops needs nonempty caption and image collections".into()));
    }
    let dim = captions[0].dim();
    if let Some(v) = captions.iter().chain(images).find(|v| v.dim() != dim) {
        return Err(Error::Data(format!(
            "mixed vocabulary sizes {dim} and {}",
            v.dim()
        )));
    }
    let (n_c, n_i) = (support_counts(captions, dim), support_counts(images, dim));
    let pairs: u128 = n_c.iter().zip(&n_i).map(|(&a, &b)| u128::from(a) * u128::from(b)).sum();
    Ok(pairs as f64 / (captions.len() as f64 * images.len() as f64))
}

fn support_counts(vs: &[SparseVector], dim: u32) -> Vec<u64> {
    let mut counts = vec![0u64; dim as usize];
    for t in vs.iter().flat_map(SparseVector::terms) {
        counts[t as usize] += 1;
    }
    counts
}

/// Fraction of the `k` heaviest output terms that occur in the caption.
/// Vectors with fewer than `k` terms still divide by `k`.
pub fn exact_at_k(caption_terms: &BTreeSet<u32>, s: &SparseVector, k: usize) -> Result<f64> {
    check_k(k)?;
    let hits = s
        .top_k_terms(k)
        .into_iter()
        .filter(|t| caption_terms.contains(t))
        .count();
    Ok(hits as f64 / k as f64)
}

/// Mean over the `k` heaviest output terms of the best cosine similarity to
/// any caption term. Missing slots count as zero.
pub fn semantic_at_k(
    caption_terms: &BTreeSet<u32>,
    s: &SparseVector,
    k: usize,
    emb: &StaticEmbeddingTable,
) -> Result<f64> {
    check_k(k)?;
    if caption_terms.is_empty() {
        return Err(Error::Data("semantic similarity needs a nonempty caption".into()));
    }
    let top = s.top_k_terms(k);
    let missing: Vec<u32> = top
        .iter()
        .chain(caption_terms)
        .copied()
        .filter(|&t| emb.vector(t).is_none())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingEmbedding(missing));
    }
    let mut total = 0.0;
    for &t in &top {
        let et = emb.vector(t).unwrap_or_default();
        let best = caption_terms
            .iter()
            .map(|&u| dot(et, emb.vector(u).unwrap_or_default()))
            .fold(f64::NEG_INFINITY, f64::max);
        total += best;
    }
    Ok(total / k as f64)
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    Ok(())
}

fn ranked(run: &Run, query: u32) -> Result<&[u32]> {
    run.get(&query)
        .map(Vec::as_slice)
        .ok_or_else(|| Error::Evaluation(format!("query {query} missing from run")))
}

fn relevant(qrels: &Qrels, query: u32) -> Result<&BTreeSet<u32>> {
    let rel = &qrels[&query];
    if rel.is_empty() {
        return Err(Error::Evaluation(format!("query {query} has no relevant documents")));
    }
    Ok(rel)
}

fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Evaluation("no queries to evaluate".into()));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Recall at `k` for each query in `qrels`.
pub fn recall_per_query(run: &Run, qrels: &Qrels, k: usize) -> Result<Vec<f64>> {
    check_k(k)?;
    qrels
        .keys()
        .map(|&q| {
            let rel = relevant(qrels, q)?;
            let found = ranked(run, q)?
                .iter()
                .take(k)
                .collect::<BTreeSet<_>>()
                .into_iter()
                .filter(|d| rel.contains(d))
                .count();
            Ok(found as f64 / rel.len() as f64)
        })
        .collect()
}

pub fn recall_at_k(run: &Run, qrels: &Qrels, k: usize) -> Result<f64> {
    mean(&recall_per_query(run, qrels, k)?)
}

/// Reciprocal rank of the first relevant doc within the top 10, per query.
pub fn mrr_per_query(run: &Run, qrels: &Qrels) -> Result<Vec<f64>> {
    qrels
        .keys()
        .map(|&q| {
            let rel = relevant(qrels, q)?;
            let rank = ranked(run, q)?.iter().take(10).position(|d| rel.contains(d));
            Ok(rank.map_or(0.0, |r| 1.0 / (r + 1) as f64))
        })
        .collect()
}

pub fn mrr_at_10(run: &Run, qrels: &Qrels) -> Result<f64> {
    mean(&mrr_per_query(run, qrels)?)
}

/// Pearson product-moment correlation, clamped to [-1, 1].
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Evaluation(format!(
            "correlation needs two equal-length series of at least 2 points, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Fraction of the first `k` entries of `a` that also appear in the first
/// `k` entries of `b`.
///
/// The denominator is `k`, or the longer list's length when both are
/// shorter: lists hold at least `min(k, corpus)` documents, so a corpus
/// smaller than `k` still gives identical lists an overlap of one.
pub fn overlap_at_k(a: &[u32], b: &[u32], k: usize) -> Result<f64> {
    check_k(k)?;
    let depth = k.min(a.len().max(b.len()));
    if depth == 0 {
        return Ok(1.0);
    }
    let top_b: BTreeSet<u32> = b.iter().take(k).copied().collect();
    let shared = a
        .iter()
        .take(k)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|d| top_b.contains(d))
        .count();
    Ok(shared as f64 / depth as f64)
}
