//! Training, encoding, search, and evaluation over a [`Dataset`].

use std::collections::BTreeSet;
use std::time::Instant;

use d2s_core::index::{brute_force_search, dense_search, InvertedIndex, RankedList};
use d2s_core::metrics::{self, Qrels, Run, StaticEmbeddingTable};
use d2s_core::training::{
    encode_captions, train, EpochStats, ExpansionMode, TrainConfig, TrainObserver,
};
use d2s_core::{DenseMatrix, ProjectionParams, SparseVector};
use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::formats::Split;

/// Environment variable capping search worker threads.
pub const THREADS_ENV: &str = "D2S_THREADS";

/// Depth of every ranked list the evaluation needs.
pub const EVAL_DEPTH: usize = 10;

/// Term-fidelity metrics look at this many output terms.
pub const FIDELITY_DEPTH: usize = 20;

/// Worker count from `D2S_THREADS`, else the available parallelism.
pub fn worker_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Applies `f` to every item on up to `workers` threads. Items are split
/// into contiguous shards and results come back in input order.
pub fn par_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let shard = items.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(shard)
            .map(|chunk| s.spawn(|| chunk.iter().map(&f).collect::<Vec<R>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("search worker panicked"))
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub config: TrainConfig,
    pub width: usize,
    pub init_seed: u64,
    /// Initialize W2 from the static embedding table (needs width = table
    /// width).
    pub init_from_embeddings: bool,
    /// Keep the epoch with the best validation MRR@10 instead of the last.
    pub select_best: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            config: TrainConfig::default(),
            width: 32,
            init_seed: 0,
            init_from_embeddings: false,
            select_best: false,
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub p_c: f64,
    pub mean_caption_density: f64,
    pub mean_image_density: f64,
    pub elapsed_ms: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub valid_mrr_at_10: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    /// Rounded to f32, exactly what a checkpoint stores.
    pub params: ProjectionParams,
    pub mode: ExpansionMode,
    pub history: Vec<EpochLog>,
    /// Epoch of the returned parameters (1-based).
    pub epoch: usize,
}

struct LogObserver<'a> {
    start: Instant,
    sink: &'a mut dyn FnMut(&EpochLog) -> Result<()>,
    validation: Option<(&'a Dataset, ExpansionMode)>,
    best: Option<(f64, usize, ProjectionParams)>,
    history: Vec<EpochLog>,
    failure: Option<Error>,
}

impl LogObserver<'_> {
    fn record(&mut self, stats: &EpochStats, params: &ProjectionParams) -> Result<()> {
        let valid_mrr_at_10 = match self.validation {
            Some((ds, mode)) => {
                let mut rounded = params.clone();
                rounded.round_to_f32();
                let mrr = evaluate_split(ds, &rounded, mode, Split::Valid, None, false)?.mrr_at_10;
                if self.best.as_ref().is_none_or(|b| mrr > b.0) {
                    self.best = Some((mrr, stats.epoch, rounded));
                }
                Some(mrr)
            }
            None => None,
        };
        let line = EpochLog {
            epoch: stats.epoch,
            loss: stats.loss,
            p_c: stats.p_c,
            mean_caption_density: stats.mean_caption_density,
            mean_image_density: stats.mean_image_density,
            elapsed_ms: self.start.elapsed().as_millis() as u64,
            valid_mrr_at_10,
        };
        (self.sink)(&line)?;
        self.history.push(line);
        Ok(())
    }
}

impl TrainObserver for LogObserver<'_> {
    fn on_epoch(&mut self, stats: &EpochStats, params: &ProjectionParams) -> d2s_core::Result<()> {
        self.record(stats, params).map_err(|e| {
            let msg = e.to_string();
            self.failure = Some(e);
            d2s_core::Error::Data(msg)
        })
    }
}

/// Trains on the training split. `sink` receives each epoch's log line.
pub fn train_model(
    ds: &Dataset,
    settings: &TrainSettings,
    embeddings: Option<&DenseMatrix>,
    sink: &mut dyn FnMut(&EpochLog) -> Result<()>,
) -> Result<TrainedModel> {
    let data = ds.training_data(Split::Train)?;
    let init_table = match (settings.init_from_embeddings, embeddings) {
        (false, _) => None,
        (true, Some(e)) => Some(e),
        (true, None) => {
            return Err(Error::Usage("initializing from embeddings needs an embedding table".into()))
        }
    };
    let params = ProjectionParams::init(
        ds.dim(),
        settings.width,
        ds.vocab_size,
        settings.init_seed,
        init_table,
    )?;
    let validation = if settings.select_best {
        if ds.caption_rows(Split::Valid).is_empty() {
            return Err(Error::Usage("selecting the best epoch needs a validation split".into()));
        }
        Some((ds, settings.config.expansion_mode))
    } else {
        None
    };
    let mut observer = LogObserver {
        start: Instant::now(),
        sink,
        validation,
        best: None,
        history: Vec::new(),
        failure: None,
    };
    let outcome = train(&data, &settings.config, params, &mut observer);
    if let Some(e) = observer.failure.take() {
        return Err(e);
    }
    let outcome = outcome?;
    let (params, epoch) = match observer.best.take() {
        Some((_, epoch, p)) => (p, epoch),
        None => {
            let mut p = outcome.params;
            p.round_to_f32();
            (p, settings.config.epochs)
        }
    };
    Ok(TrainedModel {
        params,
        mode: settings.config.expansion_mode,
        history: observer.history,
        epoch,
    })
}

/// Sparse encodings of one split.
#[derive(Debug, Clone)]
pub struct EncodedSplit {
    pub caption_rows: Vec<usize>,
    pub image_rows: Vec<usize>,
    pub captions: Vec<SparseVector>,
    pub images: Vec<SparseVector>,
    /// Sorted caption term sets, aligned with `captions`.
    pub caption_terms: Vec<Vec<u32>>,
}

/// Encodes a split at inference. Models trained without caption expansion
/// keep only each caption's own terms.
pub fn encode_split(
    ds: &Dataset,
    params: &ProjectionParams,
    mode: ExpansionMode,
    split: Split,
) -> Result<EncodedSplit> {
    let caption_rows = ds.caption_rows(split);
    let image_rows = ds.image_rows(split);
    let caption_terms = ds.term_sets(&caption_rows);
    let restrict = mode.restricts_captions_at_inference().then_some(&caption_terms[..]);
    let captions = encode_captions(params, &ds.captions.select_matrix(&caption_rows), restrict, 0.0)?;
    let images = d2s_core::projection::encode(params, &ds.images.select_matrix(&image_rows), 0.0, 256)?;
    Ok(EncodedSplit {
        caption_rows,
        image_rows,
        captions,
        images,
        caption_terms,
    })
}

#[derive(Debug, Clone, Copy)]
pub enum Strategy<'a> {
    /// Term-at-a-time over the index.
    Exhaustive,
    MaxScore,
    /// Full scan of the given documents, bypassing the index.
    Oracle(&'a [SparseVector]),
    /// Original-term retrieval of `pool` candidates, then full rescoring.
    TwoStage { original_terms: &'a [Vec<u32>], pool: usize },
}

pub fn search_sparse(
    index: &InvertedIndex,
    queries: &[SparseVector],
    k: usize,
    strategy: Strategy<'_>,
) -> Result<Vec<RankedList>> {
    let workers = worker_count();
    if let Strategy::TwoStage { original_terms, .. } = strategy {
        if original_terms.len() != queries.len() {
            return Err(Error::Data(format!(
                "{} queries but {} original term lists",
                queries.len(),
                original_terms.len()
            )));
        }
    }
    let numbered: Vec<(usize, &SparseVector)> = queries.iter().enumerate().collect();
    let results = par_map(&numbered, workers, |&(i, q)| -> Result<RankedList> {
        Ok(match strategy {
            Strategy::Exhaustive => index.search(q, k),
            Strategy::MaxScore => index.search_maxscore(q, k),
            Strategy::Oracle(docs) => {
                brute_force_search(docs.iter().enumerate().map(|(d, v)| (d as u32, v)), q, k)
            }
            Strategy::TwoStage { original_terms, pool } => {
                index.search_two_stage(q, &original_terms[i], k, pool)?.list
            }
        })
    });
    results.into_iter().collect()
}

/// Exact inner-product ranking of dense query rows against dense doc rows.
pub fn search_dense(docs: &DenseMatrix, queries: &DenseMatrix, k: usize) -> Result<Vec<RankedList>> {
    let rows: Vec<usize> = (0..queries.rows()).collect();
    par_map(&rows, worker_count(), |&r| dense_search(docs, queries.row(r), k))
        .into_iter()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Run keyed by query position, with docs as ranked ids.
pub fn to_run(lists: &[RankedList]) -> Run {
    lists
        .iter()
        .enumerate()
        .map(|(q, l)| (q as u32, l.docs().collect()))
        .collect()
}

/// Evaluation results; absent inputs leave their fields `null`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub r_at_1: f64,
    pub r_at_5: f64,
    pub mrr_at_10: f64,
    pub flops: Option<f64>,
    pub exact_at_20: Option<f64>,
    pub semantic_at_20: Option<f64>,
    pub pearson_r1: Option<f64>,
    pub pearson_r5: Option<f64>,
    pub pearson_mrr10: Option<f64>,
    pub mean_overlap_at_10: Option<f64>,
}

/// Caption encodings with their own term sets, for term-fidelity metrics.
pub struct Fidelity<'a> {
    pub captions: &'a [SparseVector],
    pub terms: &'a [BTreeSet<u32>],
    pub embeddings: Option<&'a StaticEmbeddingTable>,
}

pub struct EvalInputs<'a> {
    pub run: &'a Run,
    pub qrels: &'a Qrels,
    pub dense_run: Option<&'a Run>,
    /// Caption and image encodings for FLOPs.
    pub collections: Option<(&'a [SparseVector], &'a [SparseVector])>,
    pub fidelity: Option<Fidelity<'a>>,
}

/// Pearson correlation, or `None` when either series is constant.
fn correlation(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    match metrics::pearson(x, y) {
        Ok(r) => Ok(Some(r)),
        Err(d2s_core::Error::UndefinedCorrelation) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

pub fn evaluate(inputs: &EvalInputs<'_>) -> Result<EvalReport> {
    let (run, qrels) = (inputs.run, inputs.qrels);
    let r1 = metrics::recall_per_query(run, qrels, 1)?;
    let r5 = metrics::recall_per_query(run, qrels, 5)?;
    let mrr = metrics::mrr_per_query(run, qrels)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mut report = EvalReport {
        r_at_1: mean(&r1),
        r_at_5: mean(&r5),
        mrr_at_10: mean(&mrr),
        flops: None,
        exact_at_20: None,
        semantic_at_20: None,
        pearson_r1: None,
        pearson_r5: None,
        pearson_mrr10: None,
        mean_overlap_at_10: None,
    };
    if let Some((c, i)) = inputs.collections {
        report.flops = Some(metrics::flops(c, i)?);
    }
    if let Some(f) = &inputs.fidelity {
        if f.captions.len() != f.terms.len() || f.captions.is_empty() {
            return Err(Error::Data(format!(
                "{} caption encodings for {} term sets",
                f.captions.len(),
                f.terms.len()
            )));
        }
        let mut exact = 0.0;
        let mut semantic = 0.0;
        for (s, terms) in f.captions.iter().zip(f.terms) {
            exact += metrics::exact_at_k(terms, s, FIDELITY_DEPTH)?;
            if let Some(emb) = f.embeddings {
                semantic += metrics::semantic_at_k(terms, s, FIDELITY_DEPTH, emb)?;
            }
        }
        let n = f.captions.len() as f64;
        report.exact_at_20 = Some(exact / n);
        report.semantic_at_20 = f.embeddings.map(|_| semantic / n);
    }
    if let Some(dense) = inputs.dense_run {
        report.pearson_r1 = correlation(&metrics::recall_per_query(dense, qrels, 1)?, &r1)?;
        report.pearson_r5 = correlation(&metrics::recall_per_query(dense, qrels, 5)?, &r5)?;
        report.pearson_mrr10 = correlation(&metrics::mrr_per_query(dense, qrels)?, &mrr)?;
        let mut overlap = 0.0;
        for q in qrels.keys() {
            let a = run.get(q).map_or(&[][..], Vec::as_slice);
            let b = dense.get(q).map_or(&[][..], Vec::as_slice);
            overlap += metrics::overlap_at_k(a, b, EVAL_DEPTH)?;
        }
        report.mean_overlap_at_10 = Some(overlap / qrels.len() as f64);
    }
    Ok(report)
}

/// Encodes, indexes, and searches one split, then evaluates it against
/// each caption's image. With `with_dense`, also ranks the dense vectors
/// for the faithfulness measures.
pub fn evaluate_split(
    ds: &Dataset,
    params: &ProjectionParams,
    mode: ExpansionMode,
    split: Split,
    embeddings: Option<&StaticEmbeddingTable>,
    with_dense: bool,
) -> Result<EvalReport> {
    let enc = encode_split(ds, params, mode, split)?;
    if enc.captions.is_empty() {
        return Err(Error::Data(format!("split {split} has no captions")));
    }
    let index = InvertedIndex::from_docs(ds.vocab_size as u32, &enc.images)?;
    let lists = search_sparse(&index, &enc.captions, EVAL_DEPTH, Strategy::Exhaustive)?;
    let run = to_run(&lists);
    let mut local = vec![u32::MAX; ds.images.len()];
    enc.image_rows.iter().enumerate().for_each(|(l, &g)| local[g] = l as u32);
    let qrels: Qrels = enc
        .caption_rows
        .iter()
        .enumerate()
        .map(|(q, &r)| (q as u32, BTreeSet::from([local[ds.caption_image[r]]])))
        .collect();
    let dense_run = if with_dense {
        let docs = ds.images.select_matrix(&enc.image_rows);
        let queries = ds.captions.select_matrix(&enc.caption_rows);
        Some(to_run(&search_dense(&docs, &queries, EVAL_DEPTH)?))
    } else {
        None
    };
    let terms: Vec<BTreeSet<u32>> = enc
        .caption_terms
        .iter()
        .map(|t| t.iter().copied().collect())
        .collect();
    evaluate(&EvalInputs {
        run: &run,
        qrels: &qrels,
        dense_run: dense_run.as_ref(),
        collections: Some((&enc.captions, &enc.images)),
        fidelity: Some(Fidelity {
            captions: &enc.captions,
            terms: &terms,
            embeddings,
        }),
    })
}
