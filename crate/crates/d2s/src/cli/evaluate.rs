use std::collections::{BTreeSet, HashMap};

use d2s_core::metrics::{Qrels, Run, StaticEmbeddingTable};
use d2s_core::training::ExpansionMode;

use super::{EvaluateArgs, Outcome};
use crate::dataset::{load_embeddings, Dataset, Layout};
use crate::error::{Error, Result};
use crate::formats::{
    load_checkpoint, read_captions, read_embeddings, read_qrels, read_run, read_sparse, CaptionRecord,
    QrelsFile, RunFile, SparseStore,
};
use crate::pipeline::{evaluate as evaluate_inputs, evaluate_split, EvalInputs, EvalReport, Fidelity};

/// Named inputs for [`evaluate_files`].
pub struct FileInputs<'a> {
    pub run: &'a RunFile,
    pub qrels: &'a QrelsFile,
    pub dense_run: Option<&'a RunFile>,
    /// Sparse queries; with `docs` they give FLOPs.
    pub queries: Option<&'a SparseStore>,
    pub docs: Option<&'a SparseStore>,
    /// Caption term lists for the queries, for Exact@20 and Semantic@20.
    pub captions: Option<&'a [CaptionRecord]>,
    pub embeddings: Option<&'a StaticEmbeddingTable>,
}

/// Maps string ids onto the numeric ids the metrics use. Queries are the
/// qrels queries in sorted order; a query absent from a run has an empty
/// ranking there.
struct Ids<'a> {
    queries: Vec<&'a str>,
    docs: HashMap<&'a str, u32>,
}

impl<'a> Ids<'a> {
    fn new(qrels: &'a QrelsFile) -> Self {
        Self {
            queries: qrels.keys().map(String::as_str).collect(),
            docs: HashMap::new(),
        }
    }

    fn doc(&mut self, id: &'a str) -> u32 {
        let next = self.docs.len() as u32;
        *self.docs.entry(id).or_insert(next)
    }

    fn qrels(&mut self, qrels: &'a QrelsFile) -> Qrels {
        qrels
            .values()
            .enumerate()
            .map(|(q, docs)| (q as u32, docs.iter().map(|d| self.doc(d)).collect()))
            .collect()
    }

    fn run(&mut self, run: &'a RunFile) -> Run {
        let by_query: HashMap<&str, _> = run.queries.iter().map(|(q, d)| (q.as_str(), d)).collect();
        let queries = self.queries.clone();
        queries
            .iter()
            .enumerate()
            .map(|(q, id)| {
                let docs = by_query
                    .get(id)
                    .map(|ds| ds.iter().map(|d| self.doc(&d.doc)).collect())
                    .unwrap_or_default();
                (q as u32, docs)
            })
            .collect()
    }
}

pub fn evaluate_files(inputs: &FileInputs<'_>) -> Result<EvalReport> {
    if inputs.qrels.is_empty() {
        return Err(Error::Data("qrels are empty".into()));
    }
    let mut ids = Ids::new(inputs.qrels);
    let qrels = ids.qrels(inputs.qrels);
    let run = ids.run(inputs.run);
    let dense_run = inputs.dense_run.map(|r| ids.run(r));

    let collections = match (inputs.queries, inputs.docs) {
        (Some(q), Some(d)) => Some((q.vectors(), d.vectors())),
        _ => None,
    };
    let terms: Vec<BTreeSet<u32>>;
    let fidelity = match (inputs.queries, inputs.captions) {
        (Some(q), Some(records)) => {
            let by_id: HashMap<&str, &CaptionRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
            terms = q
                .ids()
                .iter()
                .map(|id| {
                    by_id
                        .get(id.as_str())
                        .map(|r| r.term_ids.iter().copied().collect())
                        .ok_or_else(|| Error::Data(format!("no caption for query {id:?}")))
                })
                .collect::<Result<_>>()?;
            Some(Fidelity {
                captions: q.vectors(),
                terms: &terms,
                embeddings: inputs.embeddings,
            })
        }
        _ => None,
    };
    evaluate_inputs(&EvalInputs {
        run: &run,
        qrels: &qrels,
        dense_run: dense_run.as_ref(),
        collections,
        fidelity,
    })
}

pub fn evaluate(a: EvaluateArgs) -> Result<Outcome> {
    let report = match (&a.checkpoint, &a.run) {
        (Some(ckpt), _) => {
            let data = a.data.as_ref().ok_or_else(|| Error::Usage("--checkpoint needs --data".into()))?;
            let layout = Layout::new(data);
            let ds = Dataset::load(&layout)?;
            let params = load_checkpoint(ckpt)?;
            let embeddings = load_embeddings(&layout)?.map(StaticEmbeddingTable::new).transpose()?;
            let mode = if a.restrict_captions { ExpansionMode::AlwaysOff } else { ExpansionMode::Controlled };
            evaluate_split(&ds, &params, mode, a.split, embeddings.as_ref(), !a.no_dense)?
        }
        (None, Some(run_path)) => {
            let qrels_path = a.qrels.as_ref().ok_or_else(|| Error::Usage("--run needs --qrels".into()))?;
            let run = read_run(run_path)?;
            let qrels = read_qrels(qrels_path)?;
            let dense_run = a.dense_run.as_deref().map(read_run).transpose()?;
            let queries = a.queries.as_deref().map(read_sparse).transpose()?;
            let docs = a.docs.as_deref().map(read_sparse).transpose()?;
            let captions = match (&a.captions, &queries) {
                (Some(p), Some(q)) => Some(read_captions(p, q.vocab_size() as usize, None)?),
                _ => None,
            };
            let embeddings = a
                .embeddings
                .as_deref()
                .map(|p| -> Result<_> { Ok(StaticEmbeddingTable::new(read_embeddings(p)?)?) })
                .transpose()?;
            evaluate_files(&FileInputs {
                run: &run,
                qrels: &qrels,
                dense_run: dense_run.as_ref(),
                queries: queries.as_ref(),
                docs: docs.as_ref(),
                captions: captions.as_deref(),
                embeddings: embeddings.as_ref(),
            })?
        }
        (None, None) => return Err(Error::Usage("pass --run and --qrels, or --checkpoint and --data".into())),
    };
    let report = serde_json::to_value(report).map_err(|e| Error::Data(e.to_string()))?;
    Ok(Outcome { report, ok: true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::RankedDoc;

    fn run(rows: &[(&str, &[&str])]) -> RunFile {
        RunFile {
            queries: rows
                .iter()
                .map(|(q, docs)| {
                    let docs = docs
                        .iter()
                        .enumerate()
                        .map(|(i, d)| RankedDoc {
                            doc: d.to_string(),
                            score: 10.0 - i as f64,
                        })
                        .collect();
                    (q.to_string(), docs)
                })
                .collect(),
        }
    }

    fn qrels(rows: &[(&str, &str)]) -> QrelsFile {
        let mut q = QrelsFile::new();
        for (a, b) in rows {
            q.entry(a.to_string()).or_default().insert(b.to_string());
        }
        q
    }

    fn inputs<'a>(run: &'a RunFile, qrels: &'a QrelsFile, dense: Option<&'a RunFile>) -> FileInputs<'a> {
        FileInputs {
            run,
            qrels,
            dense_run: dense,
            queries: None,
            docs: None,
            captions: None,
            embeddings: None,
        }
    }

    #[test]
    fn three_query_fixture() {
        // q1 hits at rank 1, q2 at rank 3, q3 never.
        let qr = qrels(&[("q1", "a"), ("q2", "b"), ("q3", "c")]);
        let r = run(&[("q1", &["a", "b"]), ("q2", &["a", "c", "b"]), ("q3", &["a", "b"])]);
        let rep = evaluate_files(&inputs(&r, &qr, None)).unwrap();
        assert_eq!(rep.r_at_1, 1.0 / 3.0);
        assert_eq!(rep.r_at_5, 2.0 / 3.0);
        assert!((rep.mrr_at_10 - (1.0 + 1.0 / 3.0) / 3.0).abs() < 1e-15);
        assert_eq!(rep.pearson_r1, None);
    }

    #[test]
    fn run_against_itself() {
        let qr = qrels(&[("q1", "a"), ("q2", "b"), ("q3", "c")]);
        let r = run(&[("q1", &["a", "b"]), ("q2", &["a", "c", "b"]), ("q3", &["a", "b"])]);
        let rep = evaluate_files(&inputs(&r, &qr, Some(&r))).unwrap();
        assert!((rep.pearson_r5.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(rep.mean_overlap_at_10, Some(1.0));
    }

    #[test]
    fn query_missing_from_run_scores_zero() {
        let qr = qrels(&[("q1", "a"), ("q2", "b")]);
        let r = run(&[("q1", &["a"])]);
        let rep = evaluate_files(&inputs(&r, &qr, None)).unwrap();
        assert_eq!(rep.r_at_1, 0.5);
    }
}
