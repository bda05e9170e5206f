use std::collections::HashMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use d2s_core::index::{InvertedIndex, RankedList};
use d2s_core::numerics::AdamConfig;
use d2s_core::training::{run_gradient_suites, encode_captions, SuiteDims, Supervision, TrainConfig};
use serde_json::json;

use super::{GradcheckArgs, IndexArgs, Outcome, ProjectArgs, SearchArgs, SynthArgs, TrainArgs};
use crate::dataset::{load_embeddings, synth_targets, write_synth, Dataset, Layout};
use crate::error::{Error, Result};
use crate::formats::{
    load_checkpoint, read_captions, read_dense, read_index, read_sparse, save_checkpoint, write_index,
    write_run, write_sparse, RankedDoc, RunFile, SparseStore,
};
use crate::io::atomic_write;
use crate::manifest::{sha256_file, ManifestWriter};
use crate::pipeline::{search_dense, search_sparse, train_model, Strategy, TrainSettings};
use crate::synth::{generate, SynthConfig};

fn usage(e: impl std::fmt::Display) -> Error {
    Error::Usage(e.to_string())
}

fn manifest_path(explicit: Option<PathBuf>, out: &Path) -> PathBuf {
    explicit.unwrap_or_else(|| {
        let mut name = OsString::from(out.as_os_str());
        name.push(".manifest.json");
        PathBuf::from(name)
    })
}

fn done(report: serde_json::Value) -> Result<Outcome> {
    Ok(Outcome { report, ok: true })
}

pub fn synth(a: SynthArgs) -> Result<Outcome> {
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        seed: a.seed,
        images: a.images.unwrap_or(d.images),
        captions_per_image: a.captions_per_image.unwrap_or(d.captions_per_image),
        dim: a.dim.unwrap_or(d.dim),
        vocab_size: a.vocab_size.unwrap_or(d.vocab_size),
        caption_len: a.caption_len.unwrap_or(d.caption_len),
        noise: a.noise.unwrap_or(d.noise),
        topics: a.topics.unwrap_or(d.topics),
        valid_images: a.valid_images.unwrap_or(d.valid_images),
        test_images: a.test_images.unwrap_or(d.test_images),
        ..d
    };
    cfg.validate().map_err(usage)?;
    let data = generate(&cfg)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let targets = synth_targets(&data, &a.out)?;
    let config = serde_json::to_value(&cfg).map_err(|e| Error::Data(e.to_string()))?;
    let mut m = ManifestWriter::begin(
        &a.out.join("manifest.json"),
        "synth",
        Some(cfg.seed),
        config,
        &[],
        &targets,
        a.force,
    )?;
    write_synth(&data, &a.out, a.force)?;
    m.phase("write");
    let manifest = m.finish()?;
    done(json!({
        "dir": a.out,
        "images": data.images.len(),
        "captions": data.records.len(),
        "dim": cfg.dim,
        "vocab_size": cfg.vocab_size,
        "files": manifest.outputs,
    }))
}

pub fn train(a: TrainArgs) -> Result<Outcome> {
    let config = TrainConfig {
        tau: a.tau.unwrap_or(TrainConfig::default().tau),
        lambda: a.lambda.unwrap_or(TrainConfig::default().lambda),
        eta: a.eta.unwrap_or(TrainConfig::default().eta),
        epochs: a.epochs.unwrap_or(TrainConfig::default().epochs),
        batch_size: a.batch_size.unwrap_or(TrainConfig::default().batch_size),
        adam: AdamConfig {
            lr: a.lr.unwrap_or(AdamConfig::default().lr),
            ..AdamConfig::default()
        },
        seed: a.seed,
        expansion_mode: a.expansion_mode,
        original_term_gating: a.original_term_gating,
        supervision: if a.label_supervision { Supervision::Labels } else { Supervision::Dense },
        normalize_dense: a.normalize_dense,
    };
    config.validate().map_err(usage)?;
    if a.width < 2 {
        return Err(usage(format!("--width must be >= 2, got {}", a.width)));
    }
    let settings = TrainSettings {
        config: config.clone(),
        width: a.width,
        init_seed: a.seed,
        init_from_embeddings: a.init_from_embeddings,
        select_best: a.select_best,
    };

    let layout = Layout::new(&a.data);
    let mut inputs = vec![layout.images(), layout.captions_dense(), layout.captions(), layout.vocab()];
    if layout.splits().exists() {
        inputs.push(layout.splits());
    }
    if a.init_from_embeddings {
        inputs.push(layout.embeddings());
    }
    for p in &inputs {
        if !p.exists() {
            return Err(Error::io(p, std::io::ErrorKind::NotFound.into()));
        }
    }
    let mut outputs = vec![a.out.clone()];
    outputs.extend(a.log.clone());
    let manifest_file = manifest_path(a.manifest.clone(), &a.out);
    let run_config = json!({
        "tau": config.tau,
        "lambda": config.lambda,
        "eta": config.eta,
        "epochs": config.epochs,
        "batch_size": config.batch_size,
        "lr": config.adam.lr,
        "beta1": config.adam.beta1,
        "beta2": config.adam.beta2,
        "adam_eps": config.adam.eps,
        "expansion_mode": config.expansion_mode.as_str(),
        "original_term_gating": config.original_term_gating.as_str(),
        "supervision": if a.label_supervision { "labels" } else { "dense" },
        "normalize_dense": config.normalize_dense,
        "width": a.width,
        "init_from_embeddings": a.init_from_embeddings,
        "select_best": a.select_best,
        "data": a.data,
    });
    let mut m = ManifestWriter::begin(&manifest_file, "train", Some(a.seed), run_config, &inputs, &outputs, a.force)?;

    let ds = Dataset::load(&layout)?;
    let embeddings = if a.init_from_embeddings { load_embeddings(&layout)? } else { None };
    m.phase("load");
    let epochs = config.epochs;
    let quiet = a.quiet;
    let mut log = String::new();
    let model = train_model(&ds, &settings, embeddings.as_ref(), &mut |line| {
        let text = serde_json::to_string(line).map_err(|e| Error::Data(e.to_string()))?;
        log.push_str(&text);
        log.push('\n');
        if !quiet {
            eprintln!(
                "epoch {}/{epochs}: loss {:.4}, p_c {:.3}, density captions {:.4} images {:.4}, {:.1}s",
                line.epoch,
                line.loss,
                line.p_c,
                line.mean_caption_density,
                line.mean_image_density,
                line.elapsed_ms as f64 / 1000.0,
            );
        }
        Ok(())
    })?;
    m.phase("train");
    save_checkpoint(&model.params, &a.out, a.force)?;
    if let Some(p) = &a.log {
        atomic_write(p, log.as_bytes(), a.force)?;
    }
    m.phase("write");
    m.finish()?;
    done(json!({
        "checkpoint": a.out,
        "sha256": sha256_file(&a.out)?,
        "manifest": manifest_file,
        "epochs": epochs,
        "selected_epoch": model.epoch,
        "final_loss": model.history.last().map(|l| l.loss),
    }))
}

pub fn project(a: ProjectArgs) -> Result<Outcome> {
    let mut inputs = vec![a.checkpoint.clone(), a.dense.clone()];
    inputs.extend(a.restrict_terms.clone());
    let manifest_file = manifest_path(a.manifest.clone(), &a.out);
    let run_config = json!({ "restrict_terms": a.restrict_terms.is_some() });
    let mut m = ManifestWriter::begin(&manifest_file, "project", None, run_config, &inputs, std::slice::from_ref(&a.out), a.force)?;

    let params = load_checkpoint(&a.checkpoint)?;
    let store = read_dense(&a.dense)?;
    if store.dim() != params.dense_dim() {
        return Err(Error::Data(format!(
            "{} has dimension {} but the checkpoint expects {}",
            a.dense.display(),
            store.dim(),
            params.dense_dim()
        )));
    }
    let dense = store.to_matrix();
    let vectors = match &a.restrict_terms {
        Some(path) => {
            let records = read_captions(path, params.vocab_size(), None)?;
            let by_id: HashMap<&str, Vec<u32>> =
                records.iter().map(|r| (r.id.as_str(), r.term_set())).collect();
            let terms = store
                .ids()
                .iter()
                .map(|id| {
                    by_id.get(id.as_str()).cloned().ok_or_else(|| {
                        Error::Data(format!("{} has no caption {id:?}", path.display()))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            encode_captions(&params, &dense, Some(&terms[..]), 0.0)?
        }
        None => d2s_core::projection::encode(&params, &dense, 0.0, 256)?,
    };
    let vocab = crate::io::to_u32(params.vocab_size(), "vocabulary size")?;
    let out = SparseStore::new(vocab, store.ids().to_vec(), vectors)?;
    write_sparse(&out, &a.out, a.force)?;
    m.phase("project");
    m.finish()?;
    let nnz: usize = out.vectors().iter().map(|v| v.nnz()).sum();
    done(json!({
        "out": a.out,
        "vectors": out.len(),
        "mean_nnz": nnz as f64 / out.len().max(1) as f64,
        "empty_vectors": out.vectors().iter().filter(|v| v.is_empty()).count(),
    }))
}

pub fn index(a: IndexArgs) -> Result<Outcome> {
    let manifest_file = manifest_path(a.manifest.clone(), &a.out);
    let mut m = ManifestWriter::begin(
        &manifest_file,
        "index",
        None,
        serde_json::Value::Null,
        std::slice::from_ref(&a.docs),
        std::slice::from_ref(&a.out),
        a.force,
    )?;
    let docs = read_sparse(&a.docs)?;
    let index = InvertedIndex::from_docs(docs.vocab_size(), docs.vectors())?;
    write_index(&index, &a.out, a.force)?;
    m.phase("index");
    m.finish()?;
    let nonempty = (0..index.vocab_size()).filter(|&t| !index.postings(t).is_empty()).count();
    done(json!({
        "out": a.out,
        "docs": index.doc_count(),
        "postings": index.total_postings(),
        "nonempty_terms": nonempty,
    }))
}

fn to_run_file(query_ids: &[String], doc_ids: &[String], lists: &[RankedList]) -> RunFile {
    RunFile {
        queries: query_ids
            .iter()
            .zip(lists)
            .map(|(q, l)| {
                let docs = l
                    .hits
                    .iter()
                    .map(|h| RankedDoc {
                        doc: doc_ids[h.doc as usize].clone(),
                        score: h.score,
                    })
                    .collect();
                (q.clone(), docs)
            })
            .collect(),
    }
}

pub fn search(a: SearchArgs) -> Result<Outcome> {
    if a.k == 0 {
        return Err(usage("-k must be >= 1"));
    }
    let pool = a.pool.unwrap_or(a.k.saturating_mul(10));
    if a.two_stage && pool < a.k {
        return Err(usage(format!("--pool ({pool}) must be >= k ({})", a.k)));
    }
    let mut inputs = vec![a.queries.clone(), a.docs.clone()];
    inputs.extend(a.index.clone());
    inputs.extend(a.captions.clone().filter(|_| a.two_stage));
    let strategy_name = match (a.dense, a.maxscore, a.oracle, a.two_stage) {
        (true, ..) => "dense",
        (_, true, ..) => "maxscore",
        (_, _, true, _) => "oracle",
        (.., true) => "two_stage",
        _ => "exhaustive",
    };
    let manifest_file = manifest_path(a.manifest.clone(), &a.out);
    let run_config = json!({
        "k": a.k,
        "strategy": strategy_name,
        "pool": a.two_stage.then_some(pool),
    });
    let mut m = ManifestWriter::begin(&manifest_file, "search", None, run_config, &inputs, std::slice::from_ref(&a.out), a.force)?;
    let start = Instant::now();

    let (query_ids, doc_ids, lists) = if a.dense {
        let queries = read_dense(&a.queries)?;
        let docs = read_dense(&a.docs)?;
        if queries.dim() != docs.dim() {
            return Err(Error::Data(format!(
                "query dimension {} differs from document dimension {}",
                queries.dim(),
                docs.dim()
            )));
        }
        let lists = search_dense(&docs.to_matrix(), &queries.to_matrix(), a.k)?;
        (queries.ids().to_vec(), docs.ids().to_vec(), lists)
    } else {
        let queries = read_sparse(&a.queries)?;
        let docs = read_sparse(&a.docs)?;
        if queries.vocab_size() != docs.vocab_size() {
            return Err(Error::Data(format!(
                "queries use {} terms but documents use {}",
                queries.vocab_size(),
                docs.vocab_size()
            )));
        }
        let index = match &a.index {
            Some(p) => {
                let index = read_index(p)?;
                if index.doc_count() as usize != docs.len() || index.vocab_size() != docs.vocab_size() {
                    return Err(Error::Data(format!(
                        "{} covers {} documents over {} terms, but {} has {} over {}",
                        p.display(),
                        index.doc_count(),
                        index.vocab_size(),
                        a.docs.display(),
                        docs.len(),
                        docs.vocab_size()
                    )));
                }
                index
            }
            None => InvertedIndex::from_docs(docs.vocab_size(), docs.vectors())?,
        };
        let original_terms: Vec<Vec<u32>>;
        let strategy = if a.oracle {
            Strategy::Oracle(docs.vectors())
        } else if a.maxscore {
            Strategy::MaxScore
        } else if a.two_stage {
            let path = a.captions.as_ref().ok_or_else(|| usage("--two-stage needs --captions"))?;
            let records = read_captions(path, docs.vocab_size() as usize, None)?;
            let by_id: HashMap<&str, Vec<u32>> =
                records.iter().map(|r| (r.id.as_str(), r.term_set())).collect();
            original_terms = queries
                .ids()
                .iter()
                .map(|q| {
                    by_id.get(q.as_str()).cloned().ok_or_else(|| {
                        Error::Data(format!("{} has no caption for query {q:?}", path.display()))
                    })
                })
                .collect::<Result<_>>()?;
            Strategy::TwoStage {
                original_terms: &original_terms,
                pool,
            }
        } else {
            Strategy::Exhaustive
        };
        let lists = search_sparse(&index, queries.vectors(), a.k, strategy)?;
        (queries.ids().to_vec(), docs.ids().to_vec(), lists)
    };
    let run = to_run_file(&query_ids, &doc_ids, &lists);
    write_run(&run, &a.out, a.force)?;
    m.phase("search");
    m.finish()?;
    done(json!({
        "out": a.out,
        "queries": query_ids.len(),
        "k": a.k,
        "strategy": strategy_name,
        "elapsed_ms": start.elapsed().as_millis() as u64,
    }))
}

pub fn gradcheck(a: GradcheckArgs) -> Result<Outcome> {
    let dims = SuiteDims {
        dense_dim: a.dense_dim,
        width: a.width,
        vocab_size: a.vocab_size,
        batch: a.batch,
    };
    let seeds: Vec<u64> = (0..a.seeds).collect();
    let results = run_gradient_suites(dims, &seeds, a.inject_fault).map_err(usage)?;
    let ok = results.iter().all(|r| r.passed());
    let suites: Vec<_> = results
        .iter()
        .map(|r| {
            json!({
                "name": r.name,
                "max_rel_error": r.max_rel_error,
                "tolerance": r.tolerance,
                "seeds": r.seeds,
                "passed": r.passed(),
            })
        })
        .collect();
    Ok(Outcome {
        report: json!({ "passed": ok, "dims": {
            "dense_dim": dims.dense_dim,
            "width": dims.width,
            "vocab_size": dims.vocab_size,
            "batch": dims.batch,
        }, "suites": suites }),
        ok,
    })
}
