//! Runs the `d2s` binary end to end on small synthetic corpora.

use std::path::Path;
use std::process::Command;

use d2s::dataset::{Dataset, Layout};
use d2s::formats::{load_checkpoint, read_dense, read_run, read_sparse, save_checkpoint};
use d2s::manifest::verify_manifest;
use d2s_core::{DenseMatrix, ProjectionParams};
use serde_json::Value;

struct Output {
    code: i32,
    report: Value,
    stderr: String,
}

fn d2s(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_d2s"))
        .args(args)
        .current_dir(dir)
        .env("D2S_THREADS", "2")
        .output()
        .expect("binary runs");
    let stdout = String::from_utf8(out.stdout).unwrap();
    let report = if stdout.trim().is_empty() {
        Value::Null
    } else {
        serde_json::from_str(&stdout).unwrap_or_else(|e| panic!("stdout is not one JSON value ({e}): {stdout}"))
    };
    Output {
        code: out.status.code().unwrap_or(-1),
        report,
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn ok(dir: &Path, args: &[&str]) -> Value {
    let o = d2s(dir, args);
    assert_eq!(o.code, 0, "{args:?} failed: {}", o.stderr);
    o.report
}

const SMALL: &[&str] = &[
    "--images", "120", "--valid-images", "20", "--test-images", "30", "--vocab-size", "300", "--dim", "16",
    "--topics", "10",
];

fn synth(dir: &Path, out: &str, seed: &str) -> Value {
    let mut args = vec!["synth", "--out", out, "--seed", seed];
    args.extend_from_slice(SMALL);
    ok(dir, &args)
}

fn train(dir: &Path, out: &str, extra: &[&str]) -> Value {
    let mut args = vec!["train", "--data", "data", "--out", out, "--epochs", "2", "--batch-size", "32", "--quiet"];
    args.extend_from_slice(extra);
    ok(dir, &args)
}

#[test]
fn synth_output_loads_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let a = synth(tmp.path(), "a", "5");
    let b = synth(tmp.path(), "b", "5");
    let digests = |r: &Value| -> Vec<Value> {
        r["files"].as_array().unwrap().iter().map(|f| f["sha256"].clone()).collect()
    };
    assert_eq!(digests(&a), digests(&b));
    assert!(digests(&a).iter().all(|d| d.is_string()));
    let ds = Dataset::load(&Layout::new(tmp.path().join("a"))).unwrap();
    assert_eq!(ds.images.len(), 120);
    assert_eq!(ds.records.len(), 360);
    verify_manifest(&tmp.path().join("a/manifest.json")).unwrap();
}

#[test]
fn bad_flags_exit_with_usage_code() {
    let tmp = tempfile::tempdir().unwrap();
    let o = d2s(tmp.path(), &["synth", "--out", "x", "--no-such-flag"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("--no-such-flag"), "{}", o.stderr);
    assert_eq!(o.report, Value::Null);

    let o = d2s(tmp.path(), &["train", "--data", "d", "--out", "c", "--expansion-mode", "sometimes"]);
    assert_eq!(o.code, 2);
    let o = d2s(tmp.path(), &["synth", "--out", "x", "--images", "0"]);
    assert_eq!(o.code, 2, "{}", o.stderr);
}

#[test]
fn missing_input_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let o = d2s(tmp.path(), &["train", "--data", "nowhere", "--out", "m.ckpt"]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("nowhere"), "{}", o.stderr);
    assert!(!tmp.path().join("m.ckpt").exists());
}

#[test]
fn training_is_reproducible_and_refuses_overwrite() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "data", "1");
    let a = train(tmp.path(), "a.ckpt", &["--seed", "9", "--log", "a.jsonl"]);
    let b = train(tmp.path(), "b.ckpt", &["--seed", "9"]);
    assert_eq!(a["sha256"], b["sha256"]);
    let c = train(tmp.path(), "c.ckpt", &["--seed", "10"]);
    assert_ne!(a["sha256"], c["sha256"]);

    let log = std::fs::read_to_string(tmp.path().join("a.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    let first: Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(first["epoch"], 1);
    verify_manifest(&tmp.path().join("a.ckpt.manifest.json")).unwrap();

    let again = d2s(tmp.path(), &["train", "--data", "data", "--out", "a.ckpt", "--epochs", "1", "--quiet"]);
    assert_eq!(again.code, 1);
    assert!(again.stderr.contains("--force"), "{}", again.stderr);
    train(tmp.path(), "a.ckpt", &["--seed", "9", "--force"]);
}

#[test]
fn project_index_search_and_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, "data", "2");
    train(dir, "m.ckpt", &["--seed", "1"]);
    ok(dir, &["project", "--checkpoint", "m.ckpt", "--dense", "data/images.d2sd", "--out", "docs.d2sv"]);
    ok(dir, &["project", "--checkpoint", "m.ckpt", "--dense", "data/captions.d2sd", "--out", "queries.d2sv"]);

    // The file matches an in-memory encode.
    let params = load_checkpoint(&dir.join("m.ckpt")).unwrap();
    let dense = read_dense(&dir.join("data/images.d2sd")).unwrap();
    let expected = d2s_core::projection::encode(&params, &dense.to_matrix(), 0.0, 7).unwrap();
    assert_eq!(read_sparse(&dir.join("docs.d2sv")).unwrap().vectors(), &expected[..]);

    let idx = ok(dir, &["index", "--docs", "docs.d2sv", "--out", "docs.d2si"]);
    assert_eq!(idx["docs"], 120);

    let base = ["search", "--queries", "queries.d2sv", "--docs", "docs.d2sv", "-k", "10"];
    let search = |out: &str, extra: &[&str]| {
        let mut args = base.to_vec();
        args.extend_from_slice(&["--out", out]);
        args.extend_from_slice(extra);
        ok(dir, &args);
        read_run(&dir.join(out)).unwrap()
    };
    let plain = search("plain.tsv", &["--index", "docs.d2si"]);
    assert_eq!(plain.queries.len(), 360);
    assert!(plain.queries.iter().all(|(_, d)| d.len() <= 10));
    assert_eq!(search("oracle.tsv", &["--oracle"]), plain);
    assert_eq!(search("maxscore.tsv", &["--maxscore", "--index", "docs.d2si"]), plain);

    // Queries holding only their own caption terms: two-stage with the
    // whole corpus as pool is the single-stage search.
    ok(dir, &[
        "project", "--checkpoint", "m.ckpt", "--dense", "data/captions.d2sd", "--out", "own.d2sv",
        "--restrict-terms", "data/captions.jsonl",
    ]);
    let own_base = ["search", "--queries", "own.d2sv", "--docs", "docs.d2sv", "-k", "10"];
    let mut args = own_base.to_vec();
    args.extend_from_slice(&["--out", "own.tsv"]);
    ok(dir, &args);
    let mut args = own_base.to_vec();
    args.extend_from_slice(&["--out", "two.tsv", "--two-stage", "--pool", "120", "--captions", "data/captions.jsonl"]);
    ok(dir, &args);
    assert_eq!(read_run(&dir.join("two.tsv")).unwrap(), read_run(&dir.join("own.tsv")).unwrap());

    let o = d2s(dir, &["search", "--queries", "own.d2sv", "--docs", "docs.d2sv", "--out", "bad.tsv", "--two-stage"]);
    assert_eq!(o.code, 2);

    ok(dir, &[
        "search", "--dense", "--queries", "data/captions.d2sd", "--docs", "data/images.d2sd", "--out", "dense.tsv",
    ]);
    let report = ok(dir, &[
        "evaluate", "--run", "plain.tsv", "--qrels", "data/qrels-test.tsv", "--dense-run", "dense.tsv",
        "--queries", "queries.d2sv", "--docs", "docs.d2sv", "--captions", "data/captions.jsonl",
        "--embeddings", "data/embeddings.d2se",
    ]);
    for key in ["r_at_1", "flops", "exact_at_20", "semantic_at_20", "mean_overlap_at_10"] {
        assert!(report[key].is_number(), "{key}: {report}");
    }
    let same = ok(dir, &["evaluate", "--run", "dense.tsv", "--qrels", "data/qrels-test.tsv", "--dense-run", "dense.tsv"]);
    assert_eq!(same["mean_overlap_at_10"], 1.0);

    let direct = ok(dir, &["evaluate", "--checkpoint", "m.ckpt", "--data", "data", "--split", "test"]);
    assert!(direct["flops"].is_number());
}

#[test]
fn perfect_run_scores_one() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("q.tsv"), "q1\td1\nq2\td2\n").unwrap();
    std::fs::write(dir.join("r.tsv"), "q1\td1\t1\t2.0\nq1\td2\t2\t1.0\nq2\td2\t1\t5.0\n").unwrap();
    let r = ok(dir, &["evaluate", "--run", "r.tsv", "--qrels", "q.tsv"]);
    assert_eq!(r["r_at_1"], 1.0);
    assert_eq!(r["mrr_at_10"], 1.0);
}

#[test]
fn project_edge_cases() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, "data", "3");
    let mut zero = ProjectionParams::init(16, 4, 300, 0, None).unwrap();
    zero.w2 = DenseMatrix::zeros(300, 4);
    save_checkpoint(&zero, &dir.join("zero.ckpt"), false).unwrap();
    let r = ok(dir, &["project", "--checkpoint", "zero.ckpt", "--dense", "data/images.d2sd", "--out", "z.d2sv"]);
    assert_eq!(r["empty_vectors"], 120);
    assert!(read_sparse(&dir.join("z.d2sv")).unwrap().vectors().iter().all(|v| v.is_empty()));

    let wide = ProjectionParams::init(17, 4, 300, 0, None).unwrap();
    save_checkpoint(&wide, &dir.join("wide.ckpt"), false).unwrap();
    let o = d2s(dir, &["project", "--checkpoint", "wide.ckpt", "--dense", "data/images.d2sd", "--out", "w.d2sv"]);
    assert_eq!(o.code, 1);
    assert!(!dir.join("w.d2sv").exists());
}

#[test]
fn gradcheck_reports_each_layer() {
    let tmp = tempfile::tempdir().unwrap();
    let r = ok(tmp.path(), &["gradcheck"]);
    assert_eq!(r["passed"], true);
    let names: Vec<&str> = r["suites"].as_array().unwrap().iter().map(|s| s["name"].as_str().unwrap()).collect();
    for n in ["layer_norm.gamma", "projection.w2", "loss.captions", "composed.w1"] {
        assert!(names.contains(&n), "{names:?}");
    }
    let bad = d2s(tmp.path(), &["gradcheck", "--seeds", "2", "--inject-fault"]);
    assert_eq!(bad.code, 1);
    assert_eq!(bad.report["passed"], false);
}
