//! Relevance judgments as TSV: `query_id<TAB>doc_id`, one relevant pair per
//! line.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{atomic_write, read_text};

pub type QrelsFile = BTreeMap<String, BTreeSet<String>>;

/// Lines are sorted by query id, then doc id.
pub fn encode_qrels(qrels: &QrelsFile) -> String {
    let mut out = String::new();
    for (q, docs) in qrels {
        for d in docs {
            out.push_str(q);
            out.push('\t');
            out.push_str(d);
            out.push('\n');
        }
    }
    out
}

pub fn decode_qrels(path: &Path, text: &str) -> Result<QrelsFile> {
    let mut out = QrelsFile::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [q, d] = fields[..] else {
            return Err(Error::format(
                path,
                i as u64 + 1,
                format!("expected query_id<TAB>doc_id, got {} fields", fields.len()),
            ));
        };
        if q.is_empty() || d.is_empty() {
            return Err(Error::format(path, i as u64 + 1, "empty id"));
        }
        out.entry(q.to_string()).or_default().insert(d.to_string());
    }
    if out.is_empty() {
        return Err(Error::format(path, 1, "no judgments"));
    }
    Ok(out)
}

pub fn write_qrels(qrels: &QrelsFile, path: &Path, force: bool) -> Result<()> {
    atomic_write(path, encode_qrels(qrels).as_bytes(), force)
}

pub fn read_qrels(path: &Path) -> Result<QrelsFile> {
    decode_qrels(path, &read_text(path)?)
}
