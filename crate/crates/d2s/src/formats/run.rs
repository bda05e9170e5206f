//! Retrieval runs as TSV: `query_id<TAB>doc_id<TAB>rank<TAB>score`, ranks
//! starting at 1 and queries in contiguous blocks.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{atomic_write, read_text};

#[derive(Debug, Clone, PartialEq)]
pub struct RankedDoc {
    pub doc: String,
    pub score: f64,
}

/// Queries in file order, each with its ranked documents.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunFile {
    pub queries: Vec<(String, Vec<RankedDoc>)>,
}

impl RunFile {
    pub fn get(&self, query: &str) -> Option<&[RankedDoc]> {
        self.queries
            .iter()
            .find(|(q, _)| q == query)
            .map(|(_, d)| d.as_slice())
    }
}

fn check_field(s: &str) -> Result<()> {
    if s.is_empty() || s.contains(['\t', '\n', '\r']) {
        return Err(Error::Data(format!("id {s:?} is empty or contains a tab or line break")));
    }
    Ok(())
}

/// Scores use the shortest decimal form that parses back to the same f64.
pub fn encode_run(run: &RunFile) -> Result<String> {
    let mut out = String::new();
    for (q, docs) in &run.queries {
        check_field(q)?;
        for (rank, d) in docs.iter().enumerate() {
            check_field(&d.doc)?;
            writeln!(out, "{q}\t{}\t{}\t{}", d.doc, rank + 1, d.score).expect("writing to a String");
        }
    }
    Ok(out)
}

pub fn decode_run(path: &Path, text: &str) -> Result<RunFile> {
    let mut run = RunFile::default();
    let mut finished: HashSet<String> = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i as u64 + 1;
        let bad = |msg: String| Error::format(path, line_no, msg);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [q, doc, rank, score] = fields[..] else {
            return Err(bad(format!("expected 4 tab-separated fields, got {}", fields.len())));
        };
        let rank: usize = rank.parse().map_err(|_| bad(format!("bad rank {rank:?}")))?;
        let score: f64 = score.parse().map_err(|_| bad(format!("bad score {score:?}")))?;
        let continuing = run.queries.last().is_some_and(|(last, _)| last == q);
        if !continuing {
            if let Some((last, _)) = run.queries.last() {
                finished.insert(last.clone());
            }
            if finished.contains(q) {
                return Err(bad(format!("query {q:?} appears in two separate blocks")));
            }
            run.queries.push((q.to_string(), Vec::new()));
        }
        let docs = &mut run.queries.last_mut().expect("pushed above").1;
        if rank != docs.len() + 1 {
            return Err(bad(format!("rank {rank} follows rank {}", docs.len())));
        }
        docs.push(RankedDoc {
            doc: doc.to_string(),
            score,
        });
    }
    Ok(run)
}

pub fn write_run(run: &RunFile, path: &Path, force: bool) -> Result<()> {
    atomic_write(path, encode_run(run)?.as_bytes(), force)
}

pub fn read_run(path: &Path) -> Result<RunFile> {
    decode_run(path, &read_text(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_scores() {
        let run = RunFile {
            queries: vec![
                (
                    "q1".into(),
                    vec![
                        RankedDoc { doc: "d2".into(), score: 0.1 + 0.2 },
                        RankedDoc { doc: "d1".into(), score: 1e-300 },
                    ],
                ),
                ("q0".into(), vec![RankedDoc { doc: "d1".into(), score: -3.5 }]),
            ],
        };
        let text = encode_run(&run).unwrap();
        let back = decode_run(Path::new("r"), &text).unwrap();
        assert_eq!(back, run);
        assert_eq!(encode_run(&back).unwrap(), text);
    }

    #[test]
    fn malformed_lines_rejected() {
        let p = Path::new("r");
        assert!(decode_run(p, "q\td\t2\t1.0\n").is_err());
        assert!(decode_run(p, "q\td\t1\n").is_err());
        assert!(decode_run(p, "q\td\t1\tx\n").is_err());
        assert!(decode_run(p, "a\td\t1\t1\nb\td\t1\t1\na\te\t2\t1\n").is_err());
    }
}
