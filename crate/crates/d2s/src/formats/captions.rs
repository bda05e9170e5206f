//! Tokenized captions as JSON lines: `{"id", "image_id", "term_ids"}`.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{atomic_write, read_text};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub id: String,
    pub image_id: String,
    /// May repeat terms; membership tests treat it as a set.
    pub term_ids: Vec<u32>,
}

impl CaptionRecord {
    /// Sorted, deduplicated term ids.
    pub fn term_set(&self) -> Vec<u32> {
        let mut t = self.term_ids.clone();
        t.sort_unstable();
        t.dedup();
        t
    }
}

pub fn encode_captions(records: &[CaptionRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Data(e.to_string()))?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

/// Parses and validates captions. Term ids must be `< vocab_size`; when
/// `images` is given every `image_id` must belong to it. Blank lines are
/// skipped.
pub fn decode_captions(
    path: &Path,
    text: &str,
    vocab_size: usize,
    images: Option<&HashSet<&str>>,
) -> Result<Vec<CaptionRecord>> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CaptionRecord =
            serde_json::from_str(line).map_err(|e| Error::format(path, line_no, e.to_string()))?;
        if let Some(&t) = rec.term_ids.iter().find(|&&t| t as usize >= vocab_size) {
            return Err(Error::format(
                path,
                line_no,
                format!("caption {:?} has term id {t} >= vocabulary size {vocab_size}", rec.id),
            ));
        }
        if images.is_some_and(|set| !set.contains(rec.image_id.as_str())) {
            return Err(Error::format(
                path,
                line_no,
                format!("caption {:?} refers to unknown image {:?}", rec.id, rec.image_id),
            ));
        }
        if !ids.insert(rec.id.clone()) {
            return Err(Error::format(path, line_no, format!("duplicate caption id {:?}", rec.id)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_captions(records: &[CaptionRecord], path: &Path, force: bool) -> Result<()> {
    atomic_write(path, encode_captions(records)?.as_bytes(), force)
}

pub fn read_captions(
    path: &Path,
    vocab_size: usize,
    images: Option<&HashSet<&str>>,
) -> Result<Vec<CaptionRecord>> {
    decode_captions(path, &read_text(path)?, vocab_size, images)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_line_fixture() {
        let text = "{\"id\":\"c1\",\"image_id\":\"i1\",\"term_ids\":[3,1,3]}\n\
                    {\"id\":\"c2\",\"image_id\":\"i1\",\"term_ids\":[]}\n";
        let recs = decode_captions(Path::new("c"), text, 4, None).unwrap();
        assert_eq!(
            recs,
            vec![
                CaptionRecord { id: "c1".into(), image_id: "i1".into(), term_ids: vec![3, 1, 3] },
                CaptionRecord { id: "c2".into(), image_id: "i1".into(), term_ids: vec![] },
            ]
        );
        assert_eq!(recs[0].term_set(), vec![1, 3]);
        assert_eq!(encode_captions(&recs).unwrap(), text);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "{\"id\":\"c1\",\"image_id\":\"i1\",\"term_ids\":[1]}\n\
                    {\"id\":\"c2\",\"image_id\":\"i1\",\"term_ids\":[4]}\n";
        match decode_captions(Path::new("c"), text, 4, None) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 2),
            other => panic!("{other:?}"),
        }
        let images: HashSet<&str> = ["i2"].into_iter().collect();
        match decode_captions(Path::new("c"), text, 5, Some(&images)) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 1),
            other => panic!("{other:?}"),
        }
    }
}
