//! Vocabulary text files: one UTF-8 term per line, line index = term id.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{atomic_write, read_text};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
}

impl Vocabulary {
    pub fn new(terms: Vec<String>) -> Result<Self> {
        let mut seen = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if t.is_empty() || t.contains(['\n', '\r']) {
                return Err(Error::Data(format!("term {i} is empty or contains a line break")));
            }
            if let Some(j) = seen.insert(t.as_str(), i) {
                return Err(Error::Data(format!("term {t:?} appears at ids {j} and {i}")));
            }
        }
        u32::try_from(terms.len()).map_err(|_| Error::Data("vocabulary too large".into()))?;
        Ok(Self { terms })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term(&self, id: u32) -> Option<&str> {
        self.terms.get(id as usize).map(String::as_str)
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }
}

pub fn encode_vocab(v: &Vocabulary) -> String {
    let mut out = String::new();
    for t in &v.terms {
        out.push_str(t);
        out.push('\n');
    }
    out
}

pub fn decode_vocab(path: &Path, text: &str) -> Result<Vocabulary> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.is_empty() {
        return Err(Error::format(path, 1, "vocabulary is empty"));
    }
    let terms: Vec<String> = body.split('\n').map(str::to_string).collect();
    Vocabulary::new(terms).map_err(|e| Error::format(path, 0, e.to_string()))
}

pub fn write_vocab(v: &Vocabulary, path: &Path, force: bool) -> Result<()> {
    atomic_write(path, encode_vocab(v).as_bytes(), force)
}

pub fn read_vocab(path: &Path) -> Result<Vocabulary> {
    decode_vocab(path, &read_text(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let v = Vocabulary::new(vec!["dog".into(), "ñandú".into(), "a b".into()]).unwrap();
        let text = encode_vocab(&v);
        let back = decode_vocab(Path::new("v"), &text).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.term(1), Some("ñandú"));
        assert_eq!(encode_vocab(&back), text);
    }

    #[test]
    fn duplicates_and_blank_lines_rejected() {
        assert!(decode_vocab(Path::new("v"), "a\nb\na\n").is_err());
        assert!(decode_vocab(Path::new("v"), "a\n\nb\n").is_err());
        assert!(decode_vocab(Path::new("v"), "").is_err());
    }
}
