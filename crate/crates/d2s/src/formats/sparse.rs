//! `D2SV` sparse vector files: magic, version u32 = 1, u32 |V|, u32 count,
//! then per vector: u16 id length + UTF-8 id, u32 nnz, and nnz ×
//! (u32 term id, f32 weight) in ascending term order.

use std::collections::HashSet;
use std::path::Path;

use d2s_core::SparseVector;

use crate::error::{Error, Result};
use crate::io::{atomic_write, read_file, to_u32, ByteReader, PutLe};

const MAGIC: &[u8; 4] = b"D2SV";
const VERSION: u32 = 1;

/// Named sparse vectors over one vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseStore {
    vocab_size: u32,
    ids: Vec<String>,
    vectors: Vec<SparseVector>,
}

impl SparseStore {
    pub fn new(vocab_size: u32, ids: Vec<String>, vectors: Vec<SparseVector>) -> Result<Self> {
        if ids.len() != vectors.len() {
            return Err(Error::Data(format!("{} ids for {} vectors", ids.len(), vectors.len())));
        }
        if let Some(v) = vectors.iter().find(|v| v.dim() != vocab_size) {
            return Err(Error::Data(format!(
                "vector of dimension {} in a store over {vocab_size} terms",
                v.dim()
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::Data(format!("duplicate id {dup:?}")));
        }
        Ok(Self {
            vocab_size,
            ids,
            vectors,
        })
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vectors(&self) -> &[SparseVector] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

pub fn encode_sparse(store: &SparseStore) -> Result<Vec<u8>> {
    let nnz: usize = store.vectors.iter().map(SparseVector::nnz).sum();
    let mut out = Vec::with_capacity(16 + store.len() * 16 + nnz * 8);
    out.extend_from_slice(MAGIC);
    out.put_u32(VERSION);
    out.put_u32(store.vocab_size);
    out.put_u32(to_u32(store.len(), "vector count")?);
    for (id, v) in store.ids.iter().zip(&store.vectors) {
        out.put_short_string(id)?;
        out.put_u32(to_u32(v.nnz(), "nnz")?);
        for &(t, w) in v.entries() {
            out.put_u32(t);
            out.put_f32(w);
        }
    }
    Ok(out)
}

pub fn decode_sparse(path: &Path, bytes: &[u8]) -> Result<SparseStore> {
    let mut r = ByteReader::new(path, bytes);
    r.header(MAGIC, VERSION)?;
    let vocab = r.u32()?;
    let count = r.u32()? as usize;
    let mut ids = Vec::with_capacity(count.min(bytes.len() / 6));
    let mut vectors = Vec::with_capacity(ids.capacity());
    let mut seen = HashSet::new();
    for _ in 0..count {
        let at = r.offset();
        let id = r.short_string()?;
        if !seen.insert(id.clone()) {
            return Err(r.error_at(at, format!("duplicate id {id:?}")));
        }
        let nnz = r.u32()? as usize;
        let at = r.offset();
        let raw = r.take(nnz.checked_mul(8).ok_or_else(|| r.error("nnz overflows"))?)?;
        let entries = raw
            .chunks_exact(8)
            .map(|c| {
                let t = u32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                (t, f32::from_le_bytes([c[4], c[5], c[6], c[7]]))
            })
            .collect();
        let v = SparseVector::new(vocab, entries)
            .map_err(|e| r.error_at(at, format!("vector {id:?}: {e}")))?;
        ids.push(id);
        vectors.push(v);
    }
    r.finish()?;
    SparseStore::new(vocab, ids, vectors)
}

pub fn write_sparse(store: &SparseStore, path: &Path, force: bool) -> Result<()> {
    atomic_write(path, &encode_sparse(store)?, force)
}

pub fn read_sparse(path: &Path) -> Result<SparseStore> {
    decode_sparse(path, &read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SparseStore {
        let v0 = SparseVector::new(10, vec![(1, 0.5), (9, 2.0)]).unwrap();
        let v1 = SparseVector::empty(10);
        SparseStore::new(10, vec!["q0".into(), "q1".into()], vec![v0, v1]).unwrap()
    }

    #[test]
    fn round_trip_including_empty() {
        let s = sample();
        let bytes = encode_sparse(&s).unwrap();
        let back = decode_sparse(Path::new("s"), &bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(encode_sparse(&back).unwrap(), bytes);
    }

    #[test]
    fn rejects_bad_terms() {
        let bytes = encode_sparse(&sample()).unwrap();
        // first entry of q0 starts after header (16) + id (2 + 2) + nnz (4)
        let at = 24;
        let mut out_of_range = bytes.clone();
        out_of_range[at..at + 4].copy_from_slice(&10u32.to_le_bytes());
        assert!(decode_sparse(Path::new("s"), &out_of_range).is_err());
        let mut unsorted = bytes.clone();
        unsorted[at..at + 4].copy_from_slice(&9u32.to_le_bytes());
        match decode_sparse(Path::new("s"), &unsorted) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, at as u64),
            other => panic!("{other:?}"),
        }
    }
}
