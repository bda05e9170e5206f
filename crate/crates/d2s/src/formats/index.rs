//! `D2SI` inverted index files: magic, version u32 = 1, u32 |V|,
//! u32 doc_count, u64 postings_count, then for each nonempty term in
//! ascending id order: u32 term id, u32 length, f32 max weight, and length ×
//! (u32 doc id, f32 weight).

use std::path::Path;

use d2s_core::index::{InvertedIndex, Posting};

use crate::error::Result;
use crate::io::{atomic_write, read_file, to_u32, ByteReader, PutLe};

const MAGIC: &[u8; 4] = b"D2SI";
const VERSION: u32 = 1;

pub fn encode_index(index: &InvertedIndex) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(24 + index.total_postings() as usize * 8);
    out.extend_from_slice(MAGIC);
    out.put_u32(VERSION);
    out.put_u32(index.vocab_size());
    out.put_u32(index.doc_count());
    out.put_u64(index.total_postings());
    for t in 0..index.vocab_size() {
        let list = index.postings(t);
        if list.is_empty() {
            continue;
        }
        out.put_u32(t);
        out.put_u32(to_u32(list.len(), "posting list length")?);
        out.put_f32(index.max_weight(t));
        for p in list {
            out.put_u32(p.doc);
            out.put_f32(p.weight);
        }
    }
    Ok(out)
}

pub fn decode_index(path: &Path, bytes: &[u8]) -> Result<InvertedIndex> {
    let mut r = ByteReader::new(path, bytes);
    r.header(MAGIC, VERSION)?;
    let vocab = r.u32()?;
    let doc_count = r.u32()?;
    let total_at = r.offset();
    let total = r.u64()?;
    let mut postings: Vec<Vec<Posting>> = vec![Vec::new(); vocab as usize];
    let mut prev: Option<u32> = None;
    let mut seen = 0u64;
    while r.offset() < bytes.len() as u64 {
        let at = r.offset();
        let t = r.u32()?;
        if t >= vocab || prev.is_some_and(|p| p >= t) {
            return Err(r.error_at(at, format!("term {t} out of range or out of order")));
        }
        prev = Some(t);
        let len = r.u32()? as usize;
        if len == 0 {
            return Err(r.error_at(at, format!("term {t} stored with no postings")));
        }
        let max_at = r.offset();
        let max = r.f32()?;
        let raw = r.take(len.checked_mul(8).ok_or_else(|| r.error("length overflows"))?)?;
        let list: Vec<Posting> = raw
            .chunks_exact(8)
            .map(|c| Posting {
                doc: u32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                weight: f32::from_le_bytes([c[4], c[5], c[6], c[7]]),
            })
            .collect();
        let actual = list.iter().fold(0.0f32, |m, p| m.max(p.weight));
        if actual.to_bits() != max.to_bits() {
            return Err(r.error_at(max_at, format!("term {t} max weight {max} but postings peak at {actual}")));
        }
        if let Some(p) = list.iter().find(|p| p.doc >= doc_count) {
            return Err(r.error_at(max_at, format!("term {t} lists doc {} of {doc_count}", p.doc)));
        }
        seen += len as u64;
        postings[t as usize] = list;
    }
    if seen != total {
        return Err(r.error_at(total_at, format!("header declares {total} postings, found {seen}")));
    }
    let index = InvertedIndex::from_postings(vocab, doc_count, postings)
        .map_err(|e| r.error_at(total_at, e.to_string()))?;
    Ok(index)
}

pub fn write_index(index: &InvertedIndex, path: &Path, force: bool) -> Result<()> {
    atomic_write(path, &encode_index(index)?, force)
}

pub fn read_index(path: &Path) -> Result<InvertedIndex> {
    decode_index(path, &read_file(path)?)
}
