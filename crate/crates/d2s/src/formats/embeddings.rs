//! `D2SE` static embedding tables: magic, version u32 = 1, u32 |V|,
//! u32 width, then the f32 row-major payload.

use std::path::Path;

use d2s_core::DenseMatrix;

use crate::error::Result;
use crate::io::{atomic_write, read_file, to_u32, ByteReader, PutLe};

const MAGIC: &[u8; 4] = b"D2SE";
const VERSION: u32 = 1;

/// Rows are written as f32.
pub fn encode_embeddings(m: &DenseMatrix) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + m.as_slice().len() * 4);
    out.extend_from_slice(MAGIC);
    out.put_u32(VERSION);
    out.put_u32(to_u32(m.rows(), "vocabulary size")?);
    out.put_u32(to_u32(m.cols(), "embedding width")?);
    for &v in m.as_slice() {
        out.put_f32(v as f32);
    }
    Ok(out)
}

pub fn decode_embeddings(path: &Path, bytes: &[u8]) -> Result<DenseMatrix> {
    let mut r = ByteReader::new(path, bytes);
    r.header(MAGIC, VERSION)?;
    let vocab = r.u32()? as usize;
    let width_at = r.offset();
    let width = r.u32()? as usize;
    if width == 0 {
        return Err(r.error_at(width_at, "embedding width is zero"));
    }
    let n = vocab.checked_mul(width).ok_or_else(|| r.error("payload size overflows"))?;
    let values = r.f32s(n)?;
    r.finish()?;
    let data = values.into_iter().map(f64::from).collect();
    Ok(DenseMatrix::from_vec(vocab, width, data)?)
}

pub fn write_embeddings(m: &DenseMatrix, path: &Path, force: bool) -> Result<()> {
    atomic_write(path, &encode_embeddings(m)?, force)
}

pub fn read_embeddings(path: &Path) -> Result<DenseMatrix> {
    decode_embeddings(path, &read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let m = DenseMatrix::from_fn(3, 2, |r, c| (r as f64 - c as f64) * 0.375);
        let bytes = encode_embeddings(&m).unwrap();
        let back = decode_embeddings(Path::new("e"), &bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(encode_embeddings(&back).unwrap(), bytes);
        assert!(decode_embeddings(Path::new("e"), &bytes[..bytes.len() - 1]).is_err());
    }
}
