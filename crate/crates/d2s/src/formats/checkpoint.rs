//! `D2SP` checkpoints: magic, version u32 = 1, u32 d, u32 ω, u32 |V|, f32 ε,
//! then W1 (ω × d), γ, β, W2 (|V| × ω), all f32 row-major with no padding.

use std::path::Path;

use d2s_core::{DenseMatrix, ProjectionParams};

use crate::error::Result;
use crate::io::{atomic_write, read_file, to_u32, ByteReader, PutLe};

const MAGIC: &[u8; 4] = b"D2SP";
const VERSION: u32 = 1;

/// Parameters are narrowed to f32; call
/// [`ProjectionParams::round_to_f32`] first for an exact round trip.
pub fn encode_checkpoint(params: &ProjectionParams) -> Result<Vec<u8>> {
    let n: usize = params.tensor_sizes().iter().sum();
    let mut out = Vec::with_capacity(24 + n * 4);
    out.extend_from_slice(MAGIC);
    out.put_u32(VERSION);
    out.put_u32(to_u32(params.dense_dim(), "dense dimension")?);
    out.put_u32(to_u32(params.width(), "width")?);
    out.put_u32(to_u32(params.vocab_size(), "vocabulary size")?);
    out.put_f32(params.eps as f32);
    for t in params.tensors() {
        for &v in t {
            out.put_f32(v as f32);
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(path: &Path, bytes: &[u8]) -> Result<ProjectionParams> {
    let mut r = ByteReader::new(path, bytes);
    r.header(MAGIC, VERSION)?;
    let dims_at = r.offset();
    let d = r.u32()? as usize;
    let width = r.u32()? as usize;
    let vocab = r.u32()? as usize;
    let eps = f64::from(r.f32()?);
    if d == 0 || width < 2 || vocab == 0 {
        return Err(r.error_at(dims_at, format!("invalid dimensions d={d} ω={width} |V|={vocab}")));
    }
    let mut take = |rows: usize, cols: usize| -> Result<Vec<f64>> {
        let n = rows.checked_mul(cols).ok_or_else(|| r.error("tensor size overflows"))?;
        Ok(r.f32s(n)?.into_iter().map(f64::from).collect())
    };
    let w1 = take(width, d)?;
    let gamma = take(width, 1)?;
    let beta = take(width, 1)?;
    let w2 = take(vocab, width)?;
    r.finish()?;
    let params = ProjectionParams {
        w1: DenseMatrix::from_vec(width, d, w1)?,
        gamma,
        beta,
        w2: DenseMatrix::from_vec(vocab, width, w2)?,
        eps,
    };
    params
        .validate()
        .map_err(|e| r.error_at(dims_at, e.to_string()))?;
    Ok(params)
}

pub fn save_checkpoint(params: &ProjectionParams, path: &Path, force: bool) -> Result<()> {
    atomic_write(path, &encode_checkpoint(params)?, force)
}

pub fn load_checkpoint(path: &Path) -> Result<ProjectionParams> {
    decode_checkpoint(path, &read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn round_trip_after_rounding() {
        let mut p = ProjectionParams::init(4, 3, 7, 9, None).unwrap();
        p.round_to_f32();
        let bytes = encode_checkpoint(&p).unwrap();
        let back = decode_checkpoint(Path::new("c"), &bytes).unwrap();
        assert_eq!(back, p);
        assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
    }

    #[test]
    fn corrupt_files_rejected() {
        let p = ProjectionParams::init(4, 3, 7, 9, None).unwrap();
        let bytes = encode_checkpoint(&p).unwrap();
        let mut bad = bytes.clone();
        bad[1] = b'X';
        assert!(matches!(decode_checkpoint(Path::new("c"), &bad), Err(Error::Format { offset: 0, .. })));
        assert!(decode_checkpoint(Path::new("c"), &bytes[..bytes.len() - 4]).is_err());
        let mut wide = bytes.clone();
        wide[12..16].copy_from_slice(&4u32.to_le_bytes());
        assert!(decode_checkpoint(Path::new("c"), &wide).is_err());
    }
}
