//! `D2SD` dense vector files: magic, version u32 = 1, u32 count, u32 dim,
//! `count` × (u16 id length + UTF-8 id), then the f32 row-major payload.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use d2s_core::DenseMatrix;

use crate::error::{Error, Result};
use crate::io::{atomic_write, read_file, to_u32, ByteReader, PutLe};

const MAGIC: &[u8; 4] = b"D2SD";
const VERSION: u32 = 1;

/// Named f32 rows of a fixed width.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseStore {
    ids: Vec<String>,
    dim: usize,
    values: Vec<f32>,
}

impl DenseStore {
    pub fn new(ids: Vec<String>, dim: usize, values: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Data("dense dimension must be positive".into()));
        }
        if values.len() != ids.len() * dim {
            return Err(Error::Data(format!(
                "{} values for {} rows of width {dim}",
                values.len(),
                ids.len()
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::Data(format!("duplicate id {dup:?}")));
        }
        Ok(Self { ids, dim, values })
    }

    /// Rounds every entry of `m` to f32.
    pub fn from_matrix(ids: Vec<String>, m: &DenseMatrix) -> Result<Self> {
        if ids.len() != m.rows() {
            return Err(Error::Data(format!("{} ids for {} rows", ids.len(), m.rows())));
        }
        Self::new(ids, m.cols(), m.as_slice().iter().map(|&v| v as f32).collect())
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_matrix(&self) -> DenseMatrix {
        let data = self.values.iter().map(|&v| f64::from(v)).collect();
        DenseMatrix::from_vec(self.len(), self.dim, data).expect("shape checked at construction")
    }

    /// Rows at `rows`, in that order, as a matrix.
    pub fn select_matrix(&self, rows: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            data.extend(self.row(r).iter().map(|&v| f64::from(v)));
        }
        DenseMatrix::from_vec(rows.len(), self.dim, data).expect("shape follows from rows")
    }

    pub fn id_index(&self) -> HashMap<&str, usize> {
        self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect()
    }
}

pub fn encode_dense(store: &DenseStore) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + store.values.len() * 4);
    out.extend_from_slice(MAGIC);
    out.put_u32(VERSION);
    out.put_u32(to_u32(store.len(), "row count")?);
    out.put_u32(to_u32(store.dim, "dimension")?);
    for id in &store.ids {
        out.put_short_string(id)?;
    }
    for &v in &store.values {
        out.put_f32(v);
    }
    Ok(out)
}

pub fn decode_dense(path: &Path, bytes: &[u8]) -> Result<DenseStore> {
    let mut r = ByteReader::new(path, bytes);
    r.header(MAGIC, VERSION)?;
    let count = r.u32()? as usize;
    let dim_at = r.offset();
    let dim = r.u32()? as usize;
    if dim == 0 {
        return Err(r.error_at(dim_at, "dimension is zero"));
    }
    let mut ids = Vec::with_capacity(count.min(bytes.len() / 2));
    let mut seen = HashSet::new();
    for _ in 0..count {
        let at = r.offset();
        let id = r.short_string()?;
        if !seen.insert(id.clone()) {
            return Err(r.error_at(at, format!("duplicate id {id:?}")));
        }
        ids.push(id);
    }
    let n = count
        .checked_mul(dim)
        .ok_or_else(|| r.error("payload size overflows"))?;
    let values = r.f32s(n)?;
    r.finish()?;
    DenseStore::new(ids, dim, values)
}

pub fn write_dense(store: &DenseStore, path: &Path, force: bool) -> Result<()> {
    atomic_write(path, &encode_dense(store)?, force)
}

pub fn read_dense(path: &Path) -> Result<DenseStore> {
    decode_dense(path, &read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DenseStore {
        let ids = vec!["a".to_string(), "βeta".to_string()];
        DenseStore::new(ids, 3, vec![1.0, -0.5, f32::MIN_POSITIVE, 0.0, -0.0, 3.25]).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = sample();
        let bytes = encode_dense(&s).unwrap();
        let back = decode_dense(Path::new("t"), &bytes).unwrap();
        assert_eq!(encode_dense(&back).unwrap(), bytes);
        assert_eq!(back.ids(), s.ids());
        assert_eq!(back.row(1)[1].to_bits(), (-0.0f32).to_bits());
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = encode_dense(&sample()).unwrap();
        let cut = &bytes[..bytes.len() - 2];
        match decode_dense(Path::new("t"), cut) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset as usize, bytes.len() - 24),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_zero_dim_and_bad_magic() {
        let mut bytes = encode_dense(&sample()).unwrap();
        bytes[12..16].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(decode_dense(Path::new("t"), &bytes), Err(Error::Format { .. })));
        let mut bytes = encode_dense(&sample()).unwrap();
        bytes[0] = b'X';
        assert!(decode_dense(Path::new("t"), &bytes).is_err());
        assert!(DenseStore::new(vec![], 0, vec![]).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let ids = vec!["a".to_string(), "a".to_string()];
        assert!(DenseStore::new(ids, 1, vec![0.0, 1.0]).is_err());
    }
}
