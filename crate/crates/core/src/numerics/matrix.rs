use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape {
                op: "from_vec",
                expected: (rows, cols),
                found: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, and a zero-width matrix still has rows
        (0..self.rows).map(move |i| self.row(i))
    }

    /// Copies the selected rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Self {
        // Square tiles keep both the reads and the strided writes in cache.
        const TILE: usize = 32;
        let mut out = Self::zeros(self.cols, self.rows);
        for i0 in (0..self.rows).step_by(TILE) {
            for j0 in (0..self.cols).step_by(TILE) {
                for i in i0..(i0 + TILE).min(self.rows) {
                    for j in j0..(j0 + TILE).min(self.cols) {
                        out.data[j * self.rows + i] = self.data[i * self.cols + j];
                    }
                }
            }
        }
        out
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Index of the first non-finite entry, as (row, col).
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        let cols = self.cols.max(1);
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|p| (p / cols, p % cols))
    }

    /// `self · rhs`.
    ///
    /// Each output entry accumulates `a[i,k]·b[k,j]` for ascending `k`, the
    /// same order as the textbook triple loop, so the result does not depend
    /// on how rows are partitioned. Zero entries of `self` are skipped; with
    /// finite operands this leaves every sum bit-identical.
    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        let mut out = DenseMatrix::zeros(self.rows, rhs.cols);
        self.matmul_acc(rhs, &mut out)?;
        Ok(out)
    }

    /// `out += self · rhs`, same accumulation order as [`DenseMatrix::matmul`].
    pub fn matmul_acc(&self, rhs: &DenseMatrix, out: &mut DenseMatrix) -> Result<()> {
        if self.cols != rhs.rows {
            return Err(Error::Shape {
                op: "matmul",
                expected: (self.cols, rhs.cols),
                found: rhs.shape(),
            });
        }
        if out.shape() != (self.rows, rhs.cols) {
            return Err(Error::Shape {
                op: "matmul",
                expected: (self.rows, rhs.cols),
                found: out.shape(),
            });
        }
        let n = rhs.cols;
        let b_row = |k: usize| &rhs.data[k * n..(k + 1) * n];
        let mut nonzero: Vec<(usize, f64)> = Vec::with_capacity(self.cols);
        for i in 0..self.rows {
            let a_row = &self.data[i * self.cols..(i + 1) * self.cols];
            let out_row = &mut out.data[i * n..(i + 1) * n];
            nonzero.clear();
            nonzero.extend(a_row.iter().copied().enumerate().filter(|&(_, a)| a != 0.0));
            let mut groups = nonzero.chunks_exact(4);
            for g in &mut groups {
                // Four rank-one updates fused into one pass; each output
                // still accumulates its terms in ascending k order.
                let [(k0, a0), (k1, a1), (k2, a2), (k3, a3)] = [g[0], g[1], g[2], g[3]];
                let rows = out_row.iter_mut().zip(b_row(k0)).zip(b_row(k1)).zip(b_row(k2)).zip(b_row(k3));
                for ((((o, &x0), &x1), &x2), &x3) in rows {
                    let mut acc = *o;
                    acc += a0 * x0;
                    acc += a1 * x1;
                    acc += a2 * x2;
                    acc += a3 * x3;
                    *o = acc;
                }
            }
            for &(k, a) in groups.remainder() {
                axpy(a, b_row(k), out_row);
            }
        }
        Ok(())
    }

    /// `selfᵀ · rhs` without materializing the transpose.
    ///
    /// Output entry `(i, j)` sums `self[k,i]·rhs[k,j]` over ascending `k`.
    pub fn t_matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != rhs.rows {
            return Err(Error::Shape {
                op: "t_matmul",
                expected: (self.rows, rhs.cols),
                found: rhs.shape(),
            });
        }
        let n = rhs.cols;
        let mut out = DenseMatrix::zeros(self.cols, n);
        for k in 0..self.rows {
            let b_row = rhs.row(k);
            for (i, &a) in self.row(k).iter().enumerate() {
                axpy(a, b_row, &mut out.data[i * n..(i + 1) * n]);
            }
        }
        Ok(out)
    }
}

/// `out += a · b`, skipped entirely when `a` is zero.
#[inline]
fn axpy(a: f64, b: &[f64], out: &mut [f64]) {
    if a == 0.0 {
        return;
    }
    for (o, &x) in out.iter_mut().zip(b) {
        *o += a * x;
    }
}

/// Inner product over the common prefix. Four interleaved partial sums
/// (lane `l` takes indices `≡ l mod 4`) are combined as `(s0+s1)+(s2+s3)`
/// before the tail, a fixed order that lets the loop vectorize.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut lanes = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..4 {
            lanes[l] += x[l] * y[l];
        }
    }
    let mut sum = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        sum += x * y;
    }
    sum
}
