//! Row-wise layer normalization with a learnable affine map.
//!
//! Forward, per row of width `n`:
//!
//! ```text
//! mu    = sum(x) / n
//! var   = sum((x - mu)^2) / n          (population variance)
//! x_hat = (x - mu) / sqrt(var + eps)
//! y     = x_hat * gamma + beta
//! ```
//!
//! Backward, with `g = dy * gamma`:
//!
//! ```text
//! dgamma = sum_rows(dy * x_hat)
//! dbeta  = sum_rows(dy)
//! dx     = inv_std / n * (n * g - sum(g) - x_hat * sum(g * x_hat))
//! ```

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub mean: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub x_hat: DenseMatrix,
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormGrads {
    pub dx: DenseMatrix,
    pub dgamma: Vec<f64>,
    pub dbeta: Vec<f64>,
}

pub fn layer_norm_forward(
    x: &DenseMatrix,
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> Result<(DenseMatrix, LayerNormCache)> {
    let n = x.cols();
    if !(eps > 0.0) {
        return Err(Error::Config(alloc::format!(
            "layer norm epsilon must be > 0, got {eps}"
        )));
    }
    if n < 2 {
        return Err(Error::Config(alloc::format!(
            "layer norm needs rows of width >= 2, got {n}"
        )));
    }
    if gamma.len() != n || beta.len() != n {
        return Err(Error::Shape {
            op: "layer_norm_forward",
            expected: (n, n),
            found: (gamma.len(), beta.len()),
        });
    }
    let mut y = DenseMatrix::zeros(x.rows(), n);
    let mut x_hat = DenseMatrix::zeros(x.rows(), n);
    let mut mean = Vec::with_capacity(x.rows());
    let mut inv_std = Vec::with_capacity(x.rows());
    let inv_n = 1.0 / n as f64;
    for r in 0..x.rows() {
        let row = x.row(r);
        let mu = row.iter().fold(0.0, |a, v| a + v) * inv_n;
        let var = row.iter().fold(0.0, |a, v| a + (v - mu) * (v - mu)) * inv_n;
        let is = 1.0 / libm::sqrt(var + eps);
        let xh = x_hat.row_mut(r);
        for (h, v) in xh.iter_mut().zip(row) {
            *h = (v - mu) * is;
        }
        let xh = x_hat.row(r).to_vec();
        for (j, out) in y.row_mut(r).iter_mut().enumerate() {
            *out = xh[j] * gamma[j] + beta[j];
        }
        mean.push(mu);
        inv_std.push(is);
    }
    Ok((
        y,
        LayerNormCache {
            mean,
            inv_std,
            x_hat,
            gamma: gamma.to_vec(),
        },
    ))
}

pub fn layer_norm_backward(cache: &LayerNormCache, dy: &DenseMatrix) -> Result<LayerNormGrads> {
    if dy.shape() != cache.x_hat.shape() {
        return Err(Error::Shape {
            op: "layer_norm_backward",
            expected: cache.x_hat.shape(),
            found: dy.shape(),
        });
    }
    let n = dy.cols();
    let nf = n as f64;
    let mut dx = DenseMatrix::zeros(dy.rows(), n);
    let mut dgamma = vec![0.0; n];
    let mut dbeta = vec![0.0; n];
    let mut g = vec![0.0; n];
    for r in 0..dy.rows() {
        let dyr = dy.row(r);
        let xh = cache.x_hat.row(r);
        let mut sum_g = 0.0;
        let mut sum_gx = 0.0;
        for j in 0..n {
            dgamma[j] += dyr[j] * xh[j];
            dbeta[j] += dyr[j];
            g[j] = dyr[j] * cache.gamma[j];
            sum_g += g[j];
            sum_gx += g[j] * xh[j];
        }
        let scale = cache.inv_std[r] / nf;
        for (j, out) in dx.row_mut(r).iter_mut().enumerate() {
            *out = scale * (nf * g[j] - sum_g - xh[j] * sum_gx);
        }
    }
    Ok(LayerNormGrads { dx, dgamma, dbeta })
}
