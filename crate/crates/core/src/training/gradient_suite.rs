//! Finite-difference checks for every hand-written backward pass, from single
//! layers up to the full training objective.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::format;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{
    grad_check, layer_norm_backward, layer_norm_forward, log1p_relu, log1p_relu_backward, DenseMatrix,
};
use crate::projection::{project_backward, project_forward, ProjectionParams, DEFAULT_LN_EPS};
use crate::training::{
    dense_targets, distill_loss_on, expand, ExpansionMask, GradientSupport, LossWeights, OriginalTermGating,
};

/// Tolerance for single layers.
pub const LAYER_TOLERANCE: f64 = 1e-6;
/// Tolerance for anything that goes through the loss (softmax and log2 make
/// the central difference noisier).
pub const LOSS_TOLERANCE: f64 = 1e-4;

const LAYER_STEP: f64 = 1e-5;
const LOSS_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteDims {
    pub dense_dim: usize,
    pub width: usize,
    pub vocab_size: usize,
    pub batch: usize,
}

impl Default for SuiteDims {
    fn default() -> Self {
        Self {
            dense_dim: 8,
            width: 5,
            vocab_size: 17,
            batch: 3,
        }
    }
}

/// Worst relative error of one tensor's gradient over all seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: String,
    pub tolerance: f64,
    pub max_rel_error: f64,
    pub seeds: usize,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

/// Runs every suite over `seeds`. With `corrupt` the analytic gradients are
/// scaled by 1.01 before comparison, which every suite must catch.
pub fn run_gradient_suites(dims: SuiteDims, seeds: &[u64], corrupt: bool) -> Result<Vec<SuiteResult>> {
    if seeds.is_empty() {
        return Err(Error::Config("gradient check needs at least one seed".into()));
    }
    if dims.batch < 2 || dims.width < 2 || dims.dense_dim == 0 || dims.vocab_size == 0 {
        return Err(Error::Config(format!("gradient check dimensions too small: {dims:?}")));
    }
    let mut results: Vec<SuiteResult> = Vec::new();
    let mut record = |name: &str, tolerance: f64, err: f64| {
        match results.iter_mut().find(|r| r.name == name) {
            Some(r) => {
                r.max_rel_error = r.max_rel_error.max(err);
                r.seeds += 1;
            }
            None => results.push(SuiteResult {
                name: name.into(),
                tolerance,
                max_rel_error: err,
                seeds: 1,
            }),
        }
    };
    let skew = if corrupt { 1.01 } else { 1.0 };
    for &seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let err = check_log1p_relu(&dims, &mut rng, skew)?;
        record("log1p_relu", LAYER_TOLERANCE, err);
        for (name, err) in check_layer_norm(&dims, &mut rng, skew)? {
            record(name, LAYER_TOLERANCE, err);
        }
        for (name, err) in check_projection(&dims, seed, &mut rng, skew)? {
            record(name, LAYER_TOLERANCE, err);
        }
        for (name, err) in check_loss(&dims, &mut rng, skew)? {
            record(name, LOSS_TOLERANCE, err);
        }
        for (name, err) in check_composed(&dims, seed, &mut rng, skew)? {
            record(name, LOSS_TOLERANCE, err);
        }
    }
    Ok(results)
}

fn random(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(lo..hi))
}

fn probe_sum(y: &DenseMatrix, probe: &DenseMatrix) -> f64 {
    y.as_slice().iter().zip(probe.as_slice()).fold(0.0, |a, (u, v)| a + u * v)
}

/// Max error per named slice of a flat gradient.
fn split_errors(
    parts: &[(&'static str, usize)],
    analytic: &[f64],
    numeric: &[f64],
) -> Vec<(&'static str, f64)> {
    let mut start = 0;
    parts
        .iter()
        .map(|&(name, len)| {
            let err = analytic[start..start + len]
                .iter()
                .zip(&numeric[start..start + len])
                .map(|(a, n)| (a - n).abs() / f64::max(1e-8, a.abs() + n.abs()))
                .fold(0.0, f64::max);
            start += len;
            (name, err)
        })
        .collect()
}

fn skewed(mut g: Vec<f64>, skew: f64) -> Vec<f64> {
    g.iter_mut().for_each(|v| *v *= skew);
    g
}

fn check_log1p_relu(dims: &SuiteDims, rng: &mut ChaCha8Rng, skew: f64) -> Result<f64> {
    let (b, v) = (dims.batch, dims.vocab_size);
    // Keep inputs away from the kink so the central difference is smooth.
    let x = DenseMatrix::from_fn(b, v, |_, _| {
        let m = rng.gen_range(0.1..2.0);
        if rng.gen::<bool>() {
            m
        } else {
            -m
        }
    });
    let probe = random(b, v, -1.0, 1.0, rng);
    let analytic = skewed(log1p_relu_backward(&x, &probe).into_vec(), skew);
    let report = grad_check(
        |t| {
            let x = DenseMatrix::from_vec(b, v, t.to_vec()).expect("shape is fixed");
            probe_sum(&log1p_relu(&x), &probe)
        },
        x.as_slice(),
        &analytic,
        LAYER_STEP,
    )?;
    Ok(report.max_rel_error)
}

fn check_layer_norm(dims: &SuiteDims, rng: &mut ChaCha8Rng, skew: f64) -> Result<Vec<(&'static str, f64)>> {
    let (b, n) = (dims.batch, dims.width);
    let x = random(b, n, -1.0, 1.0, rng);
    let gamma: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    let beta: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let probe = random(b, n, -1.0, 1.0, rng);
    let (_, cache) = layer_norm_forward(&x, &gamma, &beta, DEFAULT_LN_EPS)?;
    let grads = layer_norm_backward(&cache, &probe)?;
    let mut analytic = grads.dx.into_vec();
    analytic.extend(grads.dgamma);
    analytic.extend(grads.dbeta);
    let analytic = skewed(analytic, skew);

    let mut theta = x.as_slice().to_vec();
    theta.extend_from_slice(&gamma);
    theta.extend_from_slice(&beta);
    let report = grad_check(
        |t| {
            let x = DenseMatrix::from_vec(b, n, t[..b * n].to_vec()).expect("shape is fixed");
            match layer_norm_forward(&x, &t[b * n..b * n + n], &t[b * n + n..], DEFAULT_LN_EPS) {
                Ok((y, _)) => probe_sum(&y, &probe),
                Err(_) => f64::NAN,
            }
        },
        &theta,
        &analytic,
        LAYER_STEP,
    )?;
    let parts = [("layer_norm.input", b * n), ("layer_norm.gamma", n), ("layer_norm.beta", n)];
    Ok(split_errors(&parts, &analytic, &report.numeric))
}

fn random_params(dims: &SuiteDims, seed: u64, rng: &mut ChaCha8Rng) -> Result<ProjectionParams> {
    let mut p = ProjectionParams::init(dims.dense_dim, dims.width, dims.vocab_size, seed, None)?;
    p.gamma.iter_mut().for_each(|g| *g = rng.gen_range(0.5..1.5));
    p.beta.iter_mut().for_each(|g| *g = rng.gen_range(-0.3..0.3));
    Ok(p)
}

fn tensor_parts(p: &ProjectionParams, prefix: &str) -> [(&'static str, usize); 4] {
    let [w1, gamma, beta, w2] = p.tensor_sizes();
    match prefix {
        "projection" => [
            ("projection.w1", w1),
            ("projection.gamma", gamma),
            ("projection.beta", beta),
            ("projection.w2", w2),
        ],
        _ => [
            ("composed.w1", w1),
            ("composed.gamma", gamma),
            ("composed.beta", beta),
            ("composed.w2", w2),
        ],
    }
}

fn check_projection(
    dims: &SuiteDims,
    seed: u64,
    rng: &mut ChaCha8Rng,
    skew: f64,
) -> Result<Vec<(&'static str, f64)>> {
    let p = random_params(dims, seed, rng)?;
    let z = random(dims.batch, dims.dense_dim, -1.0, 1.0, rng);
    let probe = random(dims.batch, dims.vocab_size, -1.0, 1.0, rng);
    let (_, cache) = project_forward(&p, &z)?;
    let analytic = skewed(project_backward(&p, &cache, &probe)?.to_flat(), skew);
    let mut scratch = p.clone();
    let report = grad_check(
        |t| {
            scratch.set_flat(t);
            match project_forward(&scratch, &z) {
                Ok((s, _)) => probe_sum(&s, &probe),
                Err(_) => f64::NAN,
            }
        },
        &p.to_flat(),
        &analytic,
        LAYER_STEP,
    )?;
    Ok(split_errors(&tensor_parts(&p, "projection"), &analytic, &report.numeric))
}

fn check_loss(dims: &SuiteDims, rng: &mut ChaCha8Rng, skew: f64) -> Result<Vec<(&'static str, f64)>> {
    let (b, v, d) = (dims.batch, dims.vocab_size, dims.dense_dim);
    let c = random(b, v, 0.05, 1.0, rng);
    let i = random(b, v, 0.05, 1.0, rng);
    let t_ci = dense_targets(&random(b, d, -1.0, 1.0, rng), &random(b, d, -1.0, 1.0, rng), 0.5, false)?;
    let t_ic = dense_targets(&random(b, d, -1.0, 1.0, rng), &random(b, d, -1.0, 1.0, rng), 0.5, false)?;
    let w = LossWeights { lambda: 0.3, eta: 0.05 };
    let out = distill_loss_on(&c, &i, &t_ci, &t_ic, w, GradientSupport::All)?;
    let mut analytic = out.grad_captions.into_vec();
    analytic.extend(out.grad_images.into_vec());
    let analytic = skewed(analytic, skew);
    let mut theta = c.as_slice().to_vec();
    theta.extend_from_slice(i.as_slice());
    let report = grad_check(
        |t| {
            let c = DenseMatrix::from_vec(b, v, t[..b * v].to_vec()).expect("shape is fixed");
            let i = DenseMatrix::from_vec(b, v, t[b * v..].to_vec()).expect("shape is fixed");
            distill_loss_on(&c, &i, &t_ci, &t_ic, w, GradientSupport::All).map_or(f64::NAN, |o| o.loss)
        },
        &theta,
        &analytic,
        LOSS_STEP,
    )?;
    Ok(split_errors(&[("loss.captions", b * v), ("loss.images", b * v)], &analytic, &report.numeric))
}

/// Projection of both modalities, caption masking, and the loss, exactly as
/// one training step computes them.
fn check_composed(
    dims: &SuiteDims,
    seed: u64,
    rng: &mut ChaCha8Rng,
    skew: f64,
) -> Result<Vec<(&'static str, f64)>> {
    let (b, v, d) = (dims.batch, dims.vocab_size, dims.dense_dim);
    let p = random_params(dims, seed, rng)?;
    let z_c = random(b, d, -1.0, 1.0, rng);
    let z_i = random(b, d, -1.0, 1.0, rng);
    let terms: Vec<Vec<u32>> = (0..b)
        .map(|_| {
            let mut t: Vec<u32> = (0..v as u32).filter(|_| rng.gen_bool(0.3)).collect();
            if t.is_empty() {
                t.push(rng.gen_range(0..v as u32));
            }
            t
        })
        .collect();
    let mask = ExpansionMask {
        caption: rng.gen_bool(0.5),
        terms: (0..v).map(|_| rng.gen_bool(0.5)).collect(),
    };
    let gating = OriginalTermGating::KeepAlways;
    let t_ci = dense_targets(&z_c, &z_i, 0.5, false)?;
    let t_ic = dense_targets(&z_i, &z_c, 0.5, false)?;
    let w = LossWeights { lambda: 0.3, eta: 0.05 };

    let (s_c, cache_c) = project_forward(&p, &z_c)?;
    let (s_i, cache_i) = project_forward(&p, &z_i)?;
    let s_c = expand(&terms, &s_c, &mask, gating)?;
    let out = distill_loss_on(&s_c, &s_i, &t_ci, &t_ic, w, GradientSupport::Positive)?;
    let grad_c = expand(&terms, &out.grad_captions, &mask, gating)?;
    let mut grads = project_backward(&p, &cache_c, &grad_c)?;
    grads.accumulate(&project_backward(&p, &cache_i, &out.grad_images)?);
    let analytic = skewed(grads.to_flat(), skew);

    let mut scratch = p.clone();
    let mut objective = |t: &[f64]| -> Result<f64> {
        scratch.set_flat(t);
        let (s_c, _) = project_forward(&scratch, &z_c)?;
        let (s_i, _) = project_forward(&scratch, &z_i)?;
        let s_c = expand(&terms, &s_c, &mask, gating)?;
        Ok(distill_loss_on(&s_c, &s_i, &t_ci, &t_ic, w, GradientSupport::Positive)?.loss)
    };
    let report = grad_check(|t| objective(t).unwrap_or(f64::NAN), &p.to_flat(), &analytic, LOSS_STEP)?;
    Ok(split_errors(&tensor_parts(&p, "composed"), &analytic, &report.numeric))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suites_pass() {
        let seeds: Vec<u64> = (0..10).collect();
        let results = run_gradient_suites(SuiteDims::default(), &seeds, false).unwrap();
        assert_eq!(results.len(), 1 + 3 + 4 + 2 + 4);
        for r in &results {
            assert_eq!(r.seeds, 10);
            assert!(r.passed(), "{r:?}");
        }
    }

    #[test]
    fn corrupted_gradients_fail_every_suite() {
        let results = run_gradient_suites(SuiteDims::default(), &[3], true).unwrap();
        for r in &results {
            assert!(!r.passed(), "{r:?}");
        }
    }

    #[test]
    fn rejects_empty_seed_list() {
        assert!(run_gradient_suites(SuiteDims::default(), &[], false).is_err());
    }
}
