//! The sparse projection head: `S = log1p_relu(W2 · layernorm(W1 · z))`.
//!
//! `W1` maps a `d`-dimensional dense vector to a hidden width `ω`, layer
//! normalization (with learnable `γ`, `β`) follows, and `W2` lifts the
//! result to one logit per vocabulary term. Negative logits are cut to zero
//! and positive ones compressed with `ln(1 + x)`.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{
    layer_norm_backward, layer_norm_forward, log1p_relu, log1p_relu_backward, DenseMatrix,
    LayerNormCache,
};
use crate::sparse::SparseVector;

pub const DEFAULT_LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionParams {
    /// `ω × d`
    pub w1: DenseMatrix,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    /// `|V| × ω`
    pub w2: DenseMatrix,
    pub eps: f64,
}

impl ProjectionParams {
    /// Seeded initialization. `W1 ~ U(±1/√d)`, `γ = 1`, `β = 0`, and `W2`
    /// either copies `vocab_embeddings` or draws from `U(±1/√ω)`.
    pub fn init(
        dense_dim: usize,
        width: usize,
        vocab_size: usize,
        seed: u64,
        vocab_embeddings: Option<&DenseMatrix>,
    ) -> Result<Self> {
        validate_dims(dense_dim, width, vocab_size)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a1 = 1.0 / libm::sqrt(dense_dim as f64);
        let w1 = DenseMatrix::from_fn(width, dense_dim, |_, _| rng.gen_range(-a1..=a1));
        let w2 = match vocab_embeddings {
            Some(e) => {
                if e.shape() != (vocab_size, width) {
                    return Err(Error::Shape {
                        op: "init_params(vocab_embeddings)",
                        expected: (vocab_size, width),
                        found: e.shape(),
                    });
                }
                e.clone()
            }
            None => {
                let a2 = 1.0 / libm::sqrt(width as f64);
                DenseMatrix::from_fn(vocab_size, width, |_, _| rng.gen_range(-a2..=a2))
            }
        };
        let params = Self {
            w1,
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            w2,
            eps: DEFAULT_LN_EPS,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn dense_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn width(&self) -> usize {
        self.w1.rows()
    }

    pub fn vocab_size(&self) -> usize {
        self.w2.rows()
    }

    pub fn validate(&self) -> Result<()> {
        validate_dims(self.dense_dim(), self.width(), self.vocab_size())?;
        let w = self.width();
        if self.gamma.len() != w || self.beta.len() != w || self.w2.cols() != w {
            return Err(Error::Shape {
                op: "ProjectionParams",
                expected: (w, w),
                found: (self.gamma.len(), self.w2.cols()),
            });
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(alloc::format!("layer norm epsilon {}", self.eps)));
        }
        let finite = self.w1.all_finite()
            && self.w2.all_finite()
            && self.gamma.iter().chain(&self.beta).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite {
                stage: "ProjectionParams",
                detail: "parameter tensor holds NaN or infinity".into(),
            });
        }
        Ok(())
    }

    /// Number of scalars per tensor, in [`ProjectionParams::tensors_mut`] order.
    pub fn tensor_sizes(&self) -> [usize; 4] {
        [
            self.w1.as_slice().len(),
            self.gamma.len(),
            self.beta.len(),
            self.w2.as_slice().len(),
        ]
    }

    /// `[W1, γ, β, W2]`.
    pub fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_mut_slice(),
            &mut self.gamma,
            &mut self.beta,
            self.w2.as_mut_slice(),
        ]
    }

    pub fn tensors(&self) -> [&[f64]; 4] {
        [self.w1.as_slice(), &self.gamma, &self.beta, self.w2.as_slice()]
    }

    /// All parameters flattened in tensor order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
    }

    /// Rounds every parameter through `f32`, the precision of stored checkpoints.
    pub fn round_to_f32(&mut self) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v = f64::from(*v as f32));
        }
        self.eps = f64::from(self.eps as f32);
    }
}

fn validate_dims(d: usize, width: usize, vocab: usize) -> Result<()> {
    if d == 0 || width < 2 || vocab == 0 {
        return Err(Error::Config(alloc::format!(
            "projection dims need d >= 1, width >= 2, |V| >= 1 (got {d}, {width}, {vocab})"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: DenseMatrix,
    pub layer_norm: LayerNormCache,
    pub hidden: DenseMatrix,
    pub pre_activation: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionGrads {
    pub w1: DenseMatrix,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub w2: DenseMatrix,
    /// Gradient w.r.t. the (frozen) dense input, for diagnostics.
    pub input: DenseMatrix,
}

impl ProjectionGrads {
    pub fn zeros_like(params: &ProjectionParams, batch: usize) -> Self {
        Self {
            w1: DenseMatrix::zeros(params.width(), params.dense_dim()),
            gamma: vec![0.0; params.width()],
            beta: vec![0.0; params.width()],
            w2: DenseMatrix::zeros(params.vocab_size(), params.width()),
            input: DenseMatrix::zeros(batch, params.dense_dim()),
        }
    }

    pub fn tensors(&self) -> [&[f64]; 4] {
        [self.w1.as_slice(), &self.gamma, &self.beta, self.w2.as_slice()]
    }

    /// `self += other` over the parameter tensors (not the input gradient).
    pub fn accumulate(&mut self, other: &ProjectionGrads) {
        let pairs = [
            (self.w1.as_mut_slice(), other.w1.as_slice()),
            (&mut self.gamma[..], &other.gamma[..]),
            (&mut self.beta[..], &other.beta[..]),
            (self.w2.as_mut_slice(), other.w2.as_slice()),
        ];
        for (dst, src) in pairs {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }
}

fn check_finite(m: &DenseMatrix, stage: &'static str) -> Result<()> {
    match m.first_non_finite() {
        None => Ok(()),
        Some((r, c)) => Err(Error::NonFinite {
            stage,
            detail: alloc::format!("row {r} col {c} = {}", m.get(r, c)),
        }),
    }
}

/// Batched forward pass. Returns the dense nonnegative `batch × |V|` output.
pub fn project_forward(
    params: &ProjectionParams,
    input: &DenseMatrix,
) -> Result<(DenseMatrix, ForwardCache)> {
    if input.cols() != params.dense_dim() {
        return Err(Error::Shape {
            op: "project_forward",
            expected: (input.rows(), params.dense_dim()),
            found: input.shape(),
        });
    }
    let z1 = input.matmul(&params.w1.transpose())?;
    check_finite(&z1, "projection: W1")?;
    let (hidden, ln_cache) = layer_norm_forward(&z1, &params.gamma, &params.beta, params.eps)?;
    check_finite(&hidden, "projection: layer norm")?;
    let pre = hidden.matmul(&params.w2.transpose())?;
    check_finite(&pre, "projection: W2")?;
    let out = log1p_relu(&pre);
    Ok((
        out,
        ForwardCache {
            input: input.clone(),
            layer_norm: ln_cache,
            hidden,
            pre_activation: pre,
        },
    ))
}

/// Exact gradients of `sum(upstream ⊙ project_forward(input))`.
pub fn project_backward(
    params: &ProjectionParams,
    cache: &ForwardCache,
    upstream: &DenseMatrix,
) -> Result<ProjectionGrads> {
    if upstream.shape() != cache.pre_activation.shape() {
        return Err(Error::Shape {
            op: "project_backward",
            expected: cache.pre_activation.shape(),
            found: upstream.shape(),
        });
    }
    let d_pre = log1p_relu_backward(&cache.pre_activation, upstream);
    let w2 = d_pre.t_matmul(&cache.hidden)?;
    let d_hidden = d_pre.matmul(&params.w2)?;
    let ln = layer_norm_backward(&cache.layer_norm, &d_hidden)?;
    let w1 = ln.dx.t_matmul(&cache.input)?;
    let input = ln.dx.matmul(&params.w1)?;
    Ok(ProjectionGrads {
        w1,
        gamma: ln.dgamma,
        beta: ln.dbeta,
        w2,
        input,
    })
}

/// Encodes dense rows into sparse vectors, `chunk` rows at a time.
pub fn encode(
    params: &ProjectionParams,
    input: &DenseMatrix,
    threshold: f64,
    chunk: usize,
) -> Result<Vec<SparseVector>> {
    let chunk = chunk.max(1);
    let mut out = Vec::with_capacity(input.rows());
    let mut start = 0;
    while start < input.rows() {
        let end = (start + chunk).min(input.rows());
        let idx: Vec<usize> = (start..end).collect();
        let (s, _) = project_forward(params, &input.select_rows(&idx))?;
        out.extend(s.row_iter().map(|row| SparseVector::from_dense(row, threshold)));
        start = end;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;

    fn random_input(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn init_is_deterministic_and_in_range() {
        let a = ProjectionParams::init(8, 4, 16, 7, None).unwrap();
        let b = ProjectionParams::init(8, 4, 16, 7, None).unwrap();
        assert_eq!(a, b);
        let bound = 1.0 / libm::sqrt(8.0);
        assert!(a.w1.as_slice().iter().all(|v| v.abs() <= bound));
        assert!(a.gamma.iter().all(|v| *v == 1.0) && a.beta.iter().all(|v| *v == 0.0));
        assert_ne!(a, ProjectionParams::init(8, 4, 16, 8, None).unwrap());
    }

    #[test]
    fn init_copies_vocab_embeddings() {
        let emb = random_input(16, 4, 3);
        let p = ProjectionParams::init(8, 4, 16, 1, Some(&emb)).unwrap();
        assert_eq!(p.w2, emb);
        let wrong = random_input(15, 4, 3);
        assert!(matches!(
            ProjectionParams::init(8, 4, 16, 1, Some(&wrong)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn rejects_degenerate_width() {
        assert!(ProjectionParams::init(8, 1, 16, 1, None).is_err());
        assert!(ProjectionParams::init(0, 4, 16, 1, None).is_err());
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let p = ProjectionParams::init(5, 3, 9, 2, None).unwrap();
        let (s, cache) = project_forward(&p, &DenseMatrix::zeros(2, 5)).unwrap();
        assert!(cache.hidden.as_slice().iter().all(|v| *v == 0.0));
        assert!(s.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn output_is_nonnegative() {
        for seed in 0..10 {
            let p = ProjectionParams::init(6, 4, 11, seed, None).unwrap();
            let z = random_input(5, 6, seed + 50);
            let (s, _) = project_forward(&p, &z).unwrap();
            assert!(s.as_slice().iter().all(|v| *v >= 0.0));
        }
    }

    /// Straight-line re-implementation of the four steps, one row at a time.
    fn straight_line(p: &ProjectionParams, z: &[f64]) -> Vec<f64> {
        let w = p.width();
        let z1: Vec<f64> = (0..w)
            .map(|i| (0..z.len()).map(|j| p.w1.get(i, j) * z[j]).sum())
            .collect();
        let mean = z1.iter().sum::<f64>() / w as f64;
        let var = z1.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w as f64;
        let z2: Vec<f64> = (0..w)
            .map(|i| (z1[i] - mean) / libm::sqrt(var + p.eps) * p.gamma[i] + p.beta[i])
            .collect();
        (0..p.vocab_size())
            .map(|v| {
                let s: f64 = (0..w).map(|i| p.w2.get(v, i) * z2[i]).sum();
                libm::log(1.0 + s.max(0.0))
            })
            .collect()
    }

    #[test]
    fn matches_straight_line_oracle() {
        for seed in 0..5 {
            let mut p = ProjectionParams::init(6, 4, 11, seed, None).unwrap();
            p.beta = vec![0.1, -0.2, 0.05, 0.3];
            p.gamma = vec![1.1, 0.9, 1.3, 0.7];
            let z = random_input(3, 6, seed + 9);
            let (s, _) = project_forward(&p, &z).unwrap();
            for r in 0..3 {
                let want = straight_line(&p, z.row(r));
                for (a, b) in s.row(r).iter().zip(&want) {
                    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let p = ProjectionParams::init(6, 4, 11, 1, None).unwrap();
        let z = random_input(3, 6, 2);
        let (_, cache) = project_forward(&p, &z).unwrap();
        let g = project_backward(&p, &cache, &DenseMatrix::zeros(3, 11)).unwrap();
        assert!(g.to_flat().iter().all(|v| *v == 0.0));
        assert!(g.input.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dead_units_get_no_gradient() {
        let p = ProjectionParams::init(6, 4, 11, 3, None).unwrap();
        let z = random_input(3, 6, 4);
        let (_, cache) = project_forward(&p, &z).unwrap();
        let upstream = DenseMatrix::from_fn(3, 11, |r, v| {
            if cache.pre_activation.get(r, v) <= 0.0 {
                1.0
            } else {
                0.0
            }
        });
        let g = project_backward(&p, &cache, &upstream).unwrap();
        assert!(g.to_flat().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_w2_gives_empty_sparse_vectors() {
        let mut p = ProjectionParams::init(6, 4, 11, 3, None).unwrap();
        p.w2.scale(0.0);
        let z = random_input(7, 6, 4);
        let enc = encode(&p, &z, 0.0, 3).unwrap();
        assert_eq!(enc.len(), 7);
        assert!(enc.iter().all(SparseVector::is_empty));
    }

    #[test]
    fn forward_rejects_wrong_input_width() {
        let p = ProjectionParams::init(6, 4, 11, 3, None).unwrap();
        assert!(project_forward(&p, &DenseMatrix::zeros(2, 5)).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (d, w, v, b) = (6, 4, 11, 3);
        for seed in 0..12 {
            let mut p = ProjectionParams::init(d, w, v, seed, None).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 77);
            p.gamma.iter_mut().for_each(|g| *g = rng.gen_range(0.5..1.5));
            p.beta.iter_mut().for_each(|g| *g = rng.gen_range(-0.3..0.3));
            let z = random_input(b, d, seed + 500);
            let probe = DenseMatrix::from_fn(b, v, |_, _| rng.gen_range(-1.0..1.0));
            let (_, cache) = project_forward(&p, &z).unwrap();
            let analytic = project_backward(&p, &cache, &probe).unwrap().to_flat();
            let theta = p.to_flat();
            let mut scratch = p.clone();
            let report = grad_check(
                |t| {
                    scratch.set_flat(t);
                    let (s, _) = project_forward(&scratch, &z).unwrap();
                    s.as_slice()
                        .iter()
                        .zip(probe.as_slice())
                        .fold(0.0, |a, (x, y)| a + x * y)
                },
                &theta,
                &analytic,
                1e-5,
            )
            .unwrap();
            assert!(report.max_rel_error <= 1e-6, "seed {seed}: {report:?}");
        }
    }
}
