//! Bidirectional soft-label distillation with an L1 penalty.
//!
//! With sparse caption rows `C`, image rows `I` and logits `L = C Iᵀ`:
//!
//! ```text
//! l_CI = -(1/b) Σ_i Σ_j T_CI[i,j] · log2 softmax_j(L[i,:])
//! l_IC = -(1/b) Σ_j Σ_i T_IC[j,i] · log2 softmax_i(L[:,j])
//! loss = (1-λ)(l_CI + l_IC) + λ·η·(Σ C + Σ I)/b
//! ```
//!
//! `T_CI[i,:] = softmax_j(z_C[i]·z_I[j] / τ)` and `T_IC` the same with the
//! roles swapped. Targets are constants; only the sparse sides get gradients.

use alloc::vec;
use core::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::numerics::{dot, log_softmax_in_place, DenseMatrix};
use crate::training::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda: f64,
    pub eta: f64,
}

impl From<&TrainConfig> for LossWeights {
    fn from(cfg: &TrainConfig) -> Self {
        Self {
            lambda: cfg.lambda,
            eta: cfg.eta,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    /// `l_CI + l_IC` before the `(1-λ)` factor.
    pub bidirectional: f64,
    /// `η · (mean row L1 of captions + mean row L1 of images)` before the `λ` factor.
    pub regularizer: f64,
    pub grad_captions: DenseMatrix,
    pub grad_images: DenseMatrix,
}

fn l2_normalized(m: &DenseMatrix) -> DenseMatrix {
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let norm = libm::sqrt(row.iter().fold(0.0, |a, v| a + v * v));
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    out
}

/// Row-wise `softmax_j(a[i]·b[j] / τ)`.
pub fn dense_targets(a: &DenseMatrix, b: &DenseMatrix, tau: f64, normalize: bool) -> Result<DenseMatrix> {
    if a.cols() != b.cols() {
        return Err(Error::Shape {
            op: "dense_targets",
            expected: (b.rows(), a.cols()),
            found: b.shape(),
        });
    }
    let (a, b) = if normalize {
        (l2_normalized(a), l2_normalized(b))
    } else {
        (a.clone(), b.clone())
    };
    let mut t = a.matmul(&b.transpose())?;
    t.scale(1.0 / tau);
    for r in 0..t.rows() {
        let row = t.row_mut(r);
        log_softmax_in_place(row)?;
        row.iter_mut().for_each(|v| *v = libm::exp(*v));
    }
    Ok(t)
}

/// Hard-label targets: uniform over in-batch rows sharing the same key.
pub fn label_targets(row_keys: &[usize], col_keys: &[usize]) -> Result<DenseMatrix> {
    let mut t = DenseMatrix::zeros(row_keys.len(), col_keys.len());
    for (i, k) in row_keys.iter().enumerate() {
        let hits = col_keys.iter().filter(|c| *c == k).count();
        if hits == 0 {
            return Err(Error::Data(alloc::format!("row {i} has no positive in the batch")));
        }
        for (j, c) in col_keys.iter().enumerate() {
            if c == k {
                t.set(i, j, 1.0 / hits as f64);
            }
        }
    }
    Ok(t)
}

/// Loss with targets computed from the dense vectors.
pub fn distill_loss(
    captions: &DenseMatrix,
    images: &DenseMatrix,
    dense_captions: &DenseMatrix,
    dense_images: &DenseMatrix,
    cfg: &TrainConfig,
) -> Result<LossOutput> {
    let t_ci = dense_targets(dense_captions, dense_images, cfg.tau, cfg.normalize_dense)?;
    let t_ic = dense_targets(dense_images, dense_captions, cfg.tau, cfg.normalize_dense)?;
    distill_loss_with_targets(captions, images, &t_ci, &t_ic, cfg.into())
}

/// Which entries of the sparse inputs receive gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientSupport {
    /// Every entry, including zeros.
    All,
    /// Only strictly positive entries; the rest are left at zero. The
    /// projection's activation passes no gradient through zero outputs, so
    /// training loses nothing, and the cost scales with the number of
    /// nonzeros instead of `b · |V|`.
    Positive,
}

/// Loss with explicit targets. `t_ci` is `captions × images`, `t_ic` is
/// `images × captions`; each row must sum to one.
pub fn distill_loss_with_targets(
    captions: &DenseMatrix,
    images: &DenseMatrix,
    t_ci: &DenseMatrix,
    t_ic: &DenseMatrix,
    weights: LossWeights,
) -> Result<LossOutput> {
    distill_loss_on(captions, images, t_ci, t_ic, weights, GradientSupport::All)
}

/// [`distill_loss_with_targets`] with a choice of gradient support.
pub fn distill_loss_on(
    captions: &DenseMatrix,
    images: &DenseMatrix,
    t_ci: &DenseMatrix,
    t_ic: &DenseMatrix,
    weights: LossWeights,
    support: GradientSupport,
) -> Result<LossOutput> {
    let b = captions.rows();
    let vocab = captions.cols();
    if b < 2 {
        return Err(Error::Config(alloc::format!("in-batch loss needs >= 2 rows, got {b}")));
    }
    if images.shape() != (b, vocab) {
        return Err(Error::Shape {
            op: "distill_loss",
            expected: (b, vocab),
            found: images.shape(),
        });
    }
    if t_ci.shape() != (b, b) || t_ic.shape() != (b, b) {
        return Err(Error::Shape {
            op: "distill_loss(targets)",
            expected: (b, b),
            found: if t_ci.shape() != (b, b) { t_ci.shape() } else { t_ic.shape() },
        });
    }
    let LossWeights { lambda, eta } = weights;
    let bf = b as f64;

    // L = C Iᵀ; zero caption weights are skipped inside matmul.
    let images_t = images.transpose();
    let logits = captions.matmul(&images_t)?;
    if let Some((i, j)) = logits.first_non_finite() {
        return Err(Error::NonFinite {
            stage: "distill_loss",
            detail: alloc::format!("score of caption {i} vs image {j} is {}", logits.get(i, j)),
        });
    }

    // d loss / d L, before the (1 - λ) factor.
    let mut grad_logits = DenseMatrix::zeros(b, b);
    let mut ce_ci = 0.0;
    let mut row = vec![0.0; b];
    for i in 0..b {
        row.copy_from_slice(logits.row(i));
        log_softmax_in_place(&mut row)?;
        let t = t_ci.row(i);
        for j in 0..b {
            ce_ci -= t[j] * row[j];
            grad_logits.set(i, j, (libm::exp(row[j]) - t[j]) / (bf * LN_2));
        }
    }
    let logits_t = logits.transpose();
    let mut ce_ic = 0.0;
    for j in 0..b {
        row.copy_from_slice(logits_t.row(j));
        log_softmax_in_place(&mut row)?;
        let t = t_ic.row(j);
        for i in 0..b {
            ce_ic -= t[i] * row[i];
            let g = grad_logits.get(i, j) + (libm::exp(row[i]) - t[i]) / (bf * LN_2);
            grad_logits.set(i, j, g);
        }
    }
    let bidirectional = (ce_ci + ce_ic) / (bf * LN_2);

    let l1 = l1_mass(captions) + l1_mass(images);
    let regularizer = eta * l1 / bf;
    let loss = (1.0 - lambda) * bidirectional + lambda * regularizer;
    if !loss.is_finite() {
        let worst = grad_logits.first_non_finite().unwrap_or((0, 0));
        return Err(Error::NonFinite {
            stage: "distill_loss",
            detail: alloc::format!("loss {loss}; first bad pair (caption {}, image {})", worst.0, worst.1),
        });
    }
    grad_logits.scale(1.0 - lambda);

    let (grad_captions, grad_images) = match support {
        GradientSupport::All => (
            // dC = G I, computed as (Iᵀ Gᵀ)ᵀ so that zero image weights are skipped.
            images_t.matmul(&grad_logits.transpose())?.transpose(),
            // dI = Gᵀ C = (Cᵀ G)ᵀ.
            captions.t_matmul(&grad_logits)?.transpose(),
        ),
        // Caption rows are the sparser side under masking, so the caption
        // gradient is computed entrywise on its support and the image
        // gradient by skipping zero caption weights.
        GradientSupport::Positive => (
            product_on_support(captions, &grad_logits, &images_t),
            support_only(captions.t_matmul(&grad_logits)?.transpose(), images),
        ),
    };

    let l1_grad = lambda * eta / bf;
    let mut out = LossOutput {
        loss,
        bidirectional,
        regularizer,
        grad_captions,
        grad_images,
    };
    if l1_grad != 0.0 {
        let pairs = [
            (out.grad_captions.as_mut_slice(), captions.as_slice()),
            (out.grad_images.as_mut_slice(), images.as_slice()),
        ];
        for (g, s) in pairs {
            for (gv, sv) in g.iter_mut().zip(s) {
                if *sv > 0.0 {
                    *gv += l1_grad;
                }
            }
        }
    }
    Ok(out)
}

/// `(G Bᵀᵀ)[i,t]` = `G[i,:] · b_t[t,:]` at the positive entries of `s`,
/// zero elsewhere.
fn product_on_support(s: &DenseMatrix, g: &DenseMatrix, b_t: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(s.rows(), s.cols());
    for i in 0..s.rows() {
        let g_row = g.row(i);
        let s_row = s.row(i);
        let out_row = out.row_mut(i);
        for (t, (&sv, o)) in s_row.iter().zip(out_row.iter_mut()).enumerate() {
            if sv > 0.0 {
                *o = dot(g_row, b_t.row(t));
            }
        }
    }
    out
}

/// Zeroes `g` wherever `s` is not positive.
fn support_only(mut g: DenseMatrix, s: &DenseMatrix) -> DenseMatrix {
    for (gv, &sv) in g.as_mut_slice().iter_mut().zip(s.as_slice()) {
        if !(sv > 0.0) {
            *gv = 0.0;
        }
    }
    g
}

/// Total L1 mass of a nonnegative batch.
fn l1_mass(m: &DenseMatrix) -> f64 {
    m.as_slice().iter().fold(0.0, |a, v| a + v)
}
