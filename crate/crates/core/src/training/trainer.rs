use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{AdamState, DenseMatrix};
use crate::projection::{encode, project_backward, project_forward, ProjectionParams};
use crate::sparse::SparseVector;
use crate::training::{
    compute_df, dense_targets, distill_loss_on, expand_in_place, label_targets, sample_mask,
    ExpansionMask, ExpansionMode, ExpansionSchedule, GradientSupport, Supervision, TrainConfig,
};

/// Aligned training pairs: caption row `c` is paired with image row
/// `caption_image[c]`.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub captions: DenseMatrix,
    pub images: DenseMatrix,
    /// Sorted, deduplicated term ids per caption.
    pub caption_terms: Vec<Vec<u32>>,
    pub caption_image: Vec<usize>,
}

impl TrainingData {
    pub fn new(
        captions: DenseMatrix,
        images: DenseMatrix,
        caption_terms: Vec<Vec<u32>>,
        caption_image: Vec<usize>,
    ) -> Result<Self> {
        let n = captions.rows();
        if n == 0 {
            return Err(Error::Data("no training captions".into()));
        }
        if caption_terms.len() != n || caption_image.len() != n {
            return Err(Error::Shape {
                op: "TrainingData",
                expected: (n, n),
                found: (caption_terms.len(), caption_image.len()),
            });
        }
        if captions.cols() != images.cols() {
            return Err(Error::Shape {
                op: "TrainingData",
                expected: (images.rows(), captions.cols()),
                found: images.shape(),
            });
        }
        if let Some(c) = caption_image.iter().position(|&i| i >= images.rows()) {
            return Err(Error::Data(alloc::format!(
                "caption {c} points at image row {} of {}",
                caption_image[c],
                images.rows()
            )));
        }
        let caption_terms = caption_terms
            .into_iter()
            .map(|mut t| {
                t.sort_unstable();
                t.dedup();
                t
            })
            .collect();
        Ok(Self {
            captions,
            images,
            caption_terms,
            caption_image,
        })
    }

    pub fn len(&self) -> usize {
        self.captions.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean batch loss.
    pub loss: f64,
    /// Caption expansion probability in effect during the epoch.
    pub p_c: f64,
    /// Mean fraction of nonzero entries per masked caption row.
    pub mean_caption_density: f64,
    pub mean_image_density: f64,
}

pub trait TrainObserver {
    fn on_epoch(&mut self, stats: &EpochStats, params: &ProjectionParams) -> Result<()>;
}

pub struct NoopObserver;

impl TrainObserver for NoopObserver {
    fn on_epoch(&mut self, _: &EpochStats, _: &ProjectionParams) -> Result<()> {
        Ok(())
    }
}

impl<F> TrainObserver for F
where
    F: FnMut(&EpochStats, &ProjectionParams) -> Result<()>,
{
    fn on_epoch(&mut self, stats: &EpochStats, params: &ProjectionParams) -> Result<()> {
        self(stats, params)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ProjectionParams,
    pub history: Vec<EpochStats>,
    pub schedule: ExpansionSchedule,
}

/// Batch boundaries over a shuffled order; a trailing batch of one row is dropped.
fn batches(n: usize, size: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n)
        .step_by(size)
        .map(move |s| (s, (s + size).min(n)))
        .filter(|(s, e)| e - s >= 2)
}

fn density(m: &DenseMatrix) -> f64 {
    let nnz = m.as_slice().iter().filter(|v| **v != 0.0).count();
    nnz as f64 / m.as_slice().len().max(1) as f64
}

/// Runs the full training loop from `params`. Deterministic given the
/// configuration seed.
pub fn train(
    data: &TrainingData,
    cfg: &TrainConfig,
    mut params: ProjectionParams,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    params.validate()?;
    if data.captions.cols() != params.dense_dim() {
        return Err(Error::Shape {
            op: "train",
            expected: (data.len(), params.dense_dim()),
            found: data.captions.shape(),
        });
    }
    let vocab = params.vocab_size();
    let df = compute_df(&data.caption_terms, vocab)?;
    let mut schedule = ExpansionSchedule::for_mode(cfg.expansion_mode, df, cfg.epochs)?;
    let mut adam = AdamState::new(cfg.adam, &params.tensor_sizes());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let weights = cfg.into();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut cap_density, mut img_density, mut n_batches) = (0.0, 0.0, 0.0, 0usize);
        for (start, end) in batches(order.len(), cfg.batch_size) {
            let rows = &order[start..end];
            let image_rows: Vec<usize> = rows.iter().map(|&r| data.caption_image[r]).collect();
            let terms: Vec<&[u32]> = rows.iter().map(|&r| &data.caption_terms[r][..]).collect();
            let z_c = data.captions.select_rows(rows);
            let z_i = data.images.select_rows(&image_rows);

            let (mut s_c, cache_c) = project_forward(&params, &z_c)?;
            let (s_i, cache_i) = project_forward(&params, &z_i)?;
            let mask = match cfg.expansion_mode {
                ExpansionMode::AlwaysOn => ExpansionMask::all_open(vocab),
                _ => sample_mask(&schedule, &mut rng),
            };
            expand_in_place(&terms, &mut s_c, &mask, cfg.original_term_gating)?;

            let (t_ci, t_ic) = match cfg.supervision {
                Supervision::Dense => (
                    dense_targets(&z_c, &z_i, cfg.tau, cfg.normalize_dense)?,
                    dense_targets(&z_i, &z_c, cfg.tau, cfg.normalize_dense)?,
                ),
                Supervision::Labels => (
                    label_targets(&image_rows, &image_rows)?,
                    label_targets(&image_rows, &image_rows)?,
                ),
            };
            let out = distill_loss_on(&s_c, &s_i, &t_ci, &t_ic, weights, GradientSupport::Positive)?;
            let mut grad_c = out.grad_captions;
            expand_in_place(&terms, &mut grad_c, &mask, cfg.original_term_gating)?;

            let mut grads = project_backward(&params, &cache_c, &grad_c)?;
            grads.accumulate(&project_backward(&params, &cache_i, &out.grad_images)?);
            adam.step(&mut params.tensors_mut(), &grads.tensors())?;

            loss_sum += out.loss;
            cap_density += density(&s_c);
            img_density += density(&s_i);
            n_batches += 1;
        }
        let nb = n_batches.max(1) as f64;
        let stats = EpochStats {
            epoch,
            loss: loss_sum / nb,
            p_c: schedule.p_caption,
            mean_caption_density: cap_density / nb,
            mean_image_density: img_density / nb,
        };
        schedule.step();
        observer.on_epoch(&stats, &params)?;
        history.push(stats);
    }
    Ok(TrainOutcome {
        params,
        history,
        schedule,
    })
}

/// Inference encoding of captions. With `restrict` every caption keeps only
/// its own terms, matching a model trained without caption expansion.
pub fn encode_captions<T: AsRef<[u32]>>(
    params: &ProjectionParams,
    dense: &DenseMatrix,
    caption_terms: Option<&[T]>,
    threshold: f64,
) -> Result<Vec<SparseVector>> {
    let encoded = encode(params, dense, threshold, 256)?;
    match caption_terms {
        None => Ok(encoded),
        Some(terms) => {
            if terms.len() != encoded.len() {
                return Err(Error::Shape {
                    op: "encode_captions",
                    expected: (encoded.len(), 1),
                    found: (terms.len(), 1),
                });
            }
            Ok(encoded
                .iter()
                .zip(terms)
                .map(|(s, t)| {
                    let mut keep = t.as_ref().to_vec();
                    keep.sort_unstable();
                    s.restrict_to(&keep)
                })
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_remainder_rule() {
        let b: Vec<_> = batches(10, 4).collect();
        assert_eq!(b, alloc::vec![(0, 4), (4, 8), (8, 10)]);
        let b: Vec<_> = batches(9, 4).collect();
        assert_eq!(b, alloc::vec![(0, 4), (4, 8)]);
    }
}
