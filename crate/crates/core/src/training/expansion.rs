use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;
use crate::training::{ExpansionSchedule, OriginalTermGating};

/// One batch worth of Bernoulli draws, shared by every row of the batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpansionMask {
    pub caption: bool,
    pub terms: Vec<bool>,
}

impl ExpansionMask {
    pub fn all_open(vocab_size: usize) -> Self {
        Self {
            caption: true,
            terms: vec![true; vocab_size],
        }
    }
}

/// Draws `E_C ~ Ber(p_C)` then `E_v[i] ~ Ber(p_v[i])` in term order.
pub fn sample_mask<R: Rng + ?Sized>(schedule: &ExpansionSchedule, rng: &mut R) -> ExpansionMask {
    let mut draw = |p: f64| rng.gen::<f64>() < p;
    let caption = draw(schedule.p_caption);
    let terms = schedule.p_terms.iter().map(|&p| draw(p)).collect();
    ExpansionMask { caption, terms }
}

/// Returns a masked copy of `scores`; see [`expand_in_place`].
pub fn expand<T: AsRef<[u32]>>(
    caption_terms: &[T],
    scores: &DenseMatrix,
    mask: &ExpansionMask,
    gating: OriginalTermGating,
) -> Result<DenseMatrix> {
    let mut out = scores.clone();
    expand_in_place(caption_terms, &mut out, mask, gating)?;
    Ok(out)
}

/// Zeroes the entries the mask forbids, row by row.
///
/// A term absent from the row's caption survives only if both the caption
/// draw and its word draw are 1. A term present in the caption is kept
/// (`KeepAlways`) or multiplied by its word draw (`WordGated`).
///
/// The map is linear and diagonal, so applying it to an upstream gradient is
/// its own backward pass.
pub fn expand_in_place<T: AsRef<[u32]>>(
    caption_terms: &[T],
    scores: &mut DenseMatrix,
    mask: &ExpansionMask,
    gating: OriginalTermGating,
) -> Result<()> {
    let vocab = scores.cols();
    if caption_terms.len() != scores.rows() || mask.terms.len() != vocab {
        return Err(Error::Shape {
            op: "expand",
            expected: (scores.rows(), vocab),
            found: (caption_terms.len(), mask.terms.len()),
        });
    }
    let mut in_caption = vec![false; vocab];
    for (r, terms) in caption_terms.iter().enumerate() {
        let terms = terms.as_ref();
        for &t in terms {
            if t as usize >= vocab {
                return Err(Error::Data(alloc::format!(
                    "caption row {r} has term id {t} >= vocabulary size {vocab}"
                )));
            }
            in_caption[t as usize] = true;
        }
        let row = scores.row_mut(r);
        for (k, w) in row.iter_mut().enumerate() {
            let keep = if in_caption[k] {
                match gating {
                    OriginalTermGating::KeepAlways => true,
                    OriginalTermGating::WordGated => mask.terms[k],
                }
            } else {
                mask.caption && mask.terms[k]
            };
            if !keep {
                *w = 0.0;
            }
        }
        for &t in terms {
            in_caption[t as usize] = false;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn schedule(p_c: f64, p_v: Vec<f64>) -> ExpansionSchedule {
        let mut s = ExpansionSchedule::new(vec![0.0; p_v.len()], 1).unwrap();
        s.p_caption = p_c;
        s.p_terms = p_v;
        s
    }

    #[test]
    fn certain_draws() {
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = sample_mask(&schedule(0.0, vec![1.0, 0.0, 1.0]), &mut rng);
            assert!(!m.caption);
            assert_eq!(m.terms, vec![true, false, true]);
        }
    }

    #[test]
    fn half_probability_concentrates() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let m = sample_mask(&schedule(0.5, vec![0.5; 10_000]), &mut rng);
        let mean = m.terms.iter().filter(|b| **b).count() as f64 / 1e4;
        assert!((0.47..=0.53).contains(&mean), "{mean}");
    }

    #[test]
    fn caption_draw_zero_keeps_only_caption_terms() {
        let s = DenseMatrix::from_fn(3, 6, |r, c| 0.1 + (r * 6 + c) as f64);
        let terms = [vec![0u32, 5], vec![], vec![2u32]];
        let mask = ExpansionMask {
            caption: false,
            terms: vec![true; 6],
        };
        let out = expand(&terms, &s, &mask, OriginalTermGating::KeepAlways).unwrap();
        for (r, t) in terms.iter().enumerate() {
            for k in 0..6u32 {
                let v = out.get(r, k as usize);
                assert_eq!(v > 0.0, t.contains(&k), "row {r} term {k}");
            }
        }
    }

    #[test]
    fn open_mask_is_identity() {
        let s = DenseMatrix::from_fn(2, 5, |r, c| (r + c) as f64 * 0.3);
        let out = expand(
            &[vec![1u32], vec![]],
            &s,
            &ExpansionMask::all_open(5),
            OriginalTermGating::WordGated,
        )
        .unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn hand_example() {
        let s = DenseMatrix::from_vec(1, 4, vec![0.2, 0.9, 0.4, 0.0]).unwrap();
        let mask = ExpansionMask {
            caption: true,
            terms: vec![true, true, false, true],
        };
        let out = expand(&[vec![1u32]], &s, &mask, OriginalTermGating::KeepAlways).unwrap();
        assert_eq!(out.row(0), &[0.2, 0.9, 0.0, 0.0]);
    }

    #[test]
    fn word_gating_masks_original_terms() {
        let s = DenseMatrix::from_vec(1, 3, vec![0.5, 0.6, 0.7]).unwrap();
        let mask = ExpansionMask {
            caption: true,
            terms: vec![false, true, true],
        };
        let keep = expand(&[vec![0u32]], &s, &mask, OriginalTermGating::KeepAlways).unwrap();
        let gated = expand(&[vec![0u32]], &s, &mask, OriginalTermGating::WordGated).unwrap();
        assert_eq!(keep.row(0), &[0.5, 0.6, 0.7]);
        assert_eq!(gated.row(0), &[0.0, 0.6, 0.7]);
    }

    #[test]
    fn rejects_out_of_range_terms() {
        let s = DenseMatrix::zeros(1, 3);
        let r = expand(&[vec![3u32]], &s, &ExpansionMask::all_open(3), Default::default());
        assert!(matches!(r, Err(Error::Data(_))));
    }
}
