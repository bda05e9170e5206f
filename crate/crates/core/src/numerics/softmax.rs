use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Max-subtracted softmax.
pub fn stable_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    let max = finite_max(logits)?;
    let mut out: Vec<f64> = logits.iter().map(|&v| libm::exp(v - max)).collect();
    let sum = out.iter().fold(0.0, |a, v| a + v);
    out.iter_mut().for_each(|v| *v /= sum);
    Ok(out)
}

fn finite_max(logits: &[f64]) -> Result<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateDistribution);
    }
    if !max.is_finite() {
        return Err(Error::NonFinite {
            stage: "softmax",
            detail: alloc::format!("max logit {max}"),
        });
    }
    Ok(max)
}

/// Replaces `logits` with `log softmax(logits)` (natural log).
pub fn log_softmax_in_place(logits: &mut [f64]) -> Result<()> {
    let max = finite_max(logits)?;
    let sum = logits
        .iter()
        .fold(0.0, |acc, &v| acc + libm::exp(v - max));
    let log_z = max + libm::log(sum);
    logits.iter_mut().for_each(|v| *v -= log_z);
    Ok(())
}
