use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::training::ExpansionMode;

/// Fraction of captions containing each term at least once.
pub fn compute_df<T: AsRef<[u32]>>(captions: &[T], vocab_size: usize) -> Result<Vec<f64>> {
    if captions.is_empty() {
        return Err(Error::Data("document frequency of an empty caption collection".into()));
    }
    let mut counts = vec![0u64; vocab_size];
    let mut last_seen = vec![usize::MAX; vocab_size];
    for (c, terms) in captions.iter().enumerate() {
        for &t in terms.as_ref() {
            let t = t as usize;
            if t >= vocab_size {
                return Err(Error::Data(alloc::format!(
                    "caption {c} has term id {t} >= vocabulary size {vocab_size}"
                )));
            }
            if last_seen[t] != c {
                last_seen[t] = c;
                counts[t] += 1;
            }
        }
    }
    let n = captions.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Per-epoch Bernoulli expansion probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionSchedule {
    pub p_caption: f64,
    pub p_terms: Vec<f64>,
    /// Per-term increment numerators.
    pub df: Vec<f64>,
    pub total_epochs: usize,
    caption_step: f64,
    steps: usize,
}

impl ExpansionSchedule {
    /// `p_C = 0`, `p_v = 1 - df`.
    pub fn new(df: Vec<f64>, total_epochs: usize) -> Result<Self> {
        if let Some((i, v)) = df.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Data(alloc::format!("df[{i}] = {v} outside [0, 1]")));
        }
        if total_epochs == 0 {
            return Err(Error::Config("schedule needs at least one epoch".into()));
        }
        Ok(Self {
            p_caption: 0.0,
            p_terms: df.iter().map(|d| 1.0 - d).collect(),
            df,
            total_epochs,
            caption_step: 1.0,
            steps: 0,
        })
    }

    /// Schedule implementing `mode`: fixed probabilities for the `always_*`
    /// modes, `p_v` pinned to 1 for `caption_only`.
    pub fn for_mode(mode: ExpansionMode, df: Vec<f64>, total_epochs: usize) -> Result<Self> {
        let mut s = Self::new(df, total_epochs)?;
        let n = s.df.len();
        match mode {
            ExpansionMode::Controlled => {}
            ExpansionMode::CaptionOnly => s.pin_terms(n),
            ExpansionMode::AlwaysOff => {
                s.pin_terms(n);
                s.caption_step = 0.0;
            }
            ExpansionMode::AlwaysOn => {
                s.pin_terms(n);
                s.p_caption = 1.0;
            }
        }
        Ok(s)
    }

    fn pin_terms(&mut self, n: usize) {
        self.p_terms = vec![1.0; n];
        self.df = vec![0.0; n];
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    /// End-of-epoch relaxation: `p_C += 1/E`, `p_v += df/E`, both capped at 1.
    pub fn step(&mut self) {
        let e = self.total_epochs as f64;
        self.p_caption = f64::min(1.0, self.p_caption + self.caption_step / e);
        for (p, d) in self.p_terms.iter_mut().zip(&self.df) {
            *p = f64::min(1.0, *p + d / e);
        }
        self.steps += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn df_hand_count() {
        let df = compute_df(&[vec![1u32, 2], vec![2]], 4).unwrap();
        assert_eq!(df, vec![0.0, 0.5, 1.0, 0.0]);
    }

    #[test]
    fn df_counts_duplicates_once() {
        let df = compute_df(&[vec![3u32, 3, 3], vec![0]], 4).unwrap();
        assert_eq!(df, vec![0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn df_errors() {
        let empty: [Vec<u32>; 0] = [];
        assert!(compute_df(&empty, 4).is_err());
        assert!(compute_df(&[vec![4u32]], 4).is_err());
    }

    #[test]
    fn initial_probabilities() {
        let s = ExpansionSchedule::new(vec![0.0, 0.5, 1.0], 10).unwrap();
        assert_eq!(s.p_terms, vec![1.0, 0.5, 0.0]);
        assert_eq!(s.p_caption, 0.0);
        assert_eq!(s.total_epochs, 10);
        let all_zero = ExpansionSchedule::new(vec![0.0; 5], 3).unwrap();
        assert!(all_zero.p_terms.iter().all(|p| *p == 1.0));
    }

    #[test]
    fn one_step_of_ten() {
        let mut s = ExpansionSchedule::new(vec![0.5], 10).unwrap();
        s.step();
        assert!((s.p_caption - 0.1).abs() < 1e-15);
        for _ in 1..10 {
            s.step();
        }
        assert!((s.p_terms[0] - 1.0).abs() <= 1e-9);
        assert!((s.p_caption - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn saturates_at_one() {
        let mut s = ExpansionSchedule::new(vec![0.3, 0.9], 2).unwrap();
        for _ in 0..5 {
            s.step();
        }
        assert_eq!(s.p_caption, 1.0);
        assert!(s.p_terms.iter().all(|p| *p <= 1.0));
    }

    #[test]
    fn mode_schedules() {
        let df = vec![0.2, 0.6];
        let off = ExpansionSchedule::for_mode(ExpansionMode::AlwaysOff, df.clone(), 4).unwrap();
        let mut off2 = off.clone();
        off2.step();
        assert_eq!(off2.p_caption, 0.0);
        assert_eq!(off2.p_terms, vec![1.0, 1.0]);
        let on = ExpansionSchedule::for_mode(ExpansionMode::AlwaysOn, df.clone(), 4).unwrap();
        assert_eq!((on.p_caption, on.p_terms.clone()), (1.0, vec![1.0, 1.0]));
        let c = ExpansionSchedule::for_mode(ExpansionMode::CaptionOnly, df, 4).unwrap();
        assert_eq!((c.p_caption, c.p_terms.clone()), (0.0, vec![1.0, 1.0]));
    }

    #[test]
    fn rejects_out_of_range_df() {
        assert!(ExpansionSchedule::new(vec![1.5], 3).is_err());
    }
}
