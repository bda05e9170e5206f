use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::AdamConfig;

/// Which caption expansions survive masking during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExpansionMode {
    /// Caption-level and word-level schedules (`p_C` from 0, `p_v` from `1 - df`).
    #[default]
    Controlled,
    /// Captions may never expand; `p_C` stays 0.
    AlwaysOff,
    /// No masking at all.
    AlwaysOn,
    /// Caption-level schedule only; `p_v` fixed at 1.
    CaptionOnly,
}

impl ExpansionMode {
    pub const ALL: [ExpansionMode; 4] = [
        ExpansionMode::Controlled,
        ExpansionMode::AlwaysOff,
        ExpansionMode::AlwaysOn,
        ExpansionMode::CaptionOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExpansionMode::Controlled => "controlled",
            ExpansionMode::AlwaysOff => "always_off",
            ExpansionMode::AlwaysOn => "always_on",
            ExpansionMode::CaptionOnly => "caption_only",
        }
    }

    /// Whether a model trained this way is encoded at inference with captions
    /// restricted to their own terms. Only `always_off` ends training with a
    /// caption expansion probability below one.
    pub fn restricts_captions_at_inference(self) -> bool {
        self == ExpansionMode::AlwaysOff
    }
}

impl fmt::Display for ExpansionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExpansionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(alloc::format!("unknown expansion mode {s:?}")))
    }
}

/// Treatment of terms that do occur in the caption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OriginalTermGating {
    /// Original terms are never masked.
    #[default]
    KeepAlways,
    /// Original terms are multiplied by their word-level draw as well.
    WordGated,
}

impl OriginalTermGating {
    pub fn as_str(self) -> &'static str {
        match self {
            OriginalTermGating::KeepAlways => "keep_always",
            OriginalTermGating::WordGated => "word_gated",
        }
    }
}

impl FromStr for OriginalTermGating {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "keep_always" => Ok(Self::KeepAlways),
            "word_gated" => Ok(Self::WordGated),
            _ => Err(Error::Config(alloc::format!("unknown term gating {s:?}"))),
        }
    }
}

impl fmt::Display for OriginalTermGating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Source of the soft labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Supervision {
    /// In-batch softmax of dense similarities at temperature `tau`.
    #[default]
    Dense,
    /// Uniform over the in-batch rows that share the ground-truth image.
    Labels,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Temperature of the dense target softmax.
    pub tau: f64,
    /// Mix between the bidirectional loss (`1 - λ`) and the L1 term (`λ`).
    pub lambda: f64,
    /// L1 weight.
    pub eta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub expansion_mode: ExpansionMode,
    pub original_term_gating: OriginalTermGating,
    pub supervision: Supervision,
    /// L2-normalize dense vectors before computing targets.
    pub normalize_dense: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tau: 1e-3,
            lambda: 0.5,
            eta: 1e-3,
            epochs: 50,
            batch_size: 128,
            adam: AdamConfig::default(),
            seed: 0,
            expansion_mode: ExpansionMode::Controlled,
            original_term_gating: OriginalTermGating::KeepAlways,
            supervision: Supervision::Dense,
            normalize_dense: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: alloc::string::String| Err(Error::Config(msg));
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return fail(alloc::format!("tau must be > 0, got {}", self.tau));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return fail(alloc::format!("lambda must lie in [0, 1], got {}", self.lambda));
        }
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return fail(alloc::format!("eta must be >= 0, got {}", self.eta));
        }
        if self.batch_size < 2 {
            return fail(alloc::format!(
                "batch size must be >= 2 for in-batch negatives, got {}",
                self.batch_size
            ));
        }
        if self.epochs == 0 {
            return fail("epochs must be >= 1".into());
        }
        self.adam.validate()
    }
}
