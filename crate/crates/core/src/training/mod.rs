//! Expansion-controlled distillation training.
//!
//! Each epoch shuffles the caption/image pairs, projects both modalities,
//! masks caption expansions with per-batch Bernoulli draws, and minimizes a
//! bidirectional soft-label cross-entropy against in-batch dense similarities
//! plus an L1 penalty. Expansion probabilities rise linearly after every epoch
//! and reach one when training ends.

mod config;
mod expansion;
mod gradient_suite;
mod loss;
mod schedule;
mod trainer;

pub use config::{ExpansionMode, OriginalTermGating, Supervision, TrainConfig};
pub use expansion::{expand, expand_in_place, sample_mask, ExpansionMask};
pub use gradient_suite::{run_gradient_suites, SuiteDims, SuiteResult, LAYER_TOLERANCE, LOSS_TOLERANCE};
pub use loss::{
    dense_targets, distill_loss, distill_loss_on, distill_loss_with_targets, label_targets,
    GradientSupport, LossOutput, LossWeights,
};
pub use schedule::{compute_df, ExpansionSchedule};
pub use trainer::{
    encode_captions, train, EpochStats, NoopObserver, TrainObserver, TrainOutcome, TrainingData,
};
