//! Core of the dense-to-sparse (D2S) retrieval stack.
//!
//! A small projection head maps frozen dense caption/image vectors onto a
//! vocabulary-aligned, nonnegative sparse space. Training distills in-batch
//! dense similarities into sparse dot products while a Bernoulli expansion
//! schedule controls which non-caption terms captions may activate. The
//! resulting vectors are served from an exact inverted index and scored with
//! the efficiency and faithfulness metrics in [`metrics`].
//!
//! The crate is `no_std` and only needs `alloc`; file formats, the synthetic
//! data generator and the command line live in the `d2s` companion crate.

#![no_std]
// `!(x > 0.0)` rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod error;
pub mod index;
pub mod metrics;
pub mod numerics;
pub mod projection;
pub mod sparse;
pub mod training;

pub use error::{Error, Result};
pub use numerics::DenseMatrix;
pub use projection::ProjectionParams;
pub use sparse::SparseVector;
