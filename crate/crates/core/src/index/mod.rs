//! Exact top-k retrieval over sparse image vectors.
//!
//! [`InvertedIndex::search`] scores term-at-a-time into a dense accumulator;
//! [`InvertedIndex::search_maxscore`] skips documents whose score bound cannot
//! reach the current top-k. Both return exactly what
//! [`brute_force_search`] returns, scores included, because every path
//! accumulates `f64` products in ascending term order.

mod inverted;
mod maxscore;
mod ranked;

pub use inverted::{InvertedIndex, Posting};
pub use ranked::{brute_force_search, dense_search, Hit, RankedList, TwoStageResult};
