//! On-disk formats. Binary formats are little-endian with IEEE-754 floats;
//! every writer goes through an atomic temp-file rename.

pub mod captions;
pub mod checkpoint;
pub mod dense;
pub mod embeddings;
pub mod index;
pub mod qrels;
pub mod run;
pub mod sparse;
pub mod split;
pub mod vocab;

pub use captions::{read_captions, write_captions, CaptionRecord};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use dense::{read_dense, write_dense, DenseStore};
pub use embeddings::{read_embeddings, write_embeddings};
pub use index::{read_index, write_index};
pub use qrels::{read_qrels, write_qrels, QrelsFile};
pub use run::{read_run, write_run, RankedDoc, RunFile};
pub use sparse::{read_sparse, write_sparse, SparseStore};
pub use split::{read_splits, write_splits, Split, SplitManifest};
pub use vocab::{read_vocab, write_vocab, Vocabulary};
