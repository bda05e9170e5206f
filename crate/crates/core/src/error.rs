use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes do not line up.
    Shape {
        op: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// Invalid hyperparameter or configuration value.
    Config(String),
    /// A NaN or infinity showed up where finite values are required.
    NonFinite { stage: &'static str, detail: String },
    /// Every logit was -inf.
    DegenerateDistribution,
    /// Input data violates a precondition (term id out of range, empty set, ...).
    Data(String),
    /// Embedding table has no vector for these term ids.
    MissingEmbedding(Vec<u32>),
    /// Evaluation run does not cover a judged query.
    Evaluation(String),
    /// Pearson correlation with a constant series.
    UndefinedCorrelation,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, expected, found } => write!(
                f,
                "shape mismatch in {op}: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::NonFinite { stage, detail } => {
                write!(f, "non-finite value in {stage}: {detail}")
            }
            Error::DegenerateDistribution => {
                write!(f, "softmax over logits that are all -inf")
            }
            Error::Data(msg) => write!(f, "invalid data: {msg}"),
            Error::MissingEmbedding(ids) => {
                write!(f, "no static embedding for term ids {ids:?}")
            }
            Error::Evaluation(msg) => write!(f, "evaluation error: {msg}"),
            Error::UndefinedCorrelation => {
                write!(f, "correlation undefined for a zero-variance series")
            }
        }
    }
}

impl core::error::Error for Error {}
