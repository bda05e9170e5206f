use std::fmt;
use std::io;
use std::path::PathBuf;

#[derive(Debug)]
pub enum Error {
    Io { path: PathBuf, source: io::Error },
    /// Malformed binary or text file; `offset` is a byte offset for binary
    /// formats and a 1-based line number for line-oriented ones.
    Format { path: PathBuf, offset: u64, detail: String },
    Data(String),
    Core(d2s_core::Error),
    /// Bad flag combination or value; maps to exit code 2.
    Usage(String),
    /// Refusing to replace an existing output.
    Exists(PathBuf),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, offset: u64, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            offset,
            detail: detail.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Io { path, source } => write!(f, "{}: {source}", path.display()),
            Error::Format { path, offset, detail } => {
                write!(f, "{}: malformed at {offset}: {detail}", path.display())
            }
            Error::Data(msg) => write!(f, "data error: {msg}"),
            Error::Core(e) => e.fmt(f),
            Error::Usage(msg) => write!(f, "usage: {msg}"),
            Error::Exists(path) => {
                write!(f, "{} already exists (pass --force to replace it)", path.display())
            }
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            Error::Core(e) => Some(e),
            _ => None,
        }
    }
}

impl From<d2s_core::Error> for Error {
    fn from(e: d2s_core::Error) -> Self {
        Error::Core(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
