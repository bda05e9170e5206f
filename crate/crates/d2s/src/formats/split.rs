//! Split manifests: a JSON object mapping image ids to `"train"`,
//! `"valid"`, or `"test"`. Captions follow their image.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{atomic_write, read_text};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            _ => Err(Error::Usage(format!("unknown split {s:?} (train, valid, test)"))),
        }
    }
}

pub type SplitManifest = BTreeMap<String, Split>;

pub fn encode_splits(m: &SplitManifest) -> Result<String> {
    let mut s = serde_json::to_string_pretty(m).map_err(|e| Error::Data(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn decode_splits(path: &Path, text: &str) -> Result<SplitManifest> {
    serde_json::from_str(text).map_err(|e| Error::format(path, e.line() as u64, e.to_string()))
}

pub fn write_splits(m: &SplitManifest, path: &Path, force: bool) -> Result<()> {
    atomic_write(path, encode_splits(m)?.as_bytes(), force)
}

pub fn read_splits(path: &Path) -> Result<SplitManifest> {
    decode_splits(path, &read_text(path)?)
}
