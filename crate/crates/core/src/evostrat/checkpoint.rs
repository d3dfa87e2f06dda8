use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "mastersample-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned JSON envelope around any serializable run state.
///
/// `kind` names the payload type so a checkpoint of one run type cannot be
/// loaded as another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<T> {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub payload: T,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
    kind: String,
}

impl<T: Serialize> Checkpoint<T> {
    pub fn new(kind: impl Into<String>, payload: T) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            kind: kind.into(),
            payload,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Writes through a temporary file so an interrupted save never leaves a
    /// truncated checkpoint behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_json()?)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

impl<T: DeserializeOwned> Checkpoint<T> {
    pub fn from_json(text: &str, expected_kind: &str) -> Result<Self> {
        let header: Header = serde_json::from_str(text)
            .map_err(|e| Error::Checkpoint(format!("unreadable header: {e}")))?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!(
                "unknown format tag {:?}",
                header.format
            )));
        }
        if header.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {} is not supported (expected {CHECKPOINT_VERSION})",
                header.version
            )));
        }
        if header.kind != expected_kind {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {:?}, expected {expected_kind:?}",
                header.kind
            )));
        }
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(format!("corrupt payload: {e}")))
    }

    pub fn load(path: &Path, expected_kind: &str) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text, expected_kind)
    }
}
