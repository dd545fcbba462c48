use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EstimatorState;
use crate::error::{Error, Result};

const FORMAT: &str = "depthcal-estimator";
const VERSION: u32 = 1;

/// Versioned JSON dump of a complete estimator session. Floats are written
/// with round-trip precision so a reloaded session continues bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub state: EstimatorState,
}

impl Checkpoint {
    pub fn new(state: EstimatorState) -> Self {
        Self { format: FORMAT.to_string(), version: VERSION, state }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })?;
        if ck.format != FORMAT || ck.version != VERSION {
            return Err(Error::Config(format!("unsupported checkpoint {} v{}", ck.format, ck.version)));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
