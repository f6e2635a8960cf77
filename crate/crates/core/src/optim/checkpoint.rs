use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::rng::RngState;
use crate::spsa::ProjectionRecord;

/// Resumable optimizer state.
///
/// JSON shape: `{ "step", "records": [{step, seed, projection}], "cache": [[{seed, subsequence, offset} | null]] }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub step: u64,
    pub records: Vec<ProjectionRecord>,
    pub cache: Vec<Vec<Option<RngState>>>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
