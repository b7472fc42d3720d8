//! JSON configuration shared by all subcommands.
//!
//! Every section is optional. Command-line flags are applied on top of the
//! file, and the result is validated before any work starts.

use std::collections::BTreeMap;
use std::path::Path;

use gmerge_core::merge_search::SearchConfig;
use gmerge_core::sdg::{AugmentParams, Transform};
use gmerge_core::toy_eval::ToyTaskSpec;
use gmerge_core::{GroupRules, MergeSpec};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub merge: MergeSpec,
    pub search: SearchConfig,
    pub rules: GroupRules,
    pub toy: Option<ToyTaskSpec>,
    pub sdg: SdgConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdgConfig {
    pub ratios: Option<Ratios>,
    pub augment: AugmentParams,
    pub probs: BTreeMap<Transform, f64>,
    pub dedup_threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ratios {
    pub diverse: f64,
    pub in_domain: f64,
    pub inapplicable: f64,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("{}: invalid config: {e}", path.display())))
    }
}
