//! Checkpoint merging operators.
//!
//! Every operator takes aligned checkpoints and a [`MergeSpec`], merges the
//! tensors selected by the spec's merge type, and copies the remaining
//! tensors verbatim from the carrier model (`spec.carrier`). Arithmetic is
//! done in f64 and rounded to f32 once per element on output.

mod dare;
mod slerp;
mod soup;
mod ties;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::param_groups::{select_params, GroupError, GroupRules, MergeType};
use crate::tensor_store::{validate_compat, Tensor, TensorMap};

pub use dare::{dare_merge, dare_sparsify};
pub use slerp::{slerp, slerp_merge};
pub use soup::soup_merge;
pub use ties::{
    disjoint_merge, elect_sign, task_vector, ties_merge, trim_topk, Segment, SignVector,
    TaskVector,
};

#[derive(Debug, Error, PartialEq)]
pub enum MergeError {
    #[error("incompatible checkpoints: {0}")]
    IncompatibleCheckpoints(String),
    #[error(transparent)]
    Selection(#[from] GroupError),
    #[error("drop rate must be in [0, 1), got {0}")]
    InvalidDropRate(f64),
    #[error("cannot interpolate a zero-norm vector")]
    ZeroNormVector,
    #[error("invalid merge spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Soup,
    Ties,
    Dare,
    Slerp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Soup,
        Algorithm::Ties,
        Algorithm::Dare,
        Algorithm::Slerp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Soup => "soup",
            Algorithm::Ties => "ties",
            Algorithm::Dare => "dare",
            Algorithm::Slerp => "slerp",
        }
    }

    /// Whether the operator needs the shared initialization checkpoint.
    pub fn needs_init(self) -> bool {
        matches!(self, Algorithm::Ties | Algorithm::Dare)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = MergeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| MergeError::InvalidSpec(format!("unknown algorithm `{s}`")))
    }
}

/// How TIES elects the per-element sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignMode {
    /// sgn(Σ w_t τ̂_t)
    Weighted,
    /// sgn(Σ τ̂_t)
    Unweighted,
}

/// How TIES averages the sign-agreeing entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisjointMode {
    WeightedMean,
    PlainMean,
}

/// Everything needed to reproduce one merge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MergeSpec {
    pub algorithm: Algorithm,
    /// Per-model weights; empty means uniform.
    pub weights: Vec<f64>,
    pub tau: MergeType,
    /// TIES trim percentile in (0, 100].
    pub ties_k: f64,
    /// Trim each tensor separately instead of one global threshold.
    pub ties_per_tensor: bool,
    pub lambda: f64,
    pub dare_p: f64,
    pub slerp_t: f64,
    pub collinear_eps: f64,
    pub sign_mode: SignMode,
    pub disjoint_mode: DisjointMode,
    pub seed: u64,
    /// Index of the model whose unselected tensors are kept.
    pub carrier: usize,
}

impl Default for MergeSpec {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Ties,
            weights: Vec::new(),
            tau: MergeType::Full,
            ties_k: 20.0,
            ties_per_tensor: false,
            lambda: 1.0,
            dare_p: 0.9,
            slerp_t: 0.5,
            collinear_eps: 1e-5,
            sign_mode: SignMode::Weighted,
            disjoint_mode: DisjointMode::WeightedMean,
            seed: 0,
            carrier: 0,
        }
    }
}

impl MergeSpec {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            ..Self::default()
        }
    }

    /// The effective weight vector for `n` models.
    pub fn weights_for(&self, n: usize) -> Vec<f64> {
        if self.weights.is_empty() {
            vec![1.0 / n as f64; n]
        } else {
            self.weights.clone()
        }
    }

    pub fn validate(&self, n_models: usize) -> Result<(), MergeError> {
        let bad = |msg: String| Err(MergeError::InvalidSpec(msg));
        if n_models == 0 {
            return bad("at least one model is required".into());
        }
        let w = self.weights_for(n_models);
        if w.len() != n_models {
            return bad(format!("{} weights for {} models", w.len(), n_models));
        }
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return bad(format!("weights must be finite and nonnegative: {w:?}"));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("weights sum to {sum}, expected 1"));
        }
        if !(self.ties_k > 0.0 && self.ties_k <= 100.0) {
            return bad(format!("ties_k must be in (0, 100], got {}", self.ties_k));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if !(0.0..1.0).contains(&self.dare_p) {
            return Err(MergeError::InvalidDropRate(self.dare_p));
        }
        if !(0.0..=1.0).contains(&self.slerp_t) {
            return bad(format!("slerp_t must be in [0, 1], got {}", self.slerp_t));
        }
        if !(self.collinear_eps > 0.0) {
            return bad(format!("collinear_eps must be > 0, got {}", self.collinear_eps));
        }
        if self.carrier >= n_models {
            return bad(format!("carrier {} out of range for {} models", self.carrier, n_models));
        }
        if self.algorithm == Algorithm::Slerp && n_models != 2 {
            return bad(format!("slerp needs exactly 2 models, got {n_models}"));
        }
        Ok(())
    }
}

/// Fail unless every map is aligned and holds every selected name.
pub(crate) fn ensure_compatible(
    maps: &[&TensorMap],
    names: &BTreeSet<String>,
) -> Result<(), MergeError> {
    let report = validate_compat(maps);
    if !report.compatible {
        let first = &report.mismatches[0];
        return Err(MergeError::IncompatibleCheckpoints(format!(
            "{} mismatch(es); first: `{}` {:?} ({})",
            report.mismatches.len(),
            first.name,
            first.kind,
            first.details
        )));
    }
    if let Some(missing) = names.iter().find(|n| !maps[0].contains(n)) {
        return Err(MergeError::IncompatibleCheckpoints(format!(
            "selected tensor `{missing}` not present"
        )));
    }
    Ok(())
}

/// Start an output map from the carrier: unselected tensors are copied,
/// selected ones are filled in by `merge_one`.
pub(crate) fn assemble<F>(
    carrier: &TensorMap,
    names: &BTreeSet<String>,
    mut merge_one: F,
) -> Result<TensorMap, MergeError>
where
    F: FnMut(&str, &Tensor) -> Result<Vec<f32>, MergeError>,
{
    let mut out = TensorMap::new();
    *out.metadata_mut() = carrier.metadata().clone();
    for (name, t) in carrier.iter() {
        let tensor = if names.contains(name) {
            t.with_data(merge_one(name, t)?)
        } else {
            t.clone()
        };
        out.insert(name.clone(), tensor)
            .expect("names from an existing map are valid");
    }
    Ok(out)
}

/// Resolve the merge type, then dispatch to the configured operator.
pub fn apply_merge(
    models: &[&TensorMap],
    init: Option<&TensorMap>,
    spec: &MergeSpec,
    rules: &GroupRules,
) -> Result<TensorMap, MergeError> {
    spec.validate(models.len())?;
    let names = select_params(models[spec.carrier].names(), spec.tau, rules)?;
    let need_init = || {
        init.ok_or_else(|| {
            MergeError::InvalidSpec(format!("{} requires an init checkpoint", spec.algorithm))
        })
    };
    match spec.algorithm {
        Algorithm::Soup => soup_merge(models, &spec.weights_for(models.len()), spec.carrier, &names),
        Algorithm::Ties => ties_merge(models, need_init()?, spec, &names),
        Algorithm::Dare => dare_merge(models, need_init()?, spec, &names),
        Algorithm::Slerp => slerp_merge(models[0], models[1], spec, &names),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param_groups::MergeType;

    fn model(a: f32, b: f32, c: f32) -> TensorMap {
        TensorMap::new()
            .with("enc.attention.q", Tensor::vector(vec![a, -a, 0.5 * a]))
            .with("enc.ffn.w", Tensor::vector(vec![b, b + 1.0]))
            .with("classifier.weight", Tensor::vector(vec![c]))
    }

    #[test]
    fn spec_validation() {
        let mut spec = MergeSpec::new(Algorithm::Soup);
        assert!(spec.validate(3).is_ok());
        spec.weights = vec![0.5, 0.6];
        assert!(spec.validate(2).is_err());
        spec.weights = vec![0.5, 0.5];
        assert!(spec.validate(3).is_err());
        spec.weights.clear();
        spec.dare_p = 1.0;
        assert_eq!(spec.validate(2), Err(MergeError::InvalidDropRate(1.0)));
        let slerp = MergeSpec::new(Algorithm::Slerp);
        assert!(slerp.validate(3).is_err());
        assert!(slerp.validate(2).is_ok());
    }

    #[test]
    fn base_keeps_carrier_classifier() {
        let (m0, m1) = (model(1.0, 2.0, 3.0), model(3.0, 4.0, 9.0));
        let spec = MergeSpec {
            tau: MergeType::Base,
            carrier: 1,
            ..MergeSpec::new(Algorithm::Soup)
        };
        let out = apply_merge(&[&m0, &m1], None, &spec, &GroupRules::default()).unwrap();
        assert!(out
            .get("classifier.weight")
            .unwrap()
            .bit_eq(m1.get("classifier.weight").unwrap()));
        assert_eq!(out.get("enc.ffn.w").unwrap().data(), &[3.0, 4.0]);
    }

    #[test]
    fn full_soup_is_mean() {
        let (m0, m1) = (model(1.0, 2.0, 3.0), model(3.0, 4.0, 9.0));
        let out = apply_merge(
            &[&m0, &m1],
            None,
            &MergeSpec::new(Algorithm::Soup),
            &GroupRules::default(),
        )
        .unwrap();
        assert_eq!(out.get("enc.attention.q").unwrap().data(), &[2.0, -2.0, 1.0]);
        assert_eq!(out.get("enc.ffn.w").unwrap().data(), &[3.0, 4.0]);
        assert_eq!(out.get("classifier.weight").unwrap().data(), &[6.0]);
    }

    #[test]
    fn attention_only_ties_matches_standalone() {
        let init = model(0.0, 0.0, 0.0);
        let (m0, m1) = (model(1.0, -2.0, 3.0), model(3.0, 1.0, -1.0));
        let rules = GroupRules::default();
        let spec = MergeSpec {
            tau: MergeType::Attention,
            ties_k: 100.0,
            weights: vec![0.5, 0.5],
            ..MergeSpec::new(Algorithm::Ties)
        };
        let out = apply_merge(&[&m0, &m1], Some(&init), &spec, &rules).unwrap();
        assert!(out.get("enc.ffn.w").unwrap().bit_eq(m0.get("enc.ffn.w").unwrap()));
        assert!(out
            .get("classifier.weight")
            .unwrap()
            .bit_eq(m0.get("classifier.weight").unwrap()));

        let only: BTreeSet<String> = ["enc.attention.q".to_string()].into();
        let standalone = ties_merge(&[&m0, &m1], &init, &spec, &only).unwrap();
        assert!(out
            .get("enc.attention.q")
            .unwrap()
            .bit_eq(standalone.get("enc.attention.q").unwrap()));
        // signs agree everywhere, so the result is the plain mean of the deltas
        assert_eq!(out.get("enc.attention.q").unwrap().data(), &[2.0, -2.0, 1.0]);
    }

    #[test]
    fn missing_init_is_reported() {
        let m = model(1.0, 1.0, 1.0);
        let err = apply_merge(&[&m], None, &MergeSpec::new(Algorithm::Ties), &GroupRules::default())
            .unwrap_err();
        assert!(matches!(err, MergeError::InvalidSpec(_)));
    }

    #[test]
    fn incompatible_models_rejected() {
        let m0 = model(1.0, 1.0, 1.0);
        let m1 = TensorMap::new().with("enc.attention.q", Tensor::vector(vec![1.0]));
        let err = apply_merge(
            &[&m0, &m1],
            None,
            &MergeSpec::new(Algorithm::Soup),
            &GroupRules::default(),
        )
        .unwrap_err();
        assert!(matches!(err, MergeError::IncompatibleCheckpoints(_)));
    }
}
