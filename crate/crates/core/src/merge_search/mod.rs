//! Bandit-driven search over merge weights and merge types.
//!
//! Each iteration samples a weight vector `w` (one entry per input model)
//! and a merge type `τ`, merges with the configured operator, scores the
//! result with an [`Evaluator`], and updates the sampler's posteriors. The
//! loop is sequential; randomness for iteration `i` comes from a child
//! stream keyed by `i`, so runs with more iterations share their prefix
//! with shorter runs.

mod bandit;
mod samplers;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::{EvalError, Evaluator};
use crate::merge_algos::{apply_merge, Algorithm, MergeError, MergeSpec};
use crate::param_groups::{select_params, GroupError, GroupRules, MergeType};
use crate::rng::{child_seed, stream_rng};
use crate::tensor_store::{validate_compat, TensorMap};

pub use bandit::{algorithm1_increments, BanditState, BetaArm};
pub use samplers::{best_explored, epsilon_greedy_sample, random_sample};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("evaluator failed at iteration {iteration}: {source}")]
    EvaluatorFailure {
        iteration: usize,
        #[source]
        source: EvalError,
    },
    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error(transparent)]
    Merge(#[from] MergeError),
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    Thompson,
    EpsilonGreedy,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// Sigmoid-shaped increments applied to every arm with w > 0.
    Algorithm1,
    /// α += F·w, β += (1 − F)·w.
    ExpectedReward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauSampling {
    Argmax,
    Categorical,
}

/// Which best score the Algorithm-1 sigmoid compares against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FBestTiming {
    /// Best before this iteration's score is recorded.
    Pre,
    /// Best after recording it.
    Post,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub sampler: Sampler,
    pub update_rule: UpdateRule,
    pub iterations: usize,
    pub top_k_models: usize,
    pub epsilon: f64,
    pub tau_sampling: TauSampling,
    pub fbest_timing: FBestTiming,
    /// Candidate merge types; those selecting nothing are dropped.
    pub taus: Vec<MergeType>,
    /// Record wall-clock milliseconds per iteration (otherwise 0).
    pub record_timing: bool,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            sampler: Sampler::Thompson,
            update_rule: UpdateRule::Algorithm1,
            iterations: 50,
            top_k_models: 6,
            epsilon: 0.1,
            tau_sampling: TauSampling::Argmax,
            fbest_timing: FBestTiming::Pre,
            taus: MergeType::ALL.to_vec(),
            record_timing: false,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: String| Err(SearchError::InvalidConfig(m));
        if self.iterations == 0 {
            return bad("iterations must be >= 1".into());
        }
        if self.top_k_models == 0 {
            return bad("top_k_models must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon must be in [0, 1], got {}", self.epsilon));
        }
        if self.taus.is_empty() {
            return bad("taus must not be empty".into());
        }
        Ok(())
    }
}

/// One line of the search report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterationRecord {
    pub iter: usize,
    pub weights: Vec<f64>,
    pub tau: MergeType,
    pub score: f64,
    pub best: f64,
    pub ms: u64,
}

impl IterationRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serialization is infallible")
    }
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best_params: TensorMap,
    pub best_score: f64,
    pub history: Vec<IterationRecord>,
    pub state: BanditState,
}

/// Merge types that select at least one tensor of `model`.
pub fn viable_taus(
    model: &TensorMap,
    taus: &[MergeType],
    rules: &GroupRules,
) -> Result<Vec<MergeType>, GroupError> {
    let viable: Vec<MergeType> = taus
        .iter()
        .copied()
        .filter(|&t| select_params(model.names(), t, rules).is_ok())
        .collect();
    if viable.is_empty() {
        return Err(GroupError::EmptySelection(taus[0]));
    }
    Ok(viable)
}

/// Score every model standalone and return the indices of the best `k`,
/// highest first (ties keep input order).
pub fn select_top_k<E: Evaluator + ?Sized>(
    models: &[&TensorMap],
    evaluator: &E,
    k: usize,
) -> Result<Vec<(usize, f64)>, SearchError> {
    let mut scored = models
        .iter()
        .enumerate()
        .map(|(i, m)| {
            evaluator
                .evaluate(m)
                .map(|s| (i, s))
                .map_err(|source| SearchError::EvaluatorFailure { iteration: 0, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    scored.truncate(k.max(1));
    Ok(scored)
}

const MERGE_STREAM: u64 = 0xDA2E;

/// Run the search without a per-iteration observer.
pub fn run_search<E: Evaluator + ?Sized>(
    models: &[&TensorMap],
    init: &TensorMap,
    evaluator: &E,
    config: &SearchConfig,
    merge: &MergeSpec,
    rules: &GroupRules,
) -> Result<SearchResult, SearchError> {
    run_search_with(models, init, evaluator, config, merge, rules, |_| Ok(()))
}

/// Run the search, calling `observe` after every iteration (for streaming
/// reports). Makes exactly `config.iterations` evaluator calls.
pub fn run_search_with<E, F>(
    models: &[&TensorMap],
    init: &TensorMap,
    evaluator: &E,
    config: &SearchConfig,
    merge: &MergeSpec,
    rules: &GroupRules,
    mut observe: F,
) -> Result<SearchResult, SearchError>
where
    E: Evaluator + ?Sized,
    F: FnMut(&IterationRecord) -> Result<(), SearchError>,
{
    config.validate()?;
    if models.is_empty() {
        return Err(SearchError::InvalidConfig("no models to merge".into()));
    }
    let mut all = models.to_vec();
    if merge.algorithm.needs_init() {
        all.push(init);
    }
    let report = validate_compat(&all);
    if !report.compatible {
        return Err(MergeError::IncompatibleCheckpoints(format!(
            "{} mismatch(es), first `{}`",
            report.mismatches.len(),
            report.mismatches[0].name
        ))
        .into());
    }
    if merge.algorithm == Algorithm::Slerp && models.len() != 2 {
        return Err(SearchError::InvalidConfig(format!(
            "slerp search needs exactly 2 models, got {}",
            models.len()
        )));
    }
    if merge.carrier >= models.len() {
        return Err(SearchError::InvalidConfig(format!(
            "carrier {} out of range",
            merge.carrier
        )));
    }
    let taus = viable_taus(models[merge.carrier], &config.taus, rules).map_err(MergeError::from)?;

    let mut state = BanditState::new(models.len(), init.clone());
    for i in 1..=config.iterations {
        let started = Instant::now();
        let mut rng = stream_rng(config.seed, i as u64);
        let (weights, tau) = match config.sampler {
            Sampler::Thompson => state.thompson_sample(&taus, config.tau_sampling, &mut rng),
            Sampler::Random => random_sample(&mut rng, models.len(), &taus),
            Sampler::EpsilonGreedy => {
                epsilon_greedy_sample(&state.history, config.epsilon, models.len(), &taus, &mut rng)
            }
        };

        let mut spec = merge.clone();
        spec.weights = weights.clone();
        spec.tau = tau;
        spec.seed = child_seed(config.seed ^ MERGE_STREAM, i as u64);
        if spec.algorithm == Algorithm::Slerp {
            spec.slerp_t = weights[1];
        }
        let merged = apply_merge(models, Some(init), &spec, rules)?;

        let score = evaluator
            .evaluate(&merged)
            .map_err(|source| SearchError::EvaluatorFailure { iteration: i, source })?;
        if !(0.0..=1.0).contains(&score) {
            return Err(SearchError::EvaluatorFailure {
                iteration: i,
                source: EvalError::OutOfRange(score),
            });
        }
        state.update(&weights, tau, score, merged, config.update_rule, config.fbest_timing)?;

        let ms = if config.record_timing {
            started.elapsed().as_millis() as u64
        } else {
            0
        };
        let record = IterationRecord {
            iter: i,
            weights,
            tau,
            score,
            best: state.best_score,
            ms,
        };
        observe(&record)?;
        state.history.push(record);
    }

    Ok(SearchResult {
        best_params: state.best_params.clone(),
        best_score: state.best_score,
        history: state.history.clone(),
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluator::{ConstantEvaluator, FnEvaluator};
    use crate::tensor_store::Tensor;
    use std::cell::Cell;

    fn model(v: f32) -> TensorMap {
        TensorMap::new()
            .with("enc.attention.q", Tensor::vector(vec![v, -v]))
            .with("enc.ffn.w", Tensor::vector(vec![v * 0.5]))
            .with("classifier.weight", Tensor::vector(vec![1.0 - v]))
    }

    #[test]
    fn single_iteration_constant_score() {
        let (a, b) = (model(1.0), model(2.0));
        let config = SearchConfig {
            iterations: 1,
            sampler: Sampler::Random,
            ..SearchConfig::default()
        };
        let res = run_search(
            &[&a, &b],
            &model(0.0),
            &ConstantEvaluator(0.7),
            &config,
            &MergeSpec::new(Algorithm::Soup),
            &GroupRules::default(),
        )
        .unwrap();
        assert_eq!(res.best_score, 0.7);
        assert_eq!(res.history.len(), 1);
    }

    #[test]
    fn exact_number_of_evaluations() {
        let (a, b) = (model(1.0), model(2.0));
        let calls = Cell::new(0usize);
        let eval = FnEvaluator(|_: &TensorMap| {
            calls.set(calls.get() + 1);
            Ok(0.5)
        });
        for (n, sampler) in [(7, Sampler::Thompson), (3, Sampler::EpsilonGreedy), (5, Sampler::Random)] {
            calls.set(0);
            let config = SearchConfig { iterations: n, sampler, ..SearchConfig::default() };
            run_search(&[&a, &b], &model(0.0), &eval, &config, &MergeSpec::new(Algorithm::Ties), &GroupRules::default())
                .unwrap();
            assert_eq!(calls.get(), n);
        }
    }

    #[test]
    fn evaluator_failure_carries_iteration() {
        let (a, b) = (model(1.0), model(2.0));
        let calls = Cell::new(0usize);
        let eval = FnEvaluator(|_: &TensorMap| {
            calls.set(calls.get() + 1);
            if calls.get() == 3 {
                Err(EvalError::Other("boom".into()))
            } else {
                Ok(0.2)
            }
        });
        let err = run_search(
            &[&a, &b],
            &model(0.0),
            &eval,
            &SearchConfig::default(),
            &MergeSpec::new(Algorithm::Soup),
            &GroupRules::default(),
        )
        .unwrap_err();
        assert!(matches!(err, SearchError::EvaluatorFailure { iteration: 3, .. }), "{err}");
    }

    #[test]
    fn out_of_range_score_is_a_failure() {
        let a = model(1.0);
        let err = run_search(
            &[&a],
            &model(0.0),
            &ConstantEvaluator(1.2),
            &SearchConfig::default(),
            &MergeSpec::new(Algorithm::Soup),
            &GroupRules::default(),
        )
        .unwrap_err();
        assert!(matches!(err, SearchError::EvaluatorFailure { iteration: 1, .. }));
    }

    #[test]
    fn non_viable_taus_are_skipped() {
        let only = TensorMap::new().with("classifier.w", Tensor::vector(vec![1.0]));
        let taus = viable_taus(&only, &MergeType::ALL, &GroupRules::default()).unwrap();
        assert_eq!(taus, vec![MergeType::Full]);
        let lin = TensorMap::new()
            .with("linear.weight", Tensor::vector(vec![1.0]))
            .with("classifier.bias", Tensor::vector(vec![1.0]));
        let taus = viable_taus(&lin, &MergeType::ALL, &GroupRules::default()).unwrap();
        assert_eq!(taus, vec![MergeType::Full, MergeType::Base]);
        assert!(viable_taus(&only, &[MergeType::Attention], &GroupRules::default()).is_err());
    }

    #[test]
    fn top_k_ranking() {
        let ms: Vec<TensorMap> = [0.2f32, 0.9, 0.5, 0.9].iter().map(|&v| model(v)).collect();
        let refs: Vec<&TensorMap> = ms.iter().collect();
        let eval = FnEvaluator(|m: &TensorMap| Ok(f64::from(m.get("enc.ffn.w").unwrap().data()[0]) * 2.0));
        let top = select_top_k(&refs, &eval, 3).unwrap();
        assert_eq!(top.iter().map(|t| t.0).collect::<Vec<_>>(), vec![1, 3, 2]);
    }

    #[test]
    fn history_prefix_is_stable_across_lengths() {
        let (a, b) = (model(1.0), model(-1.0));
        let target = model(0.3);
        let eval = crate::toy_eval::known_optimum_evaluator(target);
        let short = SearchConfig { iterations: 5, seed: 4, ..SearchConfig::default() };
        let long = SearchConfig { iterations: 9, ..short.clone() };
        let spec = MergeSpec::new(Algorithm::Soup);
        let r1 = run_search(&[&a, &b], &model(0.0), &eval, &short, &spec, &GroupRules::default()).unwrap();
        let r2 = run_search(&[&a, &b], &model(0.0), &eval, &long, &spec, &GroupRules::default()).unwrap();
        assert_eq!(r1.history[..], r2.history[..5]);
    }
}
