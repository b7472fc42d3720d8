//! Beta-arm posteriors and the two update rules.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use super::{FBestTiming, IterationRecord, SearchError, TauSampling, UpdateRule};
use crate::param_groups::MergeType;
use crate::tensor_store::TensorMap;
use crate::toy_eval::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaArm {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for BetaArm {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0 }
    }
}

impl BetaArm {
    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Beta::new(self.alpha, self.beta)
            .expect("arm parameters stay positive")
            .sample(rng)
    }
}

/// Increments applied by the Algorithm-1 rule for a score `f` against the
/// reference best `f_best`: (Δα, Δβ).
pub fn algorithm1_increments(f: f64, f_best: f64) -> (f64, f64) {
    let s = sigmoid(f - f_best);
    (f.max(1.0 - f) * s + f, f.min(1.0 - f) * s + (1.0 - f))
}

#[derive(Debug, Clone)]
pub struct BanditState {
    pub model_arms: Vec<BetaArm>,
    /// Indexed by [`MergeType::index`].
    pub tau_arms: [BetaArm; 4],
    pub best_params: TensorMap,
    pub best_score: f64,
    pub history: Vec<IterationRecord>,
}

impl BanditState {
    /// Fresh Beta(1, 1) arms; the initial best is `init` with score 0.
    pub fn new(n_models: usize, init: TensorMap) -> Self {
        Self {
            model_arms: vec![BetaArm::default(); n_models],
            tau_arms: [BetaArm::default(); 4],
            best_params: init,
            best_score: 0.0,
            history: Vec::new(),
        }
    }

    pub fn tau_arm(&self, tau: MergeType) -> &BetaArm {
        &self.tau_arms[tau.index()]
    }

    /// Arm means normalized to sum to one.
    pub fn posterior_mean_weights(&self) -> Vec<f64> {
        let means: Vec<f64> = self.model_arms.iter().map(BetaArm::mean).collect();
        let total: f64 = means.iter().sum();
        means.iter().map(|m| m / total).collect()
    }

    /// Draw (w, τ): w_j ~ Beta(α_j, β_j) normalized; τ from the merge-type arms.
    pub fn thompson_sample<R: Rng + ?Sized>(
        &self,
        taus: &[MergeType],
        tau_sampling: TauSampling,
        rng: &mut R,
    ) -> (Vec<f64>, MergeType) {
        assert!(!taus.is_empty(), "no merge types to sample");
        let draws: Vec<f64> = self.model_arms.iter().map(|a| a.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        let weights = if total > 0.0 && total.is_finite() {
            draws.iter().map(|d| d / total).collect()
        } else {
            vec![1.0 / draws.len() as f64; draws.len()]
        };

        let tau = match tau_sampling {
            TauSampling::Argmax => {
                let mut best = taus[0];
                let mut best_draw = f64::NEG_INFINITY;
                for &t in taus {
                    let d = self.tau_arm(t).sample(rng);
                    if d > best_draw {
                        best = t;
                        best_draw = d;
                    }
                }
                best
            }
            TauSampling::Categorical => {
                let means: Vec<f64> = taus.iter().map(|&t| self.tau_arm(t).mean()).collect();
                let total: f64 = means.iter().sum();
                let mut u = rng.random::<f64>() * total;
                let mut chosen = *taus.last().expect("nonempty");
                for (&t, m) in taus.iter().zip(&means) {
                    if u < *m {
                        chosen = t;
                        break;
                    }
                    u -= m;
                }
                chosen
            }
        };
        (weights, tau)
    }

    /// Fold one observation into the posteriors and the best-so-far.
    ///
    /// Returns whether `candidate` became the new best.
    pub fn update(
        &mut self,
        weights: &[f64],
        tau: MergeType,
        score: f64,
        candidate: TensorMap,
        rule: UpdateRule,
        timing: FBestTiming,
    ) -> Result<bool, SearchError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(SearchError::ScoreOutOfRange(score));
        }
        if weights.len() != self.model_arms.len() {
            return Err(SearchError::InvalidConfig(format!(
                "{} weights for {} arms",
                weights.len(),
                self.model_arms.len()
            )));
        }
        let best_before = self.best_score;
        let improved = score > self.best_score;
        if improved {
            self.best_score = score;
            self.best_params = candidate;
        }
        let reference = match timing {
            FBestTiming::Pre => best_before,
            FBestTiming::Post => self.best_score,
        };

        match rule {
            UpdateRule::Algorithm1 => {
                let (da, db) = algorithm1_increments(score, reference);
                for (arm, &w) in self.model_arms.iter_mut().zip(weights) {
                    if w > 0.0 {
                        arm.alpha += da;
                        arm.beta += db;
                    }
                }
            }
            UpdateRule::ExpectedReward => {
                for (arm, &w) in self.model_arms.iter_mut().zip(weights) {
                    arm.alpha += score * w;
                    arm.beta += (1.0 - score) * w;
                }
            }
        }
        let arm = &mut self.tau_arms[tau.index()];
        arm.alpha += score;
        arm.beta += 1.0 - score;
        Ok(improved)
    }
}
