//! Scalar loss formulas.

use serde::{Deserialize, Serialize};

use super::ToyError;

pub const PROB_CLAMP: f64 = 1e-7;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of `prob` (of label 1) against `label`.
pub fn cross_entropy(prob: f64, label: bool) -> f64 {
    let p = clamp_prob(prob);
    if label {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Mean negative log-probability of the true token over masked positions.
pub fn mlm_loss(masked_token_probs: &[f64]) -> Result<f64, ToyError> {
    if masked_token_probs.is_empty() {
        return Err(ToyError::EmptyMaskSet);
    }
    let total: f64 = masked_token_probs.iter().map(|&p| -clamp_prob(p).ln()).sum();
    Ok(total / masked_token_probs.len() as f64)
}

/// KL(Ber(p) ‖ Ber(q)) with both probabilities clamped.
pub fn bernoulli_kl(p: f64, q: f64) -> f64 {
    let (p, q) = (clamp_prob(p), clamp_prob(q));
    let kl = p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
    kl.max(0.0)
}

pub fn alice_loss(label_loss: f64, vat: f64, alpha: f64) -> f64 {
    label_loss + alpha * vat
}

/// Weights for the composite and adversarial losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub mlm: f64,
    pub alice: f64,
    pub ce: f64,
    pub alice_alpha: f64,
    pub vat_eps: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            mlm: 1.0,
            alice: 1.0,
            ce: 1.0,
            alice_alpha: 1.0,
            vat_eps: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), ToyError> {
        let parts = [self.mlm, self.alice, self.ce, self.alice_alpha];
        if parts.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ToyError::InvalidWeights("loss weights must be finite and >= 0".into()));
        }
        if self.mlm + self.alice + self.ce <= 0.0 {
            return Err(ToyError::InvalidWeights("composite weights sum to zero".into()));
        }
        if !(self.vat_eps > 0.0) {
            return Err(ToyError::InvalidWeights("vat_eps must be > 0".into()));
        }
        Ok(())
    }
}

pub fn composite_loss(mlm: f64, alice: f64, ce: f64, weights: &LossWeights) -> f64 {
    weights.mlm * mlm + weights.alice * alice + weights.ce * ce
}
