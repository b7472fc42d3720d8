//! Logistic-regression classifier stored as a checkpoint.

use rand::Rng;
use rand_distr::StandardNormal;

use super::losses::{bernoulli_kl, cross_entropy, sigmoid, LossWeights};
use super::task::Dataset;
use super::ToyError;
use crate::rng::stream_rng;
use crate::tensor_store::{Tensor, TensorMap};

pub const WEIGHT_NAME: &str = "linear.weight";
pub const BIAS_NAME: &str = "classifier.bias";

/// p(y = 1 | x) = σ(w·x + b)
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weight: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weight: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weight.len()
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        self.weight.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn prob(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    /// Strict 0.5 threshold.
    pub fn predict(&self, x: &[f64]) -> bool {
        self.prob(x) > 0.5
    }

    pub fn to_tensor_map(&self) -> TensorMap {
        TensorMap::new()
            .with(
                WEIGHT_NAME,
                Tensor::vector(self.weight.iter().map(|&v| v as f32).collect()),
            )
            .with(BIAS_NAME, Tensor::vector(vec![self.bias as f32]))
    }

    pub fn from_tensor_map(map: &TensorMap) -> Result<Self, ToyError> {
        let weight = map
            .get(WEIGHT_NAME)
            .ok_or_else(|| ToyError::MalformedModel(format!("missing `{WEIGHT_NAME}`")))?;
        let bias = map
            .get(BIAS_NAME)
            .ok_or_else(|| ToyError::MalformedModel(format!("missing `{BIAS_NAME}`")))?;
        if weight.shape().len() != 1 {
            return Err(ToyError::MalformedModel(format!(
                "`{WEIGHT_NAME}` must be 1-D, has shape {:?}",
                weight.shape()
            )));
        }
        if bias.len() != 1 {
            return Err(ToyError::MalformedModel(format!(
                "`{BIAS_NAME}` must hold one value, has shape {:?}",
                bias.shape()
            )));
        }
        Ok(Self {
            weight: weight.data().iter().map(|&v| f64::from(v)).collect(),
            bias: f64::from(bias.data()[0]),
        })
    }

    pub fn mean_cross_entropy(&self, data: &Dataset) -> f64 {
        data.iter()
            .map(|(x, y)| cross_entropy(self.prob(x), y))
            .sum::<f64>()
            / data.len() as f64
    }

    /// Gradient of the mean cross-entropy: (∂/∂w, ∂/∂b).
    pub fn ce_gradient(&self, data: &Dataset) -> (Vec<f64>, f64) {
        let n = data.len() as f64;
        let mut gw = vec![0.0; self.dim()];
        let mut gb = 0.0;
        for (x, y) in data.iter() {
            let r = self.prob(x) - if y { 1.0 } else { 0.0 };
            for (g, v) in gw.iter_mut().zip(x) {
                *g += r * v / n;
            }
            gb += r / n;
        }
        (gw, gb)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Approximate worst-case perturbation of `x` on the ε-sphere.
///
/// Starts from a random direction and takes `steps` normalized gradient
/// ascent steps on KL(p(y|x) ‖ p(y|x+δ)).
fn adversarial_delta<R: Rng>(
    model: &LinearModel,
    x: &[f64],
    eps: f64,
    steps: usize,
    rng: &mut R,
) -> Vec<f64> {
    let mut delta: Vec<f64> = (0..x.len()).map(|_| rng.sample(StandardNormal)).collect();
    let n = norm(&delta);
    if n == 0.0 {
        delta[0] = 1.0;
    } else {
        delta.iter_mut().for_each(|d| *d /= n);
    }
    delta.iter_mut().for_each(|d| *d *= eps);

    let reference = model.prob(x);
    for _ in 0..steps {
        let shifted: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + d).collect();
        // d KL / d δ = (q − p̂) · w for a logistic model
        let scale = model.prob(&shifted) - reference;
        let grad: Vec<f64> = model.weight.iter().map(|w| scale * w).collect();
        let g = norm(&grad);
        if g == 0.0 {
            break;
        }
        let step: Vec<f64> = delta
            .iter()
            .zip(&grad)
            .map(|(d, gr)| d / eps + gr / g)
            .collect();
        let s = norm(&step);
        if s == 0.0 {
            break;
        }
        delta = step.iter().map(|v| v / s * eps).collect();
    }
    delta
}

/// Mean KL between clean and adversarially perturbed predictions.
///
/// Inputs get independent perturbation streams derived from `seed`.
pub fn vat_loss(model: &LinearModel, inputs: &[Vec<f64>], eps: f64, steps: usize, seed: u64) -> f64 {
    assert!(eps > 0.0 && steps >= 1, "vat_loss needs eps > 0 and steps >= 1");
    if inputs.is_empty() {
        return 0.0;
    }
    let total: f64 = inputs
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let mut rng = stream_rng(seed, i as u64);
            let delta = adversarial_delta(model, x, eps, steps, &mut rng);
            let shifted: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + d).collect();
            bernoulli_kl(model.prob(x), model.prob(&shifted))
        })
        .sum();
    total / inputs.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainLoss {
    Ce,
    CePlusVat,
}

pub const VAT_STEPS: usize = 1;

/// Full-batch gradient descent from a zero initialization.
///
/// With `CePlusVat` the objective is CE + α·VAT, where the clean
/// prediction is held constant and the perturbation is fixed per step.
pub fn train_linear(
    data: &Dataset,
    epochs: usize,
    learning_rate: f64,
    loss: TrainLoss,
    weights: &LossWeights,
    seed: u64,
) -> Result<LinearModel, ToyError> {
    if !(learning_rate > 0.0) {
        return Err(ToyError::InvalidSpec(format!(
            "learning rate must be > 0, got {learning_rate}"
        )));
    }
    weights.validate()?;
    let mut model = LinearModel::zeros(data.dim());
    let n = data.len() as f64;
    for epoch in 0..epochs {
        let (mut gw, mut gb) = model.ce_gradient(data);
        if loss == TrainLoss::CePlusVat && weights.alice_alpha > 0.0 {
            let epoch_seed = crate::rng::child_seed(seed, epoch as u64);
            for (i, (x, _)) in data.iter().enumerate() {
                let mut rng = stream_rng(epoch_seed, i as u64);
                let delta = adversarial_delta(&model, x, weights.vat_eps, VAT_STEPS, &mut rng);
                let shifted: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + d).collect();
                let r = model.prob(&shifted) - model.prob(x);
                let scale = weights.alice_alpha * r / n;
                for (g, v) in gw.iter_mut().zip(&shifted) {
                    *g += scale * v;
                }
                gb += scale;
            }
        }
        for (w, g) in model.weight.iter_mut().zip(&gw) {
            *w -= learning_rate * g;
        }
        model.bias -= learning_rate * gb;
    }
    Ok(model)
}
