//! Desk-scale evaluators and loss functions.
//!
//! Everything here runs on logistic-regression models stored as ordinary
//! checkpoints, so the merge operators and the search loop can be checked
//! end to end without an ML framework.

mod linear;
mod losses;
mod metrics;
mod task;

use thiserror::Error;

use crate::evaluator::{EvalError, Evaluator};
use crate::tensor_store::TensorMap;

pub use linear::{train_linear, vat_loss, LinearModel, TrainLoss, BIAS_NAME, WEIGHT_NAME};
pub use losses::{
    alice_loss, bernoulli_kl, clamp_prob, composite_loss, cross_entropy, mlm_loss, sigmoid,
    LossWeights, PROB_CLAMP,
};
pub use metrics::{f1_score, Confusion};
pub use task::{make_synthetic_task, Dataset, ToyTaskSpec};

#[derive(Debug, Error)]
pub enum ToyError {
    #[error("{predictions} predictions for {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("mask set is empty")]
    EmptyMaskSet,
    #[error("malformed model: {0}")]
    MalformedModel(String),
    #[error("invalid loss weights: {0}")]
    InvalidWeights(String),
    #[error("invalid toy spec: {0}")]
    InvalidSpec(String),
}

impl From<ToyError> for EvalError {
    fn from(e: ToyError) -> Self {
        match e {
            ToyError::MalformedModel(m) => EvalError::MalformedModel(m),
            other => EvalError::Other(other.to_string()),
        }
    }
}

/// Scores exp(−‖θ − target‖ / ‖target‖): 1 at the target, decaying with
/// distance.
#[derive(Debug, Clone)]
pub struct KnownOptimumEvaluator {
    target: TensorMap,
    scale: f64,
}

impl KnownOptimumEvaluator {
    pub fn new(target: TensorMap) -> Self {
        let norm = target.flatten().iter().map(|x| x * x).sum::<f64>().sqrt();
        Self {
            target,
            scale: if norm > 0.0 { norm } else { 1.0 },
        }
    }
}

pub fn known_optimum_evaluator(target: TensorMap) -> KnownOptimumEvaluator {
    KnownOptimumEvaluator::new(target)
}

impl Evaluator for KnownOptimumEvaluator {
    fn evaluate(&self, model: &TensorMap) -> Result<f64, EvalError> {
        let mut sq = 0.0;
        for (name, t) in self.target.iter() {
            let other = model
                .get(name)
                .filter(|o| o.shape() == t.shape())
                .ok_or_else(|| EvalError::MalformedModel(format!("tensor `{name}` missing or misshapen")))?;
            for (a, b) in other.data().iter().zip(t.data()) {
                let d = f64::from(*a) - f64::from(*b);
                sq += d * d;
            }
        }
        Ok((-sq.sqrt() / self.scale).exp())
    }
}

/// F1 of thresholded predictions on a fixed validation set.
#[derive(Debug, Clone)]
pub struct ClassifierEvaluator {
    validation: Dataset,
}

impl ClassifierEvaluator {
    pub fn new(validation: Dataset) -> Self {
        Self { validation }
    }

    pub fn validation(&self) -> &Dataset {
        &self.validation
    }

    pub fn score_model(&self, model: &LinearModel) -> Result<f64, ToyError> {
        if model.dim() != self.validation.dim() {
            return Err(ToyError::MalformedModel(format!(
                "model has dimension {}, validation data {}",
                model.dim(),
                self.validation.dim()
            )));
        }
        let preds: Vec<bool> = self.validation.features().iter().map(|x| model.predict(x)).collect();
        f1_score(&preds, self.validation.labels())
    }
}

pub fn classifier_evaluator(validation: Dataset) -> ClassifierEvaluator {
    ClassifierEvaluator::new(validation)
}

impl Evaluator for ClassifierEvaluator {
    fn evaluate(&self, model: &TensorMap) -> Result<f64, EvalError> {
        let linear = LinearModel::from_tensor_map(model)?;
        Ok(self.score_model(&linear)?)
    }
}

/// A generated task with one trained model per slice.
#[derive(Debug, Clone)]
pub struct ToyProblem {
    pub spec: ToyTaskSpec,
    pub train: Vec<Dataset>,
    pub validation: Dataset,
    pub models: Vec<TensorMap>,
    /// Zero model, the shared initialization of every slice model.
    pub init: TensorMap,
}

/// Generate the task and train one CE model per slice.
pub fn build_toy_problem(spec: &ToyTaskSpec) -> Result<ToyProblem, ToyError> {
    let (train, validation) = make_synthetic_task(spec)?;
    let weights = LossWeights::default();
    let models = train
        .iter()
        .enumerate()
        .map(|(i, d)| {
            train_linear(d, spec.epochs, spec.learning_rate, TrainLoss::Ce, &weights, spec.seed ^ i as u64)
                .map(|m| {
                    let mut map = m.to_tensor_map();
                    map.metadata_mut().insert("model".into(), d.name().to_string());
                    map
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let init = LinearModel::zeros(validation.dim()).to_tensor_map();
    Ok(ToyProblem {
        spec: spec.clone(),
        train,
        validation,
        models,
        init,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_store::Tensor;

    fn target() -> TensorMap {
        TensorMap::new()
            .with("a", Tensor::vector(vec![3.0, 0.0]))
            .with("b", Tensor::vector(vec![4.0]))
    }

    #[test]
    fn known_optimum_values() {
        let e = known_optimum_evaluator(target());
        assert_eq!(e.evaluate(&target()).unwrap(), 1.0);
        let doubled = TensorMap::new()
            .with("a", Tensor::vector(vec![6.0, 0.0]))
            .with("b", Tensor::vector(vec![8.0]));
        assert!((e.evaluate(&doubled).unwrap() - (-1.0f64).exp()).abs() < 1e-6);
        let far = TensorMap::new()
            .with("a", Tensor::vector(vec![1e6, 0.0]))
            .with("b", Tensor::vector(vec![-1e6]));
        let s = e.evaluate(&far).unwrap();
        assert!((0.0..=1.0).contains(&s));
        assert!(e.evaluate(&TensorMap::new()).is_err());
    }

    #[test]
    fn known_optimum_decreases_with_distance() {
        let e = known_optimum_evaluator(target());
        let mut last = 1.0;
        for k in 1..10 {
            let m = TensorMap::new()
                .with("a", Tensor::vector(vec![3.0 + k as f32 * 0.5, 0.0]))
                .with("b", Tensor::vector(vec![4.0]));
            let s = e.evaluate(&m).unwrap();
            assert!(s < last);
            last = s;
        }
    }

    #[test]
    fn classifier_evaluator_cases() {
        let features: Vec<Vec<f64>> = (0..20).map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 } * (1.0 + i as f64)]).collect();
        let labels: Vec<bool> = (0..20).map(|i| i % 2 == 0).collect();
        let val = Dataset::new("v", features, labels).unwrap();
        let trained = train_linear(&val, 200, 0.5, TrainLoss::Ce, &LossWeights::default(), 0).unwrap();
        let e = classifier_evaluator(val);
        assert_eq!(e.evaluate(&trained.to_tensor_map()).unwrap(), 1.0);
        // zero model sits exactly on the threshold and predicts all negative
        let zero = LinearModel::zeros(1).to_tensor_map();
        assert_eq!(e.evaluate(&zero).unwrap(), 0.0);
        assert_eq!(e.evaluate(&zero).unwrap(), e.evaluate(&zero).unwrap());
        assert!(matches!(
            e.evaluate(&LinearModel::zeros(3).to_tensor_map()),
            Err(EvalError::MalformedModel(_))
        ));
    }
}
