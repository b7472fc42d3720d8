//! Synthetic two-cluster binary classification tasks.
//!
//! Every slice shares a base separating direction but tilts it and shifts
//! its class centres by a slice-specific amount, so models trained on
//! different slices disagree. The validation set mixes all slices evenly.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::ToyError;
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    features: Vec<Vec<f64>>,
    labels: Vec<bool>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: Vec<Vec<f64>>,
        labels: Vec<bool>,
    ) -> Result<Self, ToyError> {
        if features.is_empty() || features.len() != labels.len() {
            return Err(ToyError::InvalidSpec(format!(
                "{} feature rows for {} labels",
                features.len(),
                labels.len()
            )));
        }
        let dim = features[0].len();
        if dim == 0 || features.iter().any(|f| f.len() != dim) {
            return Err(ToyError::InvalidSpec("feature rows must share a nonzero dimension".into()));
        }
        Ok(Self {
            name: name.into(),
            features,
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], bool)> {
        self.features.iter().map(Vec::as_slice).zip(self.labels.iter().copied())
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y).count()
    }
}

fn default_epochs() -> usize {
    200
}

fn default_lr() -> f64 {
    0.5
}

fn default_tilt() -> f64 {
    0.8
}

fn default_shift() -> f64 {
    0.5
}

/// Shape of a synthetic task. Also the JSON payload of `toy:<spec>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyTaskSpec {
    pub dim: usize,
    pub n_train_per_slice: usize,
    pub n_slices: usize,
    pub n_val: usize,
    pub cluster_separation: f64,
    #[serde(default)]
    pub seed: u64,
    /// How far each slice's direction leans away from the shared one.
    #[serde(default = "default_tilt")]
    pub slice_tilt: f64,
    /// Per-slice offset of the class centres along the shared direction,
    /// as a fraction of the separation.
    #[serde(default = "default_shift")]
    pub slice_shift: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
}

impl ToyTaskSpec {
    pub fn new(dim: usize, n_train_per_slice: usize, n_slices: usize, n_val: usize, sep: f64) -> Self {
        Self {
            dim,
            n_train_per_slice,
            n_slices,
            n_val,
            cluster_separation: sep,
            seed: 0,
            slice_tilt: default_tilt(),
            slice_shift: default_shift(),
            epochs: default_epochs(),
            learning_rate: default_lr(),
        }
    }

    pub fn validate(&self) -> Result<(), ToyError> {
        if self.dim == 0 || self.n_train_per_slice == 0 || self.n_slices == 0 || self.n_val == 0 {
            return Err(ToyError::InvalidSpec("toy task sizes must be positive".into()));
        }
        if !(self.cluster_separation > 0.0) || !self.cluster_separation.is_finite() {
            return Err(ToyError::InvalidSpec("cluster_separation must be > 0".into()));
        }
        if !(self.slice_tilt >= 0.0 && self.slice_shift >= 0.0) {
            return Err(ToyError::InvalidSpec("slice_tilt and slice_shift must be >= 0".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(ToyError::InvalidSpec("learning_rate must be > 0".into()));
        }
        Ok(())
    }
}

struct SliceGeometry {
    direction: Vec<f64>,
    offset: f64,
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        let mut e = vec![0.0; v.len()];
        e[0] = 1.0;
        return e;
    }
    v.into_iter().map(|x| x / n).collect()
}

fn gaussian<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn geometry(spec: &ToyTaskSpec) -> (Vec<f64>, Vec<SliceGeometry>) {
    let mut rng = stream_rng(spec.seed, 0);
    let base = unit(gaussian(&mut rng, spec.dim));
    let slices = (0..spec.n_slices)
        .map(|s| {
            let mut noise = gaussian(&mut rng, spec.dim);
            // remove the component along the shared direction
            let along: f64 = noise.iter().zip(&base).map(|(a, b)| a * b).sum();
            noise.iter_mut().zip(&base).for_each(|(n, b)| *n -= along * b);
            let noise = if spec.dim > 1 { unit(noise) } else { vec![0.0] };
            let direction = unit(
                base.iter()
                    .zip(&noise)
                    .map(|(b, n)| b + spec.slice_tilt * n)
                    .collect(),
            );
            // alternate sides so the slice offsets roughly cancel
            let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
            let magnitude = rng.random_range(0.5..1.0);
            SliceGeometry {
                direction,
                offset: sign * magnitude * spec.slice_shift * spec.cluster_separation,
            }
        })
        .collect();
    (base, slices)
}

fn draw_point<R: Rng>(rng: &mut R, g: &SliceGeometry, base: &[f64], label: bool, sep: f64) -> Vec<f64> {
    let side = if label { 0.5 } else { -0.5 };
    gaussian(rng, base.len())
        .into_iter()
        .zip(&g.direction)
        .zip(base)
        .map(|((z, d), b)| z + side * sep * d + g.offset * b)
        .collect()
}

/// Per-slice training sets and one pooled validation set.
///
/// Labels alternate within each set, so every set is balanced to within one
/// sample.
pub fn make_synthetic_task(spec: &ToyTaskSpec) -> Result<(Vec<Dataset>, Dataset), ToyError> {
    spec.validate()?;
    let (base, slices) = geometry(spec);
    let sep = spec.cluster_separation;

    let train = slices
        .iter()
        .enumerate()
        .map(|(s, g)| {
            let mut rng = stream_rng(spec.seed, 1 + s as u64);
            let labels: Vec<bool> = (0..spec.n_train_per_slice).map(|i| i % 2 == 0).collect();
            let features = labels
                .iter()
                .map(|&y| draw_point(&mut rng, g, &base, y, sep))
                .collect();
            Dataset::new(format!("slice-{s}"), features, labels)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut rng = stream_rng(spec.seed, 1_000_003);
    let labels: Vec<bool> = (0..spec.n_val).map(|i| i % 2 == 0).collect();
    let features = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| draw_point(&mut rng, &slices[(i / 2) % slices.len()], &base, y, sep))
        .collect();
    let validation = Dataset::new("validation", features, labels)?;
    Ok((train, validation))
}
