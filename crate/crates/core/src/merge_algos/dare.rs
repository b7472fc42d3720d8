//! Drop-and-rescale sparsification of task vectors.
//!
//! Masks are drawn from counter-based streams keyed by
//! (seed, model index, tensor name, element index), so the result is
//! independent of iteration order.

use std::collections::BTreeSet;

use super::{assemble, ensure_compatible, MergeError, MergeSpec};
use crate::rng::{hash_str, uniform_at};
use crate::tensor_store::TensorMap;

fn check_rate(p: f64) -> Result<(), MergeError> {
    if (0.0..1.0).contains(&p) {
        Ok(())
    } else {
        Err(MergeError::InvalidDropRate(p))
    }
}

/// Whether element `index` of tensor `name` in model `model` survives.
fn kept(seed: u64, model: usize, name: &str, index: usize, p: f64) -> bool {
    p == 0.0 || uniform_at(seed, model as u64, hash_str(name), index as u64) >= p
}

fn sparse_delta(
    sft: &TensorMap,
    pre: &TensorMap,
    name: &str,
    p: f64,
    seed: u64,
    model: usize,
) -> Vec<f64> {
    let scale = 1.0 / (1.0 - p);
    let a = sft.get(name).expect("checked").data();
    let b = pre.get(name).expect("checked").data();
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (&x, &y))| {
            if kept(seed, model, name, i, p) {
                (f64::from(x) - f64::from(y)) * scale
            } else {
                0.0
            }
        })
        .collect()
}

/// θ_PRE + m ⊙ (θ_SFT − θ_PRE) / (1 − p) over every tensor, with
/// m ~ Bernoulli(1 − p). `model` selects the mask stream.
pub fn dare_sparsify(
    sft: &TensorMap,
    pre: &TensorMap,
    p: f64,
    seed: u64,
    model: usize,
) -> Result<TensorMap, MergeError> {
    check_rate(p)?;
    let names = pre.name_set();
    ensure_compatible(&[sft, pre], &names)?;
    assemble(pre, &names, |name, t| {
        let delta = sparse_delta(sft, pre, name, p, seed, model);
        Ok(t.data()
            .iter()
            .zip(delta)
            .map(|(&b, d)| (f64::from(b) + d) as f32)
            .collect())
    })
}

/// θ_PRE + λ Σ_k n·w_k·DARE_k(δ_k) on the selected names.
///
/// Uniform weights reduce to the plain sum over models.
pub fn dare_merge(
    models: &[&TensorMap],
    pre: &TensorMap,
    spec: &MergeSpec,
    names: &BTreeSet<String>,
) -> Result<TensorMap, MergeError> {
    check_rate(spec.dare_p)?;
    spec.validate(models.len())?;
    let mut all: Vec<&TensorMap> = models.to_vec();
    all.push(pre);
    ensure_compatible(&all, names)?;

    let n = models.len() as f64;
    let weights = spec.weights_for(models.len());
    assemble(models[spec.carrier], names, |name, _| {
        let base = pre.get(name).expect("checked").data();
        let mut acc = vec![0.0f64; base.len()];
        for (k, (m, &w)) in models.iter().zip(&weights).enumerate() {
            let delta = sparse_delta(m, pre, name, spec.dare_p, spec.seed, k);
            for (a, d) in acc.iter_mut().zip(delta) {
                *a += n * w * d;
            }
        }
        Ok(base
            .iter()
            .zip(acc)
            .map(|(&b, a)| (f64::from(b) + spec.lambda * a) as f32)
            .collect())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::merge_algos::Algorithm;
    use crate::tensor_store::Tensor;

    fn one(v: &[f32]) -> TensorMap {
        TensorMap::new().with("w", Tensor::vector(v.to_vec()))
    }

    #[test]
    fn zero_rate_is_identity() {
        let (sft, pre) = (one(&[1.5, -2.0, 0.25]), one(&[1.0, 1.0, 1.0]));
        assert!(dare_sparsify(&sft, &pre, 0.0, 3, 0).unwrap().bit_eq(&sft));
    }

    #[test]
    fn zero_delta_stays_at_pre() {
        let pre = one(&[0.1, 0.2, 0.3]);
        assert!(dare_sparsify(&pre, &pre, 0.7, 11, 0).unwrap().bit_eq(&pre));
    }

    #[test]
    fn rejects_bad_rate() {
        let pre = one(&[0.0]);
        assert_eq!(
            dare_sparsify(&pre, &pre, 1.0, 0, 0).unwrap_err(),
            MergeError::InvalidDropRate(1.0)
        );
        assert!(dare_sparsify(&pre, &pre, -0.1, 0, 0).is_err());
    }

    #[test]
    fn monte_carlo_mean_is_unbiased() {
        let pre = TensorMap::new().with("w", Tensor::zeros(vec![100_000]));
        let sft = TensorMap::new().with("w", Tensor::vector(vec![1.0; 100_000]));
        let out = dare_sparsify(&sft, &pre, 0.9, 42, 0).unwrap();
        let mean: f64 = out.flatten().iter().sum::<f64>() / 100_000.0;
        assert!((mean - 1.0).abs() < 0.05, "mean {mean}");
        // survivors are rescaled, not clipped
        assert!(out.flatten().iter().all(|&v| v == 0.0 || (v - 10.0).abs() < 1e-5));
    }

    #[test]
    fn merge_examples() {
        let pre = one(&[1.0, 1.0]);
        let a = one(&[2.0, 0.0]);
        let b = one(&[1.5, 4.0]);
        let spec = MergeSpec {
            dare_p: 0.0,
            ..MergeSpec::new(Algorithm::Dare)
        };
        let out = dare_merge(&[&a], &pre, &spec, &pre.name_set()).unwrap();
        assert!(out.bit_eq(&a));
        let out = dare_merge(&[&a, &b], &pre, &spec, &pre.name_set()).unwrap();
        // pre + (a - pre) + (b - pre)
        assert_eq!(out.get("w").unwrap().data(), &[2.5, 3.0]);
    }

    #[test]
    fn seeded_runs_repeat() {
        let pre = TensorMap::new().with("w", Tensor::zeros(vec![64]));
        let a = TensorMap::new().with("w", Tensor::vector((0..64).map(|i| i as f32).collect()));
        let spec = MergeSpec {
            dare_p: 0.5,
            seed: 9,
            ..MergeSpec::new(Algorithm::Dare)
        };
        let x = dare_merge(&[&a, &a], &pre, &spec, &pre.name_set()).unwrap();
        let y = dare_merge(&[&a, &a], &pre, &spec, &pre.name_set()).unwrap();
        assert!(x.bit_eq(&y));
        let z = dare_merge(&[&a, &a], &pre, &MergeSpec { seed: 10, ..spec }, &pre.name_set()).unwrap();
        assert!(!x.bit_eq(&z));
    }
}
