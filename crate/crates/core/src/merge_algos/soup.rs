//! Weighted parameter averaging.

use std::collections::BTreeSet;

use super::{assemble, ensure_compatible, MergeError};
use crate::tensor_store::TensorMap;

/// Σ_i w_i θ_i on the selected names; `carrier` supplies the rest.
pub fn soup_merge(
    models: &[&TensorMap],
    weights: &[f64],
    carrier: usize,
    names: &BTreeSet<String>,
) -> Result<TensorMap, MergeError> {
    if models.is_empty() || weights.len() != models.len() || carrier >= models.len() {
        return Err(MergeError::InvalidSpec(format!(
            "{} models, {} weights, carrier {}",
            models.len(),
            weights.len(),
            carrier
        )));
    }
    ensure_compatible(models, names)?;
    assemble(models[carrier], names, |name, t| {
        let mut acc = vec![0.0f64; t.len()];
        for (m, &w) in models.iter().zip(weights) {
            let data = m.get(name).expect("checked").data();
            for (a, &x) in acc.iter_mut().zip(data) {
                *a += w * f64::from(x);
            }
        }
        Ok(acc.into_iter().map(|v| v as f32).collect())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_store::Tensor;

    fn one(v: &[f32]) -> TensorMap {
        TensorMap::new().with("w", Tensor::vector(v.to_vec()))
    }

    #[test]
    fn weighted_average() {
        let (a, b) = (one(&[0.0, 4.0]), one(&[2.0, 0.0]));
        let out = soup_merge(&[&a, &b], &[0.25, 0.75], 0, &a.name_set()).unwrap();
        assert_eq!(out.get("w").unwrap().data(), &[1.5, 1.0]);
    }

    #[test]
    fn copies_and_one_hot() {
        let a = one(&[0.3, -1.7, 2.2]);
        let b = one(&[5.0, 6.0, 7.0]);
        let out = soup_merge(&[&a, &a], &[0.5, 0.5], 0, &a.name_set()).unwrap();
        assert!(out.bit_eq(&a));
        let out = soup_merge(&[&a, &b, &b], &[1.0, 0.0, 0.0], 0, &a.name_set()).unwrap();
        assert!(out.bit_eq(&a));
    }
}
