//! Spherical linear interpolation between two checkpoints.

use std::collections::BTreeSet;

use super::{assemble, ensure_compatible, MergeError, MergeSpec};
use crate::tensor_store::TensorMap;

fn lerp(v0: &[f64], v1: &[f64], t: f64) -> Vec<f64> {
    v0.iter().zip(v1).map(|(a, b)| (1.0 - t) * a + t * b).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Interpolate along the great circle from `v0` to `v1`.
///
/// Falls back to linear interpolation when |cos ω| > 1 − `eps`, where
/// sin ω is too small to divide by.
pub fn slerp(v0: &[f64], v1: &[f64], t: f64, eps: f64) -> Result<Vec<f64>, MergeError> {
    if v0.len() != v1.len() {
        return Err(MergeError::IncompatibleCheckpoints(format!(
            "slerp over vectors of length {} and {}",
            v0.len(),
            v1.len()
        )));
    }
    let (n0, n1) = (norm(v0), norm(v1));
    if n0 == 0.0 || n1 == 0.0 {
        return Err(MergeError::ZeroNormVector);
    }
    let dot: f64 = v0.iter().zip(v1).map(|(a, b)| a * b).sum();
    let cos = (dot / (n0 * n1)).clamp(-1.0, 1.0);
    if cos.abs() > 1.0 - eps {
        return Ok(lerp(v0, v1, t));
    }
    let omega = cos.acos();
    let sin = omega.sin();
    let c0 = ((1.0 - t) * omega).sin() / sin;
    let c1 = (t * omega).sin() / sin;
    Ok(v0.iter().zip(v1).map(|(a, b)| c0 * a + c1 * b).collect())
}

/// Per-tensor SLERP with `t = spec.slerp_t`; zero tensors are lerped.
pub fn slerp_merge(
    model0: &TensorMap,
    model1: &TensorMap,
    spec: &MergeSpec,
    names: &BTreeSet<String>,
) -> Result<TensorMap, MergeError> {
    spec.validate(2)?;
    ensure_compatible(&[model0, model1], names)?;
    let carrier = if spec.carrier == 0 { model0 } else { model1 };
    assemble(carrier, names, |name, _| {
        let v0: Vec<f64> = model0.get(name).expect("checked").data().iter().map(|&x| f64::from(x)).collect();
        let v1: Vec<f64> = model1.get(name).expect("checked").data().iter().map(|&x| f64::from(x)).collect();
        let out = match slerp(&v0, &v1, spec.slerp_t, spec.collinear_eps) {
            Ok(v) => v,
            Err(MergeError::ZeroNormVector) => lerp(&v0, &v1, spec.slerp_t),
            Err(e) => return Err(e),
        };
        Ok(out.into_iter().map(|v| v as f32).collect())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::merge_algos::Algorithm;
    use crate::tensor_store::Tensor;

    #[test]
    fn endpoints() {
        let (a, b) = ([1.0, 2.0, -1.0], [0.5, -3.0, 2.0]);
        let at0 = slerp(&a, &b, 0.0, 1e-5).unwrap();
        let at1 = slerp(&a, &b, 1.0, 1e-5).unwrap();
        for i in 0..3 {
            assert!((at0[i] - a[i]).abs() < 1e-12);
            assert!((at1[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn quarter_circle_midpoint() {
        let v = slerp(&[1.0, 0.0], &[0.0, 1.0], 0.5, 1e-5).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((v[0] - h).abs() < 1e-6 && (v[1] - h).abs() < 1e-6, "{v:?}");
    }

    #[test]
    fn collinear_falls_back_to_lerp() {
        let a = [0.3, -0.2, 0.9];
        let b: Vec<f64> = a.iter().map(|x| x * 1.000_000_1).collect();
        let v = slerp(&a, &b, 0.3, 1e-5).unwrap();
        assert!(v.iter().all(|x| x.is_finite()));
        let l = lerp(&a, &b, 0.3);
        assert_eq!(v, l);
    }

    #[test]
    fn near_collinear_limit_agrees_with_lerp() {
        // just outside the fallback band the slerp formula approaches lerp
        let a = [1.0, 0.0];
        let b = [1.0, 0.01];
        let s = slerp(&a, &b, 0.4, 1e-12).unwrap();
        let l = lerp(&a, &b, 0.4);
        for (x, y) in s.iter().zip(&l) {
            assert!((x - y).abs() < 1e-4);
        }
    }

    #[test]
    fn zero_norm_is_an_error() {
        assert_eq!(slerp(&[0.0, 0.0], &[1.0, 0.0], 0.5, 1e-5), Err(MergeError::ZeroNormVector));
    }

    #[test]
    fn merge_preserves_unit_norm() {
        let m0 = TensorMap::new().with("w", Tensor::vector(vec![0.6, 0.8, 0.0]));
        let m1 = TensorMap::new().with("w", Tensor::vector(vec![0.0, 0.6, -0.8]));
        for t in [0.1, 0.5, 0.77] {
            let spec = MergeSpec {
                slerp_t: t,
                ..MergeSpec::new(Algorithm::Slerp)
            };
            let out = slerp_merge(&m0, &m1, &spec, &m0.name_set()).unwrap();
            let n: f64 = out.flatten().iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6, "t={t} norm={n}");
        }
        let spec = MergeSpec {
            slerp_t: 0.0,
            ..MergeSpec::new(Algorithm::Slerp)
        };
        assert!(slerp_merge(&m0, &m1, &spec, &m0.name_set()).unwrap().bit_eq(&m0));
        assert!(slerp_merge(&m0, &m0, &MergeSpec::new(Algorithm::Slerp), &m0.name_set())
            .unwrap()
            .bit_eq(&m0));
    }

    #[test]
    fn zero_tensor_is_lerped() {
        let m0 = TensorMap::new().with("w", Tensor::zeros(vec![2]));
        let m1 = TensorMap::new().with("w", Tensor::vector(vec![2.0, 4.0]));
        let out = slerp_merge(&m0, &m1, &MergeSpec::new(Algorithm::Slerp), &m0.name_set()).unwrap();
        assert_eq!(out.get("w").unwrap().data(), &[1.0, 2.0]);
    }
}
