//! Task vectors and TIES merging (trim, elect sign, disjoint merge).

use std::cmp::Ordering;
use std::collections::BTreeSet;

use super::{assemble, ensure_compatible, DisjointMode, MergeError, MergeSpec, SignMode};
use crate::tensor_store::{Tensor, TensorMap};

/// Location of one tensor inside a flattened task vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub shape: Vec<usize>,
    pub start: usize,
    pub len: usize,
}

fn layout_of(map: &TensorMap, names: &BTreeSet<String>) -> Vec<Segment> {
    let mut start = 0;
    names
        .iter()
        .map(|name| {
            let t = map.get(name).expect("caller checked names");
            let seg = Segment {
                name: name.clone(),
                shape: t.shape().to_vec(),
                start,
                len: t.len(),
            };
            start += t.len();
            seg
        })
        .collect()
}

/// θ_t − θ_init over a set of tensors, flattened in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskVector {
    segments: Vec<Segment>,
    values: Vec<f64>,
}

impl TaskVector {
    /// Single anonymous tensor, mostly for tests.
    pub fn from_values(values: Vec<f64>) -> Self {
        let len = values.len();
        Self {
            segments: vec![Segment {
                name: "delta".into(),
                shape: vec![len],
                start: 0,
                len,
            }],
            values,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            segments: self.segments.clone(),
            values,
        }
    }

    fn same_layout(&self, other: &TaskVector) -> bool {
        self.segments == other.segments
    }

    /// Values rounded to f32, one tensor per segment.
    pub fn to_tensor_map(&self) -> TensorMap {
        let mut out = TensorMap::new();
        for seg in &self.segments {
            let data = self.values[seg.start..seg.start + seg.len]
                .iter()
                .map(|&v| v as f32)
                .collect();
            out.insert(
                seg.name.clone(),
                Tensor::new(seg.shape.clone(), data).expect("segment shape matches length"),
            )
            .expect("segment names are nonempty");
        }
        out
    }
}

/// Elected signs, aligned with a task-vector layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SignVector {
    segments: Vec<Segment>,
    signs: Vec<i8>,
}

impl SignVector {
    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn to_tensor_map(&self) -> TensorMap {
        TaskVector {
            segments: self.segments.clone(),
            values: self.signs.iter().map(|&s| f64::from(s)).collect(),
        }
        .to_tensor_map()
    }
}

fn sgn(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

pub fn task_vector(
    model: &TensorMap,
    init: &TensorMap,
    names: &BTreeSet<String>,
) -> Result<TaskVector, MergeError> {
    for name in names {
        match (model.get(name), init.get(name)) {
            (Some(a), Some(b)) if a.shape() == b.shape() => {}
            _ => {
                return Err(MergeError::IncompatibleCheckpoints(format!(
                    "tensor `{name}` missing or misshapen"
                )))
            }
        }
    }
    let segments = layout_of(init, names);
    let mut values = Vec::with_capacity(segments.iter().map(|s| s.len).sum());
    for seg in &segments {
        let a = model.get(&seg.name).expect("checked").data();
        let b = init.get(&seg.name).expect("checked").data();
        values.extend(a.iter().zip(b).map(|(x, y)| f64::from(*x) - f64::from(*y)));
    }
    Ok(TaskVector { segments, values })
}

/// Number of entries kept at percentile `k` out of `total`.
fn keep_count(k: f64, total: usize) -> usize {
    // guard against 20.0 * 5 / 100 landing a hair above an integer
    let exact = k * total as f64 / 100.0;
    let count = (exact - 1e-9).ceil().max(0.0) as usize;
    count.min(total)
}

fn trim_slice(values: &mut [f64], k: f64) {
    let keep = keep_count(k, values.len());
    if keep == values.len() {
        return;
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    // largest magnitude first; earlier index wins ties
    order.sort_by(|&a, &b| {
        values[b]
            .abs()
            .partial_cmp(&values[a].abs())
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    for &i in &order[keep..] {
        values[i] = 0.0;
    }
}

/// Keep the ⌈k%⌉ largest-magnitude entries and zero the rest.
///
/// With `per_tensor` false there is a single threshold over the whole
/// vector; otherwise each tensor is trimmed on its own.
pub fn trim_topk(delta: &TaskVector, k: f64, per_tensor: bool) -> TaskVector {
    let mut values = delta.values.clone();
    if per_tensor {
        for seg in &delta.segments {
            trim_slice(&mut values[seg.start..seg.start + seg.len], k);
        }
    } else {
        trim_slice(&mut values, k);
    }
    delta.with_values(values)
}

pub fn elect_sign(deltas: &[TaskVector], weights: &[f64], mode: SignMode) -> SignVector {
    assert!(!deltas.is_empty(), "elect_sign needs at least one delta");
    assert_eq!(deltas.len(), weights.len(), "one weight per delta");
    let len = deltas[0].len();
    let signs = (0..len)
        .map(|p| {
            let total: f64 = deltas
                .iter()
                .zip(weights)
                .map(|(d, w)| match mode {
                    SignMode::Weighted => w * d.values[p],
                    SignMode::Unweighted => d.values[p],
                })
                .sum();
            sgn(total)
        })
        .collect();
    SignVector {
        segments: deltas[0].segments.clone(),
        signs,
    }
}

/// Average, per element, only the deltas whose sign matches the elected one.
pub fn disjoint_merge(
    deltas: &[TaskVector],
    weights: &[f64],
    signs: &SignVector,
    mode: DisjointMode,
) -> TaskVector {
    assert!(!deltas.is_empty(), "disjoint_merge needs at least one delta");
    assert_eq!(deltas.len(), weights.len(), "one weight per delta");
    let values = signs
        .signs
        .iter()
        .enumerate()
        .map(|(p, &gamma)| {
            if gamma == 0 {
                return 0.0;
            }
            let (mut num, mut den) = (0.0, 0.0);
            for (d, &w) in deltas.iter().zip(weights) {
                let v = d.values[p];
                if sgn(v) == gamma {
                    match mode {
                        DisjointMode::WeightedMean => {
                            num += w * v;
                            den += w;
                        }
                        DisjointMode::PlainMean => {
                            num += v;
                            den += 1.0;
                        }
                    }
                }
            }
            if den > 0.0 {
                num / den
            } else {
                0.0
            }
        })
        .collect();
    deltas[0].with_values(values)
}

/// θ_init + λ·τ_m on the selected names, carrier elsewhere.
pub fn ties_merge(
    models: &[&TensorMap],
    init: &TensorMap,
    spec: &MergeSpec,
    names: &BTreeSet<String>,
) -> Result<TensorMap, MergeError> {
    spec.validate(models.len())?;
    let mut all: Vec<&TensorMap> = models.to_vec();
    all.push(init);
    ensure_compatible(&all, names)?;

    let weights = spec.weights_for(models.len());
    let trimmed: Vec<TaskVector> = models
        .iter()
        .map(|m| task_vector(m, init, names).map(|tv| trim_topk(&tv, spec.ties_k, spec.ties_per_tensor)))
        .collect::<Result<_, _>>()?;
    debug_assert!(trimmed.iter().all(|t| t.same_layout(&trimmed[0])));
    let signs = elect_sign(&trimmed, &weights, spec.sign_mode);
    let merged = disjoint_merge(&trimmed, &weights, &signs, spec.disjoint_mode);

    let carrier = models[spec.carrier];
    let segments = merged.segments.clone();
    assemble(carrier, names, |name, _| {
        let seg = segments.iter().find(|s| s.name == name).expect("selected");
        let base = init.get(name).expect("checked").data();
        Ok(base
            .iter()
            .zip(&merged.values[seg.start..seg.start + seg.len])
            .map(|(&b, &d)| (f64::from(b) + spec.lambda * d) as f32)
            .collect())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::merge_algos::Algorithm;
    use proptest::prelude::*;

    fn tv(v: &[f64]) -> TaskVector {
        TaskVector::from_values(v.to_vec())
    }

    fn one(name: &str, v: &[f32]) -> TensorMap {
        TensorMap::new().with(name, Tensor::vector(v.to_vec()))
    }

    fn names(m: &TensorMap) -> BTreeSet<String> {
        m.name_set()
    }

    // brute force: sort a copy, threshold at the kth magnitude, keep earliest on ties
    fn trim_oracle(v: &[f64], k: f64) -> Vec<f64> {
        let keep = ((k / 100.0) * v.len() as f64 - 1e-9).ceil() as usize;
        let mut kept = vec![false; v.len()];
        for _ in 0..keep.min(v.len()) {
            let mut best: Option<usize> = None;
            for i in 0..v.len() {
                if kept[i] {
                    continue;
                }
                if best.is_none_or(|b| v[i].abs() > v[b].abs()) {
                    best = Some(i);
                }
            }
            kept[best.unwrap()] = true;
        }
        v.iter().zip(&kept).map(|(x, k)| if *k { *x } else { 0.0 }).collect()
    }

    #[test]
    fn task_vector_cases() {
        let m = one("w", &[3.0, 1.0]);
        let i = one("w", &[1.0, 1.0]);
        assert_eq!(task_vector(&m, &i, &names(&m)).unwrap().values(), &[2.0, 0.0]);
        assert!(task_vector(&m, &m, &names(&m)).unwrap().values().iter().all(|v| *v == 0.0));
        let bad = one("w", &[1.0]);
        assert!(task_vector(&m, &bad, &names(&m)).is_err());
    }

    #[test]
    fn trim_examples() {
        let d = tv(&[0.1, -3.0, 0.5, 2.0]);
        let expect = trim_oracle(d.values(), 50.0);
        assert_eq!(expect, vec![0.0, -3.0, 0.0, 2.0]);
        assert_eq!(trim_topk(&d, 50.0, false).values(), expect.as_slice());
        assert_eq!(trim_topk(&d, 100.0, false), d);
        let z = tv(&[0.0; 5]);
        assert_eq!(trim_topk(&z, 20.0, false), z);
    }

    #[test]
    fn trim_tie_keeps_earlier() {
        let d = tv(&[1.0, -1.0, 1.0, 0.5]);
        assert_eq!(trim_topk(&d, 50.0, false).values(), &[1.0, -1.0, 0.0, 0.0]);
        // 20% of 5 is exactly one element
        let d = tv(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(trim_topk(&d, 20.0, false).values(), &[0.0, 0.0, 0.0, 0.0, 5.0]);
    }

    #[test]
    fn trim_global_vs_per_tensor() {
        let a = TensorMap::new()
            .with("a", Tensor::vector(vec![10.0, 9.0]))
            .with("b", Tensor::vector(vec![1.0, 2.0]));
        let zero = TensorMap::new()
            .with("a", Tensor::vector(vec![0.0, 0.0]))
            .with("b", Tensor::vector(vec![0.0, 0.0]));
        let d = task_vector(&a, &zero, &names(&a)).unwrap();
        assert_eq!(trim_topk(&d, 50.0, false).values(), &[10.0, 9.0, 0.0, 0.0]);
        assert_eq!(trim_topk(&d, 50.0, true).values(), &[10.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn sign_examples() {
        let d = [tv(&[1.0, -2.0]), tv(&[3.0, 1.0])];
        assert_eq!(elect_sign(&d, &[0.5, 0.5], SignMode::Weighted).signs(), &[1, -1]);
        let single = [tv(&[-0.5, 0.0, 4.0])];
        for mode in [SignMode::Weighted, SignMode::Unweighted] {
            assert_eq!(elect_sign(&single, &[1.0], mode).signs(), &[-1, 0, 1]);
        }
        let cancel = [tv(&[1.0]), tv(&[-1.0])];
        assert_eq!(elect_sign(&cancel, &[0.5, 0.5], SignMode::Weighted).signs(), &[0]);
        // weighting can flip the election
        let d = [tv(&[1.0]), tv(&[-2.0])];
        assert_eq!(elect_sign(&d, &[0.9, 0.1], SignMode::Weighted).signs(), &[1]);
        assert_eq!(elect_sign(&d, &[0.9, 0.1], SignMode::Unweighted).signs(), &[-1]);
    }

    #[test]
    fn disjoint_examples() {
        let d = [tv(&[1.0, -2.0]), tv(&[3.0, 1.0])];
        let w = [0.5, 0.5];
        let s = elect_sign(&d, &w, SignMode::Weighted);
        assert_eq!(disjoint_merge(&d, &w, &s, DisjointMode::WeightedMean).values(), &[2.0, -2.0]);
        assert_eq!(disjoint_merge(&d, &w, &s, DisjointMode::PlainMean).values(), &[2.0, -2.0]);

        let single = [tv(&[0.3, -0.7])];
        let s = elect_sign(&single, &[1.0], SignMode::Weighted);
        assert_eq!(disjoint_merge(&single, &[1.0], &s, DisjointMode::WeightedMean), single[0]);

        let cancel = [tv(&[1.0]), tv(&[-1.0])];
        let s = elect_sign(&cancel, &[0.5, 0.5], SignMode::Weighted);
        assert_eq!(disjoint_merge(&cancel, &[0.5, 0.5], &s, DisjointMode::WeightedMean).values(), &[0.0]);
    }

    #[test]
    fn weighted_and_plain_means_differ() {
        let d = [tv(&[1.0]), tv(&[3.0])];
        let w = [0.75, 0.25];
        let s = elect_sign(&d, &w, SignMode::Weighted);
        assert_eq!(disjoint_merge(&d, &w, &s, DisjointMode::WeightedMean).values(), &[1.5]);
        assert_eq!(disjoint_merge(&d, &w, &s, DisjointMode::PlainMean).values(), &[2.0]);
    }

    #[test]
    fn ties_examples() {
        let init = one("w", &[0.0, 0.0]);
        let m1 = one("w", &[1.0, -2.0]);
        let m2 = one("w", &[3.0, 1.0]);
        let spec = MergeSpec {
            ties_k: 100.0,
            weights: vec![0.5, 0.5],
            ..MergeSpec::new(Algorithm::Ties)
        };
        let out = ties_merge(&[&m1, &m2], &init, &spec, &names(&init)).unwrap();
        assert_eq!(out.get("w").unwrap().data(), &[2.0, -2.0]);

        let solo = MergeSpec {
            ties_k: 100.0,
            ..MergeSpec::new(Algorithm::Ties)
        };
        let out = ties_merge(&[&m1], &init, &solo, &names(&init)).unwrap();
        assert!(out.bit_eq(&m1));

        let zero_lambda = MergeSpec {
            lambda: 0.0,
            ..spec
        };
        let out = ties_merge(&[&m1, &m2], &init, &zero_lambda, &names(&init)).unwrap();
        assert!(out.bit_eq(&init));
    }

    proptest! {
        #[test]
        fn trim_matches_oracle(v in prop::collection::vec(-4i8..=4, 1..24), k in 1u32..=100) {
            let v: Vec<f64> = v.into_iter().map(|x| f64::from(x) * 0.5).collect();
            let got = trim_topk(&tv(&v), f64::from(k), false);
            let want = trim_oracle(&v, f64::from(k));
            prop_assert_eq!(got.values(), want.as_slice());
        }

        #[test]
        fn agreeing_signs_reduce_to_weighted_average(
            mags in prop::collection::vec(prop::collection::vec(0.01f64..5.0, 6), 1..4),
            signs in prop::collection::vec(prop::bool::ANY, 6),
            raw_w in prop::collection::vec(0.05f64..1.0, 4),
        ) {
            let n = mags.len();
            let total: f64 = raw_w[..n].iter().sum();
            let w: Vec<f64> = raw_w[..n].iter().map(|x| x / total).collect();
            let deltas: Vec<TaskVector> = mags
                .iter()
                .map(|m| tv(&m.iter().zip(&signs).map(|(x, s)| if *s { *x } else { -*x }).collect::<Vec<_>>()))
                .collect();
            let s = elect_sign(&deltas, &w, SignMode::Weighted);
            let merged = disjoint_merge(&deltas, &w, &s, DisjointMode::WeightedMean);
            for p in 0..6 {
                let avg: f64 = deltas.iter().zip(&w).map(|(d, w)| w * d.values()[p]).sum();
                prop_assert!((merged.values()[p] - avg).abs() < 1e-12);
            }
        }
    }
}
