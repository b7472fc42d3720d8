use std::path::Path;

use gmerge_core::tensor_store::{decode, encode, load_checkpoint, save_checkpoint, LoadOptions};
use gmerge_core::{Tensor, TensorMap};
use proptest::prelude::*;

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/golden3.gm");

fn fixture_map() -> TensorMap {
    let mut m = TensorMap::new()
        .with("classifier.bias", Tensor::vector(vec![0.25]))
        .with("encoder.attention.weight", Tensor::new(vec![2, 2], vec![1.0, -2.0, 0.5, 3.0]).unwrap())
        .with("encoder.ffn.weight", Tensor::vector(vec![-1.5, 0.0, 7.0]));
    m.metadata_mut().insert("source".into(), "fixture".into());
    m
}

/// The fixture's bytes assembled by hand.
fn expected_bytes() -> Vec<u8> {
    let header = concat!(
        r#"{"metadata":{"source":"fixture"},"tensors":["#,
        r#"{"dtype":"f32","name":"classifier.bias","nbytes":4,"offset":0,"shape":[1]},"#,
        r#"{"dtype":"f32","name":"encoder.attention.weight","nbytes":16,"offset":4,"shape":[2,2]},"#,
        r#"{"dtype":"f32","name":"encoder.ffn.weight","nbytes":12,"offset":20,"shape":[3]}]}"#
    );
    let mut out = b"GMRG1".to_vec();
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in [0.25f32, 1.0, -2.0, 0.5, 3.0, -1.5, 0.0, 7.0] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

#[test]
fn golden_fixture_bytes() {
    let on_disk = std::fs::read(FIXTURE).unwrap();
    assert_eq!(on_disk, expected_bytes());
    assert_eq!(encode(&fixture_map()), on_disk);
    assert!(load_checkpoint(FIXTURE).unwrap().bit_eq(&fixture_map()));
}

#[test]
fn truncated_fixture_is_rejected() {
    let bytes = std::fs::read(FIXTURE).unwrap();
    let cut = &bytes[..bytes.len() - 3];
    assert!(decode(cut, Path::new("cut.gm"), LoadOptions::default()).is_err());
}

fn arb_map() -> impl Strategy<Value = TensorMap> {
    let tensor = prop::collection::vec(1usize..4, 0..3).prop_flat_map(|shape| {
        let n: usize = shape.iter().product();
        prop::collection::vec(any::<f32>().prop_filter("finite", |x| x.is_finite()), n)
            .prop_map(move |data| Tensor::new(shape.clone(), data).unwrap())
    });
    prop::collection::btree_map("[a-z][a-z0-9_.]{0,12}", tensor, 0..5).prop_map(|entries| {
        let mut m = TensorMap::new();
        for (name, t) in entries {
            m.insert(name, t).unwrap();
        }
        m
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn save_load_round_trip(map in arb_map()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.gm");
        save_checkpoint(&map, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        prop_assert!(back.bit_eq(&map));
        prop_assert_eq!(std::fs::read(&path).unwrap(), encode(&map));
    }
}
