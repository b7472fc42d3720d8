//! Fixtures shared by the criterion benches.

use gmerge_core::{Tensor, TensorMap};
use gmerge_core::rng::stream_rng;
use rand::Rng;

/// A transformer-shaped checkpoint with `layers` blocks of width `width`.
pub fn synthetic_checkpoint(layers: usize, width: usize, seed: u64) -> TensorMap {
    let mut rng = stream_rng(seed, 0);
    let mut map = TensorMap::default();
    let mut add = |name: String, shape: Vec<usize>| {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random::<f32>() - 0.5).collect();
        map.insert(name, Tensor::new(shape, data).expect("valid shape")).expect("unique name");
    };
    add("embeddings.word_embeddings.weight".into(), vec![256, width]);
    for l in 0..layers {
        add(format!("encoder.layer.{l}.attention.query.weight"), vec![width, width]);
        add(format!("encoder.layer.{l}.attention.value.weight"), vec![width, width]);
        add(format!("encoder.layer.{l}.intermediate.dense.weight"), vec![width, 4 * width]);
        add(format!("encoder.layer.{l}.output.dense.weight"), vec![4 * width, width]);
    }
    add("classifier.weight".into(), vec![width, 2]);
    map
}
