//! Greedy near-duplicate removal.

use std::collections::BTreeSet;

use super::adapter::embed_via_adapter;
use super::{Sample, SdgError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Similarity {
    /// Jaccard index over lowercased whitespace tokens.
    JaccardTokens,
    /// Cosine similarity of embeddings returned by an adapter command.
    External(String),
}

fn tokens(s: &str) -> BTreeSet<String> {
    s.split_whitespace().map(str::to_lowercase).collect()
}

pub fn jaccard_tokens(a: &str, b: &str) -> f64 {
    let (ta, tb) = (tokens(a), tokens(b));
    let union = ta.union(&tb).count();
    if union == 0 {
        return 1.0;
    }
    ta.intersection(&tb).count() as f64 / union as f64
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Keep a sample only if its similarity to every kept sample is below
/// `threshold`. Scans in input order.
pub fn dedup(samples: &[Sample], similarity: &Similarity, threshold: f64) -> Result<Vec<Sample>, SdgError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(SdgError::InvalidThreshold(threshold));
    }
    let kept_idx = match similarity {
        Similarity::JaccardTokens => {
            let toks: Vec<BTreeSet<String>> = samples.iter().map(|s| tokens(&s.prompt)).collect();
            greedy(samples.len(), threshold, |i, j| {
                let union = toks[i].union(&toks[j]).count();
                if union == 0 {
                    1.0
                } else {
                    toks[i].intersection(&toks[j]).count() as f64 / union as f64
                }
            })
        }
        Similarity::External(command) => {
            let texts: Vec<&str> = samples.iter().map(|s| s.prompt.as_str()).collect();
            let embeddings = embed_via_adapter(command, &texts)?;
            greedy(samples.len(), threshold, |i, j| cosine(&embeddings[i], &embeddings[j]))
        }
    };
    Ok(kept_idx.into_iter().map(|i| samples[i].clone()).collect())
}

fn greedy(n: usize, threshold: f64, sim: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for i in 0..n {
        if kept.iter().all(|&k| sim(i, k) < threshold) {
            kept.push(i);
        }
    }
    kept
}
