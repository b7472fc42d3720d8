//! Uniform and ε-greedy samplers over (w, τ).

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use super::IterationRecord;
use crate::param_groups::MergeType;

/// w ~ Dirichlet(1, …, 1), τ uniform over `taus`.
pub fn random_sample<R: Rng + ?Sized>(
    rng: &mut R,
    n_models: usize,
    taus: &[MergeType],
) -> (Vec<f64>, MergeType) {
    assert!(n_models >= 1, "need at least one model");
    assert!(!taus.is_empty(), "no merge types to sample");
    let weights = if n_models == 1 {
        vec![1.0]
    } else {
        // normalized unit exponentials are a flat Dirichlet draw
        let draws: Vec<f64> = (0..n_models).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        draws.iter().map(|d| d / total).collect()
    };
    let tau = taus[rng.random_range(0..taus.len())];
    (weights, tau)
}

/// Best explored (w, τ); earliest wins ties.
pub fn best_explored(history: &[IterationRecord]) -> Option<(Vec<f64>, MergeType)> {
    let mut best: Option<&IterationRecord> = None;
    for rec in history {
        if best.is_none_or(|b| rec.score > b.score) {
            best = Some(rec);
        }
    }
    best.map(|r| (r.weights.clone(), r.tau))
}

/// Exploit the best explored point with probability 1 − ε, otherwise draw
/// uniformly. Always explores before any history exists.
pub fn epsilon_greedy_sample<R: Rng + ?Sized>(
    history: &[IterationRecord],
    epsilon: f64,
    n_models: usize,
    taus: &[MergeType],
    rng: &mut R,
) -> (Vec<f64>, MergeType) {
    let explore = rng.random::<f64>() < epsilon;
    match best_explored(history) {
        Some(best) if !explore => best,
        _ => random_sample(rng, n_models, taus),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rec(iter: usize, w: Vec<f64>, tau: MergeType, score: f64) -> IterationRecord {
        IterationRecord { iter, weights: w, tau, score, best: score, ms: 0 }
    }

    #[test]
    fn single_model_gets_all_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(random_sample(&mut rng, 1, &MergeType::ALL).0, vec![1.0]);
    }

    #[test]
    fn dirichlet_means_are_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 10_000;
        let mut sums = [0.0; 3];
        for _ in 0..n {
            let (w, _) = random_sample(&mut rng, 3, &MergeType::ALL);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for (s, x) in sums.iter_mut().zip(&w) {
                *s += x;
            }
        }
        for s in sums {
            assert!((s / n as f64 - 1.0 / 3.0).abs() < 0.02, "{sums:?}");
        }
    }

    #[test]
    fn tau_frequencies_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[random_sample(&mut rng, 2, &MergeType::ALL).1.index()] += 1;
        }
        let expected = n as f64 / 4.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 3 degrees of freedom, p = 0.001 critical value
        assert!(chi2 < 16.27, "{counts:?} chi2={chi2}");
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.03);
        }
    }

    #[test]
    fn greedy_exploits_best() {
        let history = vec![
            rec(1, vec![0.2, 0.8], MergeType::Full, 0.4),
            rec(2, vec![0.6, 0.4], MergeType::Base, 0.9),
            rec(3, vec![0.5, 0.5], MergeType::Full, 0.9),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let got = epsilon_greedy_sample(&history, 0.0, 2, &MergeType::ALL, &mut rng);
            assert_eq!(got, (vec![0.6, 0.4], MergeType::Base));
        }
    }

    #[test]
    fn greedy_explores_without_history() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (w, _) = epsilon_greedy_sample(&[], 0.0, 3, &MergeType::ALL, &mut rng);
        assert_eq!(w.len(), 3);
    }

    #[test]
    fn full_exploration_matches_random_sampler() {
        let history = vec![rec(1, vec![1.0, 0.0], MergeType::Full, 1.0)];
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let g = epsilon_greedy_sample(&history, 1.0, 2, &MergeType::ALL, &mut a);
            // the greedy sampler consumes one coin flip before delegating
            let _: f64 = b.random();
            assert_eq!(g, random_sample(&mut b, 2, &MergeType::ALL));
        }
    }
}
