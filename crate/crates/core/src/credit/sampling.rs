use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::graph::{DomainGraph, NodeId};

use super::{path_score, CreditError, PathPool};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingStrategy {
    /// Independent uniform draws with replacement.
    Uniform,
    /// Softmax over path scores, drawn without replacement.
    Weighted,
}

/// Draws a batch of paths from the pool.
pub fn sample_batch<R: Rng + ?Sized>(
    pool: &PathPool,
    graph: &DomainGraph,
    strategy: SamplingStrategy,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<Vec<NodeId>>, CreditError> {
    if pool.is_empty() {
        return Err(CreditError::EmptyPool);
    }
    match strategy {
        SamplingStrategy::Uniform => Ok((0..batch_size)
            .map(|_| pool.paths[rng.random_range(0..pool.len())].clone())
            .collect()),
        SamplingStrategy::Weighted => {
            let scores: Vec<f64> = pool.paths.iter().map(|p| path_score(p, graph)).collect();
            Ok(weighted_draw(&scores, batch_size, rng)
                .into_iter()
                .map(|i| pool.paths[i].clone())
                .collect())
        }
    }
}

/// Draws `count` distinct indices without replacement with probabilities
/// proportional to `exp(score - max score)`. Asking for at least as many
/// indices as there are scores yields a weighted permutation of all of them.
pub fn weighted_draw<R: Rng + ?Sized>(scores: &[f64], count: usize, rng: &mut R) -> Vec<usize> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut remaining: Vec<(usize, f64)> = scores
        .iter()
        .enumerate()
        .map(|(i, s)| (i, (s - max).exp()))
        .collect();
    let mut out = Vec::with_capacity(count.min(scores.len()));
    while out.len() < count && !remaining.is_empty() {
        let total: f64 = remaining.iter().map(|(_, w)| w).sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = remaining.len() - 1;
        for (slot, (_, w)) in remaining.iter().enumerate() {
            if target < *w {
                pick = slot;
                break;
            }
            target -= w;
        }
        out.push(remaining.remove(pick).0);
    }
    out
}

/// Reward for traversing `src -> dst`: a uniformly chosen recorded delta
/// plus `N(0, sigma^2)`, or pure noise when nothing was recorded.
pub fn sample_reward<R: Rng + ?Sized>(
    graph: &DomainGraph,
    src: NodeId,
    dst: NodeId,
    sigma: f64,
    rng: &mut R,
) -> Result<f64, CreditError> {
    let edge = graph
        .edge(src, dst)
        .ok_or(CreditError::NotAnEdge { src, dst })?;
    let base = if edge.deltas.is_empty() {
        0.0
    } else {
        edge.deltas[rng.random_range(0..edge.deltas.len())]
    };
    let noise: f64 = rng.sample(StandardNormal);
    Ok(base + sigma * noise)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::credit::paths::tests::graph_from;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn singleton_pool() {
        let g = graph_from(0, &[(0, 1, &[])]);
        let pool = PathPool { paths: vec![vec![0, 1]] };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = sample_batch(&pool, &g, SamplingStrategy::Uniform, 4, &mut rng).unwrap();
        assert_eq!(u, vec![vec![0, 1]; 4]);
        let w = sample_batch(&pool, &g, SamplingStrategy::Weighted, 4, &mut rng).unwrap();
        assert_eq!(w, vec![vec![0, 1]]);
    }

    #[test]
    fn empty_pool() {
        let g = graph_from(0, &[(0, 1, &[])]);
        let pool = PathPool { paths: vec![] };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            sample_batch(&pool, &g, SamplingStrategy::Uniform, 1, &mut rng),
            Err(CreditError::EmptyPool)
        );
    }

    #[test]
    fn weighted_without_replacement() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let picks = weighted_draw(&[0.0, 1.0, 2.0, 3.0], 3, &mut rng);
        assert_eq!(picks.len(), 3);
        let mut sorted = picks.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 3);
        let all = weighted_draw(&[0.0, 1.0], 5, &mut rng);
        assert_eq!(all.len(), 2);
    }

    #[test]
    fn huge_scores_do_not_overflow() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut hits = 0;
        for _ in 0..2000 {
            if weighted_draw(&[1000.0, 1001.0], 1, &mut rng)[0] == 1 {
                hits += 1;
            }
        }
        let freq = f64::from(hits) / 2000.0;
        assert!((freq - 0.731).abs() < 0.04, "freq {freq}");
    }

    #[test]
    fn reward_examples() {
        let g = graph_from(1, &[(0, 1, &[0.5]), (1, 2, &[]), (0, 2, &[0.2, 0.4])]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_reward(&g, 0, 1, 0.0, &mut rng).unwrap(), 0.5);
        assert_eq!(sample_reward(&g, 1, 2, 0.0, &mut rng).unwrap(), 0.0);
        let mut seen = [false, false];
        for _ in 0..200 {
            let r = sample_reward(&g, 0, 2, 0.0, &mut rng).unwrap();
            assert!(r == 0.2 || r == 0.4);
            seen[usize::from(r == 0.4)] = true;
        }
        assert_eq!(seen, [true, true]);
        assert_eq!(
            sample_reward(&g, 2, 0, 0.0, &mut rng),
            Err(CreditError::NotAnEdge { src: 2, dst: 0 })
        );
    }

    #[test]
    fn noise_has_requested_spread() {
        let g = graph_from(0, &[(0, 1, &[])]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 20000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_reward(&g, 0, 1, 0.5, &mut rng).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02);
        assert!((var.sqrt() - 0.5).abs() < 0.02);
    }
}
