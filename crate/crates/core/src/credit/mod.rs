//! TD(λ) credit assignment over a domain graph.
//!
//! Each iteration samples a batch of start-to-end paths and walks every
//! transition `a_t -> a_{t+1}` with the reward drawn from that edge's delta
//! multiset (plus Gaussian noise). Eligibility traces are shared by all
//! paths of the run: they are never reset, only decayed by `γλ` after each
//! update. The learned `Q(a)` values are finally clipped at zero and
//! normalized into a credit distribution.
//!
//! Randomness comes from one `ChaCha8Rng` seeded with `TdConfig::seed`, and
//! Gaussian noise uses `rand_distr::StandardNormal` (Ziggurat), so a given
//! build reproduces every run bit for bit.

mod paths;
mod sampling;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{DomainGraph, NodeId};

pub use paths::{enumerate_paths, path_score, PathPool};
pub use sampling::{sample_batch, sample_reward, weighted_draw, SamplingStrategy};

#[derive(Debug, Error, PartialEq)]
pub enum CreditError {
    #[error("domain '{domain}': no start-to-end path within the length cap")]
    NoPath { domain: String },
    #[error("path pool is empty")]
    EmptyPool,
    #[error("{src}->{dst} is not an edge of the graph")]
    NotAnEdge { src: NodeId, dst: NodeId },
    #[error("invalid TD configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TdConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub max_paths: usize,
    pub max_path_len: usize,
    pub q_init_low: f64,
    pub q_init_high: f64,
    pub early_stop_eps: f64,
    pub early_stop_patience: usize,
    pub sampling_strategy: SamplingStrategy,
    pub seed: u64,
}

impl Default for TdConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            lambda: 0.9,
            alpha: 0.05,
            sigma: 0.001,
            iterations: 500,
            batch_size: 32,
            max_paths: 2000,
            max_path_len: 20,
            q_init_low: 0.01,
            q_init_high: 0.05,
            early_stop_eps: 1e-3,
            early_stop_patience: 5,
            sampling_strategy: SamplingStrategy::Uniform,
            seed: 0,
        }
    }
}

impl TdConfig {
    pub fn validate(&self) -> Result<(), CreditError> {
        let fail = |m: &str| Err(CreditError::InvalidConfig(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return fail("lambda must lie in [0, 1]");
        }
        if self.alpha.is_nan() || self.alpha <= 0.0 {
            return fail("alpha must be positive");
        }
        if self.sigma.is_nan() || self.sigma < 0.0 {
            return fail("sigma must be non-negative");
        }
        if self.iterations == 0
            || self.batch_size == 0
            || self.max_paths == 0
            || self.max_path_len == 0
            || self.early_stop_patience == 0
        {
            return fail("counts must be positive");
        }
        if self.q_init_low.is_nan() || self.q_init_high.is_nan() || self.q_init_low > self.q_init_high {
            return fail("q_init_low must not exceed q_init_high");
        }
        if self.early_stop_eps.is_nan() || self.early_stop_eps < 0.0 {
            return fail("early_stop_eps must be non-negative");
        }
        Ok(())
    }
}

/// Learned action values and their normalized credit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreditMap {
    pub q: BTreeMap<NodeId, f64>,
    pub credit: BTreeMap<NodeId, f64>,
}

impl CreditMap {
    pub fn credit_of(&self, id: NodeId) -> f64 {
        self.credit.get(&id).copied().unwrap_or(0.0)
    }
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationStats {
    /// Mean over nodes of |Q after - Q before|.
    pub mean_abs_dq: f64,
    /// Largest |Q| after the iteration.
    pub max_abs_q: f64,
    /// Largest eligibility trace seen right after any update in the iteration.
    pub max_trace: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TdRun {
    pub credits: CreditMap,
    pub initial_q: BTreeMap<NodeId, f64>,
    pub log: Vec<IterationStats>,
    pub stopped_early: bool,
}

/// Runs TD(λ) and returns only the credit map.
pub fn run_td(graph: &DomainGraph, config: &TdConfig) -> Result<CreditMap, CreditError> {
    run_td_logged(graph, config).map(|r| r.credits)
}

/// Runs TD(λ) and keeps the iteration log.
pub fn run_td_logged(graph: &DomainGraph, config: &TdConfig) -> Result<TdRun, CreditError> {
    config.validate()?;
    let pool = enumerate_paths(graph, config.max_paths, config.max_path_len)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let ids: Vec<NodeId> = graph.nodes.iter().map(|n| n.id).collect();
    let index: BTreeMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();

    let mut q: Vec<f64> = ids
        .iter()
        .map(|_| {
            if config.q_init_low == config.q_init_high {
                config.q_init_low
            } else {
                rng.random_range(config.q_init_low..=config.q_init_high)
            }
        })
        .collect();
    let initial_q = ids.iter().copied().zip(q.iter().copied()).collect();
    let mut trace = vec![0.0f64; ids.len()];
    let decay = config.gamma * config.lambda;

    let mut log = Vec::with_capacity(config.iterations);
    let mut quiet = 0usize;
    let mut stopped_early = false;

    for _ in 0..config.iterations {
        let before = q.clone();
        let mut max_trace = 0.0f64;
        let batch = sample_batch(
            &pool,
            graph,
            config.sampling_strategy,
            config.batch_size,
            &mut rng,
        )?;
        for path in &batch {
            for w in path.windows(2) {
                let (cur, next) = (index[&w[0]], index[&w[1]]);
                let reward = sample_reward(graph, w[0], w[1], config.sigma, &mut rng)?;
                let td_error = reward + config.gamma * q[next] - q[cur];
                trace[cur] += 1.0;
                for (qa, ea) in q.iter_mut().zip(trace.iter_mut()) {
                    if *ea > 0.0 {
                        *qa += config.alpha * td_error * *ea;
                        max_trace = max_trace.max(*ea);
                        *ea *= decay;
                    }
                }
            }
        }
        let mean_abs_dq =
            q.iter().zip(&before).map(|(a, b)| (a - b).abs()).sum::<f64>() / q.len() as f64;
        let max_abs_q = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        log.push(IterationStats {
            mean_abs_dq,
            max_abs_q,
            max_trace,
        });
        if mean_abs_dq < config.early_stop_eps {
            quiet += 1;
            if quiet >= config.early_stop_patience {
                stopped_early = true;
                break;
            }
        } else {
            quiet = 0;
        }
    }

    let q: BTreeMap<NodeId, f64> = ids.iter().copied().zip(q).collect();
    let credit = normalize_credits(&q);
    Ok(TdRun {
        credits: CreditMap { q, credit },
        initial_q,
        log,
        stopped_early,
    })
}

/// Clips values at zero and rescales them to sum to one. When no value is
/// positive the result is uniform.
pub fn normalize_credits<K: Ord + Clone>(q: &BTreeMap<K, f64>) -> BTreeMap<K, f64> {
    let total: f64 = q.values().map(|v| v.max(0.0)).sum();
    if total > 0.0 {
        q.iter()
            .map(|(k, v)| (k.clone(), v.max(0.0) / total))
            .collect()
    } else {
        let u = 1.0 / q.len() as f64;
        q.keys().map(|k| (k.clone(), u)).collect()
    }
}

/// On-disk credit file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreditFile {
    pub domain: String,
    pub q: BTreeMap<NodeId, f64>,
    pub credit: BTreeMap<NodeId, f64>,
    pub config: TdConfig,
    pub seed: u64,
}

impl CreditFile {
    pub fn new(domain: &str, credits: CreditMap, config: &TdConfig) -> Self {
        Self {
            domain: domain.to_string(),
            q: credits.q,
            credit: credits.credit,
            config: config.clone(),
            seed: config.seed,
        }
    }

    pub fn credit_map(&self) -> CreditMap {
        CreditMap {
            q: self.q.clone(),
            credit: self.credit.clone(),
        }
    }
}
