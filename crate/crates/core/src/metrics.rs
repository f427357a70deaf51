//! Episode metrics (grounding, progress, success, AUPC), cross-validation
//! folds and fold reports.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::runtime::EpisodeRecord;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("episode has no steps")]
    EmptyEpisode,
    #[error("task has no subgoals")]
    NoSubgoals,
    #[error("progress curve steps must be strictly increasing")]
    NonMonotoneSteps,
    #[error("need at least {k} tasks (and k >= 2) for {k} folds, got {n}")]
    TooFewTasks { n: usize, k: usize },
}

/// Fraction of steps the environment accepted.
pub fn grounding_rate(record: &EpisodeRecord) -> Result<f64, MetricsError> {
    if record.steps.is_empty() {
        return Err(MetricsError::EmptyEpisode);
    }
    let valid = record.steps.iter().filter(|s| s.valid).count();
    Ok(valid as f64 / record.steps.len() as f64)
}

/// Fraction of subgoals achieved at any point of the episode.
pub fn progress_rate(record: &EpisodeRecord) -> Result<f64, MetricsError> {
    if record.subgoals_achieved.is_empty() {
        return Err(MetricsError::NoSubgoals);
    }
    let done = record.subgoals_achieved.iter().filter(|&&a| a).count();
    Ok(done as f64 / record.subgoals_achieved.len() as f64)
}

/// 1 when every subgoal was achieved, else 0.
pub fn success_rate(record: &EpisodeRecord) -> Result<u8, MetricsError> {
    if record.subgoals_achieved.is_empty() {
        return Err(MetricsError::NoSubgoals);
    }
    Ok(u8::from(record.subgoals_achieved.iter().all(|&a| a)))
}

/// Trapezoidal area under a progress curve, normalized by its step span.
/// A curve spanning zero steps scores 0.
pub fn aupc(curve: &[(u32, f64)]) -> Result<f64, MetricsError> {
    if curve.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(MetricsError::NonMonotoneSteps);
    }
    let (Some(first), Some(last)) = (curve.first(), curve.last()) else {
        return Ok(0.0);
    };
    if last.0 <= first.0 {
        return Ok(0.0);
    }
    let raw: f64 = curve
        .windows(2)
        .map(|w| (w[0].1 + w[1].1) / 2.0 * f64::from(w[1].0 - w[0].0))
        .sum();
    Ok(raw / f64::from(last.0 - first.0))
}

/// Shuffles task ids with a seeded Fisher-Yates pass (ChaCha8, index for
/// position `i` drawn uniformly from `0..=i`, walking down from the end) and
/// cuts the result into `k` contiguous folds; the first `n % k` folds take
/// one extra task.
pub fn make_folds<T: Clone>(task_ids: &[T], k: usize, seed: u64) -> Result<Vec<Vec<T>>, MetricsError> {
    let n = task_ids.len();
    if k < 2 || n < k {
        return Err(MetricsError::TooFewTasks { n, k });
    }
    let mut ids = task_ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        ids.swap(i, j);
    }
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut rest = ids.as_slice();
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let (head, tail) = rest.split_at(size);
        folds.push(head.to_vec());
        rest = tail;
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub task_id: String,
    pub gr: f64,
    pub pr: f64,
    pub sr: u8,
    pub aupc: f64,
}

impl EpisodeMetrics {
    pub fn from_record(record: &EpisodeRecord) -> Result<Self, MetricsError> {
        let curve: Vec<(u32, f64)> = record.progress_curve.iter().map(|p| (p.step, p.progress)).collect();
        Ok(Self {
            task_id: record.task_id.clone(),
            gr: grounding_rate(record)?,
            pr: progress_rate(record)?,
            sr: success_rate(record)?,
            aupc: aupc(&curve)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub gr: f64,
    pub pr: f64,
    /// Mean of the per-episode success indicators.
    pub sr: f64,
    pub aupc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub fold: usize,
    pub episodes: Vec<EpisodeMetrics>,
    pub aggregate: Aggregate,
}

impl Report {
    pub fn new(fold: usize, episodes: Vec<EpisodeMetrics>) -> Self {
        let aggregate = aggregate(&episodes);
        Self {
            fold,
            episodes,
            aggregate,
        }
    }

    pub fn from_records(fold: usize, records: &[EpisodeRecord]) -> Result<Self, MetricsError> {
        let rows = records
            .iter()
            .map(EpisodeMetrics::from_record)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(fold, rows))
    }
}

pub fn aggregate(rows: &[EpisodeMetrics]) -> Aggregate {
    let n = rows.len().max(1) as f64;
    Aggregate {
        gr: rows.iter().map(|r| r.gr).sum::<f64>() / n,
        pr: rows.iter().map(|r| r.pr).sum::<f64>() / n,
        sr: rows.iter().map(|r| f64::from(r.sr)).sum::<f64>() / n,
        aupc: rows.iter().map(|r| r.aupc).sum::<f64>() / n,
    }
}

/// Aligned plain-text table of fold aggregates plus their mean. GR, PR and
/// SR print as percentages, AUPC as a fraction.
pub fn render_table(reports: &[Report]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<8} {:>8} {:>8} {:>8} {:>8} {:>8}", "fold", "episodes", "GR", "PR", "SR", "AUPC");
    let row = |out: &mut String, name: &str, n: usize, a: &Aggregate| {
        let _ = writeln!(
            out,
            "{:<8} {:>8} {:>8.1} {:>8.1} {:>8.1} {:>8.3}",
            name,
            n,
            a.gr * 100.0,
            a.pr * 100.0,
            a.sr * 100.0,
            a.aupc
        );
    };
    for r in reports {
        row(&mut out, &r.fold.to_string(), r.episodes.len(), &r.aggregate);
    }
    let all: Vec<EpisodeMetrics> = reports.iter().flat_map(|r| r.episodes.iter().cloned()).collect();
    row(&mut out, "all", all.len(), &aggregate(&all));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::{ProgressPoint, StepRecord};
    use proptest::prelude::*;

    fn record(valid: &[bool], achieved: &[bool]) -> EpisodeRecord {
        EpisodeRecord {
            task_id: "t".into(),
            steps: valid
                .iter()
                .map(|&v| StepRecord {
                    prompt_digest: String::new(),
                    action: "a".into(),
                    observation: "o".into(),
                    valid: v,
                    progress_after: 0.0,
                })
                .collect(),
            progress_curve: vec![ProgressPoint { step: 0, progress: 0.0 }],
            subgoals_achieved: achieved.to_vec(),
            truncated: false,
        }
    }

    #[test]
    fn grounding_examples() {
        let mut v = vec![true; 7];
        v.extend([false; 3]);
        assert!((grounding_rate(&record(&v, &[true])).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(grounding_rate(&record(&[true; 4], &[true])).unwrap(), 1.0);
        assert_eq!(grounding_rate(&record(&[false; 4], &[true])).unwrap(), 0.0);
        assert_eq!(grounding_rate(&record(&[], &[true])), Err(MetricsError::EmptyEpisode));
    }

    #[test]
    fn progress_and_success_examples() {
        let r = record(&[true], &[true, true, false]);
        assert!((progress_rate(&r).unwrap() - 2.0 / 3.0).abs() < 1e-9);
        assert_eq!(success_rate(&r).unwrap(), 0);
        let r = record(&[true], &[false; 4]);
        assert_eq!(progress_rate(&r).unwrap(), 0.0);
        let r = record(&[true], &[true; 3]);
        assert_eq!(progress_rate(&r).unwrap(), 1.0);
        assert_eq!(success_rate(&r).unwrap(), 1);
        assert_eq!(progress_rate(&record(&[true], &[])), Err(MetricsError::NoSubgoals));
        assert_eq!(success_rate(&record(&[true], &[])), Err(MetricsError::NoSubgoals));
    }

    #[test]
    fn aupc_examples() {
        assert_eq!(aupc(&[(0, 0.0), (1, 0.0)]).unwrap(), 0.0);
        assert_eq!(aupc(&[(0, 0.0), (1, 0.5), (2, 1.0)]).unwrap(), 0.5);
        assert_eq!(aupc(&[(0, 0.7)]).unwrap(), 0.0);
        assert_eq!(aupc(&[]).unwrap(), 0.0);
        assert_eq!(aupc(&[(0, 0.0), (0, 1.0)]), Err(MetricsError::NonMonotoneSteps));
        assert_eq!(aupc(&[(2, 0.0), (1, 1.0)]), Err(MetricsError::NonMonotoneSteps));
    }

    #[test]
    fn fold_sizes() {
        let ids: Vec<u32> = (0..8).collect();
        let folds = make_folds(&ids, 4, 42).unwrap();
        assert!(folds.iter().all(|f| f.len() == 2));
        let ids: Vec<u32> = (0..9).collect();
        let sizes: Vec<usize> = make_folds(&ids, 4, 42).unwrap().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![3, 2, 2, 2]);
        assert_eq!(make_folds(&ids, 4, 42), make_folds(&ids, 4, 42));
        assert_eq!(make_folds(&ids[..3], 4, 42), Err(MetricsError::TooFewTasks { n: 3, k: 4 }));
        assert_eq!(make_folds(&ids, 1, 42), Err(MetricsError::TooFewTasks { n: 9, k: 1 }));
    }

    #[test]
    fn table_has_all_row() {
        let r = Report::new(0, vec![EpisodeMetrics { task_id: "a".into(), gr: 1.0, pr: 0.5, sr: 0, aupc: 0.25 }]);
        let t = render_table(&[r]);
        assert!(t.contains("all"));
        assert!(t.contains("50.0"));
        assert!(t.contains("0.250"));
    }

    proptest! {
        #[test]
        fn folds_partition(n in 2usize..40, k in 2usize..6, seed in any::<u64>()) {
            prop_assume!(n >= k);
            let ids: Vec<usize> = (0..n).collect();
            let folds = make_folds(&ids, k, seed).unwrap();
            let mut all: Vec<usize> = folds.concat();
            all.sort_unstable();
            prop_assert_eq!(all, ids);
            let max = folds.iter().map(Vec::len).max().unwrap();
            let min = folds.iter().map(Vec::len).min().unwrap();
            prop_assert!(max - min <= 1);
        }

        #[test]
        fn aupc_bounded_by_max(points in proptest::collection::vec((1u32..4, 0.0f64..=1.0), 1..20)) {
            let mut step = 0;
            let curve: Vec<(u32, f64)> = points.iter().map(|&(d, p)| { step += d; (step, p) }).collect();
            let a = aupc(&curve).unwrap();
            let max = curve.iter().map(|c| c.1).fold(0.0, f64::max);
            prop_assert!((0.0..=max + 1e-12).contains(&a));
        }

        #[test]
        fn grounding_is_order_free(mut valid in proptest::collection::vec(any::<bool>(), 1..30)) {
            let a = grounding_rate(&record(&valid, &[true])).unwrap();
            valid.reverse();
            prop_assert_eq!(grounding_rate(&record(&valid, &[true])).unwrap(), a);
        }

        #[test]
        fn success_iff_full_progress(achieved in proptest::collection::vec(any::<bool>(), 1..8)) {
            let r = record(&[true], &achieved);
            prop_assert_eq!(success_rate(&r).unwrap() == 1, progress_rate(&r).unwrap() == 1.0);
        }
    }
}
