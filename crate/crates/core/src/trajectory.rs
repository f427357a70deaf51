//! Trajectory records: parsing, filtering, and action abstraction.
//!
//! A trajectory is one sampled episode stored as `(observation, action,
//! progress, valid)` steps. The observation is what the agent saw when it
//! chose the action and `progress` is the cumulative subgoal fraction reached
//! *after* the action executed.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("no trajectory records in input")]
    EmptyInput,
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub observation: String,
    pub action: String,
    pub progress: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trajectory {
    pub task_id: String,
    pub domain: String,
    pub goal: String,
    pub steps: Vec<Step>,
}

impl Trajectory {
    /// Progress after the final step, or 0 for an empty trajectory.
    pub fn final_progress(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.progress)
    }

    fn validate(&self) -> Result<(), String> {
        if self.steps.is_empty() {
            return Err("trajectory has no steps".into());
        }
        for (i, step) in self.steps.iter().enumerate() {
            if !(0.0..=1.0).contains(&step.progress) {
                return Err(format!(
                    "step {i}: progress {} outside [0, 1]",
                    step.progress
                ));
            }
            if step.observation.trim().is_empty() {
                return Err(format!("step {i}: empty observation"));
            }
            if step.action.trim().is_empty() {
                return Err(format!("step {i}: empty action"));
            }
        }
        Ok(())
    }
}

/// Trajectories in input order plus an index grouping them by domain.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectorySet {
    trajectories: Vec<Trajectory>,
    by_domain: BTreeMap<String, Vec<usize>>,
}

impl TrajectorySet {
    pub fn new(trajectories: Vec<Trajectory>) -> Self {
        let mut by_domain: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, t) in trajectories.iter().enumerate() {
            by_domain.entry(t.domain.clone()).or_default().push(i);
        }
        Self {
            trajectories,
            by_domain,
        }
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn into_trajectories(self) -> Vec<Trajectory> {
        self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn domains(&self) -> impl Iterator<Item = &str> {
        self.by_domain.keys().map(String::as_str)
    }

    pub fn domain(&self, domain: &str) -> Vec<&Trajectory> {
        self.by_domain
            .get(domain)
            .map(|ix| ix.iter().map(|&i| &self.trajectories[i]).collect())
            .unwrap_or_default()
    }

    /// Keep only trajectories whose task id satisfies `keep`.
    pub fn retain_tasks(&self, mut keep: impl FnMut(&str) -> bool) -> TrajectorySet {
        TrajectorySet::new(
            self.trajectories
                .iter()
                .filter(|t| keep(&t.task_id))
                .cloned()
                .collect(),
        )
    }

    /// Writes one JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for t in &self.trajectories {
            serde_json::to_writer(&mut out, t)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

/// Parses line-delimited trajectory records. Blank lines are ignored; any
/// malformed line aborts the parse.
pub fn parse_trajectories<R: BufRead>(source: R) -> Result<TrajectorySet, TrajectoryError> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| TrajectoryError::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let traj: Trajectory =
            serde_json::from_str(&line).map_err(|e| TrajectoryError::MalformedRecord {
                line: line_no,
                reason: e.to_string(),
            })?;
        traj.validate()
            .map_err(|reason| TrajectoryError::MalformedRecord {
                line: line_no,
                reason,
            })?;
        out.push(traj);
    }
    if out.is_empty() {
        return Err(TrajectoryError::EmptyInput);
    }
    Ok(TrajectorySet::new(out))
}

/// Strips object identifiers from a raw action: standalone numeric tokens
/// are dropped and trailing digit runs are cut from words, so
/// `"open cabinet 5"` becomes `"open cabinet"` and `"drawer3"` becomes
/// `"drawer"`. Returns the raw input unchanged if nothing would remain.
pub fn abstract_action(raw: &str) -> String {
    let words: Vec<&str> = raw
        .split_whitespace()
        .filter_map(|tok| {
            let stripped = tok.trim_end_matches(|c: char| c.is_ascii_digit());
            (!stripped.is_empty()).then_some(stripped)
        })
        .collect();
    if words.is_empty() {
        raw.to_string()
    } else {
        words.join(" ")
    }
}

/// Drops invalid steps, then drops trajectories that end with zero progress
/// or have no steps left.
pub fn filter_trajectories(set: &TrajectorySet) -> TrajectorySet {
    let kept = set
        .trajectories()
        .iter()
        .filter_map(|t| {
            let steps: Vec<Step> = t.steps.iter().filter(|s| s.valid).cloned().collect();
            let last = steps.last()?.progress;
            (last > 0.0).then(|| Trajectory {
                steps,
                ..t.clone()
            })
        })
        .collect();
    TrajectorySet::new(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn step(action: &str, progress: f64, valid: bool) -> Step {
        Step {
            observation: "obs".into(),
            action: action.into(),
            progress,
            valid,
        }
    }

    fn traj(domain: &str, steps: Vec<Step>) -> Trajectory {
        Trajectory {
            task_id: "t".into(),
            domain: domain.into(),
            goal: "g".into(),
            steps,
        }
    }

    #[test]
    fn parses_two_step_line() {
        let line = r#"{"task_id":"t1","domain":"d","goal":"g","steps":[{"observation":"o","action":"a","progress":0.0,"valid":true},{"observation":"o2","action":"b","progress":1.0,"valid":true}]}"#;
        let set = parse_trajectories(line.as_bytes()).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.trajectories()[0].steps.len(), 2);
    }

    #[test]
    fn out_of_range_progress_names_the_line() {
        let input = format!(
            "{}\n{}\n",
            r#"{"task_id":"t1","domain":"d","goal":"g","steps":[{"observation":"o","action":"a","progress":0.5,"valid":true}]}"#,
            r#"{"task_id":"t2","domain":"d","goal":"g","steps":[{"observation":"o","action":"a","progress":1.2,"valid":true}]}"#
        );
        match parse_trajectories(input.as_bytes()) {
            Err(TrajectoryError::MalformedRecord { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert_eq!(
            parse_trajectories("\n\n".as_bytes()),
            Err(TrajectoryError::EmptyInput)
        );
    }

    #[test]
    fn rejects_bad_json_and_empty_steps() {
        assert!(matches!(
            parse_trajectories("{not json".as_bytes()),
            Err(TrajectoryError::MalformedRecord { line: 1, .. })
        ));
        let no_steps = r#"{"task_id":"t","domain":"d","goal":"g","steps":[]}"#;
        assert!(matches!(
            parse_trajectories(no_steps.as_bytes()),
            Err(TrajectoryError::MalformedRecord { line: 1, .. })
        ));
        let empty_action = r#"{"task_id":"t","domain":"d","goal":"g","steps":[{"observation":"o","action":" ","progress":0.5,"valid":true}]}"#;
        assert!(parse_trajectories(empty_action.as_bytes()).is_err());
    }

    #[test]
    fn groups_by_domain() {
        let set = TrajectorySet::new(vec![
            traj("a", vec![step("x", 1.0, true)]),
            traj("b", vec![step("x", 1.0, true)]),
            traj("a", vec![step("x", 1.0, true)]),
        ]);
        assert_eq!(set.domains().collect::<Vec<_>>(), vec!["a", "b"]);
        assert_eq!(set.domain("a").len(), 2);
    }

    #[test]
    fn abstraction_examples() {
        assert_eq!(abstract_action("open cabinet 5"), "open cabinet");
        assert_eq!(abstract_action("look around"), "look around");
        assert_eq!(
            abstract_action("take peppershaker 1 from countertop 2"),
            "take peppershaker from countertop"
        );
        assert_eq!(abstract_action("open drawer3"), "open drawer");
        assert_eq!(abstract_action("  go   to\tdesk 1 "), "go to desk");
        assert_eq!(abstract_action("42"), "42");
    }

    #[test]
    fn filter_examples() {
        let zero = traj("d", vec![step("a", 0.0, true)]);
        let one_invalid = traj(
            "d",
            vec![
                step("a", 0.0, true),
                step("b", 0.0, false),
                step("c", 0.5, true),
                step("d", 0.5, true),
                step("e", 1.0, true),
            ],
        );
        let clean = traj("d", vec![step("a", 0.5, true), step("b", 1.0, true)]);
        let all_invalid = traj("d", vec![step("a", 0.5, false)]);
        let set = TrajectorySet::new(vec![zero, one_invalid, clean.clone(), all_invalid]);
        let out = filter_trajectories(&set);
        assert_eq!(out.len(), 2);
        assert_eq!(out.trajectories()[0].steps.len(), 4);
        assert_eq!(
            out.trajectories()[0]
                .steps
                .iter()
                .map(|s| s.action.as_str())
                .collect::<Vec<_>>(),
            vec!["a", "c", "d", "e"]
        );
        assert_eq!(out.trajectories()[1], clean);
    }

    fn arb_step() -> impl Strategy<Value = Step> {
        (
            "[a-z]{1,6}( [a-z0-9]{1,4}){0,3}",
            "[a-z ]{1,12}[a-z]",
            0u8..=4,
            any::<bool>(),
        )
            .prop_map(|(action, observation, p, valid)| Step {
                observation,
                action,
                progress: f64::from(p) / 4.0,
                valid,
            })
    }

    fn arb_set() -> impl Strategy<Value = TrajectorySet> {
        proptest::collection::vec(
            (
                "[a-c]",
                "[a-z]{1,5}",
                proptest::collection::vec(arb_step(), 1..6),
            )
                .prop_map(|(domain, task_id, steps)| Trajectory {
                    task_id,
                    domain,
                    goal: "reach the goal".into(),
                    steps,
                }),
            1..6,
        )
        .prop_map(TrajectorySet::new)
    }

    proptest! {
        #[test]
        fn abstraction_is_idempotent(raw in "[a-z0-9 ]{0,8}[a-z0-9]") {
            let once = abstract_action(&raw);
            prop_assert_eq!(abstract_action(&once), once.clone());
        }

        #[test]
        fn filter_is_idempotent_and_clean(set in arb_set()) {
            let once = filter_trajectories(&set);
            prop_assert_eq!(filter_trajectories(&once), once.clone());
            for t in once.trajectories() {
                prop_assert!(t.final_progress() > 0.0);
                prop_assert!(t.steps.iter().all(|s| s.valid));
            }
        }

        #[test]
        fn jsonl_round_trip(set in arb_set()) {
            let text = set.to_jsonl();
            let back = parse_trajectories(text.as_bytes()).unwrap();
            prop_assert_eq!(back.to_jsonl(), text);
            prop_assert_eq!(back, set);
        }
    }
}
