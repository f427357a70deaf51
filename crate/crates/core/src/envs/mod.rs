//! Offline text environments and scripted completion providers.

mod cleanplace;
mod keydoor;
mod providers;

pub use cleanplace::CleanPlace;
pub use keydoor::KeyDoor;
pub use providers::{noisy_epsilon, NoisyExpert, PromptFollower, Replay, FALLBACK_ACTION};

use crate::runtime::{Environment, RuntimeError};

pub const REJECTION: &str = "No known action matches that input.";

/// A subgoal is a plain substring rule checked after every step, either
/// against the observation text or against the environment's state line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubgoalPattern {
    Observation(String),
    State(String),
}

#[derive(Debug, Clone, Default)]
pub(crate) struct SubgoalTracker {
    patterns: Vec<SubgoalPattern>,
    achieved: Vec<bool>,
}

impl SubgoalTracker {
    pub(crate) fn new(patterns: Vec<SubgoalPattern>) -> Self {
        let achieved = vec![false; patterns.len()];
        Self { patterns, achieved }
    }

    pub(crate) fn update(&mut self, observation: &str, state: &str) {
        let obs = observation.to_lowercase();
        for (pattern, done) in self.patterns.iter().zip(self.achieved.iter_mut()) {
            *done |= match pattern {
                SubgoalPattern::Observation(p) => obs.contains(p.as_str()),
                SubgoalPattern::State(p) => state.contains(p.as_str()),
            };
        }
    }

    pub(crate) fn status(&self) -> Vec<bool> {
        self.achieved.clone()
    }

    pub(crate) fn patterns(&self) -> &[SubgoalPattern] {
        &self.patterns
    }
}

pub const DOMAINS: [&str; 2] = [KeyDoor::DOMAIN, CleanPlace::DOMAIN];

pub fn make_env(domain: &str) -> Result<Box<dyn Environment>, RuntimeError> {
    match domain {
        KeyDoor::DOMAIN => Ok(Box::new(KeyDoor::new())),
        CleanPlace::DOMAIN => Ok(Box::new(CleanPlace::new())),
        other => Err(RuntimeError::InvalidConfig(format!(
            "unknown environment {other:?} (known: {})",
            DOMAINS.join(", ")
        ))),
    }
}
