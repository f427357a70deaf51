use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::prompt::{parse_next_steps, INSTRUCTION_HEADER};
use crate::runtime::{CompletionProvider, Environment, RuntimeError};
use crate::trajectory::abstract_action;

/// What [`PromptFollower`] says when no listed step is usable.
pub const FALLBACK_ACTION: &str = "check valid actions";

/// Substitution probability for a sampling temperature: 0 at T = 0, 0.4 at
/// T = 1, linear in between and clamped to [0, 0.4].
pub fn noisy_epsilon(temperature: f64) -> f64 {
    (0.4 * temperature).clamp(0.0, 0.4)
}

/// Follows the environment's expert, swapping in a uniformly random valid
/// action with probability [`noisy_epsilon`].
#[derive(Debug, Clone)]
pub struct NoisyExpert {
    rng: ChaCha8Rng,
    expert: Option<String>,
    valid: Vec<String>,
}

impl NoisyExpert {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            expert: None,
            valid: Vec::new(),
        }
    }
}

impl CompletionProvider for NoisyExpert {
    fn observe(&mut self, env: &dyn Environment) {
        self.expert = env.expert_action();
        self.valid = env.valid_actions();
    }

    fn complete(&mut self, _prompt: &str, temperature: f64) -> Result<String, RuntimeError> {
        let expert = self
            .expert
            .clone()
            .ok_or_else(|| RuntimeError::ProviderFailure("environment has no expert policy".into()))?;
        let roll: f64 = self.rng.random();
        if roll < noisy_epsilon(temperature) && !self.valid.is_empty() {
            let i = self.rng.random_range(0..self.valid.len());
            return Ok(self.valid[i].clone());
        }
        Ok(expert)
    }
}

/// Reads the "Typical next steps" lines of the prompt and emits the first
/// one the environment currently accepts, matching on abstract form.
/// Steps already taken this episode are passed over while a fresh listed
/// step is available. With nothing usable it asks for the valid actions.
#[derive(Debug, Clone, Default)]
pub struct PromptFollower {
    valid: Vec<String>,
}

impl PromptFollower {
    pub fn new() -> Self {
        Self::default()
    }
}

impl CompletionProvider for PromptFollower {
    fn observe(&mut self, env: &dyn Environment) {
        self.valid = env.valid_actions();
    }

    fn complete(&mut self, prompt: &str, _temperature: f64) -> Result<String, RuntimeError> {
        let taken = history_actions(prompt);
        let listed = parse_next_steps(prompt);
        let usable: Vec<&String> = listed
            .iter()
            .filter_map(|step| self.valid.iter().find(|v| abstract_action(v) == *step))
            .collect();
        let pick = usable
            .iter()
            .find(|v| !taken.contains(&abstract_action(v)))
            .or_else(|| usable.first())
            .map_or_else(|| FALLBACK_ACTION.to_string(), |v| (*v).clone());
        Ok(pick)
    }
}

/// Abstract forms of the actions in the prompt's history section.
fn history_actions(prompt: &str) -> Vec<String> {
    let history = prompt.rsplit_once(INSTRUCTION_HEADER).map_or(prompt, |(_, h)| h);
    history
        .lines()
        .filter_map(|l| l.strip_prefix("ACTION: "))
        .map(abstract_action)
        .collect()
}

/// Emits a fixed list of actions in order.
#[derive(Debug, Clone)]
pub struct Replay {
    actions: Vec<String>,
    next: usize,
}

impl Replay {
    pub fn new(actions: Vec<String>) -> Self {
        Self { actions, next: 0 }
    }
}

impl CompletionProvider for Replay {
    fn complete(&mut self, _prompt: &str, _temperature: f64) -> Result<String, RuntimeError> {
        let a = self
            .actions
            .get(self.next)
            .cloned()
            .ok_or_else(|| RuntimeError::ProviderFailure("replay list exhausted".into()))?;
        self.next += 1;
        Ok(a)
    }
}
