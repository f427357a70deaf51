//! Episode loop: retrieve skills for the last action, render the prompt, ask
//! the provider for the next action, step the environment.

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::graph::START_LABEL;
use crate::http::{HttpClient, HttpError};
use crate::prompt::{render_prompt, HistoryPair, PromptContext, DEFAULT_WINDOW};
use crate::retrieval::{fnv1a, RetrievalConfig, RetrievalError, Retriever};
use crate::skills::{Skill, SkillsFile};
use crate::trajectory::{abstract_action, Step, Trajectory, TrajectorySet};

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("provider failure: {0}")]
    ProviderFailure(String),
    #[error("environment fault: {0}")]
    EnvironmentFault(String),
    #[error("skill bundle is for domain {bundle:?} but the environment is {env:?}")]
    DomainMismatch { bundle: String, env: String },
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("invalid runtime config: {0}")]
    InvalidConfig(String),
}

impl From<HttpError> for RuntimeError {
    fn from(e: HttpError) -> Self {
        RuntimeError::ProviderFailure(e.to_string())
    }
}

/// A text environment with pattern-checked subgoals.
pub trait Environment: Send {
    fn domain(&self) -> &str;
    /// Builds the task for `task_seed` and returns the initial observation.
    fn reset(&mut self, task_seed: u64) -> Result<String, RuntimeError>;
    /// Returns the observation and whether the action was accepted.
    fn step(&mut self, action: &str) -> Result<(String, bool), RuntimeError>;
    /// Per-subgoal flags; once set they stay set until the next reset.
    fn subgoal_status(&self) -> Vec<bool>;
    fn goal(&self) -> String;
    fn task_description(&self) -> String;
    /// Task commands the environment would currently accept.
    fn valid_actions(&self) -> Vec<String>;
    /// Next action of a built-in reference policy, if the environment has one.
    fn expert_action(&self) -> Option<String> {
        None
    }
}

pub trait CompletionProvider: Send {
    /// Called with the environment right before each `complete`. Scripted
    /// providers use it to peek at state; model-backed ones ignore it.
    fn observe(&mut self, _env: &dyn Environment) {}
    fn complete(&mut self, prompt: &str, temperature: f64) -> Result<String, RuntimeError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub prompt_digest: String,
    pub action: String,
    pub observation: String,
    pub valid: bool,
    pub progress_after: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgressPoint {
    pub step: u32,
    pub progress: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub task_id: String,
    pub steps: Vec<StepRecord>,
    pub progress_curve: Vec<ProgressPoint>,
    pub subgoals_achieved: Vec<bool>,
    pub truncated: bool,
}

/// Mined knowledge for one domain as seen by the episode loop.
pub struct Knowledge<'a> {
    pub retriever: &'a Retriever<'a>,
    pub skills: &'a SkillsFile,
    pub show_skills: bool,
    pub show_golden: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub max_steps: usize,
    pub temperature: f64,
    pub window: usize,
    pub retrieval: RetrievalConfig,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            max_steps: 20,
            temperature: 0.0,
            window: DEFAULT_WINDOW,
            retrieval: RetrievalConfig::default(),
        }
    }
}

/// First non-empty line, trimmed, without a leading "ACTION:".
pub fn postprocess_completion(text: &str) -> Option<String> {
    let line = text.lines().map(str::trim).find(|l| !l.is_empty())?;
    let line = line.strip_prefix("ACTION:").map_or(line, str::trim);
    (!line.is_empty()).then(|| line.to_string())
}

pub fn prompt_digest(prompt: &str) -> String {
    format!("{:016x}", fnv1a(prompt.as_bytes()))
}

fn progress_of(flags: &[bool]) -> f64 {
    if flags.is_empty() {
        return 0.0;
    }
    flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64
}

fn retrieved_skills(knowledge: &Knowledge<'_>, query: &str, s: usize) -> Result<Vec<Skill>, RuntimeError> {
    let graph = knowledge.retriever.graph();
    let ids = knowledge.retriever.retrieve(query, s)?;
    Ok(ids
        .into_iter()
        .filter_map(|id| graph.label(id))
        .filter_map(|label| knowledge.skills.skill_for(label).cloned())
        .collect())
}

/// Everything an episode produced, including the initial observation that
/// trajectory records need.
pub struct Episode {
    pub initial_observation: String,
    pub record: EpisodeRecord,
}

pub fn run_episode(
    env: &mut dyn Environment,
    task_seed: u64,
    provider: &mut dyn CompletionProvider,
    knowledge: Option<&Knowledge<'_>>,
    cfg: &EpisodeConfig,
) -> Result<EpisodeRecord, RuntimeError> {
    run_episode_full(env, task_seed, provider, knowledge, cfg).map(|e| e.record)
}

pub fn run_episode_full(
    env: &mut dyn Environment,
    task_seed: u64,
    provider: &mut dyn CompletionProvider,
    knowledge: Option<&Knowledge<'_>>,
    cfg: &EpisodeConfig,
) -> Result<Episode, RuntimeError> {
    if cfg.max_steps == 0 {
        return Err(RuntimeError::InvalidConfig("max_steps must be at least 1".into()));
    }
    if let Some(k) = knowledge {
        if k.skills.domain != env.domain() {
            return Err(RuntimeError::DomainMismatch {
                bundle: k.skills.domain.clone(),
                env: env.domain().to_string(),
            });
        }
    }
    let initial_observation = env.reset(task_seed)?;
    let task_id = task_id(env.domain(), task_seed);
    let golden = knowledge.filter(|k| k.show_golden).map(|k| k.skills.golden_segment());

    let mut history: Vec<HistoryPair> = Vec::new();
    let mut current = initial_observation.clone();
    let mut steps = Vec::new();
    let mut flags = env.subgoal_status();
    let mut curve = vec![ProgressPoint { step: 0, progress: progress_of(&flags) }];

    for t in 0..cfg.max_steps {
        if !flags.is_empty() && flags.iter().all(|&f| f) {
            break;
        }
        let skills = match knowledge.filter(|k| k.show_skills) {
            Some(k) => {
                let query = history
                    .last()
                    .map_or_else(|| START_LABEL.to_string(), |h| abstract_action(&h.action));
                Some(retrieved_skills(k, &query, cfg.retrieval.s)?)
            }
            None => None,
        };
        let prompt = render_prompt(&PromptContext {
            task_description: env.task_description(),
            goal: env.goal(),
            history: history.clone(),
            current_observation: current.clone(),
            golden_segment: golden.clone(),
            skills,
            window: cfg.window,
            k: cfg.retrieval.k,
        });
        provider.observe(env);
        let raw = provider.complete(&prompt, cfg.temperature)?;
        let action = postprocess_completion(&raw)
            .ok_or_else(|| RuntimeError::ProviderFailure("empty completion".into()))?;
        let (observation, valid) = env.step(&action)?;
        let now = env.subgoal_status();
        // Flags are sticky even if an environment forgets to latch them.
        flags = if flags.len() == now.len() {
            flags.iter().zip(&now).map(|(a, b)| *a || *b).collect()
        } else {
            now
        };
        let progress = progress_of(&flags);
        steps.push(StepRecord {
            prompt_digest: prompt_digest(&prompt),
            action: action.clone(),
            observation: observation.clone(),
            valid,
            progress_after: progress,
        });
        curve.push(ProgressPoint { step: t as u32 + 1, progress });
        history.push(HistoryPair { observation: std::mem::replace(&mut current, observation), action });
    }

    let done = !flags.is_empty() && flags.iter().all(|&f| f);
    Ok(Episode {
        initial_observation,
        record: EpisodeRecord {
            task_id,
            truncated: !done && steps.len() == cfg.max_steps,
            steps,
            progress_curve: curve,
            subgoals_achieved: flags,
        },
    })
}

pub fn task_id(domain: &str, seed: u64) -> String {
    format!("{domain}-{seed}")
}

/// Converts an episode into a trajectory record: each step pairs the
/// observation the action was chosen from with the progress after it.
pub fn episode_to_trajectory(domain: &str, goal: &str, episode: &Episode) -> Trajectory {
    let mut before = episode.initial_observation.clone();
    let steps = episode
        .record
        .steps
        .iter()
        .map(|s| {
            let observation = std::mem::replace(&mut before, s.observation.clone());
            Step {
                observation,
                action: s.action.clone(),
                progress: s.progress_after,
                valid: s.valid,
            }
        })
        .collect();
    Trajectory {
        task_id: episode.record.task_id.clone(),
        domain: domain.to_string(),
        goal: goal.to_string(),
        steps,
    }
}

/// One task instance: a domain plus the seed its layout is generated from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Task {
    pub domain: String,
    pub seed: u64,
}

impl Task {
    pub fn id(&self) -> String {
        task_id(&self.domain, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingConfig {
    pub n_per_task: usize,
    pub temperature: f64,
    pub max_steps: usize,
    pub parallelism: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            n_per_task: 6,
            temperature: 1.0,
            max_steps: 10,
            parallelism: 1,
        }
    }
}

pub type EnvFactory<'a> = dyn Fn(&Task) -> Result<Box<dyn Environment>, RuntimeError> + Sync + 'a;
/// Builds the provider for the `rep`-th episode of a task.
pub type ProviderFactory<'a> =
    dyn Fn(&Task, usize) -> Result<Box<dyn CompletionProvider>, RuntimeError> + Sync + 'a;

/// Runs every `(task, rep)` job through `f`, on `parallelism` threads when
/// above one. Output order always follows job order.
pub fn run_jobs<J, T, F>(jobs: &[J], parallelism: usize, f: F) -> Result<Vec<T>, RuntimeError>
where
    J: Sync,
    T: Send,
    F: Fn(&J) -> Result<T, RuntimeError> + Sync + Send,
{
    if parallelism <= 1 {
        return jobs.iter().map(f).collect();
    }
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| RuntimeError::InvalidConfig(e.to_string()))?;
    pool.install(|| jobs.par_iter().map(f).collect())
}

/// Samples `n_per_task` trajectories per task with a minimal prompt (goal and
/// history only).
pub fn sample_training_set(
    tasks: &[Task],
    make_env: &EnvFactory<'_>,
    make_provider: &ProviderFactory<'_>,
    cfg: &SamplingConfig,
) -> Result<TrajectorySet, RuntimeError> {
    if cfg.n_per_task == 0 {
        return Err(RuntimeError::InvalidConfig("n_per_task must be at least 1".into()));
    }
    let episode_cfg = EpisodeConfig {
        max_steps: cfg.max_steps,
        temperature: cfg.temperature,
        ..EpisodeConfig::default()
    };
    let jobs: Vec<(&Task, usize)> = tasks
        .iter()
        .flat_map(|t| (0..cfg.n_per_task).map(move |rep| (t, rep)))
        .collect();
    let trajectories = run_jobs(&jobs, cfg.parallelism, |&(task, rep)| {
        let mut env = make_env(task)?;
        let mut provider = make_provider(task, rep)?;
        let episode = run_episode_full(env.as_mut(), task.seed, provider.as_mut(), None, &episode_cfg)?;
        Ok(episode_to_trajectory(env.domain(), &env.goal(), &episode))
    })?;
    Ok(TrajectorySet::new(trajectories))
}

/// Chat-completions provider over HTTP.
pub struct ChatProvider {
    client: HttpClient,
}

impl ChatProvider {
    pub fn new(client: HttpClient) -> Self {
        Self { client }
    }
}

impl CompletionProvider for ChatProvider {
    fn complete(&mut self, prompt: &str, temperature: f64) -> Result<String, RuntimeError> {
        let body = json!({
            "model": self.client.model(),
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
        });
        let resp = self.client.post_json("/v1/chat/completions", &body)?;
        resp["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| RuntimeError::ProviderFailure("response has no choices[0].message.content".into()))
    }
}
