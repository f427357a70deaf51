//! The single JSON document that drives a pipeline run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::credit::TdConfig;
use crate::graph::DEFAULT_NODE_CAP;
use crate::http::HttpSettings;
use crate::retrieval::RetrievalConfig;
use crate::runtime::{EpisodeConfig, SamplingConfig, Task};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub work_dir: PathBuf,
    pub envs: Vec<EnvSpec>,
    pub provider: ProviderSpec,
    pub embedding: EmbeddingSpec,
    pub sampling: SamplingSpec,
    pub graph: GraphSpec,
    pub td: TdConfig,
    pub retrieval: RetrievalConfig,
    pub inference: InferenceSpec,
    pub folds: FoldSpec,
    /// Episodes run concurrently in `sample` and `eval`. 1 keeps runs
    /// sequential; results are identical either way.
    pub parallelism: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            work_dir: PathBuf::from("skillgen-work"),
            envs: vec![EnvSpec::default()],
            provider: ProviderSpec::default(),
            embedding: EmbeddingSpec::default(),
            sampling: SamplingSpec::default(),
            graph: GraphSpec::default(),
            td: TdConfig::default(),
            retrieval: RetrievalConfig::default(),
            inference: InferenceSpec::default(),
            folds: FoldSpec::default(),
            parallelism: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSpec {
    pub name: String,
    pub task_seeds: Vec<u64>,
}

impl Default for EnvSpec {
    fn default() -> Self {
        Self {
            name: "keydoor".into(),
            task_seeds: (0..8).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Scripted,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Script {
    NoisyExpert,
    PromptFollower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSpec {
    pub kind: ProviderKind,
    /// Scripted policy used by `sample`.
    pub sample_script: Script,
    /// Scripted policy used by `eval`.
    pub eval_script: Script,
    pub seed: u64,
    pub http: HttpSettings,
}

impl Default for ProviderSpec {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Scripted,
            sample_script: Script::NoisyExpert,
            eval_script: Script::PromptFollower,
            seed: 0,
            http: HttpSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    Fallback,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSpec {
    pub kind: EmbeddingKind,
    pub http: HttpSettings,
}

impl Default for EmbeddingSpec {
    fn default() -> Self {
        Self {
            kind: EmbeddingKind::Fallback,
            http: HttpSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSpec {
    pub n_per_task: usize,
    pub temperature: f64,
    pub max_steps: usize,
}

impl Default for SamplingSpec {
    fn default() -> Self {
        Self {
            n_per_task: 6,
            temperature: 1.0,
            max_steps: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSpec {
    pub node_cap: usize,
}

impl Default for GraphSpec {
    fn default() -> Self {
        Self { node_cap: DEFAULT_NODE_CAP }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceSpec {
    pub max_steps: usize,
    pub temperature: f64,
    pub window: usize,
    /// Render the retrieved-skills section.
    pub skills: bool,
    /// Render the golden-segment section.
    pub golden_segment: bool,
}

impl Default for InferenceSpec {
    fn default() -> Self {
        Self {
            max_steps: 20,
            temperature: 0.0,
            window: 20,
            skills: true,
            golden_segment: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoldSpec {
    pub k: usize,
    pub seed: u64,
}

impl Default for FoldSpec {
    fn default() -> Self {
        Self { k: 4, seed: 42 }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.envs.is_empty() {
            return Err("envs must list at least one environment".into());
        }
        for env in &self.envs {
            if env.task_seeds.is_empty() {
                return Err(format!("environment {:?} has no task seeds", env.name));
            }
        }
        if self.sampling.n_per_task == 0 || self.sampling.max_steps == 0 {
            return Err("sampling.n_per_task and sampling.max_steps must be positive".into());
        }
        if self.inference.max_steps == 0 || self.inference.window == 0 {
            return Err("inference.max_steps and inference.window must be positive".into());
        }
        if self.graph.node_cap < 2 {
            return Err("graph.node_cap must leave room for the two sentinels".into());
        }
        if self.retrieval.s == 0 {
            return Err("retrieval.s must be positive".into());
        }
        if self.folds.k < 2 {
            return Err("folds.k must be at least 2".into());
        }
        if self.parallelism == 0 {
            return Err("parallelism must be at least 1".into());
        }
        self.td.validate().map_err(|e| e.to_string())
    }

    /// Overrides every seed the run uses except the fold split.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.provider.seed = seed;
        self.td.seed = seed;
        self
    }

    pub fn tasks(&self) -> Vec<Task> {
        self.envs
            .iter()
            .flat_map(|e| e.task_seeds.iter().map(|&seed| Task { domain: e.name.clone(), seed }))
            .collect()
    }

    pub fn sampling_config(&self) -> SamplingConfig {
        SamplingConfig {
            n_per_task: self.sampling.n_per_task,
            temperature: self.sampling.temperature,
            max_steps: self.sampling.max_steps,
            parallelism: self.parallelism,
        }
    }

    pub fn episode_config(&self) -> EpisodeConfig {
        EpisodeConfig {
            max_steps: self.inference.max_steps,
            temperature: self.inference.temperature,
            window: self.inference.window,
            retrieval: self.retrieval,
        }
    }
}
