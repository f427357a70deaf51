//! Pipeline stages as plain functions plus their file-backed wrappers.
//!
//! Work directory layout:
//!
//! ```text
//! trajectories.jsonl              sample
//! folds.json                      build-graph
//! fold-<i>/graph-<domain>.json    build-graph
//! fold-<i>/credit-<domain>.json   credit
//! fold-<i>/skills-<domain>.json   skills
//! fold-<i>/episodes.jsonl         eval
//! fold-<i>/report.json            eval
//! report.json                     report
//! ```
//!
//! Fold `i` holds out the tasks of split `i`: its graphs, credits and skills
//! are mined from the trajectories of every other task, and `eval` runs the
//! held-out tasks against them.

use std::collections::BTreeSet;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{EmbeddingKind, PipelineConfig, ProviderKind, Script};
use crate::credit::{run_td, CreditError, CreditFile};
use crate::envs::{make_env, NoisyExpert, PromptFollower};
use crate::graph::{build_graph, DomainGraph, GraphError};
use crate::http::{HttpClient, HttpError};
use crate::metrics::{make_folds, render_table, MetricsError, Report};
use crate::retrieval::{fnv1a, EmbeddingProvider, FallbackEmbedder, HttpEmbedder, RetrievalError, Retriever};
use crate::runtime::{
    run_episode, run_jobs, sample_training_set, ChatProvider, CompletionProvider, EpisodeRecord, Knowledge,
    RuntimeError, Task,
};
use crate::skills::{extract_all, select_golden_segment, SkillError, SkillsFile};
use crate::trajectory::{filter_trajectories, parse_trajectories, TrajectoryError, TrajectorySet};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("provider failure: {0}")]
    Provider(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl PipelineError {
    /// 1 usage/config, 2 invalid data or files, 3 provider or network.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Data(_) | PipelineError::Io { .. } => 2,
            PipelineError::Provider(_) => 3,
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for PipelineError {
            fn from(e: $t) -> Self {
                PipelineError::Data(e.to_string())
            }
        }
    )*};
}
data_error!(TrajectoryError, GraphError, CreditError, SkillError, MetricsError);

impl From<HttpError> for PipelineError {
    fn from(e: HttpError) -> Self {
        PipelineError::Provider(e.to_string())
    }
}

impl From<RetrievalError> for PipelineError {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::ProviderFailure(m) => PipelineError::Provider(m),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

impl From<RuntimeError> for PipelineError {
    fn from(e: RuntimeError) -> Self {
        match e {
            RuntimeError::ProviderFailure(m) => PipelineError::Provider(m),
            RuntimeError::Retrieval(r) => r.into(),
            RuntimeError::InvalidConfig(m) => PipelineError::Config(m),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

/// Seed for the `rep`-th sampled episode of a task.
pub fn episode_seed(base: u64, task: &Task, rep: usize) -> u64 {
    fnv1a(format!("{base}/{}/{rep}", task.id()).as_bytes())
}

fn scripted(script: Script, seed: u64) -> Box<dyn CompletionProvider> {
    match script {
        Script::NoisyExpert => Box::new(NoisyExpert::new(seed)),
        Script::PromptFollower => Box::new(PromptFollower::new()),
    }
}

/// Resolves the chat client up front so a missing key fails before any
/// request is made.
fn chat_client(cfg: &PipelineConfig) -> Result<Option<HttpClient>, PipelineError> {
    match cfg.provider.kind {
        ProviderKind::Scripted => Ok(None),
        ProviderKind::Http => Ok(Some(HttpClient::from_env(&cfg.provider.http)?)),
    }
}

fn provider_for(client: &Option<HttpClient>, script: Script, seed: u64) -> Box<dyn CompletionProvider> {
    match client {
        Some(c) => Box::new(ChatProvider::new(c.clone())),
        None => scripted(script, seed),
    }
}

pub fn make_embedder(cfg: &PipelineConfig) -> Result<Box<dyn EmbeddingProvider>, PipelineError> {
    match cfg.embedding.kind {
        EmbeddingKind::Fallback => Ok(Box::new(FallbackEmbedder)),
        EmbeddingKind::Http => Ok(Box::new(HttpEmbedder::new(HttpClient::from_env(&cfg.embedding.http)?))),
    }
}

/// Runs the sampling stage in memory.
pub fn sample(cfg: &PipelineConfig) -> Result<TrajectorySet, PipelineError> {
    let client = chat_client(cfg)?;
    let make_env_for = |task: &Task| make_env(&task.domain);
    let make_provider = |task: &Task, rep: usize| {
        let seed = episode_seed(cfg.provider.seed, task, rep);
        Ok(provider_for(&client, cfg.provider.sample_script, seed))
    };
    Ok(sample_training_set(&cfg.tasks(), &make_env_for, &make_provider, &cfg.sampling_config())?)
}

/// Task ids per fold.
pub fn folds(cfg: &PipelineConfig) -> Result<Vec<Vec<String>>, PipelineError> {
    let ids: Vec<String> = cfg.tasks().iter().map(Task::id).collect();
    Ok(make_folds(&ids, cfg.folds.k, cfg.folds.seed)?)
}

/// Filtered trajectories of every task outside `held_out`.
pub fn training_set(all: &TrajectorySet, held_out: &[String]) -> TrajectorySet {
    let held: BTreeSet<&str> = held_out.iter().map(String::as_str).collect();
    filter_trajectories(&all.retain_tasks(|id| !held.contains(id)))
}

fn domains(cfg: &PipelineConfig) -> Vec<String> {
    let mut seen = BTreeSet::new();
    cfg.envs
        .iter()
        .filter(|e| seen.insert(e.name.clone()))
        .map(|e| e.name.clone())
        .collect()
}

/// One graph per configured domain, in config order.
pub fn build_graphs(cfg: &PipelineConfig, training: &TrajectorySet) -> Result<Vec<DomainGraph>, PipelineError> {
    domains(cfg)
        .iter()
        .map(|d| {
            let trajectories = training.domain(d);
            if trajectories.is_empty() {
                return Err(PipelineError::Data(format!(
                    "domain {d} has no trajectories with progress left after filtering"
                )));
            }
            Ok(build_graph(&trajectories, cfg.graph.node_cap)?)
        })
        .collect()
}

pub fn assign_credit(cfg: &PipelineConfig, graph: &DomainGraph) -> Result<CreditFile, PipelineError> {
    let credits = run_td(graph, &cfg.td)?;
    Ok(CreditFile::new(&graph.domain, credits, &cfg.td))
}

pub fn mine_skills(graph: &DomainGraph, credit: &CreditFile, training: &TrajectorySet) -> Result<SkillsFile, PipelineError> {
    let segment = select_golden_segment(&training.domain(&graph.domain))?;
    Ok(SkillsFile::new(&segment, extract_all(graph, &credit.credit_map())))
}

/// Mined knowledge for one domain of one fold.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub graph: DomainGraph,
    pub skills: SkillsFile,
}

/// Graph, credit and skills for every domain of a training set.
pub fn mine(cfg: &PipelineConfig, training: &TrajectorySet) -> Result<Vec<Bundle>, PipelineError> {
    build_graphs(cfg, training)?
        .into_iter()
        .map(|graph| {
            let credit = assign_credit(cfg, &graph)?;
            let skills = mine_skills(&graph, &credit, training)?;
            Ok(Bundle { graph, skills })
        })
        .collect()
}

/// Runs the held-out tasks of one fold against its bundles.
pub fn evaluate(cfg: &PipelineConfig, held_out: &[String], bundles: &[Bundle]) -> Result<Vec<EpisodeRecord>, PipelineError> {
    let client = chat_client(cfg)?;
    let embedder = make_embedder(cfg)?;
    let retrievers: Vec<Retriever<'_>> = bundles.iter().map(|b| Retriever::new(&b.graph, embedder.as_ref())).collect();
    let held: BTreeSet<&str> = held_out.iter().map(String::as_str).collect();
    let tasks: Vec<Task> = cfg.tasks().into_iter().filter(|t| held.contains(t.id().as_str())).collect();
    let episode_cfg = cfg.episode_config();
    let records = run_jobs(&tasks, cfg.parallelism, |task| {
        let i = bundles
            .iter()
            .position(|b| b.graph.domain == task.domain)
            .ok_or_else(|| RuntimeError::InvalidConfig(format!("no skills for domain {}", task.domain)))?;
        let knowledge = Knowledge {
            retriever: &retrievers[i],
            skills: &bundles[i].skills,
            show_skills: cfg.inference.skills,
            show_golden: cfg.inference.golden_segment,
        };
        let mut env = make_env(&task.domain)?;
        let mut provider = provider_for(&client, cfg.provider.eval_script, cfg.provider.seed);
        run_episode(env.as_mut(), task.seed, provider.as_mut(), Some(&knowledge), &episode_cfg)
    })?;
    Ok(records)
}

/// The whole pipeline in memory: one report per fold.
pub fn run_all(cfg: &PipelineConfig) -> Result<Vec<Report>, PipelineError> {
    let all = sample(cfg)?;
    folds(cfg)?
        .iter()
        .enumerate()
        .map(|(i, held_out)| {
            let bundles = mine(cfg, &training_set(&all, held_out))?;
            let records = evaluate(cfg, held_out, &bundles)?;
            Ok(Report::from_records(i, &records)?)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Sample,
    BuildGraph,
    Credit,
    Skills,
    Eval,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Sample,
        Stage::BuildGraph,
        Stage::Credit,
        Stage::Skills,
        Stage::Eval,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Sample => "sample",
            Stage::BuildGraph => "build-graph",
            Stage::Credit => "credit",
            Stage::Skills => "skills",
            Stage::Eval => "eval",
            Stage::Report => "report",
        }
    }
}

/// File locations under one work directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn trajectories(&self) -> PathBuf {
        self.root.join("trajectories.jsonl")
    }
    pub fn folds(&self) -> PathBuf {
        self.root.join("folds.json")
    }
    pub fn fold_dir(&self, fold: usize) -> PathBuf {
        self.root.join(format!("fold-{fold}"))
    }
    pub fn graph(&self, fold: usize, domain: &str) -> PathBuf {
        self.fold_dir(fold).join(format!("graph-{domain}.json"))
    }
    pub fn credit(&self, fold: usize, domain: &str) -> PathBuf {
        self.fold_dir(fold).join(format!("credit-{domain}.json"))
    }
    pub fn skills(&self, fold: usize, domain: &str) -> PathBuf {
        self.fold_dir(fold).join(format!("skills-{domain}.json"))
    }
    pub fn episodes(&self, fold: usize) -> PathBuf {
        self.fold_dir(fold).join("episodes.jsonl")
    }
    pub fn fold_report(&self, fold: usize) -> PathBuf {
        self.fold_dir(fold).join("report.json")
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    std::fs::write(&tmp, contents).map_err(|e| PipelineError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| PipelineError::io(path, e))
}

fn read(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    serde_json::from_str(&read(path)?).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    text.into_bytes()
}

fn read_trajectories(path: &Path) -> Result<TrajectorySet, PipelineError> {
    let file = std::fs::File::open(path).map_err(|e| PipelineError::io(path, e))?;
    parse_trajectories(BufReader::new(file)).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
}

/// Runs one stage, reading inputs from the config's work directory and
/// writing outputs under `out` (the work directory when `None`). Returns
/// the text to print on success.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig, out: Option<&Path>) -> Result<String, PipelineError> {
    let input = Layout::new(&cfg.work_dir);
    let output = Layout::new(out.map_or_else(|| cfg.work_dir.clone(), Path::to_path_buf));
    match stage {
        Stage::Sample => {
            let set = sample(cfg)?;
            write_atomic(&output.trajectories(), set.to_jsonl().as_bytes())?;
            Ok(format!("sample: {} trajectories -> {}", set.len(), output.trajectories().display()))
        }
        Stage::BuildGraph => {
            let all = read_trajectories(&input.trajectories())?;
            let folds = folds(cfg)?;
            write_atomic(&output.folds(), &to_json(&folds))?;
            let mut count = 0;
            for (i, held_out) in folds.iter().enumerate() {
                for graph in build_graphs(cfg, &training_set(&all, held_out))? {
                    let mut bytes = graph.to_json().into_bytes();
                    bytes.push(b'\n');
                    write_atomic(&output.graph(i, &graph.domain), &bytes)?;
                    count += 1;
                }
            }
            Ok(format!("build-graph: {count} graphs over {} folds", folds.len()))
        }
        Stage::Credit => {
            let n = cfg.folds.k;
            for i in 0..n {
                for d in domains(cfg) {
                    let graph: DomainGraph = read_json(&input.graph(i, &d))?;
                    let credit = assign_credit(cfg, &graph)?;
                    write_atomic(&output.credit(i, &d), &to_json(&credit))?;
                }
            }
            Ok(format!("credit: {} credit maps", n * domains(cfg).len()))
        }
        Stage::Skills => {
            let all = read_trajectories(&input.trajectories())?;
            let folds: Vec<Vec<String>> = read_json(&input.folds())?;
            let mut count = 0;
            for (i, held_out) in folds.iter().enumerate() {
                let training = training_set(&all, held_out);
                for d in domains(cfg) {
                    let graph: DomainGraph = read_json(&input.graph(i, &d))?;
                    let credit: CreditFile = read_json(&input.credit(i, &d))?;
                    let skills = mine_skills(&graph, &credit, &training)?;
                    count += skills.skills.len();
                    write_atomic(&output.skills(i, &d), &to_json(&skills))?;
                }
            }
            Ok(format!("skills: {count} skills over {} folds", folds.len()))
        }
        Stage::Eval => {
            chat_client(cfg)?;
            let folds: Vec<Vec<String>> = read_json(&input.folds())?;
            let mut reports = Vec::new();
            for (i, held_out) in folds.iter().enumerate() {
                let bundles = domains(cfg)
                    .iter()
                    .map(|d| {
                        Ok(Bundle {
                            graph: read_json(&input.graph(i, d))?,
                            skills: read_json(&input.skills(i, d))?,
                        })
                    })
                    .collect::<Result<Vec<_>, PipelineError>>()?;
                let records = evaluate(cfg, held_out, &bundles)?;
                let mut lines = String::new();
                for r in &records {
                    lines.push_str(&serde_json::to_string(r).expect("plain data serializes"));
                    lines.push('\n');
                }
                write_atomic(&output.episodes(i), lines.as_bytes())?;
                let report = Report::from_records(i, &records)?;
                write_atomic(&output.fold_report(i), &to_json(&report))?;
                reports.push(report);
            }
            let episodes: usize = reports.iter().map(|r| r.episodes.len()).sum();
            let sr = reports.iter().flat_map(|r| &r.episodes).map(|e| f64::from(e.sr)).sum::<f64>() / episodes.max(1) as f64;
            Ok(format!("eval: {episodes} episodes over {} folds, SR {:.1}%", reports.len(), sr * 100.0))
        }
        Stage::Report => {
            let folds: Vec<Vec<String>> = read_json(&input.folds())?;
            let reports = (0..folds.len())
                .map(|i| read_json::<Report>(&input.fold_report(i)))
                .collect::<Result<Vec<_>, _>>()?;
            write_atomic(&output.report(), &to_json(&reports))?;
            Ok(render_table(&reports))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_leaves_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b/out.json");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        let names: Vec<_> = std::fs::read_dir(path.parent().unwrap()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(PipelineError::Config("x".into()).exit_code(), 1);
        assert_eq!(PipelineError::from(CreditError::NoPath { domain: "d".into() }).exit_code(), 2);
        assert_eq!(PipelineError::from(HttpError::MissingKey).exit_code(), 3);
        assert_eq!(PipelineError::from(RuntimeError::ProviderFailure("x".into())).exit_code(), 3);
    }

    #[test]
    fn episode_seeds_differ_per_rep() {
        let t = Task { domain: "keydoor".into(), seed: 1 };
        assert_ne!(episode_seed(0, &t, 0), episode_seed(0, &t, 1));
        assert_eq!(episode_seed(0, &t, 0), episode_seed(0, &t, 0));
    }
}
