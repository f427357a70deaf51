//! Maps the agent's latest action onto graph nodes by embedding similarity.

use std::cmp::Ordering;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::graph::{DomainGraph, NodeId};
use crate::http::{HttpClient, HttpError};

pub const FALLBACK_DIM: usize = 256;

#[derive(Debug, Error, PartialEq)]
pub enum RetrievalError {
    #[error("vectors have different dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("cannot take the cosine of a zero vector")]
    ZeroVector,
    #[error("embedding provider failed: {0}")]
    ProviderFailure(String),
    #[error("graph has no nodes")]
    EmptyGraph,
}

impl From<HttpError> for RetrievalError {
    fn from(e: HttpError) -> Self {
        RetrievalError::ProviderFailure(e.to_string())
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, RetrievalError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    /// Skills retrieved per step.
    pub s: usize,
    /// Antecedents and consequences rendered per skill.
    pub k: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { s: 1, k: 1 }
    }
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, RetrievalError> {
    if u.len() != v.len() {
        return Err(RetrievalError::DimensionMismatch(u.len(), v.len()));
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(RetrievalError::ZeroVector);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Offline embedding: lowercased whitespace tokens and character trigrams
/// hashed (FNV-1a) into 256 count buckets, then L2-normalized.
pub fn fallback_embed(text: &str) -> Vec<f64> {
    let lowered = text.to_lowercase();
    let tokens: Vec<&str> = lowered.split_whitespace().collect();
    let mut v = vec![0.0f64; FALLBACK_DIM];
    for tok in &tokens {
        let h = fnv1a(format!("w:{tok}").as_bytes());
        v[(h % FALLBACK_DIM as u64) as usize] += 1.0;
    }
    let joined: Vec<char> = tokens.join(" ").chars().collect();
    for tri in joined.windows(3) {
        let s: String = tri.iter().collect();
        let h = fnv1a(format!("t:{s}").as_bytes());
        v[(h % FALLBACK_DIM as u64) as usize] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

#[derive(Debug, Default, Clone, Copy)]
pub struct FallbackEmbedder;

impl EmbeddingProvider for FallbackEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, RetrievalError> {
        Ok(texts.iter().map(|t| fallback_embed(t)).collect())
    }
}

/// `POST {base}/v1/embeddings` client.
#[derive(Debug)]
pub struct HttpEmbedder {
    client: HttpClient,
}

impl HttpEmbedder {
    pub fn new(client: HttpClient) -> Self {
        Self { client }
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, RetrievalError> {
        let body = json!({ "model": self.client.model(), "input": texts });
        let resp = self.client.post_json("/v1/embeddings", &body)?;
        let data = resp["data"]
            .as_array()
            .ok_or_else(|| RetrievalError::ProviderFailure("response has no data array".into()))?;
        let out: Vec<Vec<f64>> = data
            .iter()
            .map(|item| {
                item["embedding"]
                    .as_array()
                    .map(|xs| xs.iter().filter_map(|x| x.as_f64()).collect())
                    .ok_or_else(|| RetrievalError::ProviderFailure("item has no embedding".into()))
            })
            .collect::<Result<_, _>>()?;
        if out.len() != texts.len() {
            return Err(RetrievalError::ProviderFailure(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                out.len()
            )));
        }
        Ok(out)
    }
}

fn rank(
    graph: &DomainGraph,
    query: &[f64],
    labels: &[Vec<f64>],
    s: usize,
) -> Result<Vec<NodeId>, RetrievalError> {
    let mut scored: Vec<(f64, &str, NodeId)> = graph
        .nodes
        .iter()
        .zip(labels)
        .map(|(n, v)| Ok((cosine_similarity(query, v)?, n.label.as_str(), n.id)))
        .collect::<Result<_, RetrievalError>>()?;
    scored.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.1.cmp(b.1))
    });
    Ok(scored.into_iter().take(s).map(|(_, _, id)| id).collect())
}

fn embed_one(provider: &dyn EmbeddingProvider, text: &str) -> Result<Vec<f64>, RetrievalError> {
    provider
        .embed(&[text.to_string()])?
        .pop()
        .ok_or_else(|| RetrievalError::ProviderFailure("provider returned no vector".into()))
}

/// Top-`s` nodes by cosine similarity to `query`, ties broken by label.
/// Embeds every label on each call; see [`Retriever`] for the cached form.
pub fn retrieve_actions(
    graph: &DomainGraph,
    provider: &dyn EmbeddingProvider,
    query: &str,
    s: usize,
) -> Result<Vec<NodeId>, RetrievalError> {
    if graph.nodes.is_empty() {
        return Err(RetrievalError::EmptyGraph);
    }
    let labels: Vec<String> = graph.nodes.iter().map(|n| n.label.clone()).collect();
    let label_vecs = provider.embed(&labels)?;
    let q = embed_one(provider, query)?;
    rank(graph, &q, &label_vecs, s)
}

/// Retrieval over one graph with node-label embeddings computed once and
/// shared between threads.
pub struct Retriever<'a> {
    graph: &'a DomainGraph,
    provider: &'a dyn EmbeddingProvider,
    labels: RwLock<Option<Vec<Vec<f64>>>>,
}

impl<'a> Retriever<'a> {
    pub fn new(graph: &'a DomainGraph, provider: &'a dyn EmbeddingProvider) -> Self {
        Self {
            graph,
            provider,
            labels: RwLock::new(None),
        }
    }

    pub fn graph(&self) -> &DomainGraph {
        self.graph
    }

    pub fn retrieve(&self, query: &str, s: usize) -> Result<Vec<NodeId>, RetrievalError> {
        if self.graph.nodes.is_empty() {
            return Err(RetrievalError::EmptyGraph);
        }
        let q = embed_one(self.provider, query)?;
        if let Some(labels) = self.labels.read().expect("retrieval cache poisoned").as_ref() {
            return rank(self.graph, &q, labels, s);
        }
        let mut slot = self.labels.write().expect("retrieval cache poisoned");
        if slot.is_none() {
            let texts: Vec<String> = self.graph.nodes.iter().map(|n| n.label.clone()).collect();
            *slot = Some(self.provider.embed(&texts)?);
        }
        rank(self.graph, &q, slot.as_ref().unwrap(), s)
    }
}
