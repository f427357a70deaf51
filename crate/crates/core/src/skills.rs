//! Skills: a center action with its credit-ranked graph neighbors, and the
//! per-domain golden segment.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::credit::CreditMap;
use crate::graph::{DomainGraph, NodeId};
use crate::trajectory::Trajectory;

#[derive(Debug, Error, PartialEq)]
pub enum SkillError {
    #[error("node {0} is not in the graph")]
    UnknownNode(NodeId),
    #[error("domain has no trajectories")]
    EmptyDomain,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub action: String,
    pub credit: f64,
    /// Sentinel neighbors are kept in the data but never rendered.
    #[serde(default, skip_serializing_if = "is_false")]
    pub sentinel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skill {
    pub center: String,
    pub antecedents: Vec<Neighbor>,
    pub consequences: Vec<Neighbor>,
}

impl Skill {
    pub fn visible_antecedents(&self) -> impl Iterator<Item = &Neighbor> {
        self.antecedents.iter().filter(|n| !n.sentinel)
    }

    pub fn visible_consequences(&self) -> impl Iterator<Item = &Neighbor> {
        self.consequences.iter().filter(|n| !n.sentinel)
    }
}

fn by_credit_then_label(a: &Neighbor, b: &Neighbor) -> Ordering {
    b.credit
        .total_cmp(&a.credit)
        .then_with(|| a.action.cmp(&b.action))
}

fn neighbors(graph: &DomainGraph, credits: &CreditMap, ids: Vec<NodeId>) -> Vec<Neighbor> {
    let mut out: Vec<Neighbor> = ids
        .into_iter()
        .filter_map(|id| graph.node(id))
        .map(|n| Neighbor {
            action: n.label.clone(),
            credit: credits.credit_of(n.id),
            sentinel: n.is_sentinel,
        })
        .collect();
    out.sort_by(by_credit_then_label);
    out
}

/// The one-hop skill around `center`.
pub fn extract_skill(
    graph: &DomainGraph,
    credits: &CreditMap,
    center: NodeId,
) -> Result<Skill, SkillError> {
    let node = graph.node(center).ok_or(SkillError::UnknownNode(center))?;
    Ok(Skill {
        center: node.label.clone(),
        antecedents: neighbors(graph, credits, graph.predecessors(center)),
        consequences: neighbors(graph, credits, graph.successors(center)),
    })
}

/// Skills for every node, in node order.
pub fn extract_all(graph: &DomainGraph, credits: &CreditMap) -> Vec<Skill> {
    graph
        .nodes
        .iter()
        .map(|n| extract_skill(graph, credits, n.id).expect("node comes from the graph"))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoldenSegment {
    pub domain: String,
    pub goal: String,
    pub initial_observation: String,
    /// Raw actions, object identifiers included.
    pub actions: Vec<String>,
    pub total_progress: f64,
}

fn golden_order(a: &Trajectory, b: &Trajectory) -> Ordering {
    b.final_progress()
        .total_cmp(&a.final_progress())
        .then_with(|| a.steps.len().cmp(&b.steps.len()))
        .then_with(|| a.goal.cmp(&b.goal))
        .then_with(|| {
            let acts = |t: &Trajectory| t.steps.iter().map(|s| s.action.clone()).collect::<Vec<_>>();
            acts(a).cmp(&acts(b))
        })
        .then_with(|| a.steps[0].observation.cmp(&b.steps[0].observation))
        .then_with(|| a.task_id.cmp(&b.task_id))
}

/// Picks the filtered trajectory with the highest final progress. Ties go to
/// fewer actions, then the smaller goal text, then the remaining fields, so
/// the result does not depend on input order.
pub fn select_golden_segment(trajectories: &[&Trajectory]) -> Result<GoldenSegment, SkillError> {
    let best = trajectories
        .iter()
        .filter(|t| !t.steps.is_empty())
        .min_by(|a, b| golden_order(a, b))
        .ok_or(SkillError::EmptyDomain)?;
    Ok(GoldenSegment {
        domain: best.domain.clone(),
        goal: best.goal.clone(),
        initial_observation: best.steps[0].observation.clone(),
        actions: best.steps.iter().map(|s| s.action.clone()).collect(),
        total_progress: best.final_progress(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenSegmentRecord {
    pub goal: String,
    pub initial_observation: String,
    pub actions: Vec<String>,
}

/// On-disk skills file for one domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillsFile {
    pub domain: String,
    pub golden_segment: GoldenSegmentRecord,
    pub skills: Vec<Skill>,
}

impl SkillsFile {
    pub fn new(segment: &GoldenSegment, skills: Vec<Skill>) -> Self {
        Self {
            domain: segment.domain.clone(),
            golden_segment: GoldenSegmentRecord {
                goal: segment.goal.clone(),
                initial_observation: segment.initial_observation.clone(),
                actions: segment.actions.clone(),
            },
            skills,
        }
    }

    pub fn golden_segment(&self) -> GoldenSegment {
        GoldenSegment {
            domain: self.domain.clone(),
            goal: self.golden_segment.goal.clone(),
            initial_observation: self.golden_segment.initial_observation.clone(),
            actions: self.golden_segment.actions.clone(),
            total_progress: 0.0,
        }
    }

    pub fn skill_for(&self, center: &str) -> Option<&Skill> {
        self.skills.iter().find(|s| s.center == center)
    }
}
