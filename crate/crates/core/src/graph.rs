//! Per-domain action graph annotated with progress deltas.
//!
//! Nodes are abstract actions plus two sentinels that anchor every path.
//! An edge `a -> b` stores every observed `p(b) - p(a)`, i.e. the progress
//! gained by executing `b` right after `a`. The start edge records the
//! first action's own progress and the edge into the end sentinel is empty.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::{abstract_action, Trajectory};

pub const START_LABEL: &str = "the beginning of the task";
pub const END_LABEL: &str = "the end of the task";
pub const DEFAULT_NODE_CAP: usize = 30;

pub type NodeId = u32;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("domain has no trajectories")]
    EmptyDomain,
    #[error("invalid graph: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionNode {
    pub id: NodeId,
    pub label: String,
    #[serde(rename = "sentinel")]
    pub is_sentinel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub deltas: Vec<f64>,
}

impl Edge {
    /// Empirical mean of the delta multiset; 0 when empty.
    pub fn mean_delta(&self) -> f64 {
        if self.deltas.is_empty() {
            0.0
        } else {
            self.deltas.iter().sum::<f64>() / self.deltas.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainGraph {
    pub domain: String,
    pub nodes: Vec<ActionNode>,
    pub edges: Vec<Edge>,
    #[serde(rename = "start")]
    pub start_id: NodeId,
    #[serde(rename = "end")]
    pub end_id: NodeId,
}

impl DomainGraph {
    pub fn node(&self, id: NodeId) -> Option<&ActionNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_by_label(&self, label: &str) -> Option<&ActionNode> {
        self.nodes.iter().find(|n| n.label == label)
    }

    pub fn label(&self, id: NodeId) -> Option<&str> {
        self.node(id).map(|n| n.label.as_str())
    }

    pub fn edge(&self, src: NodeId, dst: NodeId) -> Option<&Edge> {
        self.edges.iter().find(|e| e.src == src && e.dst == dst)
    }

    /// Successor ids in ascending order.
    pub fn successors(&self, id: NodeId) -> Vec<NodeId> {
        let set: BTreeSet<NodeId> = self
            .edges
            .iter()
            .filter(|e| e.src == id)
            .map(|e| e.dst)
            .collect();
        set.into_iter().collect()
    }

    /// Predecessor ids in ascending order.
    pub fn predecessors(&self, id: NodeId) -> Vec<NodeId> {
        let set: BTreeSet<NodeId> = self
            .edges
            .iter()
            .filter(|e| e.dst == id)
            .map(|e| e.src)
            .collect();
        set.into_iter().collect()
    }

    /// Checks every structural invariant of a finished graph.
    pub fn validate(&self, node_cap: usize) -> Result<(), GraphError> {
        let bad = |m: String| Err(GraphError::Invalid(m));
        let ids: BTreeSet<NodeId> = self.nodes.iter().map(|n| n.id).collect();
        if ids.len() != self.nodes.len() {
            return bad("duplicate node ids".into());
        }
        let labels: BTreeSet<&str> = self.nodes.iter().map(|n| n.label.as_str()).collect();
        if labels.len() != self.nodes.len() {
            return bad("duplicate node labels".into());
        }
        let sentinels: Vec<NodeId> = self
            .nodes
            .iter()
            .filter(|n| n.is_sentinel)
            .map(|n| n.id)
            .collect();
        if sentinels.len() != 2
            || !sentinels.contains(&self.start_id)
            || !sentinels.contains(&self.end_id)
            || self.start_id == self.end_id
        {
            return bad("graph needs exactly one start and one end sentinel".into());
        }
        let mut seen = BTreeSet::new();
        for e in &self.edges {
            if e.src == e.dst {
                return bad(format!("self-loop on node {}", e.src));
            }
            if !ids.contains(&e.src) || !ids.contains(&e.dst) {
                return bad(format!("edge {}->{} references unknown node", e.src, e.dst));
            }
            if !seen.insert((e.src, e.dst)) {
                return bad(format!("duplicate edge {}->{}", e.src, e.dst));
            }
            if e.deltas.iter().any(|d| !(-1.0..=1.0).contains(d)) {
                return bad(format!("edge {}->{} has delta outside [-1, 1]", e.src, e.dst));
            }
        }
        if self.nodes.len() > node_cap {
            return bad(format!("{} nodes exceed cap {node_cap}", self.nodes.len()));
        }
        let fwd = reachable(self, self.start_id, Direction::Forward);
        let bwd = reachable(self, self.end_id, Direction::Backward);
        for n in self.nodes.iter().filter(|n| !n.is_sentinel) {
            if !fwd.contains(&n.id) || !bwd.contains(&n.id) {
                return bad(format!("node '{}' is not on a start-to-end path", n.label));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serialization cannot fail")
    }
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Backward,
}

fn reachable(graph: &DomainGraph, from: NodeId, dir: Direction) -> BTreeSet<NodeId> {
    let mut seen = BTreeSet::from([from]);
    let mut queue = VecDeque::from([from]);
    while let Some(id) = queue.pop_front() {
        let next = match dir {
            Direction::Forward => graph.successors(id),
            Direction::Backward => graph.predecessors(id),
        };
        for n in next {
            if seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    seen
}

/// Builds the graph for one domain from filtered trajectories. Node ids are
/// assigned as: start sentinel 0, abstract actions 1.. in order of first
/// appearance, end sentinel last.
pub fn build_graph(trajectories: &[&Trajectory], node_cap: usize) -> Result<DomainGraph, GraphError> {
    let first = trajectories.first().ok_or(GraphError::EmptyDomain)?;
    let domain = first.domain.clone();

    let mut ids: BTreeMap<String, NodeId> = BTreeMap::new();
    let mut labels: Vec<String> = Vec::new();
    for t in trajectories {
        for s in &t.steps {
            let label = abstract_action(&s.action);
            if !ids.contains_key(&label) {
                ids.insert(label.clone(), labels.len() as NodeId + 1);
                labels.push(label);
            }
        }
    }
    let start_id: NodeId = 0;
    let end_id = labels.len() as NodeId + 1;

    let mut nodes = vec![ActionNode {
        id: start_id,
        label: START_LABEL.into(),
        is_sentinel: true,
    }];
    nodes.extend(labels.iter().enumerate().map(|(i, l)| ActionNode {
        id: i as NodeId + 1,
        label: l.clone(),
        is_sentinel: false,
    }));
    nodes.push(ActionNode {
        id: end_id,
        label: END_LABEL.into(),
        is_sentinel: true,
    });

    // Edges keep first-insertion order so serialization is stable.
    let mut edges: Vec<Edge> = Vec::new();
    let mut edge_index: BTreeMap<(NodeId, NodeId), usize> = BTreeMap::new();
    let mut add = |src: NodeId, dst: NodeId, delta: Option<f64>| {
        if src == dst {
            return;
        }
        let idx = *edge_index.entry((src, dst)).or_insert_with(|| {
            edges.push(Edge {
                src,
                dst,
                deltas: Vec::new(),
            });
            edges.len() - 1
        });
        if let Some(d) = delta {
            edges[idx].deltas.push(d);
        }
    };

    for t in trajectories {
        if t.steps.is_empty() {
            continue;
        }
        let seq: Vec<NodeId> = t
            .steps
            .iter()
            .map(|s| ids[&abstract_action(&s.action)])
            .collect();
        add(start_id, seq[0], Some(t.steps[0].progress));
        for (w, pair) in t.steps.windows(2).enumerate() {
            add(seq[w], seq[w + 1], Some(pair[1].progress - pair[0].progress));
        }
        add(*seq.last().unwrap(), end_id, None);
    }

    let graph = DomainGraph {
        domain,
        nodes,
        edges,
        start_id,
        end_id,
    };
    Ok(prune_graph(graph, node_cap))
}

/// Mean of all deltas on a node's incoming edges; 0 when there are none.
pub fn incoming_mean_delta(graph: &DomainGraph, id: NodeId) -> f64 {
    let (sum, count) = graph
        .edges
        .iter()
        .filter(|e| e.dst == id)
        .flat_map(|e| e.deltas.iter())
        .fold((0.0, 0usize), |(s, c), d| (s + d, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Removes lowest-ranked non-sentinel nodes until the graph fits `node_cap`,
/// then removes self-loops and nodes that no longer lie on a start-to-end
/// path. Ranking is by mean incoming delta; ties drop the greatest label.
pub fn prune_graph(mut graph: DomainGraph, node_cap: usize) -> DomainGraph {
    graph.edges.retain(|e| e.src != e.dst);

    while graph.nodes.len() > node_cap {
        let victim = graph
            .nodes
            .iter()
            .filter(|n| !n.is_sentinel)
            .map(|n| (incoming_mean_delta(&graph, n.id), n))
            .min_by(|(sa, na), (sb, nb)| {
                sa.total_cmp(sb).then_with(|| nb.label.cmp(&na.label))
            })
            .map(|(_, n)| n.id);
        let Some(victim) = victim else { break };
        remove_node(&mut graph, victim);
    }

    graph.edges.retain(|e| e.src != e.dst);

    let fwd = reachable(&graph, graph.start_id, Direction::Forward);
    let bwd = reachable(&graph, graph.end_id, Direction::Backward);
    let dead: Vec<NodeId> = graph
        .nodes
        .iter()
        .filter(|n| !n.is_sentinel && !(fwd.contains(&n.id) && bwd.contains(&n.id)))
        .map(|n| n.id)
        .collect();
    for id in dead {
        remove_node(&mut graph, id);
    }
    graph
}

fn remove_node(graph: &mut DomainGraph, id: NodeId) {
    graph.nodes.retain(|n| n.id != id);
    graph.edges.retain(|e| e.src != id && e.dst != id);
}
