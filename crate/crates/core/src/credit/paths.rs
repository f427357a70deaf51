//! Bounded enumeration of simple start-to-end paths.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::graph::{DomainGraph, NodeId};

use super::CreditError;

/// A pool of simple paths, each running from the start to the end sentinel.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPool {
    pub paths: Vec<Vec<NodeId>>,
}

impl PathPool {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// Depth-first enumeration of simple paths from start to end, visiting
/// successors in ascending id order. A path's length is its node count,
/// sentinels included. Stops after `max_paths` paths.
pub fn enumerate_paths(
    graph: &DomainGraph,
    max_paths: usize,
    max_path_len: usize,
) -> Result<PathPool, CreditError> {
    let succ: BTreeMap<NodeId, Vec<NodeId>> = graph
        .nodes
        .iter()
        .map(|n| (n.id, graph.successors(n.id)))
        .collect();
    let dist = distance_to_end(graph);

    let mut paths = Vec::new();
    if max_paths > 0 && max_path_len >= 2 && graph.node(graph.start_id).is_some() {
        let mut walk = Walk {
            succ: &succ,
            dist: &dist,
            end: graph.end_id,
            max_paths,
            max_len: max_path_len,
            stack: vec![graph.start_id],
            on_path: BTreeSet::from([graph.start_id]),
            out: &mut paths,
        };
        walk.descend(graph.start_id);
    }
    if paths.is_empty() {
        return Err(CreditError::NoPath {
            domain: graph.domain.clone(),
        });
    }
    Ok(PathPool { paths })
}

struct Walk<'a> {
    succ: &'a BTreeMap<NodeId, Vec<NodeId>>,
    dist: &'a BTreeMap<NodeId, usize>,
    end: NodeId,
    max_paths: usize,
    max_len: usize,
    stack: Vec<NodeId>,
    on_path: BTreeSet<NodeId>,
    out: &'a mut Vec<Vec<NodeId>>,
}

impl Walk<'_> {
    fn descend(&mut self, at: NodeId) {
        for &next in &self.succ[&at] {
            if self.out.len() >= self.max_paths {
                return;
            }
            if self.on_path.contains(&next) {
                continue;
            }
            // Shortest remaining distance is a lower bound on any simple completion.
            let Some(&d) = self.dist.get(&next) else { continue };
            if self.stack.len() + 1 + d > self.max_len {
                continue;
            }
            self.stack.push(next);
            if next == self.end {
                self.out.push(self.stack.clone());
            } else {
                self.on_path.insert(next);
                self.descend(next);
                self.on_path.remove(&next);
            }
            self.stack.pop();
        }
    }
}

/// Edge-count distance from each node to the end sentinel; nodes that cannot
/// reach the end are absent.
fn distance_to_end(graph: &DomainGraph) -> BTreeMap<NodeId, usize> {
    let mut dist = BTreeMap::from([(graph.end_id, 0usize)]);
    let mut queue = VecDeque::from([graph.end_id]);
    while let Some(id) = queue.pop_front() {
        let d = dist[&id];
        for p in graph.predecessors(id) {
            dist.entry(p).or_insert_with(|| {
                queue.push_back(p);
                d + 1
            });
        }
    }
    dist
}

/// Sum over consecutive pairs of the edge's mean delta; empty multisets and
/// missing edges contribute 0.
pub fn path_score(path: &[NodeId], graph: &DomainGraph) -> f64 {
    path.windows(2)
        .map(|w| graph.edge(w[0], w[1]).map_or(0.0, |e| e.mean_delta()))
        .sum()
}
