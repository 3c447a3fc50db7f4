//! Causal dependency graph of a model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ModelDef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowDirection {
    Inflow,
    Outflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "direction")]
pub enum EdgeKind {
    /// Source appears in the target's equation.
    Dependency,
    /// Source is a flow integrated into the target stock.
    FlowToStock(FlowDirection),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub source: String,
    pub target: String,
    pub kind: EdgeKind,
}

impl Edge {
    /// Stable identifier, also used as CSV column name.
    pub fn key(&self) -> String {
        format!("{}->{}", self.source, self.target)
    }
}

/// Directed graph over model variables. Edges are sorted by (source, target)
/// and their position in `edges` is the edge id used throughout the crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<Edge>,
    #[serde(skip)]
    lookup: BTreeMap<(String, String), usize>,
}

impl CausalGraph {
    pub fn from_edges(mut nodes: Vec<String>, mut edges: Vec<Edge>) -> Self {
        nodes.sort();
        nodes.dedup();
        edges.sort_by(|a, b| (&a.source, &a.target).cmp(&(&b.source, &b.target)));
        edges.dedup_by(|a, b| a.source == b.source && a.target == b.target);
        let lookup = edges
            .iter()
            .enumerate()
            .map(|(i, e)| ((e.source.clone(), e.target.clone()), i))
            .collect();
        CausalGraph {
            nodes,
            edges,
            lookup,
        }
    }

    pub fn edge_id(&self, source: &str, target: &str) -> Option<usize> {
        self.lookup
            .get(&(source.to_string(), target.to_string()))
            .copied()
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.binary_search_by(|n| n.as_str().cmp(name)).ok()
    }

    /// Ids of edges entering `target`, in edge order.
    pub fn incoming(&self, target: &str) -> impl Iterator<Item = usize> + '_ {
        let target = target.to_string();
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.target == target)
            .map(|(i, _)| i)
    }

    /// Successor lists by node index, each sorted by target name.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            if let (Some(s), Some(t)) = (self.node_index(&e.source), self.node_index(&e.target)) {
                adj[s].push(t);
            }
        }
        adj
    }

    /// Restores the lookup index after deserialization.
    pub fn reindex(self) -> Self {
        CausalGraph::from_edges(self.nodes, self.edges)
    }
}

/// Builds the runtime causal graph: a dependency edge for every identifier in
/// a non-stock equation and a flow-to-stock edge for every declared inflow or
/// outflow. Stock initial-value expressions contribute no edges.
pub fn build_causal_graph(model: &ModelDef) -> CausalGraph {
    let mut edges = Vec::new();
    for var in &model.variables {
        if var.is_stock() {
            for flow in &var.inflows {
                edges.push(Edge {
                    source: flow.clone(),
                    target: var.name.clone(),
                    kind: EdgeKind::FlowToStock(FlowDirection::Inflow),
                });
            }
            for flow in &var.outflows {
                edges.push(Edge {
                    source: flow.clone(),
                    target: var.name.clone(),
                    kind: EdgeKind::FlowToStock(FlowDirection::Outflow),
                });
            }
        } else {
            for input in var.equation.identifiers() {
                if input == var.name {
                    continue;
                }
                edges.push(Edge {
                    source: input.to_string(),
                    target: var.name.clone(),
                    kind: EdgeKind::Dependency,
                });
            }
        }
    }
    let nodes = model.variables.iter().map(|v| v.name.clone()).collect();
    CausalGraph::from_edges(nodes, edges)
}
