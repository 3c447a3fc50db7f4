//! Simplified causal loop diagrams: threshold-based variable filtering and
//! aggregated links found by depth-first witness search.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loops::{dominant_sign, LinkStats, Loop, LoopScoreSeries};
use crate::model::{CausalGraph, Edge, EdgeKind, ModelDef, VariableKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimplifyError {
    #[error("{name} must be within [0, 1], got {value}")]
    ThresholdOutOfRange { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplifyParams {
    pub link_threshold: f64,
    pub loop_threshold: f64,
}

impl SimplifyParams {
    pub fn new(link_threshold: f64, loop_threshold: f64) -> Result<Self, SimplifyError> {
        let check = |name, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(value)
            } else {
                Err(SimplifyError::ThresholdOutOfRange { name, value })
            }
        };
        Ok(SimplifyParams {
            link_threshold: check("link threshold", link_threshold)?,
            loop_threshold: check("loop threshold", loop_threshold)?,
        })
    }
}

/// Variables eligible for a CLD: everything except constants and variables
/// nothing links into.
pub fn cld_universe(model: &ModelDef, graph: &CausalGraph) -> BTreeSet<String> {
    graph
        .edges
        .iter()
        .map(|e| &e.target)
        .filter(|name| !is_constant(model, name))
        .cloned()
        .collect()
}

fn is_constant(model: &ModelDef, name: &str) -> bool {
    model
        .variable(name)
        .is_some_and(|v| v.kind == VariableKind::Constant)
}

/// The variables a simplified diagram keeps.
///
/// A variable survives if some link into it varies by at least the link
/// threshold, or if it is a stock or flow on a loop whose average relative
/// magnitude reaches the loop threshold. Every flow of a surviving stock is
/// kept as well. Constants never are.
pub fn filter_variables(
    model: &ModelDef,
    graph: &CausalGraph,
    links: &[LinkStats],
    loops: &[Loop],
    series: &[LoopScoreSeries],
    params: SimplifyParams,
) -> BTreeSet<String> {
    let mut kept = BTreeSet::new();
    for stats in links {
        if stats.variance >= params.link_threshold {
            kept.insert(graph.edges[stats.edge].target.clone());
        }
    }
    for (lp, s) in loops.iter().zip(series) {
        if s.avg_magnitude >= params.loop_threshold {
            for name in &lp.nodes {
                let kind = model.variable(name).map(|v| v.kind);
                if matches!(kind, Some(VariableKind::Stock | VariableKind::Flow)) {
                    kept.insert(name.clone());
                }
            }
        }
    }
    let flows: Vec<String> = kept
        .iter()
        .filter_map(|name| model.variable(name))
        .filter(|v| v.is_stock())
        .flat_map(|v| v.inflows.iter().chain(&v.outflows).cloned())
        .collect();
    kept.extend(flows);
    kept.retain(|name| !is_constant(model, name));
    kept
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplifiedLink {
    pub source: String,
    pub target: String,
    /// Full-graph nodes from `source` to `target`; interior nodes are not kept.
    pub witness_path: Vec<String>,
    /// Full-graph edge ids along the witness.
    pub witness_edges: Vec<usize>,
    pub composite_scores: Vec<f64>,
    pub dominant_polarity: i8,
}

/// Kept-to-kept links whose interior avoids the kept set. Each source runs
/// one depth-first search with neighbors in lexicographic order; the first
/// path to reach a kept target is its witness. Paths from a variable back to
/// itself are not reported.
pub fn build_simplified_links(kept: &BTreeSet<String>, graph: &CausalGraph) -> Vec<(String, String, Vec<usize>)> {
    let adj = graph.adjacency();
    let is_kept: Vec<bool> = graph.nodes.iter().map(|n| kept.contains(n)).collect();
    let mut out = Vec::new();
    for source in kept {
        let Some(root) = graph.node_index(source) else {
            continue;
        };
        let mut visited = vec![false; graph.nodes.len()];
        let mut found: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        visited[root] = true;
        // explicit stack of (node, next neighbor position) keeps the path implicit
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        while let Some(&mut (u, ref mut next)) = stack.last_mut() {
            let Some(&w) = adj[u].get(*next) else {
                stack.pop();
                continue;
            };
            *next += 1;
            if is_kept[w] {
                if w != root && !found.contains_key(&w) {
                    let mut path: Vec<usize> = stack.iter().map(|&(n, _)| n).collect();
                    path.push(w);
                    found.insert(w, path);
                }
            } else if !visited[w] {
                visited[w] = true;
                stack.push((w, 0));
            }
        }
        for (target, path) in found {
            let edges = path
                .windows(2)
                .map(|p| graph.edge_id(&graph.nodes[p[0]], &graph.nodes[p[1]]).expect("path follows edges"))
                .collect();
            out.push((source.clone(), graph.nodes[target].clone(), edges));
        }
    }
    out
}

/// Product of relative link scores along `witness_edges`, per step.
pub fn composite_link_series(witness_edges: &[usize], links: &[LinkStats]) -> Vec<f64> {
    let steps = links.first().map_or(0, |l| l.relative_scores.len());
    (0..steps)
        .map(|k| witness_edges.iter().map(|&e| links[e].relative_scores[k]).product())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionReport {
    pub retained: Vec<String>,
    pub dropped: Vec<String>,
    /// Share of the summed average loop magnitude carried by retained loops.
    pub magnitude_fraction: f64,
}

/// A loop survives if all its stocks are kept and its kept members still
/// close into a cycle over simplified links.
pub fn retained_loop_report(
    kept: &BTreeSet<String>,
    links: &[SimplifiedLink],
    loops: &[Loop],
    series: &[LoopScoreSeries],
    model: &ModelDef,
) -> RetentionReport {
    let pairs: BTreeSet<(&str, &str)> = links.iter().map(|l| (l.source.as_str(), l.target.as_str())).collect();
    let mut report = RetentionReport {
        retained: Vec::new(),
        dropped: Vec::new(),
        magnitude_fraction: 1.0,
    };
    let (mut total, mut kept_mag) = (0.0, 0.0);
    for (lp, s) in loops.iter().zip(series) {
        let stocks_kept = lp
            .nodes
            .iter()
            .filter(|n| model.variable(n).is_some_and(|v| v.is_stock()))
            .all(|n| kept.contains(n));
        let members: Vec<&str> = lp.nodes.iter().filter(|n| kept.contains(*n)).map(String::as_str).collect();
        let closed = members.len() >= 2
            && (0..members.len()).all(|i| pairs.contains(&(members[i], members[(i + 1) % members.len()])));
        total += s.avg_magnitude;
        if stocks_kept && closed {
            kept_mag += s.avg_magnitude;
            report.retained.push(lp.id.clone());
        } else {
            report.dropped.push(lp.id.clone());
        }
    }
    if total > 0.0 {
        report.magnitude_fraction = kept_mag / total;
    } else if !loops.is_empty() {
        report.magnitude_fraction = report.retained.len() as f64 / loops.len() as f64;
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplifiedCLD {
    pub params: SimplifyParams,
    pub kept: Vec<String>,
    pub links: Vec<SimplifiedLink>,
    pub retained_loops: Vec<String>,
    pub retention: RetentionReport,
}

impl SimplifiedCLD {
    /// The diagram as a causal graph over the kept variables. Links standing
    /// for a single full-graph edge keep that edge's kind.
    pub fn graph(&self, full: &CausalGraph) -> CausalGraph {
        let edges = self
            .links
            .iter()
            .map(|l| Edge {
                source: l.source.clone(),
                target: l.target.clone(),
                kind: match l.witness_edges.as_slice() {
                    [e] => full.edges[*e].kind,
                    _ => EdgeKind::Dependency,
                },
            })
            .collect();
        CausalGraph::from_edges(self.kept.clone(), edges)
    }
}

/// Builds simplified links for `kept` and scores them.
pub fn assemble_cld(
    kept: BTreeSet<String>,
    graph: &CausalGraph,
    link_stats: &[LinkStats],
    loops: &[Loop],
    series: &[LoopScoreSeries],
    model: &ModelDef,
    params: SimplifyParams,
) -> SimplifiedCLD {
    let links: Vec<SimplifiedLink> = build_simplified_links(&kept, graph)
        .into_iter()
        .map(|(source, target, witness_edges)| {
            let composite_scores = composite_link_series(&witness_edges, link_stats);
            let mut witness_path = vec![source.clone()];
            witness_path.extend(witness_edges.iter().map(|&e| graph.edges[e].target.clone()));
            SimplifiedLink {
                dominant_polarity: dominant_sign(&composite_scores).unwrap_or(1),
                source,
                target,
                witness_path,
                witness_edges,
                composite_scores,
            }
        })
        .collect();
    let retention = retained_loop_report(&kept, &links, loops, series, model);
    SimplifiedCLD {
        params,
        kept: kept.into_iter().collect(),
        links,
        retained_loops: retention.retained.clone(),
        retention,
    }
}

/// Filters variables by `params` and assembles the simplified diagram.
pub fn simplify(
    model: &ModelDef,
    graph: &CausalGraph,
    link_stats: &[LinkStats],
    loops: &[Loop],
    series: &[LoopScoreSeries],
    params: SimplifyParams,
) -> SimplifiedCLD {
    let kept = filter_variables(model, graph, link_stats, loops, series, params);
    assemble_cld(kept, graph, link_stats, loops, series, model, params)
}

/// The unsimplified diagram: every variable of the CLD universe.
pub fn full_cld(
    model: &ModelDef,
    graph: &CausalGraph,
    link_stats: &[LinkStats],
    loops: &[Loop],
    series: &[LoopScoreSeries],
) -> SimplifiedCLD {
    let params = SimplifyParams {
        link_threshold: 0.0,
        loop_threshold: 0.0,
    };
    assemble_cld(cld_universe(model, graph), graph, link_stats, loops, series, model, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn graph(edges: &[(&str, &str)]) -> CausalGraph {
        let edges: Vec<Edge> = edges
            .iter()
            .map(|(s, t)| Edge {
                source: s.to_string(),
                target: t.to_string(),
                kind: EdgeKind::Dependency,
            })
            .collect();
        let mut nodes: Vec<String> = edges.iter().flat_map(|e| [e.source.clone(), e.target.clone()]).collect();
        nodes.sort();
        nodes.dedup();
        CausalGraph::from_edges(nodes, edges)
    }

    fn set(names: &[&str]) -> BTreeSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn paths(kept: &[&str], g: &CausalGraph) -> Vec<(String, String, Vec<String>)> {
        build_simplified_links(&set(kept), g)
            .into_iter()
            .map(|(s, t, edges)| {
                let mut p = vec![s.clone()];
                p.extend(edges.iter().map(|&e| g.edges[e].target.clone()));
                (s, t, p)
            })
            .collect()
    }

    #[test]
    fn params_are_range_checked() {
        assert!(SimplifyParams::new(0.0, 1.0).is_ok());
        assert!(SimplifyParams::new(2.0, 0.0).is_err());
        assert!(SimplifyParams::new(0.5, -0.1).is_err());
        assert!(SimplifyParams::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn chain_aggregates_through_dropped_variable() {
        let g = graph(&[("a", "x"), ("x", "b")]);
        let links = paths(&["a", "b"], &g);
        assert_eq!(links, vec![("a".into(), "b".into(), vec!["a".into(), "x".into(), "b".into()])]);
    }

    #[test]
    fn first_witness_is_lexicographic() {
        let g = graph(&[("a", "y"), ("y", "b"), ("a", "x"), ("x", "b")]);
        let links = paths(&["a", "b"], &g);
        assert_eq!(links.len(), 1);
        assert_eq!(links[0].2, vec!["a", "x", "b"]);
    }

    #[test]
    fn kept_nodes_block_paths() {
        let g = graph(&[("a", "m"), ("m", "b")]);
        let links = paths(&["a", "b", "m"], &g);
        let pairs: Vec<(&str, &str)> = links.iter().map(|l| (l.0.as_str(), l.1.as_str())).collect();
        assert_eq!(pairs, vec![("a", "m"), ("m", "b")]);
    }

    #[test]
    fn self_pairs_are_skipped() {
        let g = graph(&[("a", "x"), ("x", "a"), ("x", "b")]);
        let pairs: Vec<_> = paths(&["a", "b"], &g).into_iter().map(|l| (l.0, l.1)).collect();
        assert_eq!(pairs, vec![("a".to_string(), "b".to_string())]);
    }

    #[test]
    fn composite_is_a_product() {
        let stats = |edge, r: &[f64]| LinkStats {
            edge,
            relative_scores: r.to_vec(),
            variance: 0.0,
        };
        let links = [stats(0, &[0.5, 0.3, 1.0]), stats(1, &[-1.0, 0.0, 1.0])];
        assert_eq!(composite_link_series(&[0, 1], &links), vec![-0.5, 0.0, 1.0]);
        assert_eq!(composite_link_series(&[0], &links), vec![0.5, 0.3, 1.0]);
    }

    /// Reference: a fresh depth-first search for every ordered pair.
    fn per_pair_reference(kept: &BTreeSet<String>, g: &CausalGraph) -> Vec<(String, String, Vec<usize>)> {
        fn dfs(
            u: usize,
            goal: usize,
            adj: &[Vec<usize>],
            kept: &[bool],
            visited: &mut [bool],
            path: &mut Vec<usize>,
        ) -> bool {
            for &w in &adj[u] {
                if w == goal {
                    path.push(w);
                    return true;
                }
                if kept[w] || visited[w] {
                    continue;
                }
                visited[w] = true;
                path.push(w);
                if dfs(w, goal, adj, kept, visited, path) {
                    return true;
                }
                path.pop();
            }
            false
        }
        let adj = g.adjacency();
        let is_kept: Vec<bool> = g.nodes.iter().map(|n| kept.contains(n)).collect();
        let mut out = Vec::new();
        for s in kept {
            for t in kept {
                if s == t {
                    continue;
                }
                let (si, ti) = (g.node_index(s).unwrap(), g.node_index(t).unwrap());
                let mut visited = vec![false; g.nodes.len()];
                visited[si] = true;
                let mut path = vec![si];
                if dfs(si, ti, &adj, &is_kept, &mut visited, &mut path) {
                    let edges = path
                        .windows(2)
                        .map(|p| g.edge_id(&g.nodes[p[0]], &g.nodes[p[1]]).unwrap())
                        .collect();
                    out.push((s.clone(), t.clone(), edges));
                }
            }
        }
        out
    }

    fn arb_graph() -> impl Strategy<Value = (CausalGraph, BTreeSet<String>)> {
        (2usize..9).prop_flat_map(|n| {
            (
                proptest::collection::vec(any::<bool>(), n * n),
                proptest::collection::vec(any::<bool>(), n),
            )
                .prop_map(move |(adj, keep)| {
                    let name = |i: usize| format!("v{i}");
                    let mut edges = Vec::new();
                    for i in 0..n {
                        for j in 0..n {
                            if i != j && adj[i * n + j] {
                                edges.push(Edge {
                                    source: name(i),
                                    target: name(j),
                                    kind: EdgeKind::Dependency,
                                });
                            }
                        }
                    }
                    let nodes = (0..n).map(name).collect();
                    let kept = (0..n).filter(|&i| keep[i]).map(name).collect();
                    (CausalGraph::from_edges(nodes, edges), kept)
                })
        })
    }

    proptest! {
        #[test]
        fn single_search_matches_per_pair_search((g, kept) in arb_graph()) {
            prop_assert_eq!(build_simplified_links(&kept, &g), per_pair_reference(&kept, &g));
        }

        #[test]
        fn witnesses_replay((g, kept) in arb_graph()) {
            for (s, t, edges) in build_simplified_links(&kept, &g) {
                prop_assert_eq!(&g.edges[edges[0]].source, &s);
                prop_assert_eq!(&g.edges[*edges.last().unwrap()].target, &t);
                for pair in edges.windows(2) {
                    prop_assert_eq!(&g.edges[pair[0]].target, &g.edges[pair[1]].source);
                }
                for &e in &edges[1..] {
                    prop_assert!(!kept.contains(&g.edges[e].source));
                }
            }
        }

        #[test]
        fn keeping_everything_is_the_identity((g, _) in arb_graph()) {
            let all: BTreeSet<String> = g.nodes.iter().cloned().collect();
            let links = build_simplified_links(&all, &g);
            let got: Vec<(String, String)> = links.iter().map(|l| (l.0.clone(), l.1.clone())).collect();
            let want: Vec<(String, String)> = g.edges.iter().map(|e| (e.source.clone(), e.target.clone())).collect();
            prop_assert_eq!(got, want);
            prop_assert!(links.iter().all(|l| l.2.len() == 1));
        }
    }
}
