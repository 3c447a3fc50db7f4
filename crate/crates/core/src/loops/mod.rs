//! Feedback loop enumeration and dominance metrics: loop scores, relative
//! loop scores, relative link scores and their variance, and the dominance
//! profile that ranks loops by average contribution.

pub mod johnson;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::CausalGraph;
use crate::sim::{LinkScoreSeries, LtmRun};

pub use johnson::{elementary_cycles, CapExceeded};

pub const DEFAULT_LOOP_CAP: usize = 10_000;

/// Steps where the summed magnitude of all loop scores is below this are
/// treated as having no active loop.
pub const INACTIVE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LoopError {
    #[error("more than {0} feedback loops; raise the loop cap to analyze this model")]
    LoopCapExceeded(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Loop {
    /// `R<n>`/`B<n>` once ranked; empty straight out of enumeration.
    pub id: String,
    /// Members in traversal order, starting at the lexicographically smallest.
    pub nodes: Vec<String>,
    /// Edge ids; `edges[i]` runs from `nodes[i]` to `nodes[i + 1]` (wrapping).
    pub edges: Vec<usize>,
    pub static_polarity: i8,
}

impl Loop {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node sequence joined into a stable key, used for tie-breaking.
    pub fn signature(&self) -> String {
        self.nodes.join(" -> ")
    }
}

/// All elementary feedback loops of the graph, in lexicographic node order.
pub fn enumerate_loops(graph: &CausalGraph, cap: usize) -> Result<Vec<Loop>, LoopError> {
    let cycles = elementary_cycles(&graph.adjacency(), cap)
        .map_err(|CapExceeded(cap)| LoopError::LoopCapExceeded(cap))?;
    Ok(cycles
        .into_iter()
        .map(|cycle| {
            let nodes: Vec<String> = cycle.iter().map(|&i| graph.nodes[i].clone()).collect();
            let edges = (0..nodes.len())
                .map(|i| {
                    let next = &nodes[(i + 1) % nodes.len()];
                    graph.edge_id(&nodes[i], next).expect("cycle follows graph edges")
                })
                .collect();
            Loop {
                id: String::new(),
                nodes,
                edges,
                static_polarity: 1,
            }
        })
        .collect())
}

/// Per-step product of the loop's link scores.
pub fn loop_score(lp: &Loop, link_scores: &[LinkScoreSeries]) -> Vec<f64> {
    let steps = link_scores.first().map_or(0, |s| s.scores.len());
    (0..steps)
        .map(|k| lp.edges.iter().map(|&e| link_scores[e].scores[k]).product())
        .collect()
}

/// Each loop score divided by the summed magnitude of all loop scores at the
/// same step. Steps with no active loop yield all zeros.
pub fn relative_loop_scores(scores: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let steps = scores.first().map_or(0, Vec::len);
    let mut relative = vec![vec![0.0; steps]; scores.len()];
    for k in 0..steps {
        let total: f64 = scores.iter().map(|s| s[k].abs()).sum();
        if total < INACTIVE_TOLERANCE || !total.is_finite() {
            continue;
        }
        for (rel, s) in relative.iter_mut().zip(scores) {
            rel[k] = s[k] / total;
        }
    }
    relative
}

/// Steps at which no loop is active.
pub fn inactive_steps(scores: &[Vec<f64>]) -> Vec<usize> {
    if scores.is_empty() {
        return Vec::new();
    }
    let steps = scores[0].len();
    (0..steps)
        .filter(|&k| {
            let total: f64 = scores.iter().map(|s| s[k].abs()).sum();
            total < INACTIVE_TOLERANCE || !total.is_finite()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkStats {
    pub edge: usize,
    pub relative_scores: Vec<f64>,
    /// max |relative| - min |relative| over the run.
    pub variance: f64,
}

/// Link scores normalized over all inputs of their target, plus the spread
/// of each normalized series' magnitude.
pub fn relative_link_scores(link_scores: &[LinkScoreSeries], graph: &CausalGraph) -> Vec<LinkStats> {
    let steps = link_scores.first().map_or(0, |s| s.scores.len());
    let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); graph.nodes.len()];
    for (id, e) in graph.edges.iter().enumerate() {
        if let Some(t) = graph.node_index(&e.target) {
            incoming[t].push(id);
        }
    }
    let mut stats: Vec<LinkStats> = link_scores
        .iter()
        .map(|s| LinkStats {
            edge: s.edge,
            relative_scores: vec![0.0; steps],
            variance: 0.0,
        })
        .collect();
    for inputs in &incoming {
        for k in 0..steps {
            let total: f64 = inputs.iter().map(|&e| link_scores[e].scores[k].abs()).sum();
            if total == 0.0 || !total.is_finite() {
                continue;
            }
            for &e in inputs {
                stats[e].relative_scores[k] = link_scores[e].scores[k] / total;
            }
        }
    }
    for s in &mut stats {
        s.variance = magnitude_spread(&s.relative_scores);
    }
    stats
}

fn magnitude_spread(series: &[f64]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in series {
        lo = lo.min(v.abs());
        hi = hi.max(v.abs());
    }
    if series.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// First step with a non-zero score.
pub fn activation_step(scores: &[f64]) -> Option<usize> {
    scores.iter().position(|&s| s != 0.0)
}

/// Mean of |relative| from the activation step on; 0 for loops that never
/// activate.
pub fn average_relative_magnitude(relative: &[f64], activation: Option<usize>) -> f64 {
    match activation {
        Some(start) if start < relative.len() => {
            let tail = &relative[start..];
            tail.iter().map(|v| v.abs()).sum::<f64>() / tail.len() as f64
        }
        _ => 0.0,
    }
}

/// Sign held for the majority of non-zero entries; `None` if all are zero.
/// Ties go positive.
pub fn dominant_sign(series: &[f64]) -> Option<i8> {
    let pos = series.iter().filter(|&&v| v > 0.0).count();
    let neg = series.iter().filter(|&&v| v < 0.0).count();
    match (pos, neg) {
        (0, 0) => None,
        (p, n) if n > p => Some(-1),
        _ => Some(1),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopScoreSeries {
    pub loop_id: String,
    pub scores: Vec<f64>,
    pub relative: Vec<f64>,
    pub avg_magnitude: f64,
    pub activation_step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub loop_id: String,
    pub avg_magnitude: f64,
    pub relative: Vec<f64>,
}

/// Loops ranked by average relative magnitude, largest first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DominanceProfile {
    pub rows: Vec<ProfileRow>,
}

/// Orders loop ids by polarity prefix, then numerically (`R2` before `R10`).
pub fn compare_loop_ids(a: &str, b: &str) -> Ordering {
    let split = |id: &str| {
        let digits = id.trim_start_matches(|c: char| !c.is_ascii_digit());
        let prefix = &id[..id.len() - digits.len()];
        (prefix.to_string(), digits.parse::<u64>().unwrap_or(0), id.to_string())
    };
    split(a).cmp(&split(b))
}

/// Assigns `R<n>`/`B<n>` ids and sorts the profile rows.
///
/// A loop's polarity is the sign its score holds for most active steps
/// (falling back to the static polarity for loops that never activate).
/// Numbering within each polarity follows average magnitude, largest first,
/// with ties broken by the loop's node sequence.
pub fn dominance_profile(loops: &mut [Loop], series: &mut [LoopScoreSeries]) -> DominanceProfile {
    let mut order: Vec<usize> = (0..loops.len()).collect();
    order.sort_by(|&a, &b| {
        series[b]
            .avg_magnitude
            .total_cmp(&series[a].avg_magnitude)
            .then_with(|| loops[a].nodes.cmp(&loops[b].nodes))
    });
    let (mut reinforcing, mut balancing) = (0, 0);
    for &i in &order {
        let polarity = dominant_sign(&series[i].scores).unwrap_or(loops[i].static_polarity);
        let id = if polarity < 0 {
            balancing += 1;
            format!("B{balancing}")
        } else {
            reinforcing += 1;
            format!("R{reinforcing}")
        };
        loops[i].id = id.clone();
        series[i].loop_id = id;
    }
    let mut rows: Vec<ProfileRow> = series
        .iter()
        .map(|s| ProfileRow {
            loop_id: s.loop_id.clone(),
            avg_magnitude: s.avg_magnitude,
            relative: s.relative.clone(),
        })
        .collect();
    rows.sort_by(|a, b| {
        b.avg_magnitude
            .total_cmp(&a.avg_magnitude)
            .then_with(|| compare_loop_ids(&a.loop_id, &b.loop_id))
    });
    DominanceProfile { rows }
}

/// Everything the loop-level analysis produces for one run.
#[derive(Debug, Clone)]
pub struct LoopAnalysis {
    pub loops: Vec<Loop>,
    /// Parallel to `loops`.
    pub series: Vec<LoopScoreSeries>,
    /// Parallel to the graph's edges.
    pub links: Vec<LinkStats>,
    pub profile: DominanceProfile,
    pub inactive_steps: Vec<usize>,
}

impl LoopAnalysis {
    pub fn loop_by_id(&self, id: &str) -> Option<(&Loop, &LoopScoreSeries)> {
        let i = self.loops.iter().position(|l| l.id == id)?;
        Some((&self.loops[i], &self.series[i]))
    }
}

pub fn analyze_loops(run: &LtmRun, cap: usize) -> Result<LoopAnalysis, LoopError> {
    let mut loops = enumerate_loops(&run.graph, cap)?;
    let edge_signs: Vec<i8> = run
        .link_scores
        .iter()
        .map(|s| dominant_sign(&s.scores).unwrap_or(1))
        .collect();
    for lp in &mut loops {
        lp.static_polarity = lp.edges.iter().map(|&e| edge_signs[e]).product();
    }
    let scores: Vec<Vec<f64>> = loops.iter().map(|l| loop_score(l, &run.link_scores)).collect();
    let relative = relative_loop_scores(&scores);
    let inactive_steps = inactive_steps(&scores);
    let mut series: Vec<LoopScoreSeries> = scores
        .into_iter()
        .zip(relative)
        .map(|(scores, relative)| {
            let activation_step = activation_step(&scores);
            LoopScoreSeries {
                loop_id: String::new(),
                avg_magnitude: average_relative_magnitude(&relative, activation_step),
                scores,
                relative,
                activation_step,
            }
        })
        .collect();
    let profile = dominance_profile(&mut loops, &mut series);
    let links = relative_link_scores(&run.link_scores, &run.graph);
    Ok(LoopAnalysis {
        loops,
        series,
        links,
        profile,
        inactive_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Edge, EdgeKind};

    fn series(edge: usize, scores: &[f64]) -> LinkScoreSeries {
        LinkScoreSeries {
            edge,
            scores: scores.to_vec(),
        }
    }

    fn two_link_loop() -> Loop {
        Loop {
            id: String::new(),
            nodes: vec!["a".into(), "b".into()],
            edges: vec![0, 1],
            static_polarity: 1,
        }
    }

    #[test]
    fn loop_score_is_the_product() {
        let links = [series(0, &[1.0, 0.0, 2.0]), series(1, &[-1.0, 5.0, 0.5])];
        assert_eq!(loop_score(&two_link_loop(), &links), vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn relative_loop_score_examples() {
        assert_eq!(relative_loop_scores(&[vec![3.0], vec![-1.0]]), vec![vec![0.75], vec![-0.25]]);
        assert_eq!(relative_loop_scores(&[vec![0.0, -2.0]]), vec![vec![0.0, -1.0]]);
        assert_eq!(inactive_steps(&[vec![0.0, -2.0], vec![0.0, 1.0]]), vec![0]);
    }

    #[test]
    fn average_magnitude_starts_at_activation() {
        let rel = [0.0, 0.0, 0.5, 0.7];
        let avg = average_relative_magnitude(&rel, activation_step(&rel));
        assert!((avg - 0.6).abs() < 1e-12);
        assert_eq!(average_relative_magnitude(&[0.0, 0.0], None), 0.0);
        assert_eq!(average_relative_magnitude(&[0.0, 1.0, -1.0], Some(1)), 1.0);
    }

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

    #[test]
    fn relative_link_scores_and_variance() {
        // x -> z and y -> z
        let g = graph(&[("x", "z"), ("y", "z")]);
        let links = [series(0, &[1.0, 1.0, 0.0]), series(1, &[1.0, 3.0, 0.0])];
        let stats = relative_link_scores(&links, &g);
        assert_eq!(stats[0].relative_scores, vec![0.5, 0.25, 0.0]);
        assert_eq!(stats[1].relative_scores, vec![0.5, 0.75, 0.0]);
        assert_eq!(stats[0].variance, 0.5);
        assert_eq!(stats[1].variance, 0.75);
    }

    #[test]
    fn single_input_link_has_unit_relative_score() {
        let g = graph(&[("x", "z")]);
        let links = [series(0, &[0.3, -2.0, 7.0])];
        let stats = relative_link_scores(&links, &g);
        assert_eq!(stats[0].relative_scores, vec![1.0, -1.0, 1.0]);
        assert_eq!(stats[0].variance, 0.0);
    }

    #[test]
    fn variance_is_max_minus_min_magnitude() {
        assert!((magnitude_spread(&[0.5, 0.5, -0.9, 0.9]) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn ids_follow_polarity_and_rank() {
        let mk = |nodes: &[&str]| Loop {
            id: String::new(),
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            edges: vec![],
            static_polarity: 1,
        };
        let mut loops = vec![mk(&["a", "b"]), mk(&["a", "c"]), mk(&["b", "c"]), mk(&["c", "d"])];
        let s = |scores: &[f64], avg: f64| LoopScoreSeries {
            loop_id: String::new(),
            scores: scores.to_vec(),
            relative: vec![],
            avg_magnitude: avg,
            activation_step: Some(0),
        };
        let mut series = vec![
            s(&[1.0, 1.0, -1.0], 0.2),
            s(&[-1.0, -1.0], 0.5),
            s(&[2.0], 0.5),
            s(&[1.0], 0.2),
        ];
        let profile = dominance_profile(&mut loops, &mut series);
        let ids: Vec<&str> = loops.iter().map(|l| l.id.as_str()).collect();
        assert_eq!(ids, vec!["R2", "B1", "R1", "R3"]);
        let rows: Vec<&str> = profile.rows.iter().map(|r| r.loop_id.as_str()).collect();
        assert_eq!(rows, vec!["B1", "R1", "R2", "R3"]);
    }

    #[test]
    fn empty_loop_set_gives_empty_profile() {
        assert!(dominance_profile(&mut [], &mut []).rows.is_empty());
    }

    #[test]
    fn natural_id_order() {
        assert_eq!(compare_loop_ids("R2", "R10"), Ordering::Less);
        assert_eq!(compare_loop_ids("B3", "R1"), Ordering::Less);
    }
}
