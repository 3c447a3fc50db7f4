//! Diagram layout: stress-minimizing node placement, overlap removal and
//! loop-following curved edges.

pub mod curve;
pub mod kk;
pub mod overlap;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loops::{elementary_cycles, DEFAULT_LOOP_CAP};
use crate::model::{CausalGraph, Point};

pub use curve::{curve_edges, EdgeGeometry, EdgeShape};
pub use kk::{shortest_path_matrix, stress};
pub use overlap::{overlapping_pairs, remove_overlaps, NodeBox, OverlapUnresolved};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LayoutError {
    #[error("invalid layout configuration: {0}")]
    InvalidConfig(String),
    #[error("layout produced non-finite coordinates")]
    NonFiniteGeometry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayoutConfig {
    /// Target distance per graph hop, in layout units.
    pub ideal_edge_length: f64,
    pub max_iterations: usize,
    /// Relative stress improvement below which descent stops.
    pub stress_tolerance: f64,
    pub rng_seed: u64,
    /// Seed perturbation amplitude, as a fraction of the ideal edge length.
    pub jitter: f64,
    pub default_box: NodeBox,
    pub node_boxes: BTreeMap<String, NodeBox>,
    pub loop_cap: usize,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            ideal_edge_length: 1.0,
            max_iterations: 1000,
            stress_tolerance: 1e-9,
            rng_seed: 0,
            jitter: 1e-3,
            default_box: NodeBox {
                width: 0.5,
                height: 0.25,
            },
            node_boxes: BTreeMap::new(),
            loop_cap: DEFAULT_LOOP_CAP,
        }
    }
}

impl LayoutConfig {
    pub fn validate(&self) -> Result<(), LayoutError> {
        let bad = |msg: &str| Err(LayoutError::InvalidConfig(msg.to_string()));
        if !(self.ideal_edge_length > 0.0 && self.ideal_edge_length.is_finite()) {
            return bad("ideal edge length must be positive");
        }
        if self.max_iterations == 0 {
            return bad("max iterations must be at least 1");
        }
        if self.stress_tolerance.is_nan() || self.stress_tolerance <= 0.0 {
            return bad("stress tolerance must be positive");
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return bad("jitter must be non-negative");
        }
        let boxes = std::iter::once(&self.default_box).chain(self.node_boxes.values());
        if boxes.into_iter().any(|b| !(b.width >= 0.0 && b.height >= 0.0)) {
            return bad("node boxes must have non-negative extents");
        }
        Ok(())
    }

    pub fn box_for(&self, name: &str) -> NodeBox {
        self.node_boxes.get(name).copied().unwrap_or(self.default_box)
    }

    /// Sizes every node's box from its label.
    pub fn with_label_boxes<'a>(mut self, names: impl IntoIterator<Item = &'a String>) -> Self {
        for name in names {
            self.node_boxes.insert(name.clone(), label_box(name));
        }
        self
    }
}

/// Approximate extent of a variable label in layout units.
pub fn label_box(name: &str) -> NodeBox {
    NodeBox {
        width: 0.12 + 0.065 * name.chars().count() as f64,
        height: 0.25,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum LayoutWarning {
    OverlapUnresolved { pairs: Vec<(String, String)> },
    FlatArc { source: String, target: String, radius: f64, chord: f64 },
    LoopCapExceeded { cap: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutResult {
    pub nodes: Vec<String>,
    /// Parallel to `nodes`.
    pub positions: Vec<Point>,
    pub edges: Vec<EdgeGeometry>,
    pub initial_stress: f64,
    /// Stress when descent stopped, before overlap removal and packing.
    pub final_stress: f64,
    pub stress_history: Vec<f64>,
    pub warnings: Vec<LayoutWarning>,
}

impl LayoutResult {
    pub fn position(&self, name: &str) -> Option<Point> {
        self.nodes.iter().position(|n| n == name).map(|i| self.positions[i])
    }
}

/// Evenly spaced circle by node order, one ideal length between neighbors.
pub fn circle_seed(n: usize, ideal: f64) -> Vec<Point> {
    if n < 2 {
        return vec![Point::new(0.0, 0.0); n];
    }
    let radius = ideal / (2.0 * (std::f64::consts::PI / n as f64).sin());
    (0..n)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / n as f64;
            Point::new(radius * a.cos(), radius * a.sin())
        })
        .collect()
}

/// Diagram positions rescaled so the mean edge length equals `ideal`.
/// `None` when some node has no position or no edge has positive length.
pub fn scaled_seed(nodes: &[String], edges: &[(usize, usize)], given: &BTreeMap<String, Point>, ideal: f64) -> Option<Vec<Point>> {
    let points: Vec<Point> = nodes.iter().map(|n| given.get(n).copied()).collect::<Option<_>>()?;
    let lengths: Vec<f64> = edges
        .iter()
        .map(|&(s, t)| (points[s].x - points[t].x).hypot(points[s].y - points[t].y))
        .filter(|&l| l > 0.0)
        .collect();
    if lengths.is_empty() {
        return None;
    }
    let scale = ideal / (lengths.iter().sum::<f64>() / lengths.len() as f64);
    Some(points.iter().map(|p| Point::new(p.x * scale, p.y * scale)).collect())
}

/// Shifts each component so they sit side by side, left to right, separated
/// by `gutter`, with their tops aligned.
fn pack_components(positions: &mut [Point], comps: &[Vec<usize>], boxes: &[NodeBox], gutter: f64) {
    let mut cursor = 0.0;
    for comp in comps {
        let (mut x0, mut x1, mut y0) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY);
        for &i in comp {
            x0 = x0.min(positions[i].x - boxes[i].width / 2.0);
            x1 = x1.max(positions[i].x + boxes[i].width / 2.0);
            y0 = y0.min(positions[i].y - boxes[i].height / 2.0);
        }
        for &i in comp {
            positions[i].x += cursor - x0;
            positions[i].y -= y0;
        }
        cursor += (x1 - x0) + gutter;
    }
}

/// Lays out `graph`, seeding from `seeds` when every node has one.
pub fn layout_graph(graph: &CausalGraph, seeds: &BTreeMap<String, Point>, config: &LayoutConfig) -> Result<LayoutResult, LayoutError> {
    config.validate()?;
    let n = graph.nodes.len();
    let ideal = config.ideal_edge_length;
    let edges: Vec<(usize, usize)> = graph
        .edges
        .iter()
        .filter_map(|e| Some((graph.node_index(&e.source)?, graph.node_index(&e.target)?)))
        .collect();
    let boxes: Vec<NodeBox> = graph.nodes.iter().map(|n| config.box_for(n)).collect();
    let dist = shortest_path_matrix(&kk::undirected(n, &edges));

    let mut start = scaled_seed(&graph.nodes, &edges, seeds, ideal).unwrap_or_else(|| circle_seed(n, ideal));
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    for p in &mut start {
        p.x += rng.gen_range(-1.0..=1.0) * config.jitter * ideal;
        p.y += rng.gen_range(-1.0..=1.0) * config.jitter * ideal;
    }

    let descent = kk::kamada_kawai(start, &dist, ideal, config.max_iterations, config.stress_tolerance);
    let mut positions = descent.positions;
    let history = descent.stress_history;
    if positions.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) || history.iter().any(|s| !s.is_finite()) {
        return Err(LayoutError::NonFiniteGeometry);
    }

    let comps = kk::components(&dist);
    pack_components(&mut positions, &comps, &boxes, ideal);

    let mut warnings = Vec::new();
    let name_pair = |(a, b): (usize, usize)| (graph.nodes[a].clone(), graph.nodes[b].clone());
    positions = match remove_overlaps(positions, &boxes) {
        Ok(p) => p,
        Err(unresolved) => {
            warnings.push(LayoutWarning::OverlapUnresolved {
                pairs: unresolved.pairs.iter().copied().map(name_pair).collect(),
            });
            unresolved.best
        }
    };

    let cycles = match elementary_cycles(&graph.adjacency(), config.loop_cap) {
        Ok(c) => c,
        Err(_) => {
            warnings.push(LayoutWarning::LoopCapExceeded { cap: config.loop_cap });
            Vec::new()
        }
    };
    let routed = curve_edges(&positions, &edges, &cycles);
    for r in &routed {
        if let EdgeShape::Arc { radius, .. } = r.geometry.shape {
            if r.flat {
                let (s, t) = (positions[r.geometry.source], positions[r.geometry.target]);
                let (source, target) = name_pair((r.geometry.source, r.geometry.target));
                warnings.push(LayoutWarning::FlatArc {
                    source,
                    target,
                    radius,
                    chord: (s.x - t.x).hypot(s.y - t.y),
                });
            }
        }
    }

    Ok(LayoutResult {
        nodes: graph.nodes.clone(),
        positions,
        edges: routed.into_iter().map(|r| r.geometry).collect(),
        initial_stress: history[0],
        final_stress: *history.last().unwrap(),
        stress_history: history,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Edge, EdgeKind};

    fn ring(n: usize) -> CausalGraph {
        let name = |i: usize| format!("n{i}");
        let edges = (0..n)
            .map(|i| Edge {
                source: name(i),
                target: name((i + 1) % n),
                kind: EdgeKind::Dependency,
            })
            .collect();
        CausalGraph::from_edges((0..n).map(name).collect(), edges)
    }

    fn tiny_boxes() -> LayoutConfig {
        LayoutConfig {
            default_box: NodeBox {
                width: 0.1,
                height: 0.1,
            },
            ..LayoutConfig::default()
        }
    }

    fn edge_length_cv(result: &LayoutResult, graph: &CausalGraph) -> f64 {
        let lengths: Vec<f64> = graph
            .edges
            .iter()
            .map(|e| {
                let (a, b) = (result.position(&e.source).unwrap(), result.position(&e.target).unwrap());
                (a.x - b.x).hypot(a.y - b.y)
            })
            .collect();
        let mean = lengths.iter().sum::<f64>() / lengths.len() as f64;
        let var = lengths.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / lengths.len() as f64;
        var.sqrt() / mean
    }

    fn collinear(graph: &CausalGraph) -> BTreeMap<String, Point> {
        graph
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), Point::new(i as f64 * 40.0, 100.0)))
            .collect()
    }

    #[test]
    fn four_cycle_from_collinear_seed() {
        let g = ring(4);
        let out = layout_graph(&g, &collinear(&g), &tiny_boxes()).unwrap();
        assert!(edge_length_cv(&out, &g) < 0.05);
        assert!(out.stress_history.len() <= 1001);
        assert!(out.final_stress <= out.initial_stress);
    }

    #[test]
    fn six_cycle_from_collinear_seed() {
        let g = ring(6);
        let out = layout_graph(&g, &collinear(&g), &tiny_boxes()).unwrap();
        assert!(edge_length_cv(&out, &g) < 0.10);
    }

    #[test]
    fn reruns_are_bit_identical() {
        let g = ring(5);
        let a = layout_graph(&g, &BTreeMap::new(), &LayoutConfig::default()).unwrap();
        let b = layout_graph(&g, &BTreeMap::new(), &LayoutConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn components_are_packed_left_to_right() {
        let mut edges = ring(3).edges;
        edges.push(Edge {
            source: "z0".into(),
            target: "z1".into(),
            kind: EdgeKind::Dependency,
        });
        let nodes = ["n0", "n1", "n2", "z0", "z1"].map(String::from).to_vec();
        let g = CausalGraph::from_edges(nodes, edges);
        let out = layout_graph(&g, &BTreeMap::new(), &tiny_boxes()).unwrap();
        let max_left = (0..3).map(|i| out.positions[i].x).fold(f64::MIN, f64::max);
        let min_right = (3..5).map(|i| out.positions[i].x).fold(f64::MAX, f64::min);
        assert!(min_right - max_left >= 1.0);
    }

    #[test]
    fn no_boxes_overlap_after_layout() {
        let g = ring(6);
        let config = LayoutConfig::default().with_label_boxes(["a_long_variable_name".to_string()].iter());
        let config = LayoutConfig {
            default_box: NodeBox {
                width: 1.6,
                height: 0.4,
            },
            ..config
        };
        let out = layout_graph(&g, &BTreeMap::new(), &config).unwrap();
        let boxes: Vec<NodeBox> = g.nodes.iter().map(|n| config.box_for(n)).collect();
        assert!(overlapping_pairs(&out.positions, &boxes).is_empty());
        assert!(out.warnings.iter().all(|w| !matches!(w, LayoutWarning::OverlapUnresolved { .. })));
    }

    #[test]
    fn ring_edges_are_arcs() {
        let g = ring(4);
        let out = layout_graph(&g, &BTreeMap::new(), &tiny_boxes()).unwrap();
        assert!(out.edges.iter().all(|e| matches!(e.shape, EdgeShape::Arc { .. })));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let g = ring(3);
        let bad = LayoutConfig {
            max_iterations: 0,
            ..LayoutConfig::default()
        };
        assert!(matches!(layout_graph(&g, &BTreeMap::new(), &bad), Err(LayoutError::InvalidConfig(_))));
    }

    #[test]
    fn circle_seed_spacing() {
        let p = circle_seed(6, 1.0);
        let d = (p[0].x - p[1].x).hypot(p[0].y - p[1].y);
        assert!((d - 1.0).abs() < 1e-12);
        assert_eq!(circle_seed(1, 1.0), vec![Point::new(0.0, 0.0)]);
    }
}
