//! Stock-and-flow diagram geometry in pixel coordinates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analysis::Analysis;
use crate::layout::{curve_edges, layout_graph, EdgeShape, LayoutConfig, LayoutError};
use crate::model::{EdgeKind, Point, VariableKind};

/// Pixels per layout unit when a diagram is drawn from a computed layout.
pub const PIXELS_PER_UNIT: f64 = 120.0;
/// Blank border around every diagram.
pub const MARGIN: f64 = 60.0;
/// Distance from a valve to the cloud standing in for a missing stock.
pub const CLOUD_OFFSET: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfdNode {
    pub name: String,
    pub kind: VariableKind,
    pub position: Point,
}

/// A dependency connector, routed like a CLD edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfdConnector {
    pub edge: usize,
    pub source: String,
    pub target: String,
    pub shape: EdgeShape,
}

/// One end of a flow pipe: a stock, or a cloud when `stock` is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowEnd {
    pub stock: Option<String>,
    pub point: Point,
    /// Flow-to-stock edge whose score colors this half of the pipe.
    pub edge: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfdFlow {
    pub flow: String,
    pub valve: Point,
    pub from: FlowEnd,
    pub to: FlowEnd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfdGeometry {
    /// True when positions come from the model's own diagram.
    pub from_view: bool,
    pub nodes: Vec<SfdNode>,
    pub connectors: Vec<SfdConnector>,
    pub flows: Vec<SfdFlow>,
    pub width: f64,
    pub height: f64,
}

impl SfdGeometry {
    pub fn position(&self, name: &str) -> Option<Point> {
        self.nodes.iter().find(|n| n.name == name).map(|n| n.position)
    }
}

fn away_from(valve: Point, other: Option<Point>, fallback: f64) -> Point {
    match other {
        Some(p) => {
            let (dx, dy) = (valve.x - p.x, valve.y - p.y);
            let len = dx.hypot(dy);
            if len < 1e-9 {
                Point::new(valve.x + fallback, valve.y)
            } else {
                Point::new(valve.x + dx / len * CLOUD_OFFSET, valve.y + dy / len * CLOUD_OFFSET)
            }
        }
        None => Point::new(valve.x + fallback, valve.y),
    }
}

/// Positions from the model's diagram when every variable has one, else a
/// stress layout of the causal graph scaled to pixels.
pub fn build_sfd(analysis: &Analysis, config: &LayoutConfig) -> Result<SfdGeometry, LayoutError> {
    let model = &analysis.model;
    let graph = &analysis.run.graph;
    let view: Option<BTreeMap<String, Point>> = model
        .variables
        .iter()
        .map(|v| v.position.map(|p| (v.name.clone(), p)))
        .collect();
    let from_view = view.is_some();
    let mut positions: BTreeMap<String, Point> = match view {
        Some(p) => p,
        None => {
            let config = config.clone().with_label_boxes(graph.nodes.iter());
            let layout = layout_graph(graph, &BTreeMap::new(), &config)?;
            layout
                .nodes
                .iter()
                .zip(&layout.positions)
                .map(|(n, p)| (n.clone(), Point::new(p.x * PIXELS_PER_UNIT, p.y * PIXELS_PER_UNIT)))
                .collect()
        }
    };
    // variables outside the graph (none in practice) still need a spot
    for v in &model.variables {
        positions.entry(v.name.clone()).or_insert(Point::new(0.0, 0.0));
    }

    let mut flows = Vec::new();
    for v in model.variables.iter().filter(|v| v.kind == VariableKind::Flow) {
        let valve = positions[&v.name];
        let (fed, drained) = model.stocks_of_flow(&v.name);
        let end = |stock: Option<&&str>| {
            stock.map(|s| FlowEnd {
                stock: Some(s.to_string()),
                point: positions[*s],
                edge: graph.edge_id(&v.name, s),
            })
        };
        let from = end(drained.first());
        let to = end(fed.first());
        let cloud = |other: &Option<FlowEnd>, fallback| FlowEnd {
            stock: None,
            point: away_from(valve, other.as_ref().map(|e| e.point), fallback),
            edge: None,
        };
        let (from, to) = match (from, to) {
            (Some(f), Some(t)) => (f, t),
            (Some(f), None) => {
                let t = cloud(&Some(f.clone()), CLOUD_OFFSET);
                (f, t)
            }
            (None, Some(t)) => {
                let f = cloud(&Some(t.clone()), -CLOUD_OFFSET);
                (f, t)
            }
            (None, None) => (cloud(&None, -CLOUD_OFFSET), cloud(&None, CLOUD_OFFSET)),
        };
        flows.push(SfdFlow {
            flow: v.name.clone(),
            valve,
            from,
            to,
        });
    }

    // shift everything, clouds included, into the positive quadrant
    let all_points = positions
        .values()
        .copied()
        .chain(flows.iter().flat_map(|f| [f.from.point, f.to.point]));
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in all_points {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let shift = |p: Point| Point::new(p.x - x0 + MARGIN, p.y - y0 + MARGIN);
    for p in positions.values_mut() {
        *p = shift(*p);
    }
    for f in &mut flows {
        f.valve = shift(f.valve);
        f.from.point = shift(f.from.point);
        f.to.point = shift(f.to.point);
    }

    let node_points: Vec<Point> = graph.nodes.iter().map(|n| positions[n]).collect();
    let dependency: Vec<(usize, (usize, usize))> = graph
        .edges
        .iter()
        .enumerate()
        .filter(|(_, e)| e.kind == EdgeKind::Dependency)
        .filter_map(|(id, e)| Some((id, (graph.node_index(&e.source)?, graph.node_index(&e.target)?))))
        .collect();
    let cycles: Vec<Vec<usize>> = analysis
        .loops
        .loops
        .iter()
        .map(|l| l.nodes.iter().filter_map(|n| graph.node_index(n)).collect())
        .collect();
    let pairs: Vec<(usize, usize)> = dependency.iter().map(|(_, p)| *p).collect();
    let routed = curve_edges(&node_points, &pairs, &cycles);
    let connectors = dependency
        .iter()
        .zip(routed)
        .map(|((id, _), r)| SfdConnector {
            edge: *id,
            source: graph.edges[*id].source.clone(),
            target: graph.edges[*id].target.clone(),
            shape: r.geometry.shape,
        })
        .collect();

    let nodes = model
        .variables
        .iter()
        .map(|v| SfdNode {
            name: v.name.clone(),
            kind: v.kind,
            position: positions[&v.name],
        })
        .collect();
    Ok(SfdGeometry {
        from_view,
        nodes,
        connectors,
        flows,
        width: (x1 - x0) + 2.0 * MARGIN,
        height: (y1 - y0) + 2.0 * MARGIN,
    })
}
