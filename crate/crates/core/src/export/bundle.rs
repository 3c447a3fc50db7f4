//! The JSON analysis bundle consumed by the explorer.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::analysis::Analysis;
use crate::layout::{layout_graph, LayoutConfig, LayoutError, LayoutResult, LayoutWarning};
use crate::model::{CausalGraph, EdgeKind, Point, SimSpecs, VariableKind};
use crate::simplify::{cld_universe, SimplifiedCLD, SimplifyParams};

use super::sfd::{build_sfd, SfdGeometry, PIXELS_PER_UNIT};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableInfo {
    pub name: String,
    pub kind: VariableKind,
    pub equation: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inflows: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outflows: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub name: String,
    pub variables: Vec<VariableInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub id: usize,
    pub source: String,
    pub target: String,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphInfo {
    pub nodes: Vec<String>,
    pub edges: Vec<GraphEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkInfo {
    /// Index into `graph.edges`.
    pub id: usize,
    pub source: String,
    pub target: String,
    pub scores: Vec<f64>,
    pub relative: Vec<f64>,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopInfo {
    pub id: String,
    pub nodes: Vec<String>,
    pub edges: Vec<usize>,
    pub static_polarity: i8,
    pub scores: Vec<f64>,
    pub relative: Vec<f64>,
    pub avg_magnitude: f64,
    pub activation_step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub loop_id: String,
    pub avg_magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CldLink {
    pub source: String,
    pub target: String,
    pub witness_path: Vec<String>,
    pub witness_edges: Vec<usize>,
    pub composite_scores: Vec<f64>,
    pub dominant_polarity: i8,
}

/// One drawn CLD: the kept variables, their aggregated links and a layout
/// in pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CldVariant {
    pub link_threshold: f64,
    pub loop_threshold: f64,
    pub kept: Vec<String>,
    pub links: Vec<CldLink>,
    pub retained_loops: Vec<String>,
    pub retained_magnitude_fraction: f64,
    pub layout: LayoutResult,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CldSet {
    pub full: CldVariant,
    #[serde(default)]
    pub variants: Vec<CldVariant>,
}

/// What a client needs to re-run the threshold filter itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplificationInputs {
    /// Non-constant variables with at least one incoming link.
    pub universe: Vec<String>,
    pub stocks: Vec<String>,
    pub flows: Vec<String>,
    pub constants: Vec<String>,
    /// Flows of each stock (inflows then outflows).
    pub stock_flows: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisBundle {
    pub schema_version: String,
    pub model: ModelInfo,
    pub sim_specs: SimSpecs,
    /// T + 1 time points.
    pub times: Vec<f64>,
    pub trajectories: BTreeMap<String, Vec<f64>>,
    pub graph: GraphInfo,
    pub links: Vec<LinkInfo>,
    pub loops: Vec<LoopInfo>,
    pub dominance_profile: Vec<ProfileEntry>,
    /// Steps where no loop is active.
    pub inactive_steps: Vec<usize>,
    /// Steps whose change crosses a STEP or PULSE switch.
    pub discontinuity_steps: Vec<usize>,
    pub sfd: SfdGeometry,
    pub cld: CldSet,
    pub simplification: SimplificationInputs,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BundleOptions {
    pub layout: LayoutConfig,
    /// Extra simplified diagrams to precompute.
    pub variants: Vec<SimplifyParams>,
}

/// Lays out a CLD, seeded from the SFD, and converts it to pixels.
pub fn cld_variant(
    cld: &SimplifiedCLD,
    full_graph: &CausalGraph,
    sfd: &SfdGeometry,
    config: &LayoutConfig,
) -> Result<CldVariant, LayoutError> {
    let graph = cld.graph(full_graph);
    let seeds: BTreeMap<String, Point> = sfd.nodes.iter().map(|n| (n.name.clone(), n.position)).collect();
    let config = config.clone().with_label_boxes(graph.nodes.iter());
    let mut layout = layout_graph(&graph, &seeds, &config)?;
    let (width, height) = to_pixels(&mut layout);
    Ok(CldVariant {
        link_threshold: cld.params.link_threshold,
        loop_threshold: cld.params.loop_threshold,
        kept: cld.kept.clone(),
        links: cld
            .links
            .iter()
            .map(|l| CldLink {
                source: l.source.clone(),
                target: l.target.clone(),
                witness_path: l.witness_path.clone(),
                witness_edges: l.witness_edges.clone(),
                composite_scores: l.composite_scores.clone(),
                dominant_polarity: l.dominant_polarity,
            })
            .collect(),
        retained_loops: cld.retained_loops.clone(),
        retained_magnitude_fraction: cld.retention.magnitude_fraction,
        layout,
        width,
        height,
    })
}

/// Scales a layout to pixels with a margin, returning the canvas size.
fn to_pixels(layout: &mut LayoutResult) -> (f64, f64) {
    use crate::layout::EdgeShape;
    use super::sfd::MARGIN;
    let s = PIXELS_PER_UNIT;
    let (mut x0, mut y0, mut x1, mut y1) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    if let Some(first) = layout.positions.first() {
        (x0, y0, x1, y1) = (first.x, first.y, first.x, first.y);
    }
    for p in &layout.positions {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    let map = |p: Point| Point::new((p.x - x0) * s + MARGIN, (p.y - y0) * s + MARGIN);
    for p in &mut layout.positions {
        *p = map(*p);
    }
    for e in &mut layout.edges {
        match &mut e.shape {
            EdgeShape::Arc { center, radius, .. } => {
                *center = map(*center);
                *radius *= s;
            }
            EdgeShape::PairedArc { offset } => *offset *= s,
            EdgeShape::Straight => {}
        }
    }
    for w in &mut layout.warnings {
        if let LayoutWarning::FlatArc { radius, chord, .. } = w {
            *radius *= s;
            *chord *= s;
        }
    }
    ((x1 - x0) * s + 2.0 * MARGIN, (y1 - y0) * s + 2.0 * MARGIN)
}

impl AnalysisBundle {
    pub fn build(analysis: &Analysis, options: &BundleOptions) -> Result<Self, LayoutError> {
        let model = &analysis.model;
        let run = &analysis.run;
        let graph = &run.graph;
        let la = &analysis.loops;

        let sfd = build_sfd(analysis, &options.layout)?;
        let full = cld_variant(&analysis.full_cld(), graph, &sfd, &options.layout)?;
        let variants = options
            .variants
            .iter()
            .map(|&p| cld_variant(&analysis.simplify(p), graph, &sfd, &options.layout))
            .collect::<Result<_, _>>()?;

        let names_of = |kind: VariableKind| -> Vec<String> {
            model.variables.iter().filter(|v| v.kind == kind).map(|v| v.name.clone()).collect()
        };
        let simplification = SimplificationInputs {
            universe: cld_universe(model, graph).into_iter().collect(),
            stocks: names_of(VariableKind::Stock),
            flows: names_of(VariableKind::Flow),
            constants: names_of(VariableKind::Constant),
            stock_flows: model
                .stocks()
                .map(|s| (s.name.clone(), s.inflows.iter().chain(&s.outflows).cloned().collect()))
                .collect(),
        };

        Ok(AnalysisBundle {
            schema_version: SCHEMA_VERSION.to_string(),
            model: ModelInfo {
                name: model.name.clone(),
                variables: model
                    .variables
                    .iter()
                    .map(|v| VariableInfo {
                        name: v.name.clone(),
                        kind: v.kind,
                        equation: v.equation.to_string(),
                        inflows: v.inflows.clone(),
                        outflows: v.outflows.clone(),
                        position: v.position,
                    })
                    .collect(),
            },
            sim_specs: model.sim_specs.clone(),
            times: run.trajectory.times.clone(),
            trajectories: run
                .trajectory
                .names
                .iter()
                .map(|n| (n.clone(), run.trajectory.series(n).unwrap_or_default()))
                .collect(),
            graph: GraphInfo {
                nodes: graph.nodes.clone(),
                edges: graph
                    .edges
                    .iter()
                    .enumerate()
                    .map(|(id, e)| GraphEdge {
                        id,
                        source: e.source.clone(),
                        target: e.target.clone(),
                        kind: e.kind,
                    })
                    .collect(),
            },
            links: run
                .link_scores
                .iter()
                .zip(&la.links)
                .map(|(s, st)| LinkInfo {
                    id: s.edge,
                    source: graph.edges[s.edge].source.clone(),
                    target: graph.edges[s.edge].target.clone(),
                    scores: s.scores.clone(),
                    relative: st.relative_scores.clone(),
                    variance: st.variance,
                })
                .collect(),
            loops: la
                .loops
                .iter()
                .zip(&la.series)
                .map(|(l, s)| LoopInfo {
                    id: l.id.clone(),
                    nodes: l.nodes.clone(),
                    edges: l.edges.clone(),
                    static_polarity: l.static_polarity,
                    scores: s.scores.clone(),
                    relative: s.relative.clone(),
                    avg_magnitude: s.avg_magnitude,
                    activation_step: s.activation_step,
                })
                .collect(),
            dominance_profile: la
                .profile
                .rows
                .iter()
                .map(|r| ProfileEntry {
                    loop_id: r.loop_id.clone(),
                    avg_magnitude: r.avg_magnitude,
                })
                .collect(),
            inactive_steps: la.inactive_steps.clone(),
            discontinuity_steps: run.discontinuity_steps.clone(),
            sfd,
            cld: CldSet { full, variants },
            simplification,
        })
    }

    /// Number of score steps T.
    pub fn steps(&self) -> usize {
        self.times.len().saturating_sub(1)
    }

    pub fn loop_info(&self, id: &str) -> Option<&LoopInfo> {
        self.loops.iter().find(|l| l.id == id)
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string(self)
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Checks series lengths, id cross-references and ordering invariants.
    /// Returns every violation found.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errs = Vec::new();
        let t = self.steps();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                errs.push(msg);
            }
        };
        check(self.schema_version == SCHEMA_VERSION, format!("schema_version {}", self.schema_version));
        check(!self.times.is_empty(), "no time points".into());
        check(t == self.sim_specs.steps(), format!("{} steps, sim specs imply {}", t, self.sim_specs.steps()));
        for (name, series) in &self.trajectories {
            check(series.len() == t + 1, format!("trajectory {name} has {} points", series.len()));
        }
        let nodes: BTreeSet<&str> = self.graph.nodes.iter().map(String::as_str).collect();
        for v in &self.model.variables {
            check(self.trajectories.contains_key(&v.name), format!("no trajectory for {}", v.name));
        }
        for (i, e) in self.graph.edges.iter().enumerate() {
            check(e.id == i, format!("edge {i} has id {}", e.id));
            check(
                nodes.contains(e.source.as_str()) && nodes.contains(e.target.as_str()),
                format!("edge {i} references an unknown node"),
            );
        }
        check(self.links.len() == self.graph.edges.len(), "link count differs from edge count".into());
        for l in &self.links {
            let edge = self.graph.edges.get(l.id);
            check(
                edge.is_some_and(|e| e.source == l.source && e.target == l.target),
                format!("link {} does not match its edge", l.id),
            );
            check(l.scores.len() == t && l.relative.len() == t, format!("link {} series length", l.id));
            check((0.0..=1.0).contains(&l.variance), format!("link {} variance {}", l.id, l.variance));
            check(l.relative.iter().all(|r| r.abs() <= 1.0 + 1e-12), format!("link {} relative out of range", l.id));
            check(
                l.scores.iter().chain(&l.relative).all(|v| v.is_finite()),
                format!("link {} has non-finite values", l.id),
            );
        }
        let loop_ids: BTreeSet<&str> = self.loops.iter().map(|l| l.id.as_str()).collect();
        check(loop_ids.len() == self.loops.len(), "duplicate loop ids".into());
        for l in &self.loops {
            check(l.scores.len() == t && l.relative.len() == t, format!("loop {} series length", l.id));
            check(l.nodes.len() == l.edges.len() && !l.nodes.is_empty(), format!("loop {} shape", l.id));
            for (i, &e) in l.edges.iter().enumerate() {
                let next = &l.nodes[(i + 1) % l.nodes.len()];
                let ok = self
                    .graph
                    .edges
                    .get(e)
                    .is_some_and(|edge| edge.source == l.nodes[i] && &edge.target == next);
                check(ok, format!("loop {} edge {e} does not follow its nodes", l.id));
            }
            check((0.0..=1.0 + 1e-12).contains(&l.avg_magnitude), format!("loop {} avg_magnitude", l.id));
            check(
                l.activation_step.is_none_or(|k| k < t && l.scores[k] != 0.0),
                format!("loop {} activation step", l.id),
            );
        }
        for k in 0..t {
            let total: f64 = self.loops.iter().map(|l| l.relative[k].abs()).sum();
            let inactive = self.inactive_steps.contains(&k);
            check(
                if inactive { total == 0.0 } else { self.loops.is_empty() || (total - 1.0).abs() < 1e-9 },
                format!("relative loop scores at step {k} sum to {total}"),
            );
        }
        check(self.dominance_profile.len() == self.loops.len(), "profile row count".into());
        for r in &self.dominance_profile {
            check(loop_ids.contains(r.loop_id.as_str()), format!("profile row {} has no loop", r.loop_id));
        }
        check(
            self.dominance_profile.windows(2).all(|w| w[0].avg_magnitude >= w[1].avg_magnitude),
            "profile not sorted".into(),
        );
        check(self.inactive_steps.iter().all(|&k| k < t), "inactive step out of range".into());
        check(self.discontinuity_steps.iter().all(|&k| k < t), "discontinuity step out of range".into());
        for n in &self.sfd.nodes {
            check(self.trajectories.contains_key(&n.name), format!("sfd node {} unknown", n.name));
        }
        for v in std::iter::once(&self.cld.full).chain(&self.cld.variants) {
            let kept: BTreeSet<&str> = v.kept.iter().map(String::as_str).collect();
            check(kept.iter().all(|k| nodes.contains(k)), "kept variable not in graph".into());
            check(v.layout.nodes.len() == v.layout.positions.len(), "layout positions".into());
            for e in &v.layout.edges {
                check(
                    e.source < v.layout.nodes.len() && e.target < v.layout.nodes.len(),
                    "layout edge out of range".into(),
                );
            }
            for r in &v.retained_loops {
                check(loop_ids.contains(r.as_str()), format!("retained loop {r} unknown"));
            }
            for l in &v.links {
                check(l.composite_scores.len() == t, "composite series length".into());
                check(
                    kept.contains(l.source.as_str()) && kept.contains(l.target.as_str()),
                    format!("cld link {}->{} leaves the kept set", l.source, l.target),
                );
                let path_ok = l.witness_path.len() == l.witness_edges.len() + 1
                    && l.witness_edges.iter().enumerate().all(|(i, &e)| {
                        self.graph.edges.get(e).is_some_and(|edge| {
                            edge.source == l.witness_path[i] && edge.target == l.witness_path[i + 1]
                        })
                    })
                    && l.witness_path[1..l.witness_path.len() - 1]
                        .iter()
                        .all(|n| !kept.contains(n.as_str()));
                check(path_ok, format!("witness for {}->{} does not replay", l.source, l.target));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}
