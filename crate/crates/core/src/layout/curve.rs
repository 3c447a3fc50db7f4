//! Circular-arc edge routing around feedback loops.

use serde::{Deserialize, Serialize};

use crate::model::Point;

/// Centroids closer than this to the chord line give no usable arc.
pub const DEGENERATE_ARC_TOLERANCE: f64 = 1e-9;

/// Arcs whose radius exceeds this multiple of their chord are flagged.
pub const FLAT_ARC_RATIO: f64 = 5.0;

/// Bow of a two-node-loop edge, as a fraction of its chord.
pub const PAIRED_ARC_OFFSET: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum EdgeShape {
    Straight,
    /// Minor arc of the circle about `center`. `sweep` is +1 when the arc
    /// turns from source to target in the direction of increasing angle.
    Arc { center: Point, radius: f64, sweep: i8 },
    /// Bows to the left of the travel direction, i.e. towards `(−dy, dx)`,
    /// by `offset` at the chord midpoint.
    PairedArc { offset: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeGeometry {
    pub source: usize,
    pub target: usize,
    #[serde(flatten)]
    pub shape: EdgeShape,
}

/// Result of routing one edge, along with a quality flag for very flat arcs.
#[derive(Debug, Clone, PartialEq)]
pub struct Routed {
    pub geometry: EdgeGeometry,
    pub flat: bool,
}

/// Arc for `source -> target` around the given loop centroid.
pub fn arc_around(ps: Point, pt: Point, centroid: Point) -> Option<(Point, f64, i8)> {
    let (dx, dy) = (pt.x - ps.x, pt.y - ps.y);
    let chord = dx.hypot(dy);
    if chord < 1e-12 {
        return None;
    }
    let (nx, ny) = (-dy / chord, dx / chord);
    let mid = Point::new((ps.x + pt.x) / 2.0, (ps.y + pt.y) / 2.0);
    let off = (centroid.x - mid.x) * nx + (centroid.y - mid.y) * ny;
    if off.abs() < DEGENERATE_ARC_TOLERANCE {
        return None;
    }
    let center = Point::new(mid.x + off * nx, mid.y + off * ny);
    let radius = (ps.x - center.x).hypot(ps.y - center.y);
    let cross = (ps.x - center.x) * (pt.y - center.y) - (ps.y - center.y) * (pt.x - center.x);
    let sweep = if cross > 0.0 { 1 } else { -1 };
    Some((center, radius, sweep))
}

/// Routes every edge. `loops` are node-index cycles of the drawn graph, in
/// priority order for ties; an edge on a loop of three or more nodes arcs
/// around the centroid of the shortest such loop, an edge only on two-node
/// loops bows, and any other edge is straight.
pub fn curve_edges(positions: &[Point], edges: &[(usize, usize)], loops: &[Vec<usize>]) -> Vec<Routed> {
    edges
        .iter()
        .map(|&(s, t)| {
            let contains = |lp: &&Vec<usize>| (0..lp.len()).any(|i| lp[i] == s && lp[(i + 1) % lp.len()] == t);
            let shortest = loops
                .iter()
                .filter(|lp| lp.len() >= 3)
                .filter(contains)
                .min_by_key(|lp| lp.len());
            let in_pair = loops.iter().filter(|lp| lp.len() == 2).any(|lp| contains(&lp));
            let (ps, pt) = (positions[s], positions[t]);
            let chord = (pt.x - ps.x).hypot(pt.y - ps.y);
            let (shape, flat) = match shortest {
                Some(lp) => {
                    let n = lp.len() as f64;
                    let centroid = Point::new(
                        lp.iter().map(|&i| positions[i].x).sum::<f64>() / n,
                        lp.iter().map(|&i| positions[i].y).sum::<f64>() / n,
                    );
                    match arc_around(ps, pt, centroid) {
                        Some((center, radius, sweep)) => (
                            EdgeShape::Arc { center, radius, sweep },
                            radius > FLAT_ARC_RATIO * chord,
                        ),
                        None => (EdgeShape::Straight, false),
                    }
                }
                None if in_pair => (
                    EdgeShape::PairedArc {
                        offset: PAIRED_ARC_OFFSET * chord,
                    },
                    false,
                ),
                None => (EdgeShape::Straight, false),
            };
            Routed {
                geometry: EdgeGeometry {
                    source: s,
                    target: t,
                    shape,
                },
                flat,
            }
        })
        .collect()
}
