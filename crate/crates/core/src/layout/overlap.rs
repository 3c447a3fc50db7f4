//! Push-apart removal of overlapping node boxes.

use serde::{Deserialize, Serialize};

use crate::model::Point;

pub const MAX_OVERLAP_PASSES: usize = 200;

/// Axis-aligned box centered on its node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeBox {
    pub width: f64,
    pub height: f64,
}

/// Boxes that still overlap after the pass budget, with the arrangement that
/// had the fewest overlapping pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapUnresolved {
    pub pairs: Vec<(usize, usize)>,
    pub best: Vec<Point>,
}

/// Positive-area intersection of the boxes at `a` and `b`.
pub fn boxes_overlap(a: Point, ba: NodeBox, b: Point, bb: NodeBox) -> bool {
    (a.x - b.x).abs() < (ba.width + bb.width) / 2.0 && (a.y - b.y).abs() < (ba.height + bb.height) / 2.0
}

pub fn overlapping_pairs(positions: &[Point], boxes: &[NodeBox]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            if boxes_overlap(positions[i], boxes[i], positions[j], boxes[j]) {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Distance to move `b` away from `a` along `(ux, uy)` before the boxes stop
/// overlapping.
fn penetration(a: Point, b: Point, half_w: f64, half_h: f64, ux: f64, uy: f64) -> f64 {
    let along = |gap: f64, extent: f64, u: f64| {
        if u.abs() < 1e-15 {
            f64::INFINITY
        } else {
            (extent - gap.abs()) / u.abs()
        }
    };
    along(b.x - a.x, half_w, ux).min(along(b.y - a.y, half_h, uy))
}

/// Each pass pushes every overlapping pair apart along the line through
/// their centers, half the penetration each, with all pushes measured from
/// the positions at the start of the pass. Coincident centers separate
/// along +x.
pub fn remove_overlaps(mut positions: Vec<Point>, boxes: &[NodeBox]) -> Result<Vec<Point>, OverlapUnresolved> {
    let mut best = (overlapping_pairs(&positions, boxes), positions.clone());
    if best.0.is_empty() {
        return Ok(positions);
    }
    for _ in 0..MAX_OVERLAP_PASSES {
        let mut shift = vec![(0.0, 0.0); positions.len()];
        for i in 0..positions.len() {
            for j in i + 1..positions.len() {
                let (a, b) = (positions[i], positions[j]);
                if !boxes_overlap(a, boxes[i], b, boxes[j]) {
                    continue;
                }
                let half_w = (boxes[i].width + boxes[j].width) / 2.0;
                let half_h = (boxes[i].height + boxes[j].height) / 2.0;
                let (dx, dy) = (b.x - a.x, b.y - a.y);
                let len = dx.hypot(dy);
                let (ux, uy) = if len < 1e-12 { (1.0, 0.0) } else { (dx / len, dy / len) };
                // small slack so the separated boxes no longer touch with positive area
                let push = penetration(a, b, half_w, half_h, ux, uy) * (1.0 + 1e-9) + 1e-9;
                shift[i].0 -= ux * push / 2.0;
                shift[i].1 -= uy * push / 2.0;
                shift[j].0 += ux * push / 2.0;
                shift[j].1 += uy * push / 2.0;
            }
        }
        for (p, (sx, sy)) in positions.iter_mut().zip(shift) {
            p.x += sx;
            p.y += sy;
        }
        let pairs = overlapping_pairs(&positions, boxes);
        if pairs.is_empty() {
            return Ok(positions);
        }
        if pairs.len() < best.0.len() {
            best = (pairs, positions.clone());
        }
    }
    Err(OverlapUnresolved {
        pairs: best.0,
        best: best.1,
    })
}
