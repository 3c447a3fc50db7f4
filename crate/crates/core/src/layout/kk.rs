//! Graph distances and Kamada-Kawai stress minimization.

use std::collections::VecDeque;

use crate::model::Point;

/// Undirected adjacency lists from directed edge pairs, ignoring self-loops.
pub fn undirected(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in edges {
        if u != v {
            adj[u].push(v);
            adj[v].push(u);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

/// BFS hop counts between all node pairs; `None` across components.
pub fn shortest_path_matrix(adj: &[Vec<usize>]) -> Vec<Vec<Option<u32>>> {
    let n = adj.len();
    (0..n)
        .map(|src| {
            let mut dist = vec![None; n];
            dist[src] = Some(0);
            let mut queue = VecDeque::from([src]);
            while let Some(u) = queue.pop_front() {
                let du = dist[u].unwrap();
                for &v in &adj[u] {
                    if dist[v].is_none() {
                        dist[v] = Some(du + 1);
                        queue.push_back(v);
                    }
                }
            }
            dist
        })
        .collect()
}

/// Connected components, each sorted, ordered by their smallest member.
pub fn components(dist: &[Vec<Option<u32>>]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; dist.len()];
    let mut out = Vec::new();
    for root in 0..dist.len() {
        if seen[root] {
            continue;
        }
        let members: Vec<usize> = (0..dist.len()).filter(|&v| dist[root][v].is_some()).collect();
        for &m in &members {
            seen[m] = true;
        }
        out.push(members);
    }
    out
}

/// Sum over connected pairs of `(‖p_u − p_v‖ − L·d)² / d²`.
pub fn stress(positions: &[Point], dist: &[Vec<Option<u32>>], ideal: f64) -> f64 {
    let mut total = 0.0;
    for u in 0..positions.len() {
        for v in u + 1..positions.len() {
            if let Some(d) = dist[u][v] {
                total += pair_stress(positions[u], positions[v], d, ideal);
            }
        }
    }
    total
}

fn pair_stress(a: Point, b: Point, d: u32, ideal: f64) -> f64 {
    let d = f64::from(d);
    let r = (a.x - b.x).hypot(a.y - b.y);
    (r - ideal * d).powi(2) / (d * d)
}

fn node_stress(m: usize, at: Point, positions: &[Point], dist: &[Vec<Option<u32>>], ideal: f64) -> f64 {
    (0..positions.len())
        .filter(|&i| i != m)
        .filter_map(|i| dist[m][i].map(|d| pair_stress(at, positions[i], d, ideal)))
        .sum()
}

/// Newton direction for moving node `m` alone, falling back to steepest
/// descent where the local Hessian is not positive definite.
fn newton_step(m: usize, positions: &[Point], dist: &[Vec<Option<u32>>], ideal: f64) -> (f64, f64) {
    let p = positions[m];
    let (mut gx, mut gy) = (0.0, 0.0);
    let (mut hxx, mut hxy, mut hyy) = (0.0, 0.0, 0.0);
    let mut weight_sum = 0.0;
    for (i, q) in positions.iter().enumerate() {
        let Some(d) = dist[m][i].filter(|_| i != m) else {
            continue;
        };
        let d = f64::from(d);
        let w = 1.0 / (d * d);
        let l = ideal * d;
        let (dx, dy) = (p.x - q.x, p.y - q.y);
        let r = dx.hypot(dy);
        weight_sum += 2.0 * w;
        if r < 1e-12 {
            continue;
        }
        let r3 = r * r * r;
        gx += 2.0 * w * (1.0 - l / r) * dx;
        gy += 2.0 * w * (1.0 - l / r) * dy;
        hxx += 2.0 * w * (1.0 - l * dy * dy / r3);
        hxy += 2.0 * w * l * dx * dy / r3;
        hyy += 2.0 * w * (1.0 - l * dx * dx / r3);
    }
    let det = hxx * hyy - hxy * hxy;
    if hxx > 0.0 && det > 1e-12 {
        ((-hyy * gx + hxy * gy) / det, (hxy * gx - hxx * gy) / det)
    } else if weight_sum > 0.0 {
        (-gx / weight_sum, -gy / weight_sum)
    } else {
        (0.0, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Descent {
    pub positions: Vec<Point>,
    /// Total stress before the first sweep and after each one.
    pub stress_history: Vec<f64>,
}

/// Sweeps over the nodes, moving each by a backtracked Newton step that never
/// raises the stress. Stops after `max_iterations` sweeps or once a sweep
/// improves the stress by less than `tolerance` (relative).
pub fn kamada_kawai(
    mut positions: Vec<Point>,
    dist: &[Vec<Option<u32>>],
    ideal: f64,
    max_iterations: usize,
    tolerance: f64,
) -> Descent {
    let mut current = stress(&positions, dist, ideal);
    let mut history = vec![current];
    for _ in 0..max_iterations {
        let previous = positions.clone();
        for m in 0..positions.len() {
            let (sx, sy) = newton_step(m, &positions, dist, ideal);
            if sx == 0.0 && sy == 0.0 {
                continue;
            }
            let before = node_stress(m, positions[m], &positions, dist, ideal);
            let mut scale = 1.0;
            for _ in 0..40 {
                let trial = Point::new(positions[m].x + scale * sx, positions[m].y + scale * sy);
                if node_stress(m, trial, &positions, dist, ideal) <= before {
                    positions[m] = trial;
                    break;
                }
                scale *= 0.5;
            }
        }
        let next = stress(&positions, dist, ideal);
        if next > current {
            // per-node moves never raise stress, so this is resummation rounding
            positions = previous;
            break;
        }
        history.push(next);
        let improvement = current - next;
        current = next;
        if improvement <= tolerance * current.max(1e-300) || current == 0.0 {
            break;
        }
    }
    Descent {
        positions,
        stress_history: history,
    }
}
