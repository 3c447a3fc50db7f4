//! Johnson's elementary-circuit enumeration.

use std::collections::BTreeSet;

/// Raised when a graph holds more elementary cycles than the caller allows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CapExceeded(pub usize);

/// Nodes of the strongly connected component containing `root` within the
/// subgraph induced by `allowed`.
fn component_of(adj: &[Vec<usize>], radj: &[Vec<usize>], root: usize, allowed: &[bool]) -> Vec<bool> {
    let reach = |edges: &[Vec<usize>]| {
        let mut seen = vec![false; adj.len()];
        let mut stack = vec![root];
        seen[root] = true;
        while let Some(u) = stack.pop() {
            for &v in &edges[u] {
                if allowed[v] && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    };
    let fwd = reach(adj);
    let bwd = reach(radj);
    fwd.iter().zip(&bwd).map(|(a, b)| *a && *b).collect()
}

struct Search<'a> {
    adj: &'a [Vec<usize>],
    in_component: Vec<bool>,
    blocked: Vec<bool>,
    blocked_by: Vec<BTreeSet<usize>>,
    stack: Vec<usize>,
    cycles: &'a mut Vec<Vec<usize>>,
    cap: usize,
}

impl Search<'_> {
    fn unblock(&mut self, u: usize) {
        let mut pending = vec![u];
        while let Some(w) = pending.pop() {
            if self.blocked[w] {
                self.blocked[w] = false;
                pending.extend(std::mem::take(&mut self.blocked_by[w]));
            }
        }
    }

    fn circuit(&mut self, v: usize, start: usize) -> Result<bool, CapExceeded> {
        let mut found = false;
        self.stack.push(v);
        self.blocked[v] = true;
        for i in 0..self.adj[v].len() {
            let w = self.adj[v][i];
            if !self.in_component[w] {
                continue;
            }
            if w == start {
                if self.cycles.len() == self.cap {
                    return Err(CapExceeded(self.cap));
                }
                self.cycles.push(self.stack.clone());
                found = true;
            } else if !self.blocked[w] && self.circuit(w, start)? {
                found = true;
            }
        }
        if found {
            self.unblock(v);
        } else {
            for i in 0..self.adj[v].len() {
                let w = self.adj[v][i];
                if self.in_component[w] {
                    self.blocked_by[w].insert(v);
                }
            }
        }
        self.stack.pop();
        Ok(found)
    }
}

/// All elementary cycles of the digraph `adj` (successor lists, no
/// duplicates). Each cycle starts at its smallest node; the list is sorted
/// lexicographically. Self-loops are reported as one-node cycles.
pub fn elementary_cycles(adj: &[Vec<usize>], cap: usize) -> Result<Vec<Vec<usize>>, CapExceeded> {
    let n = adj.len();
    let mut radj = vec![Vec::new(); n];
    for (u, succ) in adj.iter().enumerate() {
        for &v in succ {
            radj[v].push(u);
        }
    }
    let mut cycles = Vec::new();
    let mut allowed = vec![true; n];
    for start in 0..n {
        let in_component = component_of(adj, &radj, start, &allowed);
        let nontrivial = in_component.iter().filter(|&&b| b).count() > 1 || adj[start].contains(&start);
        if nontrivial {
            let mut search = Search {
                adj,
                in_component,
                blocked: vec![false; n],
                blocked_by: vec![BTreeSet::new(); n],
                stack: Vec::new(),
                cycles: &mut cycles,
                cap,
            };
            search.circuit(start, start)?;
        }
        allowed[start] = false;
    }
    cycles.sort();
    Ok(cycles)
}
