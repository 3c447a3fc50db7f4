//! Euler simulation and per-step link scores.

pub mod eval;
pub mod ltm;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::model::{GraphicalFn, ModelDef, VariableKind};

pub use eval::{eval_expr, EvalError, Override, Scope};
pub use ltm::{
    link_score_dependency, link_score_flow_stock, run_ltm, LinkScoreSeries, LtmRun,
    ZERO_CHANGE_TOLERANCE,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("algebraic loop (no intervening stock): {}", .0.join(" -> "))]
    AlgebraicLoop(Vec<String>),
    #[error("evaluating `{variable}` at t={time}: {source}")]
    Eval {
        variable: String,
        time: f64,
        #[source]
        source: EvalError,
    },
}

/// Values of one model state, indexed like `ModelDef::variables`.
pub struct StateScope<'a> {
    pub model: &'a ModelDef,
    pub values: &'a [f64],
}

impl Scope for StateScope<'_> {
    fn value(&self, name: &str) -> Option<f64> {
        self.model.index_of(name).map(|i| self.values[i])
    }

    fn table(&self, name: &str) -> Option<&GraphicalFn> {
        self.model.table(name)
    }
}

/// Simulated values at every time point `start + k*dt`, k = 0..=T.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Variable names, in model order.
    pub names: Vec<String>,
    /// `states[k][i]` is variable `i` at `times[k]`.
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn series(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(self.states.iter().map(|s| s[i]).collect())
    }
}

/// Kahn's algorithm with lexicographic tie-breaking. `deps[i]` lists the
/// indices node `i` must come after. On failure returns one cycle.
fn topo_order(names: &[&str], deps: &[Vec<usize>]) -> Result<Vec<usize>, Vec<String>> {
    let n = names.len();
    let mut indegree: Vec<usize> = deps.iter().map(Vec::len).collect();
    let mut dependents = vec![Vec::new(); n];
    for (i, ds) in deps.iter().enumerate() {
        for &d in ds {
            dependents[d].push(i);
        }
    }
    let mut ready: BTreeSet<(&str, usize)> = (0..n)
        .filter(|&i| indegree[i] == 0)
        .map(|i| (names[i], i))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(first) = ready.pop_first() {
        let i = first.1;
        order.push(i);
        for &j in &dependents[i] {
            indegree[j] -= 1;
            if indegree[j] == 0 {
                ready.insert((names[j], j));
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    // every unfinished node has an unfinished dependency; walk back until a repeat
    let mut on_path = vec![None; n];
    let mut path = Vec::new();
    let mut cur = (0..n).find(|&i| indegree[i] > 0).unwrap();
    loop {
        if let Some(pos) = on_path[cur] {
            let mut cycle: Vec<String> = path[pos..].iter().map(|&i: &usize| names[i].to_string()).collect();
            cycle.reverse();
            cycle.push(cycle[0].clone());
            return Err(cycle);
        }
        on_path[cur] = Some(path.len());
        path.push(cur);
        cur = *deps[cur].iter().find(|&&d| indegree[d] > 0).unwrap();
    }
}

/// Compiled evaluation plan for a model.
pub struct Simulator<'m> {
    model: &'m ModelDef,
    init_order: Vec<usize>,
    rate_order: Vec<usize>,
    stock_updates: Vec<(usize, Vec<usize>, Vec<usize>)>,
}

impl<'m> Simulator<'m> {
    pub fn new(model: &'m ModelDef) -> Result<Self, SimError> {
        let names: Vec<&str> = model.variables.iter().map(|v| v.name.as_str()).collect();
        let refs = |i: usize| -> Vec<usize> {
            model.variables[i]
                .equation
                .identifiers()
                .into_iter()
                .filter_map(|n| model.index_of(n))
                .collect()
        };
        let is_stock = |i: usize| model.variables[i].is_stock();

        // runtime: stocks are known at the start of each step
        let rate_deps: Vec<Vec<usize>> = (0..names.len())
            .map(|i| {
                if is_stock(i) {
                    Vec::new()
                } else {
                    refs(i).into_iter().filter(|&d| !is_stock(d)).collect()
                }
            })
            .collect();
        let rate_order = topo_order(&names, &rate_deps).map_err(SimError::AlgebraicLoop)?;
        let rate_order = rate_order.into_iter().filter(|&i| !is_stock(i)).collect();

        let init_deps: Vec<Vec<usize>> = (0..names.len()).map(refs).collect();
        let init_order = topo_order(&names, &init_deps).map_err(SimError::AlgebraicLoop)?;

        let idx = |n: &String| model.index_of(n).expect("validated flow reference");
        let stock_updates = model
            .variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VariableKind::Stock)
            .map(|(i, v)| (i, v.inflows.iter().map(idx).collect(), v.outflows.iter().map(idx).collect()))
            .collect();

        Ok(Simulator {
            model,
            init_order,
            rate_order,
            stock_updates,
        })
    }

    fn eval_into(&self, i: usize, values: &mut [f64], t: f64) -> Result<(), SimError> {
        let var = &self.model.variables[i];
        let scope = StateScope {
            model: self.model,
            values,
        };
        let v = eval_expr(&var.equation, &scope, t, self.model.sim_specs.dt).map_err(|source| {
            SimError::Eval {
                variable: var.name.clone(),
                time: t,
                source,
            }
        })?;
        values[i] = v;
        Ok(())
    }

    pub fn run(&self) -> Result<Trajectory, SimError> {
        let specs = &self.model.sim_specs;
        let steps = specs.steps();
        let n = self.model.variables.len();
        let mut times = Vec::with_capacity(steps + 1);
        let mut states = Vec::with_capacity(steps + 1);

        let t0 = specs.time_at(0);
        let mut current = vec![0.0; n];
        for &i in &self.init_order {
            self.eval_into(i, &mut current, t0)?;
        }
        times.push(t0);
        states.push(current);

        for k in 1..=steps {
            let prev = &states[k - 1];
            let mut next = vec![0.0; n];
            for (stock, inflows, outflows) in &self.stock_updates {
                let net: f64 = inflows.iter().map(|&f| prev[f]).sum::<f64>()
                    - outflows.iter().map(|&f| prev[f]).sum::<f64>();
                next[*stock] = prev[*stock] + specs.dt * net;
                if !next[*stock].is_finite() {
                    return Err(SimError::Eval {
                        variable: self.model.variables[*stock].name.clone(),
                        time: specs.time_at(k),
                        source: EvalError::NonFinite,
                    });
                }
            }
            let t = specs.time_at(k);
            for &i in &self.rate_order {
                self.eval_into(i, &mut next, t)?;
            }
            times.push(t);
            states.push(next);
        }

        Ok(Trajectory {
            times,
            names: self.model.variables.iter().map(|v| v.name.clone()).collect(),
            states,
        })
    }
}

/// Euler-integrates the model over its sim specs.
pub fn simulate(model: &ModelDef) -> Result<Trajectory, SimError> {
    Simulator::new(model)?.run()
}
