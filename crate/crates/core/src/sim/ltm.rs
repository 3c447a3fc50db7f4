//! Link scores computed alongside the simulation.
//!
//! Score index `k - 1` describes the change from `times[k - 1]` to
//! `times[k]`, so every series has one entry per Euler step.

use crate::model::{build_causal_graph, CausalGraph, EdgeKind, Expr, ModelDef, VariableDef};

use super::eval::{eval_expr, EvalError, Override, Scope};
use super::{SimError, Simulator, StateScope, Trajectory};

/// Changes in a scored variable smaller than this are treated as no change.
pub const ZERO_CHANGE_TOLERANCE: f64 = 1e-12;

/// Sign with `sign(0) = 0`.
pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn finite_or_zero(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

/// Link score of `input -> target` over one step, where `equation` defines
/// `target`. The partial change re-evaluates `equation` with only `input`
/// advanced to its current value and everything else (clock included) held
/// at the previous step.
pub fn link_score_dependency(
    equation: &Expr,
    target: &str,
    input: &str,
    prev: &dyn Scope,
    curr: &dyn Scope,
    t_prev: f64,
    dt: f64,
) -> Result<f64, EvalError> {
    let value = |scope: &dyn Scope, name: &str| {
        scope
            .value(name)
            .ok_or_else(|| EvalError::Unbound(name.to_string()))
    };
    let dz = value(curr, target)? - value(prev, target)?;
    let x_curr = value(curr, input)?;
    let dx = x_curr - value(prev, input)?;
    if dx == 0.0 || dz.abs() < ZERO_CHANGE_TOLERANCE {
        return Ok(0.0);
    }
    let advanced = Override {
        base: prev,
        name: input,
        value: x_curr,
    };
    let partial = eval_expr(equation, &advanced, t_prev, dt)? - eval_expr(equation, prev, t_prev, dt)?;
    Ok(finite_or_zero((partial / dz).abs() * sign(partial / dx)))
}

/// Link score of `flow -> stock`: the flow's share of the stock's net rate,
/// positive for inflows and negative for outflows. `rates` holds the flow
/// values that drove the step.
pub fn link_score_flow_stock(
    stock: &VariableDef,
    flow: &str,
    rates: &dyn Scope,
) -> Result<f64, EvalError> {
    let rate = |name: &String| {
        rates
            .value(name)
            .ok_or_else(|| EvalError::Unbound(name.clone()))
    };
    let mut net = 0.0;
    for f in &stock.inflows {
        net += rate(f)?;
    }
    for f in &stock.outflows {
        net -= rate(f)?;
    }
    let polarity = if stock.inflows.iter().any(|f| f == flow) {
        1.0
    } else if stock.outflows.iter().any(|f| f == flow) {
        -1.0
    } else {
        return Err(EvalError::Unbound(flow.to_string()));
    };
    if net == 0.0 {
        return Ok(0.0);
    }
    let value = rates
        .value(flow)
        .ok_or_else(|| EvalError::Unbound(flow.to_string()))?;
    Ok(finite_or_zero((value / net).abs() * polarity))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkScoreSeries {
    /// Index into `CausalGraph::edges`.
    pub edge: usize,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LtmRun {
    pub trajectory: Trajectory,
    pub graph: CausalGraph,
    /// One series per graph edge, in edge order.
    pub link_scores: Vec<LinkScoreSeries>,
    /// Score indices whose step crosses a STEP/PULSE switch.
    pub discontinuity_steps: Vec<usize>,
}

/// Simulates `model` and scores every causal link at every step.
pub fn run_ltm(model: &ModelDef) -> Result<LtmRun, SimError> {
    let trajectory = Simulator::new(model)?.run()?;
    let graph = build_causal_graph(model);
    let dt = model.sim_specs.dt;
    let steps = trajectory.steps();

    let mut link_scores: Vec<LinkScoreSeries> = (0..graph.edges.len())
        .map(|edge| LinkScoreSeries {
            edge,
            scores: Vec::with_capacity(steps),
        })
        .collect();

    for k in 1..=steps {
        let prev = StateScope {
            model,
            values: &trajectory.states[k - 1],
        };
        let curr = StateScope {
            model,
            values: &trajectory.states[k],
        };
        let t_prev = trajectory.times[k - 1];
        for (edge, series) in graph.edges.iter().zip(link_scores.iter_mut()) {
            let target = model.variable(&edge.target).expect("graph node is a model variable");
            let score = match edge.kind {
                EdgeKind::Dependency => link_score_dependency(
                    &target.equation,
                    &edge.target,
                    &edge.source,
                    &prev,
                    &curr,
                    t_prev,
                    dt,
                ),
                EdgeKind::FlowToStock(_) => link_score_flow_stock(target, &edge.source, &prev),
            }
            .map_err(|source| SimError::Eval {
                variable: edge.target.clone(),
                time: trajectory.times[k],
                source,
            })?;
            series.scores.push(score);
        }
    }

    let discontinuity_steps = discontinuities(model, &trajectory);
    Ok(LtmRun {
        trajectory,
        graph,
        link_scores,
        discontinuity_steps,
    })
}

fn discontinuities(model: &ModelDef, trajectory: &Trajectory) -> Vec<usize> {
    let mut switches: Vec<&Expr> = Vec::new();
    for var in model.variables.iter().filter(|v| !v.is_stock()) {
        var.equation.walk(&mut |e| {
            if let Expr::Call(b, _) = e {
                if b.is_time_discontinuous() {
                    switches.push(e);
                }
            }
        });
    }
    if switches.is_empty() {
        return Vec::new();
    }
    let dt = model.sim_specs.dt;
    let at = |k: usize, e: &Expr| {
        let scope = StateScope {
            model,
            values: &trajectory.states[k],
        };
        eval_expr(e, &scope, trajectory.times[k], dt).ok()
    };
    (1..trajectory.times.len())
        .filter(|&k| switches.iter().any(|e| at(k - 1, e) != at(k, e)))
        .map(|k| k - 1)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_equation;
    use std::collections::HashMap;

    fn env(pairs: &[(&str, f64)]) -> HashMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    /// Score computed by hand from the three deltas.
    fn oracle(dz: f64, dxz: f64, dx: f64) -> f64 {
        if dz == 0.0 || dx == 0.0 {
            0.0
        } else {
            (dxz / dz).abs() * sign(dxz / dx)
        }
    }

    #[test]
    fn product_with_one_input_moving() {
        let eq = parse_equation("x * y").unwrap();
        let prev = env(&[("x", 2.0), ("y", 5.0), ("z", 10.0)]);
        let curr = env(&[("x", 3.0), ("y", 5.0), ("z", 15.0)]);
        let ls = link_score_dependency(&eq, "z", "x", &prev, &curr, 0.0, 1.0).unwrap();
        assert!((ls - oracle(5.0, 5.0, 1.0)).abs() < 1e-9);
        assert!((ls - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sum_with_both_inputs_moving() {
        let eq = parse_equation("x + y").unwrap();
        let prev = env(&[("x", 1.0), ("y", 10.0), ("z", 11.0)]);
        let curr = env(&[("x", 2.0), ("y", 11.0), ("z", 13.0)]);
        let ls = link_score_dependency(&eq, "z", "x", &prev, &curr, 0.0, 1.0).unwrap();
        assert!((ls - oracle(2.0, 1.0, 1.0)).abs() < 1e-9);
        assert!((ls - 0.5).abs() < 1e-9);
    }

    #[test]
    fn unchanged_input_scores_zero() {
        let eq = parse_equation("x + y").unwrap();
        let prev = env(&[("x", 1.0), ("y", 10.0), ("z", 11.0)]);
        let curr = env(&[("x", 1.0), ("y", 12.0), ("z", 13.0)]);
        assert_eq!(link_score_dependency(&eq, "z", "x", &prev, &curr, 0.0, 1.0), Ok(0.0));
    }

    #[test]
    fn tiny_target_change_is_the_zero_branch() {
        let eq = parse_equation("x - y").unwrap();
        let prev = env(&[("x", 1.0), ("y", 1.0), ("z", 0.0)]);
        let curr = env(&[("x", 2.0), ("y", 2.0 - 1e-13), ("z", 1e-13)]);
        assert_eq!(link_score_dependency(&eq, "z", "x", &prev, &curr, 0.0, 1.0), Ok(0.0));
    }

    fn stock(inflows: &[&str], outflows: &[&str]) -> VariableDef {
        VariableDef {
            name: "s".into(),
            kind: crate::model::VariableKind::Stock,
            equation: Expr::Literal(0.0),
            inflows: inflows.iter().map(|s| s.to_string()).collect(),
            outflows: outflows.iter().map(|s| s.to_string()).collect(),
            graphical_fn: None,
            position: None,
        }
    }

    #[test]
    fn flow_to_stock_examples() {
        let s = stock(&["i"], &["o"]);
        let rates = env(&[("i", 8.0), ("o", 2.0)]);
        assert!((link_score_flow_stock(&s, "i", &rates).unwrap() - 4.0 / 3.0).abs() < 1e-9);
        assert!((link_score_flow_stock(&s, "o", &rates).unwrap() + 1.0 / 3.0).abs() < 1e-9);

        let single = stock(&["i"], &[]);
        assert_eq!(link_score_flow_stock(&single, "i", &env(&[("i", 7.0)])), Ok(1.0));

        let rates = env(&[("i", 5.0), ("o", 5.0)]);
        assert_eq!(link_score_flow_stock(&s, "i", &rates), Ok(0.0));
        assert_eq!(link_score_flow_stock(&s, "o", &rates), Ok(0.0));
    }
}
