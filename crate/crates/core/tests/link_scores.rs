use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use loopx_core::model::{parse_equation, parse_xmile, EdgeKind, ModelDef, VariableKind};
use loopx_core::sim::{link_score_dependency, run_ltm, LtmRun};

fn model(vars: &str, stop: f64, dt: f64) -> ModelDef {
    parse_xmile(&format!(
        r#"<?xml version="1.0" encoding="utf-8"?>
<xmile version="1.0" xmlns="http://docs.oasis-open.org/xmile/ns/XMILE/v1.0">
  <sim_specs method="Euler"><start>0</start><stop>{stop}</stop><dt>{dt}</dt></sim_specs>
  <model><variables>{vars}</variables></model>
</xmile>"#
    ))
    .unwrap()
}

fn scores(run: &LtmRun, source: &str, target: &str) -> Vec<f64> {
    run.link_scores[run.graph.edge_id(source, target).unwrap()].scores.clone()
}

fn env(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn score(equation: &str, input: &str, prev: &BTreeMap<String, f64>, curr: &BTreeMap<String, f64>) -> f64 {
    let expr = parse_equation(equation).unwrap();
    link_score_dependency(&expr, "z", input, prev, curr, 0.0, 1.0).unwrap()
}

#[test]
fn linear_chain_passes_full_score() {
    let m = model(
        r#"<stock name="a"><eqn>1</eqn><inflow>ramp</inflow></stock>
           <flow name="ramp"><eqn>3</eqn></flow>
           <aux name="b"><eqn>2 * a</eqn></aux>
           <aux name="c"><eqn>b + 5</eqn></aux>"#,
        2.0,
        0.25,
    );
    let run = run_ltm(&m).unwrap();
    for (s, t) in [("a", "b"), ("b", "c")] {
        let series = scores(&run, s, t);
        assert_eq!(series.len(), 8);
        assert!(series.iter().all(|v| (v - 1.0).abs() < 1e-12), "{s}->{t}: {series:?}");
    }
}

#[test]
fn constant_inputs_score_zero() {
    let m = model(
        r#"<stock name="s"><eqn>4</eqn><inflow>f</inflow></stock>
           <flow name="f"><eqn>0</eqn></flow>
           <aux name="k"><eqn>7</eqn></aux>
           <aux name="y"><eqn>s * k</eqn></aux>"#,
        1.0,
        0.25,
    );
    let run = run_ltm(&m).unwrap();
    for (edge, series) in run.graph.edges.iter().zip(&run.link_scores) {
        if edge.kind == EdgeKind::Dependency {
            assert!(series.scores.iter().all(|v| *v == 0.0), "{}", edge.key());
        }
    }
}

#[test]
fn graph_matches_equation_references() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../models/bass.xmile");
    let m = parse_xmile(&std::fs::read_to_string(path).unwrap()).unwrap();
    let run = run_ltm(&m).unwrap();
    let mut expected_dep = BTreeSet::new();
    let mut expected_flow = BTreeSet::new();
    for v in &m.variables {
        if v.kind == VariableKind::Stock {
            for f in v.inflows.iter().chain(&v.outflows) {
                expected_flow.insert((f.clone(), v.name.clone()));
            }
        } else {
            for id in v.equation.identifiers() {
                if m.variable(id).is_some() {
                    expected_dep.insert((id.to_string(), v.name.clone()));
                }
            }
        }
    }
    let pick = |dep: bool| -> BTreeSet<(String, String)> {
        run.graph
            .edges
            .iter()
            .filter(|e| (e.kind == EdgeKind::Dependency) == dep)
            .map(|e| (e.source.clone(), e.target.clone()))
            .collect()
    };
    assert_eq!(pick(true), expected_dep);
    assert_eq!(pick(false), expected_flow);
}

#[test]
fn runs_are_bit_identical() {
    let m = model(
        r#"<stock name="s"><eqn>1</eqn><inflow>g</inflow></stock>
           <flow name="g"><eqn>0.3 * s * (1 - s / 50) + SIN(TIME)</eqn></flow>"#,
        5.0,
        0.125,
    );
    let x = run_ltm(&m).unwrap();
    let y = run_ltm(&m).unwrap();
    assert_eq!(x.trajectory, y.trajectory);
    let bits = |r: &LtmRun| -> Vec<Vec<u64>> {
        r.link_scores.iter().map(|s| s.scores.iter().map(|v| v.to_bits()).collect()).collect()
    };
    assert_eq!(bits(&x), bits(&y));
}

proptest! {
    #[test]
    fn identity_and_negation_pass_through(x0 in -1e6f64..1e6, x1 in -1e6f64..1e6) {
        prop_assume!((x1 - x0).abs() > 1e-6);
        let prev = env(&[("x", x0), ("z", x0)]);
        let curr = env(&[("x", x1), ("z", x1)]);
        prop_assert_eq!(score("x", "x", &prev, &curr), 1.0);
        let prev = env(&[("x", x0), ("z", -x0)]);
        let curr = env(&[("x", x1), ("z", -x1)]);
        prop_assert_eq!(score("-x", "x", &prev, &curr), -1.0);
    }

    #[test]
    fn linear_combination(a in -5.0f64..5.0, b in -5.0f64..5.0, dx in -3.0f64..3.0, dy in -3.0f64..3.0) {
        let dz = a * dx + b * dy;
        prop_assume!(dx.abs() > 1e-3 && dz.abs() > 1e-3 && a.abs() > 1e-3);
        let eq = format!("({a}) * x + ({b}) * y");
        let prev = env(&[("x", 1.0), ("y", 2.0), ("z", a + 2.0 * b)]);
        let curr = env(&[("x", 1.0 + dx), ("y", 2.0 + dy), ("z", a * (1.0 + dx) + b * (2.0 + dy))]);
        let expected = (a * dx / dz).abs() * a.signum();
        let got = score(&eq, "x", &prev, &curr);
        prop_assert!((got - expected).abs() <= 1e-9 * expected.abs().max(1.0), "{} vs {}", got, expected);
    }

    #[test]
    fn sign_follows_the_partial_derivative(x in -10.0f64..10.0, y in -10.0f64..10.0, ux in -1.0f64..1.0, uy in -1.0f64..1.0) {
        prop_assume!(y.abs() > 1e-2 && ux.abs() > 1e-2);
        let h = 1e-6;
        let (x1, y1) = (x + h * ux, y + h * uy);
        prop_assume!((x1 * y1 - x * y).abs() > 1e-11);
        let prev = env(&[("x", x), ("y", y), ("z", x * y)]);
        let curr = env(&[("x", x1), ("y", y1), ("z", x1 * y1)]);
        let got = score("x * y", "x", &prev, &curr);
        // d(xy)/dx = y
        prop_assert_eq!(got.signum(), y.signum());
    }
}
