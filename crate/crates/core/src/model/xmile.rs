//! XMILE reader for the supported subset: `sim_specs`, one model with
//! `stock`/`flow`/`aux`/`gf` variables, and view coordinates.

use std::collections::{BTreeMap, HashMap};

use roxmltree::{Document, Node};

use super::expr::{parse_equation, Builtin, Expr};
use super::{
    canonicalize, GraphicalFn, Method, ModelDef, ModelError, Point, SimSpecs, VariableDef,
    VariableKind,
};

fn child<'a, 'i>(node: Node<'a, 'i>, name: &str) -> Option<Node<'a, 'i>> {
    node.children()
        .find(|c| c.is_element() && c.tag_name().name() == name)
}

fn children<'a, 'i>(node: Node<'a, 'i>, name: &'a str) -> impl Iterator<Item = Node<'a, 'i>> + 'a {
    node.children()
        .filter(move |c| c.is_element() && c.tag_name().name() == name)
}

fn text_of(node: Node) -> String {
    node.descendants()
        .filter(|n| n.is_text())
        .filter_map(|n| n.text())
        .collect::<String>()
        .trim()
        .to_string()
}

fn number(node: Node) -> Result<f64, ModelError> {
    let text = text_of(node);
    text.parse().map_err(|_| ModelError::InvalidNumber {
        element: node.tag_name().name().to_string(),
        text,
    })
}

fn attr_number(node: Node, name: &str) -> Result<Option<f64>, ModelError> {
    node.attribute(name)
        .map(|v| {
            v.trim().parse().map_err(|_| ModelError::InvalidNumber {
                element: format!("{}@{}", node.tag_name().name(), name),
                text: v.to_string(),
            })
        })
        .transpose()
}

fn parse_sim_specs(node: Node) -> Result<SimSpecs, ModelError> {
    if let Some(method) = node.attribute("method") {
        if !method.trim().eq_ignore_ascii_case("euler") {
            return Err(ModelError::UnsupportedFeature(format!(
                "integration method `{method}` (only Euler)"
            )));
        }
    }
    let field = |name: &str| -> Result<f64, ModelError> {
        let n = child(node, name)
            .ok_or_else(|| ModelError::InvalidSimSpecs(format!("missing <{name}>")))?;
        number(n)
    };
    let start_time = field("start")?;
    let stop_time = field("stop")?;
    let dt_node = child(node, "dt")
        .ok_or_else(|| ModelError::InvalidSimSpecs("missing <dt>".into()))?;
    let mut dt = number(dt_node)?;
    if dt_node.attribute("reciprocal") == Some("true") {
        dt = 1.0 / dt;
    }
    let specs = SimSpecs {
        start_time,
        stop_time,
        dt,
        method: Method::Euler,
        time_units: node.attribute("time_units").map(str::to_string),
    };
    specs.validate()?;
    Ok(specs)
}

fn split_points(text: &str) -> Result<Vec<f64>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("invalid point `{s}`")))
        .collect()
}

fn parse_gf(node: Node, owner: &str) -> Result<GraphicalFn, ModelError> {
    let invalid = |reason: String| ModelError::InvalidGraphicalFn {
        variable: owner.to_string(),
        reason,
    };
    if let Some(kind) = node.attribute("type") {
        if kind != "continuous" {
            return Err(ModelError::UnsupportedFeature(format!(
                "graphical function type `{kind}` on `{owner}`"
            )));
        }
    }
    let ypts = child(node, "ypts").ok_or_else(|| invalid("missing <ypts>".into()))?;
    let ys = split_points(&text_of(ypts)).map_err(invalid)?;
    let xs = if let Some(xpts) = child(node, "xpts") {
        split_points(&text_of(xpts)).map_err(invalid)?
    } else {
        let scale = child(node, "xscale").ok_or_else(|| invalid("missing <xscale> or <xpts>".into()))?;
        let min = attr_number(scale, "min")?.ok_or_else(|| invalid("xscale without min".into()))?;
        let max = attr_number(scale, "max")?.ok_or_else(|| invalid("xscale without max".into()))?;
        if ys.len() < 2 {
            return Err(invalid("at least two points are required".into()));
        }
        let n = ys.len() - 1;
        (0..=n).map(|i| min + (max - min) * i as f64 / n as f64).collect()
    };
    GraphicalFn::new(xs, ys).map_err(invalid)
}

fn reject_arrays(node: Node, name: &str) -> Result<(), ModelError> {
    if child(node, "dimensions").is_some() || child(node, "element").is_some() {
        return Err(ModelError::UnsupportedFeature(format!(
            "arrayed variable `{name}`"
        )));
    }
    Ok(())
}

struct RawVariable {
    name: String,
    kind: VariableKind,
    equation: Expr,
    inflows: Vec<String>,
    outflows: Vec<String>,
    graphical_fn: Option<GraphicalFn>,
}

fn parse_variable(node: Node, tag: &str) -> Result<RawVariable, ModelError> {
    let raw_name = node
        .attribute("name")
        .ok_or_else(|| ModelError::MalformedXml(format!("<{tag}> without a name attribute")))?;
    let name = canonicalize(raw_name);
    reject_arrays(node, &name)?;
    let eqn_text = child(node, "eqn")
        .map(text_of)
        .filter(|t| !t.is_empty())
        .ok_or_else(|| ModelError::MissingEquation(name.clone()))?;
    let mut equation = parse_equation(&eqn_text).map_err(|error| ModelError::Syntax {
        variable: name.clone(),
        error,
    })?;
    let graphical_fn = child(node, "gf").map(|gf| parse_gf(gf, &name)).transpose()?;
    if graphical_fn.is_some() {
        equation = Expr::Lookup {
            table: name.clone(),
            arg: Box::new(equation),
        };
    }
    let names = |tag: &'static str| -> Vec<String> {
        children(node, tag).map(|n| canonicalize(&text_of(n))).collect()
    };
    let (kind, inflows, outflows) = match tag {
        "stock" => {
            if graphical_fn.is_some() {
                return Err(ModelError::UnsupportedFeature(format!(
                    "graphical function on stock `{name}`"
                )));
            }
            (VariableKind::Stock, names("inflow"), names("outflow"))
        }
        "flow" => {
            if child(node, "non_negative").is_some() {
                equation = Expr::Call(Builtin::Max, vec![equation, Expr::Literal(0.0)]);
            }
            (VariableKind::Flow, Vec::new(), Vec::new())
        }
        _ => {
            let kind = if graphical_fn.is_none() && equation.as_constant().is_some() {
                VariableKind::Constant
            } else {
                VariableKind::Aux
            };
            (kind, Vec::new(), Vec::new())
        }
    };
    Ok(RawVariable {
        name,
        kind,
        equation,
        inflows,
        outflows,
        graphical_fn,
    })
}

/// Parses an XMILE document into a validated [`ModelDef`].
pub fn parse_xmile(document: &str) -> Result<ModelDef, ModelError> {
    let doc = Document::parse(document).map_err(|e| ModelError::MalformedXml(e.to_string()))?;
    let root = doc.root_element();

    for unsupported in ["macro", "dimensions"] {
        if root
            .descendants()
            .any(|n| n.is_element() && n.tag_name().name() == unsupported)
        {
            let what = if unsupported == "macro" { "macros" } else { "arrays/subscripts" };
            return Err(ModelError::UnsupportedFeature(what.into()));
        }
    }

    let sim_specs = root
        .descendants()
        .find(|n| n.is_element() && n.tag_name().name() == "sim_specs")
        .ok_or(ModelError::MissingSimSpecs)?;
    let sim_specs = parse_sim_specs(sim_specs)?;

    let models: Vec<_> = children(root, "model").collect();
    let model = match models.as_slice() {
        [] => return Err(ModelError::NoVariables),
        [m] => *m,
        _ => return Err(ModelError::UnsupportedFeature("multiple models / submodels".into())),
    };

    let mut raw = Vec::new();
    let mut graphical_fns = BTreeMap::new();
    if let Some(vars) = child(model, "variables") {
        for node in vars.children().filter(|n| n.is_element()) {
            let tag = node.tag_name().name();
            match tag {
                "stock" | "flow" | "aux" => raw.push(parse_variable(node, tag)?),
                "gf" => {
                    let name = node.attribute("name").map(canonicalize).ok_or_else(|| {
                        ModelError::MalformedXml("<gf> without a name attribute".into())
                    })?;
                    let gf = parse_gf(node, &name)?;
                    if graphical_fns.insert(name.clone(), gf).is_some() {
                        return Err(ModelError::DuplicateName(name));
                    }
                }
                "module" => {
                    return Err(ModelError::UnsupportedFeature("submodels (<module>)".into()))
                }
                "group" => {}
                other => {
                    return Err(ModelError::UnsupportedFeature(format!("variable type <{other}>")))
                }
            }
        }
    }
    if raw.is_empty() {
        return Err(ModelError::NoVariables);
    }

    let mut positions: HashMap<String, Point> = HashMap::new();
    if let Some(views) = child(model, "views") {
        for view in children(views, "view") {
            for node in view.children().filter(|n| n.is_element()) {
                if !matches!(node.tag_name().name(), "stock" | "flow" | "aux") {
                    continue;
                }
                let (Some(name), Some(x), Some(y)) = (
                    node.attribute("name"),
                    attr_number(node, "x")?,
                    attr_number(node, "y")?,
                ) else {
                    continue;
                };
                positions.entry(canonicalize(name)).or_insert(Point::new(x, y));
            }
        }
    }

    let name = child(root, "header")
        .and_then(|h| child(h, "name"))
        .map(text_of)
        .filter(|n| !n.is_empty())
        .or_else(|| model.attribute("name").map(str::to_string))
        .unwrap_or_else(|| "model".to_string());

    let variables = raw
        .into_iter()
        .map(|r| VariableDef {
            position: positions.get(&r.name).copied(),
            name: r.name,
            kind: r.kind,
            equation: r.equation,
            inflows: r.inflows,
            outflows: r.outflows,
            graphical_fn: r.graphical_fn,
        })
        .collect();
    ModelDef::new(name, sim_specs, variables, graphical_fns)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(vars: &str) -> String {
        format!(
            r#"<?xml version="1.0" encoding="utf-8"?>
<xmile version="1.0" xmlns="http://docs.oasis-open.org/xmile/ns/XMILE/v1.0">
  <sim_specs method="Euler"><start>0</start><stop>1</stop><dt>0.25</dt></sim_specs>
  <model><variables>{vars}</variables></model>
</xmile>"#
        )
    }

    #[test]
    fn minimal_stock_and_flow() {
        let m = parse_xmile(&doc(
            r#"<stock name="S"><eqn>10</eqn><inflow>f</inflow></stock>
               <flow name="f"><eqn>1</eqn></flow>"#,
        ))
        .unwrap();
        assert_eq!(m.variables.len(), 2);
        let s = m.variable("s").unwrap();
        assert_eq!(s.kind, VariableKind::Stock);
        assert_eq!(s.inflows, vec!["f"]);
        assert_eq!(m.variable("f").unwrap().kind, VariableKind::Flow);
        assert_eq!(m.sim_specs.steps(), 4);
    }

    #[test]
    fn unresolved_identifier_names_both_sides() {
        let err = parse_xmile(&doc(r#"<aux name="a"><eqn>b + 1</eqn></aux>"#)).unwrap_err();
        assert_eq!(
            err,
            ModelError::UnresolvedIdentifier {
                name: "b".into(),
                variable: "a".into()
            }
        );
    }

    #[test]
    fn malformed_and_missing_specs() {
        assert!(matches!(parse_xmile("<xmile><model>"), Err(ModelError::MalformedXml(_))));
        let no_specs = r#"<xmile><model><variables><aux name="a"><eqn>1</eqn></aux></variables></model></xmile>"#;
        assert_eq!(parse_xmile(no_specs).unwrap_err(), ModelError::MissingSimSpecs);
        assert_eq!(parse_xmile(&doc("")).unwrap_err(), ModelError::NoVariables);
    }

    #[test]
    fn arrays_macros_and_modules_are_rejected() {
        let arrayed = doc(r#"<aux name="a"><dimensions><dim name="d"/></dimensions><eqn>1</eqn></aux>"#);
        assert!(matches!(parse_xmile(&arrayed), Err(ModelError::UnsupportedFeature(_))));
        let with_macro = doc(r#"<aux name="a"><eqn>1</eqn></aux>"#)
            .replace("<model>", r#"<macro name="m"><eqn>1</eqn></macro><model>"#);
        assert!(matches!(parse_xmile(&with_macro), Err(ModelError::UnsupportedFeature(_))));
        let module = doc(r#"<module name="sub"/>"#);
        assert!(matches!(parse_xmile(&module), Err(ModelError::UnsupportedFeature(_))));
        let rk4 = doc(r#"<aux name="a"><eqn>1</eqn></aux>"#).replace("Euler", "RK4");
        assert!(matches!(parse_xmile(&rk4), Err(ModelError::UnsupportedFeature(_))));
    }

    #[test]
    fn duplicate_spellings_collide() {
        let err = parse_xmile(&doc(
            r#"<aux name="Birth Rate"><eqn>1</eqn></aux><aux name="birth_rate"><eqn>2</eqn></aux>"#,
        ))
        .unwrap_err();
        assert_eq!(err, ModelError::DuplicateName("birth_rate".into()));
    }

    #[test]
    fn inflow_must_be_a_flow() {
        let err = parse_xmile(&doc(
            r#"<stock name="s"><eqn>0</eqn><inflow>a</inflow></stock><aux name="a"><eqn>1</eqn></aux>"#,
        ))
        .unwrap_err();
        assert!(matches!(err, ModelError::NotAFlow { .. }));
        let err = parse_xmile(&doc(r#"<stock name="s"><eqn>0</eqn><inflow>ghost</inflow></stock>"#))
            .unwrap_err();
        assert!(matches!(err, ModelError::UnresolvedIdentifier { .. }));
    }

    #[test]
    fn stock_initial_value_cannot_reference_itself() {
        let err = parse_xmile(&doc(r#"<stock name="s"><eqn>s + 1</eqn></stock>"#)).unwrap_err();
        assert_eq!(err, ModelError::SelfReferentialInitial("s".into()));
    }

    #[test]
    fn graphical_functions_embedded_and_standalone() {
        let m = parse_xmile(&doc(
            r#"<aux name="effect"><eqn>x</eqn>
                 <gf><xscale min="0" max="2"/><ypts>0,1,4</ypts></gf></aux>
               <aux name="x"><eqn>TIME</eqn></aux>
               <gf name="shape"><xpts>0,10</xpts><ypts>1,2</ypts></gf>
               <aux name="y"><eqn>shape(x)</eqn></aux>"#,
        ))
        .unwrap();
        let effect = m.variable("effect").unwrap();
        assert_eq!(effect.kind, VariableKind::Aux);
        assert_eq!(effect.graphical_fn.as_ref().unwrap().x_points, vec![0.0, 1.0, 2.0]);
        assert_eq!(effect.equation.identifiers(), vec!["x"]);
        assert!(m.table("shape").is_some());
        let bad = doc(r#"<aux name="y"><eqn>nope(1)</eqn></aux>"#);
        assert!(matches!(parse_xmile(&bad), Err(ModelError::UnresolvedIdentifier { .. })));
    }

    #[test]
    fn constants_and_reciprocal_dt_and_positions() {
        let text = doc(r#"<aux name="c"><eqn>-3</eqn></aux><aux name="a"><eqn>c * 2</eqn></aux>"#)
            .replace("<dt>0.25</dt>", r#"<dt reciprocal="true">8</dt>"#)
            .replace(
                "</variables>",
                r#"</variables><views><view><aux name="A" x="10" y="20"/></view></views>"#,
            );
        let m = parse_xmile(&text).unwrap();
        assert_eq!(m.variable("c").unwrap().kind, VariableKind::Constant);
        assert_eq!(m.variable("a").unwrap().kind, VariableKind::Aux);
        assert_eq!(m.sim_specs.dt, 0.125);
        assert_eq!(m.variable("a").unwrap().position, Some(Point::new(10.0, 20.0)));
        assert_eq!(m.variable("c").unwrap().position, None);
    }

    #[test]
    fn syntax_errors_name_the_variable() {
        let err = parse_xmile(&doc(r#"<aux name="a"><eqn>1 +</eqn></aux>"#)).unwrap_err();
        assert!(matches!(err, ModelError::Syntax { ref variable, .. } if variable == "a"));
    }
}
