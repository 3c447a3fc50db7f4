//! Model definitions: variables, equations, simulation specs and the causal
//! dependency graph derived from them.

pub mod expr;
pub mod graph;
pub mod xmile;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use expr::{parse_equation, BinaryOp, Builtin, Expr, SyntaxError, UnaryOp};
pub use graph::{build_causal_graph, CausalGraph, Edge, EdgeKind, FlowDirection};
pub use xmile::parse_xmile;

/// Canonical form of a variable name: trimmed, lowercased, every run of
/// whitespace (or underscores) collapsed to a single `_`.
pub fn canonicalize(name: &str) -> String {
    let unescaped = name.replace("\\n", " ");
    let mut out = String::with_capacity(unescaped.len());
    let mut pending_sep = false;
    for ch in unescaped.trim().chars() {
        if ch.is_whitespace() || ch == '_' {
            pending_sep = true;
            continue;
        }
        if pending_sep && !out.is_empty() {
            out.push('_');
        }
        pending_sep = false;
        out.extend(ch.to_lowercase());
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("document has no <sim_specs>")]
    MissingSimSpecs,
    #[error("invalid simulation specs: {0}")]
    InvalidSimSpecs(String),
    #[error("model defines no variables")]
    NoVariables,
    #[error("unresolved identifier `{name}` referenced by `{variable}`")]
    UnresolvedIdentifier { name: String, variable: String },
    #[error("unsupported feature: {0}")]
    UnsupportedFeature(String),
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
    #[error("variable `{0}` has no equation")]
    MissingEquation(String),
    #[error("syntax error in equation of `{variable}`: {error}")]
    Syntax { variable: String, error: SyntaxError },
    #[error("stock `{stock}` lists `{flow}` as a flow, but it is not a flow variable")]
    NotAFlow { stock: String, flow: String },
    #[error("stock `{0}` references itself in its initial value")]
    SelfReferentialInitial(String),
    #[error("invalid graphical function for `{variable}`: {reason}")]
    InvalidGraphicalFn { variable: String, reason: String },
    #[error("invalid number `{text}` in <{element}>")]
    InvalidNumber { element: String, text: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Euler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpecs {
    pub start_time: f64,
    pub stop_time: f64,
    pub dt: f64,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_units: Option<String>,
}

impl SimSpecs {
    pub fn new(start_time: f64, stop_time: f64, dt: f64) -> Result<Self, ModelError> {
        let specs = SimSpecs {
            start_time,
            stop_time,
            dt,
            method: Method::Euler,
            time_units: None,
        };
        specs.validate()?;
        Ok(specs)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let all_finite = [self.start_time, self.stop_time, self.dt]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(ModelError::InvalidSimSpecs("non-finite value".into()));
        }
        if self.stop_time <= self.start_time {
            return Err(ModelError::InvalidSimSpecs(format!(
                "stop ({}) must be greater than start ({})",
                self.stop_time, self.start_time
            )));
        }
        if self.dt <= 0.0 {
            return Err(ModelError::InvalidSimSpecs(format!("dt must be positive, got {}", self.dt)));
        }
        if (self.stop_time - self.start_time) / self.dt < 1.0 - 1e-9 {
            return Err(ModelError::InvalidSimSpecs(
                "horizon is shorter than one dt".into(),
            ));
        }
        Ok(())
    }

    /// Number of Euler steps in the run.
    pub fn steps(&self) -> usize {
        ((self.stop_time - self.start_time) / self.dt).round() as usize
    }

    pub fn time_at(&self, index: usize) -> f64 {
        self.start_time + index as f64 * self.dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    Stock,
    Flow,
    Aux,
    Constant,
}

/// Piecewise-linear table function, clamped outside its x range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphicalFn {
    pub x_points: Vec<f64>,
    pub y_points: Vec<f64>,
}

impl GraphicalFn {
    pub fn new(x_points: Vec<f64>, y_points: Vec<f64>) -> Result<Self, String> {
        if x_points.len() != y_points.len() {
            return Err(format!(
                "{} x points but {} y points",
                x_points.len(),
                y_points.len()
            ));
        }
        if x_points.len() < 2 {
            return Err("at least two points are required".into());
        }
        if x_points.iter().chain(&y_points).any(|v| !v.is_finite()) {
            return Err("non-finite point".into());
        }
        if x_points.windows(2).any(|w| w[1] <= w[0]) {
            return Err("x points must be strictly increasing".into());
        }
        Ok(GraphicalFn { x_points, y_points })
    }

    pub fn lookup(&self, x: f64) -> f64 {
        let xs = &self.x_points;
        let ys = &self.y_points;
        let last = xs.len() - 1;
        if x <= xs[0] {
            return ys[0];
        }
        if x >= xs[last] {
            return ys[last];
        }
        // first index with xs[i] > x; x is strictly inside so 1 <= i <= last
        let i = xs.partition_point(|&p| p <= x);
        let (x0, x1, y0, y1) = (xs[i - 1], xs[i], ys[i - 1], ys[i]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableDef {
    pub name: String,
    pub kind: VariableKind,
    /// Runtime equation; for stocks this is the initial-value expression.
    pub equation: Expr,
    pub inflows: Vec<String>,
    pub outflows: Vec<String>,
    pub graphical_fn: Option<GraphicalFn>,
    pub position: Option<Point>,
}

impl VariableDef {
    pub fn is_stock(&self) -> bool {
        self.kind == VariableKind::Stock
    }

    /// Initial-value expression of a stock.
    pub fn initial_equation(&self) -> Option<&Expr> {
        self.is_stock().then_some(&self.equation)
    }
}

/// A parsed and validated model. Immutable once built.
#[derive(Debug, Clone)]
pub struct ModelDef {
    pub name: String,
    pub sim_specs: SimSpecs,
    pub variables: Vec<VariableDef>,
    /// Standalone graphical functions callable as `name(x)`.
    pub graphical_fns: BTreeMap<String, GraphicalFn>,
    index: HashMap<String, usize>,
}

impl ModelDef {
    /// Assembles a model from already-canonical variables and validates it.
    pub fn new(
        name: impl Into<String>,
        sim_specs: SimSpecs,
        variables: Vec<VariableDef>,
        graphical_fns: BTreeMap<String, GraphicalFn>,
    ) -> Result<Self, ModelError> {
        sim_specs.validate()?;
        if variables.is_empty() {
            return Err(ModelError::NoVariables);
        }
        let mut index = HashMap::with_capacity(variables.len());
        for (i, var) in variables.iter().enumerate() {
            if index.insert(var.name.clone(), i).is_some() {
                return Err(ModelError::DuplicateName(var.name.clone()));
            }
        }
        let model = ModelDef {
            name: name.into(),
            sim_specs,
            variables,
            graphical_fns,
            index,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<(), ModelError> {
        for var in &self.variables {
            for ident in var.equation.identifiers() {
                if !self.index.contains_key(ident) {
                    return Err(ModelError::UnresolvedIdentifier {
                        name: ident.to_string(),
                        variable: var.name.clone(),
                    });
                }
            }
            for table in var.equation.tables() {
                if self.table(table).is_none() {
                    return Err(ModelError::UnresolvedIdentifier {
                        name: table.to_string(),
                        variable: var.name.clone(),
                    });
                }
            }
            if var.is_stock() {
                if var.equation.identifiers().contains(&var.name.as_str()) {
                    return Err(ModelError::SelfReferentialInitial(var.name.clone()));
                }
                for flow in var.inflows.iter().chain(&var.outflows) {
                    match self.variable(flow) {
                        Some(f) if f.kind == VariableKind::Flow => {}
                        Some(_) => {
                            return Err(ModelError::NotAFlow {
                                stock: var.name.clone(),
                                flow: flow.clone(),
                            })
                        }
                        None => {
                            return Err(ModelError::UnresolvedIdentifier {
                                name: flow.clone(),
                                variable: var.name.clone(),
                            })
                        }
                    }
                }
                if let Some(dup) = var.inflows.iter().find(|f| var.outflows.contains(f)) {
                    return Err(ModelError::UnsupportedFeature(format!(
                        "flow `{dup}` is both an inflow and an outflow of `{}`",
                        var.name
                    )));
                }
            } else if !var.inflows.is_empty() || !var.outflows.is_empty() {
                return Err(ModelError::UnsupportedFeature(format!(
                    "non-stock `{}` declares inflows/outflows",
                    var.name
                )));
            }
            if var.kind == VariableKind::Constant && !var.equation.identifiers().is_empty() {
                return Err(ModelError::UnsupportedFeature(format!(
                    "constant `{}` references other variables",
                    var.name
                )));
            }
        }
        Ok(())
    }

    pub fn variable(&self, name: &str) -> Option<&VariableDef> {
        self.index.get(name).map(|&i| &self.variables[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Resolves a table reference: standalone graphical functions first,
    /// then variables carrying their own table.
    pub fn table(&self, name: &str) -> Option<&GraphicalFn> {
        self.graphical_fns
            .get(name)
            .or_else(|| self.variable(name).and_then(|v| v.graphical_fn.as_ref()))
    }

    pub fn stocks(&self) -> impl Iterator<Item = &VariableDef> {
        self.variables.iter().filter(|v| v.is_stock())
    }

    /// Stocks fed (inflow) or drained (outflow) by `flow`.
    pub fn stocks_of_flow(&self, flow: &str) -> (Vec<&str>, Vec<&str>) {
        let mut fed = Vec::new();
        let mut drained = Vec::new();
        for stock in self.stocks() {
            if stock.inflows.iter().any(|f| f == flow) {
                fed.push(stock.name.as_str());
            }
            if stock.outflows.iter().any(|f| f == flow) {
                drained.push(stock.name.as_str());
            }
        }
        (fed, drained)
    }
}
