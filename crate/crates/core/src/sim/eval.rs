//! Expression interpreter.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::model::{BinaryOp, Builtin, Expr, GraphicalFn, UnaryOp};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("{function} is undefined for {argument}")]
    DomainError { function: &'static str, argument: f64 },
    #[error("result overflowed to a non-finite value")]
    NonFinite,
    #[error("unbound identifier `{0}`")]
    Unbound(String),
    #[error("unknown graphical function `{0}`")]
    MissingTable(String),
}

/// Variable values (and tables) visible to an expression.
pub trait Scope {
    fn value(&self, name: &str) -> Option<f64>;

    fn table(&self, _name: &str) -> Option<&GraphicalFn> {
        None
    }
}

impl Scope for HashMap<String, f64> {
    fn value(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl Scope for BTreeMap<String, f64> {
    fn value(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl<S: Scope + ?Sized> Scope for &S {
    fn value(&self, name: &str) -> Option<f64> {
        (**self).value(name)
    }

    fn table(&self, name: &str) -> Option<&GraphicalFn> {
        (**self).table(name)
    }
}

/// `base` with one variable replaced.
pub struct Override<'a, S: ?Sized> {
    pub base: &'a S,
    pub name: &'a str,
    pub value: f64,
}

impl<S: Scope + ?Sized> Scope for Override<'_, S> {
    fn value(&self, name: &str) -> Option<f64> {
        if name == self.name {
            Some(self.value)
        } else {
            self.base.value(name)
        }
    }

    fn table(&self, name: &str) -> Option<&GraphicalFn> {
        self.base.table(name)
    }
}

fn truth(v: f64) -> bool {
    v != 0.0
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn checked(v: f64) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite)
    }
}

/// Tolerance for comparing the clock against event times, relative to dt.
const TIME_EPSILON: f64 = 1e-6;

/// Evaluates `expr` at time `t`. Errors instead of producing NaN or infinity.
pub fn eval_expr(expr: &Expr, env: &dyn Scope, t: f64, dt: f64) -> Result<f64, EvalError> {
    let eval = |e: &Expr| eval_expr(e, env, t, dt);
    match expr {
        Expr::Literal(v) => Ok(*v),
        Expr::Ident(name) => env
            .value(name)
            .ok_or_else(|| EvalError::Unbound(name.clone())),
        Expr::Unary(UnaryOp::Neg, e) => Ok(-eval(e)?),
        Expr::Unary(UnaryOp::Not, e) => Ok(flag(!truth(eval(e)?))),
        Expr::Binary(op, l, r) => {
            let a = eval(l)?;
            // short-circuit logic so guarded expressions stay guarded
            match op {
                BinaryOp::And if !truth(a) => return Ok(0.0),
                BinaryOp::Or if truth(a) => return Ok(1.0),
                _ => {}
            }
            let b = eval(r)?;
            match op {
                BinaryOp::Add => checked(a + b),
                BinaryOp::Sub => checked(a - b),
                BinaryOp::Mul => checked(a * b),
                BinaryOp::Div => {
                    if b == 0.0 {
                        Err(EvalError::DivisionByZero)
                    } else {
                        checked(a / b)
                    }
                }
                BinaryOp::Pow => {
                    let v = a.powf(b);
                    if v.is_nan() {
                        Err(EvalError::DomainError {
                            function: "^",
                            argument: a,
                        })
                    } else if a == 0.0 && b < 0.0 {
                        Err(EvalError::DivisionByZero)
                    } else {
                        checked(v)
                    }
                }
                BinaryOp::Eq => Ok(flag(a == b)),
                BinaryOp::Neq => Ok(flag(a != b)),
                BinaryOp::Lt => Ok(flag(a < b)),
                BinaryOp::Le => Ok(flag(a <= b)),
                BinaryOp::Gt => Ok(flag(a > b)),
                BinaryOp::Ge => Ok(flag(a >= b)),
                BinaryOp::And | BinaryOp::Or => Ok(flag(truth(b))),
            }
        }
        Expr::If {
            cond,
            then,
            otherwise,
        } => {
            if truth(eval(cond)?) {
                eval(then)
            } else {
                eval(otherwise)
            }
        }
        Expr::Call(builtin, args) => {
            let mut vals = [0.0; 3];
            for (slot, arg) in vals.iter_mut().zip(args) {
                *slot = eval(arg)?;
            }
            call_builtin(*builtin, &vals[..args.len()], t, dt)
        }
        Expr::Lookup { table, arg } => {
            let x = eval(arg)?;
            let gf = env
                .table(table)
                .ok_or_else(|| EvalError::MissingTable(table.clone()))?;
            Ok(gf.lookup(x))
        }
    }
}

fn call_builtin(builtin: Builtin, args: &[f64], t: f64, dt: f64) -> Result<f64, EvalError> {
    let domain = |function: &'static str, argument: f64| EvalError::DomainError { function, argument };
    let eps = TIME_EPSILON * dt.abs();
    match builtin {
        Builtin::Min => Ok(args[0].min(args[1])),
        Builtin::Max => Ok(args[0].max(args[1])),
        Builtin::Abs => Ok(args[0].abs()),
        Builtin::Exp => checked(args[0].exp()),
        Builtin::Ln => {
            if args[0] <= 0.0 {
                Err(domain("LN", args[0]))
            } else {
                Ok(args[0].ln())
            }
        }
        Builtin::Log10 => {
            if args[0] <= 0.0 {
                Err(domain("LOG10", args[0]))
            } else {
                Ok(args[0].log10())
            }
        }
        Builtin::Sqrt => {
            if args[0] < 0.0 {
                Err(domain("SQRT", args[0]))
            } else {
                Ok(args[0].sqrt())
            }
        }
        Builtin::Int => Ok(args[0].floor()),
        Builtin::Sin => Ok(args[0].sin()),
        Builtin::Cos => Ok(args[0].cos()),
        Builtin::Step => Ok(if t >= args[1] - eps { args[0] } else { 0.0 }),
        Builtin::Pulse => {
            // volume `v` delivered within one dt, at `first` and every `interval` after
            let (volume, first) = (args[0], args[1]);
            let interval = args.get(2).copied().unwrap_or(0.0);
            if t < first - eps {
                return Ok(0.0);
            }
            let hit = if interval > 0.0 {
                let phase = (t - first) % interval;
                phase <= eps || interval - phase <= eps
            } else {
                (t - first).abs() <= eps
            };
            Ok(if hit { checked(volume / dt)? } else { 0.0 })
        }
        Builtin::Time => Ok(t),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_equation;

    fn env(pairs: &[(&str, f64)]) -> HashMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn eval_str(text: &str, pairs: &[(&str, f64)], t: f64) -> Result<f64, EvalError> {
        eval_expr(&parse_equation(text).unwrap(), &env(pairs), t, 0.25)
    }

    struct WithTable(GraphicalFn);

    impl Scope for WithTable {
        fn value(&self, _: &str) -> Option<f64> {
            Some(0.25)
        }
        fn table(&self, _: &str) -> Option<&GraphicalFn> {
            Some(&self.0)
        }
    }

    #[test]
    fn literal() {
        assert_eq!(eval_str("3.5", &[], 0.0), Ok(3.5));
    }

    #[test]
    fn lookup_interpolates() {
        let scope = WithTable(GraphicalFn::new(vec![0.0, 1.0], vec![0.0, 10.0]).unwrap());
        let e = parse_equation("tbl(x)").unwrap();
        assert_eq!(eval_expr(&e, &scope, 0.0, 1.0), Ok(2.5));
    }

    #[test]
    fn step_switches_at_its_time() {
        assert_eq!(eval_str("STEP(5, 2)", &[], 1.9), Ok(0.0));
        assert_eq!(eval_str("STEP(5, 2)", &[], 2.0), Ok(5.0));
        assert_eq!(eval_str("STEP(5, 2)", &[], 3.0), Ok(5.0));
    }

    #[test]
    fn pulse_delivers_volume_over_one_dt() {
        assert_eq!(eval_str("PULSE(1, 1)", &[], 1.0), Ok(4.0));
        assert_eq!(eval_str("PULSE(1, 1)", &[], 1.25), Ok(0.0));
        assert_eq!(eval_str("PULSE(1, 1, 2)", &[], 3.0), Ok(4.0));
        assert_eq!(eval_str("PULSE(1, 1, 2)", &[], 4.0), Ok(0.0));
        assert_eq!(eval_str("PULSE(1, 1, 2)", &[], 0.0), Ok(0.0));
    }

    #[test]
    fn arithmetic_and_precedence() {
        assert_eq!(eval_str("-(2^3)", &[], 0.0), Ok(-8.0));
        assert_eq!(eval_str("a*b+c", &[("a", 2.0), ("b", 3.0), ("c", 1.0)], 0.0), Ok(7.0));
        assert_eq!(eval_str("IF x > 0 THEN 1 ELSE 0", &[("x", -1.0)], 0.0), Ok(0.0));
        assert_eq!(eval_str("MIN(3, 4) + MAX(3, 4) + ABS(-1)", &[], 0.0), Ok(8.0));
        assert_eq!(eval_str("INT(-1.5)", &[], 0.0), Ok(-2.0));
        assert_eq!(eval_str("TIME * 2", &[], 1.5), Ok(3.0));
        assert_eq!(eval_str("1 <> 2 and not 0", &[], 0.0), Ok(1.0));
    }

    #[test]
    fn errors_instead_of_nan() {
        assert_eq!(eval_str("1 / x", &[("x", 0.0)], 0.0), Err(EvalError::DivisionByZero));
        assert!(matches!(eval_str("LN(0)", &[], 0.0), Err(EvalError::DomainError { .. })));
        assert!(matches!(eval_str("SQRT(-1)", &[], 0.0), Err(EvalError::DomainError { .. })));
        assert!(matches!(eval_str("(-8)^0.5", &[], 0.0), Err(EvalError::DomainError { .. })));
        assert_eq!(eval_str("EXP(1000)", &[], 0.0), Err(EvalError::NonFinite));
        assert_eq!(eval_str("y", &[], 0.0), Err(EvalError::Unbound("y".into())));
    }

    #[test]
    fn guarded_division_short_circuits() {
        let e = "x <> 0 and 1 / x > 0";
        assert_eq!(eval_str(e, &[("x", 0.0)], 0.0), Ok(0.0));
        assert_eq!(eval_str("IF x = 0 THEN 0 ELSE 1 / x", &[("x", 0.0)], 0.0), Ok(0.0));
    }
}
