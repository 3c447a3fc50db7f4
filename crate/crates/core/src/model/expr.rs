//! Equation AST and a precedence-climbing parser for the XMILE equation
//! subset.
//!
//! Precedence, loosest first: `or`, `and`, `not`, comparisons, `+ -`,
//! `* /`, unary minus, `^` (right associative).

use std::fmt;

use thiserror::Error;

use super::canonicalize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Eq,
    Neq,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinaryOp {
    fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
            BinaryOp::Eq => "=",
            BinaryOp::Neq => "<>",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::And => "AND",
            BinaryOp::Or => "OR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    Min,
    Max,
    Abs,
    Exp,
    Ln,
    Log10,
    Sqrt,
    Int,
    Sin,
    Cos,
    Step,
    Pulse,
    Time,
}

impl Builtin {
    pub fn from_name(name: &str) -> Option<Builtin> {
        Some(match name.to_ascii_lowercase().as_str() {
            "min" => Builtin::Min,
            "max" => Builtin::Max,
            "abs" => Builtin::Abs,
            "exp" => Builtin::Exp,
            "ln" => Builtin::Ln,
            "log10" => Builtin::Log10,
            "sqrt" => Builtin::Sqrt,
            "int" => Builtin::Int,
            "sin" => Builtin::Sin,
            "cos" => Builtin::Cos,
            "step" => Builtin::Step,
            "pulse" => Builtin::Pulse,
            "time" => Builtin::Time,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Min => "MIN",
            Builtin::Max => "MAX",
            Builtin::Abs => "ABS",
            Builtin::Exp => "EXP",
            Builtin::Ln => "LN",
            Builtin::Log10 => "LOG10",
            Builtin::Sqrt => "SQRT",
            Builtin::Int => "INT",
            Builtin::Sin => "SIN",
            Builtin::Cos => "COS",
            Builtin::Step => "STEP",
            Builtin::Pulse => "PULSE",
            Builtin::Time => "TIME",
        }
    }

    /// Accepted argument counts (inclusive range).
    pub fn arity(self) -> (usize, usize) {
        match self {
            Builtin::Time => (0, 0),
            Builtin::Min | Builtin::Max | Builtin::Step => (2, 2),
            Builtin::Pulse => (2, 3),
            _ => (1, 1),
        }
    }

    /// Builtins whose output jumps in time independently of their inputs.
    pub fn is_time_discontinuous(self) -> bool {
        matches!(self, Builtin::Step | Builtin::Pulse)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Literal(f64),
    Ident(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    If {
        cond: Box<Expr>,
        then: Box<Expr>,
        otherwise: Box<Expr>,
    },
    Call(Builtin, Vec<Expr>),
    /// Graphical-function application; `table` names a standalone table or a
    /// variable that carries one.
    Lookup { table: String, arg: Box<Expr> },
}

impl Expr {
    pub fn ident(name: &str) -> Expr {
        Expr::Ident(canonicalize(name))
    }

    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    /// Distinct variable references in first-occurrence order.
    pub fn identifiers(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Expr::Ident(name) = e {
                if !out.contains(&name.as_str()) {
                    out.push(name.as_str());
                }
            }
        });
        out
    }

    /// Distinct table references.
    pub fn tables(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Expr::Lookup { table, .. } = e {
                if !out.contains(&table.as_str()) {
                    out.push(table.as_str());
                }
            }
        });
        out
    }

    /// Numeric value if the expression is a (possibly negated) literal.
    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Expr::Literal(v) => Some(*v),
            Expr::Unary(UnaryOp::Neg, inner) => inner.as_constant().map(|v| -v),
            _ => None,
        }
    }

    pub fn contains_time_discontinuity(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| {
            if let Expr::Call(b, _) = e {
                found |= b.is_time_discontinuous();
            }
        });
        found
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, visit: &mut impl FnMut(&'a Expr)) {
        visit(self);
        match self {
            Expr::Literal(_) | Expr::Ident(_) => {}
            Expr::Unary(_, e) => e.walk(visit),
            Expr::Binary(_, l, r) => {
                l.walk(visit);
                r.walk(visit);
            }
            Expr::If {
                cond,
                then,
                otherwise,
            } => {
                cond.walk(visit);
                then.walk(visit);
                otherwise.walk(visit);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.walk(visit)),
            Expr::Lookup { arg, .. } => arg.walk(visit),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Literal(v) => write!(f, "{v}"),
            Expr::Ident(name) => write!(f, "{name}"),
            Expr::Unary(UnaryOp::Neg, e) => write!(f, "-({e})"),
            Expr::Unary(UnaryOp::Not, e) => write!(f, "NOT ({e})"),
            Expr::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::If {
                cond,
                then,
                otherwise,
            } => write!(f, "IF {cond} THEN {then} ELSE {otherwise}"),
            Expr::Call(Builtin::Time, _) => write!(f, "TIME"),
            Expr::Call(b, args) => {
                write!(f, "{}(", b.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
            Expr::Lookup { table, arg } => write!(f, "LOOKUP({table}, {arg})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{message} at offset {position}")]
pub struct SyntaxError {
    /// Byte offset into the equation text.
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Quoted(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
    If,
    Then,
    Else,
    And,
    Or,
    Not,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, SyntaxError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    let err = |position: usize, message: String| SyntaxError { position, message };
    while i < bytes.len() {
        let c = text[i..].chars().next().unwrap();
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == '.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let lexeme = &text[start..i];
            let v: f64 = lexeme
                .parse()
                .map_err(|_| err(start, format!("invalid number `{lexeme}`")))?;
            toks.push((start, Tok::Num(v)));
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            while i < text.len() {
                let ch = text[i..].chars().next().unwrap();
                if ch.is_alphanumeric() || ch == '_' {
                    i += ch.len_utf8();
                } else {
                    break;
                }
            }
            let word = &text[start..i];
            let tok = match word.to_ascii_lowercase().as_str() {
                "if" => Tok::If,
                "then" => Tok::Then,
                "else" => Tok::Else,
                "and" => Tok::And,
                "or" => Tok::Or,
                "not" => Tok::Not,
                _ => Tok::Ident(word.to_string()),
            };
            toks.push((start, tok));
            continue;
        }
        if c == '"' {
            let close = text[i + 1..]
                .find('"')
                .ok_or_else(|| err(start, "unterminated quoted name".into()))?;
            toks.push((start, Tok::Quoted(text[i + 1..i + 1 + close].to_string())));
            i += close + 2;
            continue;
        }
        let two = text.get(i..i + 2).unwrap_or("");
        let tok = match two {
            "<=" => Some(Tok::Op("<=")),
            ">=" => Some(Tok::Op(">=")),
            "<>" => Some(Tok::Op("<>")),
            _ => None,
        };
        if let Some(tok) = tok {
            toks.push((start, tok));
            i += 2;
            continue;
        }
        let tok = match c {
            '+' => Tok::Op("+"),
            '-' => Tok::Op("-"),
            '*' => Tok::Op("*"),
            '/' => Tok::Op("/"),
            '^' => Tok::Op("^"),
            '=' => Tok::Op("="),
            '<' => Tok::Op("<"),
            '>' => Tok::Op(">"),
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            other => return Err(err(start, format!("unexpected character `{other}`"))),
        };
        toks.push((start, tok));
        i += c.len_utf8();
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError {
            position: self.offset(),
            message: message.into(),
        })
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), SyntaxError> {
        if self.eat(&tok) {
            Ok(())
        } else {
            self.error(format!("expected {what}"))
        }
    }

    fn eat_op(&mut self, ops: &[&'static str]) -> Option<&'static str> {
        match self.peek() {
            Some(Tok::Op(op)) if ops.contains(op) => {
                let op = *op;
                self.pos += 1;
                Some(op)
            }
            _ => None,
        }
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        if self.eat(&Tok::If) {
            let cond = self.expr()?;
            self.expect(Tok::Then, "THEN")?;
            let then = self.expr()?;
            self.expect(Tok::Else, "ELSE")?;
            let otherwise = self.expr()?;
            return Ok(Expr::If {
                cond: Box::new(cond),
                then: Box::new(then),
                otherwise: Box::new(otherwise),
            });
        }
        self.or()
    }

    fn or(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.and()?;
        while self.eat(&Tok::Or) {
            let rhs = self.and()?;
            lhs = Expr::binary(BinaryOp::Or, lhs, rhs);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.not()?;
        while self.eat(&Tok::And) {
            let rhs = self.not()?;
            lhs = Expr::binary(BinaryOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn not(&mut self) -> Result<Expr, SyntaxError> {
        if self.eat(&Tok::Not) {
            let inner = self.not()?;
            return Ok(Expr::Unary(UnaryOp::Not, Box::new(inner)));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.additive()?;
        while let Some(op) = self.eat_op(&["=", "<>", "<", "<=", ">", ">="]) {
            let op = match op {
                "=" => BinaryOp::Eq,
                "<>" => BinaryOp::Neq,
                "<" => BinaryOp::Lt,
                "<=" => BinaryOp::Le,
                ">" => BinaryOp::Gt,
                _ => BinaryOp::Ge,
            };
            let rhs = self.additive()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn additive(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.multiplicative()?;
        while let Some(op) = self.eat_op(&["+", "-"]) {
            let op = if op == "+" { BinaryOp::Add } else { BinaryOp::Sub };
            let rhs = self.multiplicative()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn multiplicative(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.eat_op(&["*", "/"]) {
            let op = if op == "*" { BinaryOp::Mul } else { BinaryOp::Div };
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if self.eat_op(&["-"]).is_some() {
            let inner = self.unary()?;
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        if self.eat_op(&["+"]).is_some() {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, SyntaxError> {
        let base = self.primary()?;
        if self.eat_op(&["^"]).is_some() {
            // right associative; exponent may carry its own sign
            let exponent = self.unary()?;
            return Ok(Expr::binary(BinaryOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        let start = self.offset();
        let Some((_, tok)) = self.toks.get(self.pos).cloned() else {
            return self.error("unexpected end of equation");
        };
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Expr::Literal(v)),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Quoted(name) => Ok(Expr::Ident(canonicalize(&name))),
            Tok::Ident(word) => {
                if self.eat(&Tok::LParen) {
                    let args = self.args()?;
                    return call(&word, args, start);
                }
                match Builtin::from_name(&word) {
                    Some(Builtin::Time) => Ok(Expr::Call(Builtin::Time, Vec::new())),
                    _ => Ok(Expr::Ident(canonicalize(&word))),
                }
            }
            _ => {
                self.pos -= 1;
                self.error("expected a value")
            }
        }
    }

    fn args(&mut self) -> Result<Vec<Expr>, SyntaxError> {
        let mut args = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if self.eat(&Tok::RParen) {
                return Ok(args);
            }
            self.expect(Tok::Comma, "`,` or `)`")?;
        }
    }
}

fn call(name: &str, mut args: Vec<Expr>, position: usize) -> Result<Expr, SyntaxError> {
    if let Some(builtin) = Builtin::from_name(name) {
        let (lo, hi) = builtin.arity();
        if args.len() < lo || args.len() > hi {
            return Err(SyntaxError {
                position,
                message: format!(
                    "{} expects {} argument(s), got {}",
                    builtin.name(),
                    if lo == hi { lo.to_string() } else { format!("{lo}-{hi}") },
                    args.len()
                ),
            });
        }
        return Ok(Expr::Call(builtin, args));
    }
    if name.eq_ignore_ascii_case("lookup") {
        if args.len() != 2 {
            return Err(SyntaxError {
                position,
                message: "LOOKUP expects (table, input)".into(),
            });
        }
        let arg = args.pop().unwrap();
        let Expr::Ident(table) = args.pop().unwrap() else {
            return Err(SyntaxError {
                position,
                message: "LOOKUP table must be a name".into(),
            });
        };
        return Ok(Expr::Lookup {
            table,
            arg: Box::new(arg),
        });
    }
    if args.len() == 1 {
        return Ok(Expr::Lookup {
            table: canonicalize(name),
            arg: Box::new(args.pop().unwrap()),
        });
    }
    Err(SyntaxError {
        position,
        message: format!("unknown function `{name}`"),
    })
}

/// Parses one equation into an AST. Identifiers are canonicalized.
pub fn parse_equation(text: &str) -> Result<Expr, SyntaxError> {
    let toks = tokenize(text)?;
    if toks.is_empty() {
        return Err(SyntaxError {
            position: 0,
            message: "empty equation".into(),
        });
    }
    let mut parser = Parser {
        toks,
        pos: 0,
        end: text.len(),
    };
    let expr = parser.expr()?;
    if parser.pos != parser.toks.len() {
        return parser.error("unexpected trailing input");
    }
    Ok(expr)
}
