//! Guard and score expressions.
//!
//! Scenario documents carry small expressions as text: guards such as
//! `fire >= Moderate and occupancy > 0` and scores such as
//! `1 - 0.5 * (fire / 4) - 0.5 * (1 - knowledge)`. Text is parsed into a
//! [`Syntax`] tree, then bound against the scenario variables into an
//! [`Expr`], which is what the engine evaluates.
//!
//! Variables evaluate to the index of their current level. Level names are
//! resolved to indices at bind time: inside a comparison against a variable
//! they are looked up in that variable's domain, elsewhere they must name a
//! level of exactly one variable.

use std::fmt;

use crate::model::{StateVector, Variable};

/// Byte range of a node within its source text.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    fn join(self, other: Span) -> Span {
        Span::new(self.start.min(other.start), self.end.max(other.end))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogicOp {
    And,
    Or,
}

impl ArithOp {
    fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    fn apply(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
        }
    }
}

impl LogicOp {
    fn symbol(self) -> &'static str {
        match self {
            LogicOp::And => "and",
            LogicOp::Or => "or",
        }
    }
}

/// Error raised while parsing or binding an expression.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message} (at offset {})", span.start)]
pub struct ExprError {
    pub message: String,
    pub span: Span,
    pub code: &'static str,
}

impl ExprError {
    fn new(code: &'static str, span: Span, message: impl Into<String>) -> Self {
        ExprError {
            message: message.into(),
            span,
            code,
        }
    }
}

/// Error raised while evaluating a bound expression.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("division by zero at offset {}", .0.start)]
    DivisionByZero(Span),
    #[error("state has {found} levels, expression expects at least {expected}")]
    StateShape { expected: usize, found: usize },
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
}

fn lex(src: &str) -> Result<Vec<(Tok, Span)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
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
            let text = &src[start..i];
            let value: f64 = text
                .parse()
                .map_err(|_| ExprError::new("bad-number", Span::new(start, i), format!("malformed number `{text}`")))?;
            out.push((Tok::Num(value), Span::new(start, i)));
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), Span::new(start, i)));
            continue;
        }
        let two = src.get(i..i + 2).unwrap_or("");
        let op: Option<&'static str> = match two {
            "==" => Some("=="),
            "!=" => Some("!="),
            "<=" => Some("<="),
            ">=" => Some(">="),
            "&&" => Some("and"),
            "||" => Some("or"),
            _ => None,
        };
        if let Some(op) = op {
            out.push((Tok::Op(op), Span::new(i, i + 2)));
            i += 2;
            continue;
        }
        let tok = match c {
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'+' => Tok::Op("+"),
            b'-' => Tok::Op("-"),
            b'*' => Tok::Op("*"),
            b'/' => Tok::Op("/"),
            b'<' => Tok::Op("<"),
            b'>' => Tok::Op(">"),
            b'!' => Tok::Op("not"),
            _ => {
                let ch = src[i..].chars().next().unwrap_or('?');
                return Err(ExprError::new(
                    "unexpected-character",
                    Span::new(i, i + ch.len_utf8()),
                    format!("unexpected character `{ch}`"),
                ));
            }
        };
        out.push((tok, Span::new(i, i + 1)));
        i += 1;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Unbound syntax

/// Parsed but unbound expression. Identifiers are still plain text.
#[derive(Debug, Clone, PartialEq)]
pub enum Syntax {
    Number(f64, Span),
    Bool(bool, Span),
    Ident(String, Span),
    Neg(Box<Syntax>, Span),
    Not(Box<Syntax>, Span),
    Arith(ArithOp, Box<Syntax>, Box<Syntax>),
    Compare(CmpOp, Box<Syntax>, Box<Syntax>),
    Logic(LogicOp, Box<Syntax>, Box<Syntax>),
}

impl Syntax {
    pub fn span(&self) -> Span {
        match self {
            Syntax::Number(_, s) | Syntax::Bool(_, s) | Syntax::Ident(_, s) => *s,
            Syntax::Neg(_, s) | Syntax::Not(_, s) => *s,
            Syntax::Arith(_, l, r) | Syntax::Compare(_, l, r) | Syntax::Logic(_, l, r) => l.span().join(r.span()),
        }
    }
}

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn peek_op(&self) -> Option<&'static str> {
        match self.peek() {
            Some(Tok::Op(op)) => Some(op),
            Some(Tok::Ident(word)) if word == "and" => Some("and"),
            Some(Tok::Ident(word)) if word == "or" => Some("or"),
            Some(Tok::Ident(word)) if word == "not" => Some("not"),
            _ => None,
        }
    }

    fn here(&self) -> Span {
        self.toks
            .get(self.pos)
            .map(|(_, s)| *s)
            .unwrap_or(Span::new(self.len, self.len))
    }

    fn bump(&mut self) -> Span {
        let span = self.here();
        self.pos += 1;
        span
    }

    fn or(&mut self) -> Result<Syntax, ExprError> {
        let mut lhs = self.and()?;
        while self.peek_op() == Some("or") {
            self.bump();
            let rhs = self.and()?;
            lhs = Syntax::Logic(LogicOp::Or, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Syntax, ExprError> {
        let mut lhs = self.not()?;
        while self.peek_op() == Some("and") {
            self.bump();
            let rhs = self.not()?;
            lhs = Syntax::Logic(LogicOp::And, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn not(&mut self) -> Result<Syntax, ExprError> {
        if self.peek_op() == Some("not") {
            let start = self.bump();
            let inner = self.not()?;
            let span = start.join(inner.span());
            return Ok(Syntax::Not(Box::new(inner), span));
        }
        self.compare()
    }

    fn compare(&mut self) -> Result<Syntax, ExprError> {
        let lhs = self.additive()?;
        let op = match self.peek_op() {
            Some("==") => CmpOp::Eq,
            Some("!=") => CmpOp::Ne,
            Some("<") => CmpOp::Lt,
            Some("<=") => CmpOp::Le,
            Some(">") => CmpOp::Gt,
            Some(">=") => CmpOp::Ge,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.additive()?;
        if matches!(self.peek_op(), Some("==" | "!=" | "<" | "<=" | ">" | ">=")) {
            return Err(ExprError::new(
                "chained-comparison",
                self.here(),
                "comparisons do not chain; use `and`",
            ));
        }
        Ok(Syntax::Compare(op, Box::new(lhs), Box::new(rhs)))
    }

    fn additive(&mut self) -> Result<Syntax, ExprError> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek_op() {
                Some("+") => ArithOp::Add,
                Some("-") => ArithOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.multiplicative()?;
            lhs = Syntax::Arith(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn multiplicative(&mut self) -> Result<Syntax, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek_op() {
                Some("*") => ArithOp::Mul,
                Some("/") => ArithOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Syntax::Arith(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Syntax, ExprError> {
        if self.peek_op() == Some("-") {
            let start = self.bump();
            let inner = self.unary()?;
            let span = start.join(inner.span());
            return Ok(Syntax::Neg(Box::new(inner), span));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Syntax, ExprError> {
        let span = self.here();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.bump();
                Ok(Syntax::Number(v, span))
            }
            Some(Tok::Ident(word)) => match word.as_str() {
                "true" | "false" => {
                    self.bump();
                    Ok(Syntax::Bool(word == "true", span))
                }
                "and" | "or" | "not" => Err(ExprError::new(
                    "syntax",
                    span,
                    format!("expected an operand, found `{word}`"),
                )),
                _ => {
                    self.bump();
                    Ok(Syntax::Ident(word, span))
                }
            },
            Some(Tok::LParen) => {
                self.bump();
                let inner = self.or()?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.bump();
                        Ok(inner)
                    }
                    _ => Err(ExprError::new("syntax", self.here(), "expected `)`")),
                }
            }
            Some(Tok::RParen) => Err(ExprError::new("syntax", span, "unexpected `)`")),
            Some(Tok::Op(op)) => Err(ExprError::new(
                "syntax",
                span,
                format!("expected an operand, found `{op}`"),
            )),
            None => Err(ExprError::new("syntax", span, "unexpected end of expression")),
        }
    }
}

/// Parses expression text into an unbound syntax tree.
pub fn parse(src: &str) -> Result<Syntax, ExprError> {
    let toks = lex(src)?;
    let mut parser = Parser {
        toks,
        pos: 0,
        len: src.len(),
    };
    if parser.toks.is_empty() {
        return Err(ExprError::new("syntax", Span::new(0, src.len()), "empty expression"));
    }
    let tree = parser.or()?;
    if parser.pos < parser.toks.len() {
        return Err(ExprError::new("syntax", parser.here(), "unexpected trailing input"));
    }
    Ok(tree)
}

// ---------------------------------------------------------------------------
// Bound expressions

/// Result type of an expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Type {
    Number,
    Boolean,
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Type::Number => "number",
            Type::Boolean => "boolean",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Number(f64),
    Bool(bool),
    /// Current level index of a variable.
    Var(usize),
    /// A named level, stored as `(variable, index)`.
    Level(usize, u16),
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Arith(ArithOp, Box<Expr>, Box<Expr>),
    Compare(CmpOp, Box<Expr>, Box<Expr>),
    Logic(LogicOp, Box<Expr>, Box<Expr>),
}

/// A bound, type-checked expression.
///
/// Equality ignores source spans so that a model re-parsed from its own
/// rendering compares equal to the original.
#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

/// Evaluated value of an expression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Number(f64),
    Bool(bool),
}

impl Value {
    pub fn as_number(self) -> Option<f64> {
        match self {
            Value::Number(v) => Some(v),
            Value::Bool(_) => None,
        }
    }

    pub fn as_bool(self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(b),
            Value::Number(_) => None,
        }
    }
}

impl Expr {
    fn new(kind: ExprKind, span: Span) -> Self {
        Expr { kind, span }
    }

    pub fn constant_bool(value: bool) -> Self {
        Expr::new(ExprKind::Bool(value), Span::default())
    }

    pub fn ty(&self) -> Type {
        match &self.kind {
            ExprKind::Number(_) | ExprKind::Var(_) | ExprKind::Level(..) => Type::Number,
            ExprKind::Neg(_) | ExprKind::Arith(..) => Type::Number,
            ExprKind::Bool(_) | ExprKind::Not(_) | ExprKind::Compare(..) | ExprKind::Logic(..) => Type::Boolean,
        }
    }

    /// Evaluates against a state. Booleans short-circuit.
    pub fn eval(&self, state: &StateVector) -> Result<Value, EvalError> {
        Ok(match &self.kind {
            ExprKind::Bool(b) => Value::Bool(*b),
            ExprKind::Not(inner) => Value::Bool(!inner.eval_bool(state)?),
            ExprKind::Compare(op, l, r) => Value::Bool(op.apply(l.eval_number(state)?, r.eval_number(state)?)),
            ExprKind::Logic(LogicOp::And, l, r) => Value::Bool(l.eval_bool(state)? && r.eval_bool(state)?),
            ExprKind::Logic(LogicOp::Or, l, r) => Value::Bool(l.eval_bool(state)? || r.eval_bool(state)?),
            _ => Value::Number(self.eval_number(state)?),
        })
    }

    pub fn eval_number(&self, state: &StateVector) -> Result<f64, EvalError> {
        match &self.kind {
            ExprKind::Number(v) => Ok(*v),
            ExprKind::Var(var) => {
                state
                    .levels()
                    .get(*var)
                    .map(|&level| f64::from(level))
                    .ok_or(EvalError::StateShape {
                        expected: var + 1,
                        found: state.len(),
                    })
            }
            ExprKind::Level(_, index) => Ok(f64::from(*index)),
            ExprKind::Neg(inner) => Ok(-inner.eval_number(state)?),
            ExprKind::Arith(op, l, r) => {
                let lhs = l.eval_number(state)?;
                let rhs = r.eval_number(state)?;
                match op {
                    ArithOp::Add => Ok(lhs + rhs),
                    ArithOp::Sub => Ok(lhs - rhs),
                    ArithOp::Mul => Ok(lhs * rhs),
                    ArithOp::Div if rhs == 0.0 => Err(EvalError::DivisionByZero(self.span)),
                    ArithOp::Div => Ok(lhs / rhs),
                }
            }
            _ => Ok(if self.eval_bool(state)? { 1.0 } else { 0.0 }),
        }
    }

    pub fn eval_bool(&self, state: &StateVector) -> Result<bool, EvalError> {
        match self.eval(state)? {
            Value::Bool(b) => Ok(b),
            Value::Number(v) => Ok(v != 0.0),
        }
    }

    /// Folds the expression to a constant when it reads no variables.
    pub fn constant(&self) -> Option<Value> {
        fn reads_state(e: &Expr) -> bool {
            match &e.kind {
                ExprKind::Var(_) => true,
                ExprKind::Number(_) | ExprKind::Bool(_) | ExprKind::Level(..) => false,
                ExprKind::Neg(i) | ExprKind::Not(i) => reads_state(i),
                ExprKind::Arith(_, l, r) | ExprKind::Compare(_, l, r) | ExprKind::Logic(_, l, r) => {
                    reads_state(l) || reads_state(r)
                }
            }
        }
        if reads_state(self) {
            return None;
        }
        self.eval(&StateVector::new(Vec::new())).ok()
    }

    /// Renders canonical text that re-binds to an equal expression.
    pub fn render(&self, variables: &[Variable]) -> String {
        let mut out = String::new();
        self.write(variables, &mut out);
        out
    }

    fn precedence(&self) -> u8 {
        match &self.kind {
            ExprKind::Logic(LogicOp::Or, ..) => 1,
            ExprKind::Logic(LogicOp::And, ..) => 2,
            ExprKind::Not(_) => 3,
            ExprKind::Compare(..) => 4,
            ExprKind::Arith(ArithOp::Add | ArithOp::Sub, ..) => 5,
            ExprKind::Arith(ArithOp::Mul | ArithOp::Div, ..) => 6,
            ExprKind::Neg(_) => 7,
            _ => 8,
        }
    }

    fn write_child(&self, variables: &[Variable], out: &mut String, parens: bool) {
        if parens {
            out.push('(');
            self.write(variables, out);
            out.push(')');
        } else {
            self.write(variables, out);
        }
    }

    fn write(&self, variables: &[Variable], out: &mut String) {
        let prec = self.precedence();
        match &self.kind {
            ExprKind::Number(v) => out.push_str(&format!("{v}")),
            ExprKind::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            ExprKind::Var(var) => out.push_str(&variables[*var].name),
            ExprKind::Level(var, index) => out.push_str(&variables[*var].levels[*index as usize]),
            ExprKind::Neg(inner) => {
                out.push('-');
                inner.write_child(variables, out, inner.precedence() < 8);
            }
            ExprKind::Not(inner) => {
                out.push_str("not ");
                inner.write_child(variables, out, inner.precedence() < prec);
            }
            ExprKind::Arith(op, l, r) => {
                l.write_child(variables, out, l.precedence() < prec);
                out.push_str(&format!(" {} ", op.symbol()));
                r.write_child(variables, out, r.precedence() <= prec);
            }
            ExprKind::Compare(op, l, r) => {
                l.write_child(variables, out, l.precedence() <= prec);
                out.push_str(&format!(" {} ", op.symbol()));
                r.write_child(variables, out, r.precedence() <= prec);
            }
            ExprKind::Logic(op, l, r) => {
                l.write_child(variables, out, l.precedence() < prec);
                out.push_str(&format!(" {} ", op.symbol()));
                r.write_child(variables, out, r.precedence() <= prec);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Binding

/// Resolves identifiers against scenario variables and type-checks.
pub struct Binder<'a> {
    variables: &'a [Variable],
}

impl<'a> Binder<'a> {
    pub fn new(variables: &'a [Variable]) -> Self {
        Binder { variables }
    }

    /// Parses and binds `src`, requiring the result to have type `expected`.
    pub fn bind_text(&self, src: &str, expected: Type) -> Result<Expr, ExprError> {
        let syntax = parse(src)?;
        let expr = self.bind(&syntax)?;
        if expr.ty() != expected {
            return Err(ExprError::new(
                "type-mismatch",
                expr.span,
                format!("expected a {expected} expression, found a {}", expr.ty()),
            ));
        }
        Ok(expr)
    }

    fn variable(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    fn level_anywhere(&self, name: &str, span: Span) -> Result<Expr, ExprError> {
        let hits: Vec<(usize, usize)> = self
            .variables
            .iter()
            .enumerate()
            .filter_map(|(vi, v)| v.level_index(name).map(|li| (vi, li)))
            .collect();
        match hits.as_slice() {
            [(var, level)] => Ok(Expr::new(ExprKind::Level(*var, *level as u16), span)),
            [] => Err(ExprError::new(
                "unknown-identifier",
                span,
                format!("`{name}` is neither a variable nor a level"),
            )),
            _ => Err(ExprError::new(
                "ambiguous-level",
                span,
                format!(
                    "level `{name}` belongs to several variables ({}); compare it directly against one",
                    hits.iter()
                        .map(|(v, _)| self.variables[*v].name.as_str())
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
            )),
        }
    }

    fn bind_ident(&self, name: &str, span: Span, context: Option<usize>) -> Result<Expr, ExprError> {
        if let Some(var) = self.variable(name) {
            return Ok(Expr::new(ExprKind::Var(var), span));
        }
        if let Some(var) = context {
            if let Some(level) = self.variables[var].level_index(name) {
                return Ok(Expr::new(ExprKind::Level(var, level as u16), span));
            }
            return Err(ExprError::new(
                "unknown-level",
                span,
                format!("`{name}` is not a level of `{}`", self.variables[var].name),
            ));
        }
        self.level_anywhere(name, span)
    }

    fn number(&self, syntax: &Syntax) -> Result<Expr, ExprError> {
        let expr = self.bind(syntax)?;
        if expr.ty() != Type::Number {
            return Err(ExprError::new("type-mismatch", expr.span, "expected a number"));
        }
        Ok(expr)
    }

    fn boolean(&self, syntax: &Syntax) -> Result<Expr, ExprError> {
        let expr = self.bind(syntax)?;
        if expr.ty() != Type::Boolean {
            return Err(ExprError::new("type-mismatch", expr.span, "expected a boolean"));
        }
        Ok(expr)
    }

    fn comparand(&self, syntax: &Syntax, other: &Syntax) -> Result<Expr, ExprError> {
        if let Syntax::Ident(name, span) = syntax {
            let context = match other {
                Syntax::Ident(other_name, _) => self.variable(other_name),
                _ => None,
            };
            let expr = self.bind_ident(name, *span, context)?;
            return Ok(expr);
        }
        self.number(syntax)
    }

    pub fn bind(&self, syntax: &Syntax) -> Result<Expr, ExprError> {
        let span = syntax.span();
        let kind = match syntax {
            Syntax::Number(v, _) => ExprKind::Number(*v),
            Syntax::Bool(b, _) => ExprKind::Bool(*b),
            Syntax::Ident(name, span) => return self.bind_ident(name, *span, None),
            Syntax::Neg(inner, _) => ExprKind::Neg(Box::new(self.number(inner)?)),
            Syntax::Not(inner, _) => ExprKind::Not(Box::new(self.boolean(inner)?)),
            Syntax::Arith(op, l, r) => {
                let lhs = self.number(l)?;
                let rhs = self.number(r)?;
                if *op == ArithOp::Div && rhs.constant() == Some(Value::Number(0.0)) {
                    return Err(ExprError::new("division-by-zero", rhs.span, "division by zero"));
                }
                ExprKind::Arith(*op, Box::new(lhs), Box::new(rhs))
            }
            Syntax::Compare(op, l, r) => {
                let lhs = self.comparand(l, r)?;
                let rhs = self.comparand(r, l)?;
                if lhs.ty() != Type::Number || rhs.ty() != Type::Number {
                    return Err(ExprError::new(
                        "type-mismatch",
                        span,
                        "comparisons operate on numbers and levels",
                    ));
                }
                ExprKind::Compare(*op, Box::new(lhs), Box::new(rhs))
            }
            Syntax::Logic(op, l, r) => ExprKind::Logic(*op, Box::new(self.boolean(l)?), Box::new(self.boolean(r)?)),
        };
        Ok(Expr::new(kind, span))
    }
}
