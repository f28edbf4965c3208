//! A small univariate expression language.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?          // right-associative
//! primary := number | 'x' | 't' | 'pi' | 'e'
//!          | func '(' expr ')' | '(' expr ')'
//! func    := 'abs' | 'exp' | 'ln' | 'sqrt' | 'sin' | 'cos'
//! ```
//!
//! `^` binds tighter than unary minus, so `-x^2` is `-(x^2)` and `2^-1` is
//! `2^(-1)`. Implicit multiplication is not accepted: `2x` is a parse error.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Abs,
    Exp,
    Ln,
    Sqrt,
    Sin,
    Cos,
}

impl UnaryOp {
    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Abs => "abs",
            UnaryOp::Exp => "exp",
            UnaryOp::Ln => "ln",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
        }
    }

    fn from_name(name: &str) -> Option<UnaryOp> {
        Some(match name {
            "abs" => UnaryOp::Abs,
            "exp" => UnaryOp::Exp,
            "ln" => UnaryOp::Ln,
            "sqrt" => UnaryOp::Sqrt,
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
            BinaryOp::Pow => '^',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinaryOp::Add | BinaryOp::Sub => 1,
            BinaryOp::Mul | BinaryOp::Div => 2,
            BinaryOp::Pow => 4,
        }
    }
}

/// A node of the expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(char),
    Unary(UnaryOp, Arc<Node>),
    Binary(BinaryOp, Arc<Node>, Arc<Node>),
}

/// An immutable parsed expression in at most one free variable.
///
/// Cloning is cheap: subtrees are reference counted and shared.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Arc<Node>,
    source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    /// Byte offset into the source.
    pub offset: usize,
    pub expected: String,
    /// The source line containing the offset.
    pub excerpt: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "parse error at offset {}: expected {} in \"{}\"",
            self.offset, self.expected, self.excerpt
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("domain error")]
    Domain,
    #[error("overflow: result is not finite")]
    Overflow,
}

impl Expr {
    pub fn parse(source: &str) -> Result<Expr, ParseError> {
        let mut parser = Parser {
            src: source,
            bytes: source.as_bytes(),
            pos: 0,
            var: None,
        };
        let root = parser.parse_expr()?;
        parser.skip_ws();
        if parser.pos < parser.bytes.len() {
            return Err(parser.error("operator or end of input"));
        }
        Ok(Expr {
            root,
            source: Some(source.to_string()),
        })
    }

    pub fn constant(value: f64) -> Expr {
        Expr::from_node(Node::Const(value))
    }

    pub fn var(name: char) -> Expr {
        Expr::from_node(Node::Var(name))
    }

    fn from_node(node: Node) -> Expr {
        Expr {
            root: Arc::new(node),
            source: None,
        }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// The text this expression was parsed from, if any.
    pub fn source(&self) -> Option<&str> {
        self.source.as_deref()
    }

    /// The free variable name, or `None` for a closed expression.
    ///
    /// Trees assembled by combining expressions in different variables
    /// report the first variable found in a left-to-right walk.
    pub fn variable(&self) -> Option<char> {
        fn walk(node: &Node) -> Option<char> {
            match node {
                Node::Const(_) => None,
                Node::Var(v) => Some(*v),
                Node::Unary(_, a) => walk(a),
                Node::Binary(_, a, b) => walk(a).or_else(|| walk(b)),
            }
        }
        walk(&self.root)
    }

    pub fn unary(op: UnaryOp, a: &Expr) -> Expr {
        Expr::from_node(Node::Unary(op, a.root.clone()))
    }

    pub fn binary(op: BinaryOp, a: &Expr, b: &Expr) -> Expr {
        Expr::from_node(Node::Binary(op, a.root.clone(), b.root.clone()))
    }

    pub fn add(a: &Expr, b: &Expr) -> Expr {
        Expr::binary(BinaryOp::Add, a, b)
    }

    pub fn sub(a: &Expr, b: &Expr) -> Expr {
        Expr::binary(BinaryOp::Sub, a, b)
    }

    pub fn mul(a: &Expr, b: &Expr) -> Expr {
        Expr::binary(BinaryOp::Mul, a, b)
    }

    pub fn div(a: &Expr, b: &Expr) -> Expr {
        Expr::binary(BinaryOp::Div, a, b)
    }

    /// Evaluates the expression with every occurrence of the free variable
    /// bound to `value`.
    pub fn eval(&self, value: f64) -> Result<f64, EvalError> {
        if !value.is_finite() {
            return Err(EvalError::Overflow);
        }
        eval_node(&self.root, value)
    }

    /// Pretty-prints with the minimal parenthesization that re-parses to the
    /// same tree.
    pub fn to_infix(&self) -> String {
        let mut out = String::new();
        write_node(&self.root, &mut out);
        out
    }

    /// Short description for report echoes: the original source when known.
    pub fn describe(&self) -> String {
        match &self.source {
            Some(s) => s.trim().to_string(),
            None => self.to_infix(),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_infix())
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
    }
}

fn finite(v: f64) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::Overflow)
    }
}

fn eval_node(node: &Node, value: f64) -> Result<f64, EvalError> {
    match node {
        Node::Const(c) => Ok(*c),
        Node::Var(_) => Ok(value),
        Node::Unary(op, a) => {
            let a = eval_node(a, value)?;
            let r = match op {
                UnaryOp::Neg => -a,
                UnaryOp::Abs => a.abs(),
                UnaryOp::Exp => a.exp(),
                UnaryOp::Ln => {
                    if a <= 0.0 {
                        return Err(EvalError::Domain);
                    }
                    a.ln()
                }
                UnaryOp::Sqrt => {
                    if a < 0.0 {
                        return Err(EvalError::Domain);
                    }
                    a.sqrt()
                }
                UnaryOp::Sin => a.sin(),
                UnaryOp::Cos => a.cos(),
            };
            finite(r)
        }
        Node::Binary(op, a, b) => {
            let a = eval_node(a, value)?;
            let b = eval_node(b, value)?;
            let r = match op {
                BinaryOp::Add => a + b,
                BinaryOp::Sub => a - b,
                BinaryOp::Mul => a * b,
                BinaryOp::Div => {
                    if b == 0.0 {
                        return Err(EvalError::Domain);
                    }
                    a / b
                }
                BinaryOp::Pow => pow(a, b)?,
            };
            finite(r)
        }
    }
}

fn pow(base: f64, exponent: f64) -> Result<f64, EvalError> {
    if base < 0.0 && exponent.fract() != 0.0 {
        return Err(EvalError::Domain);
    }
    if base == 0.0 && exponent < 0.0 {
        return Err(EvalError::Domain);
    }
    if exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64 {
        Ok(base.powi(exponent as i32))
    } else {
        Ok(base.powf(exponent))
    }
}

// Binding strength of a node when printed; atoms bind tightest.
fn node_precedence(node: &Node) -> u8 {
    match node {
        Node::Const(_) | Node::Var(_) => 5,
        Node::Unary(UnaryOp::Neg, _) => 3,
        Node::Unary(_, _) => 5,
        Node::Binary(op, _, _) => op.precedence(),
    }
}

fn write_wrapped(node: &Node, wrap: bool, out: &mut String) {
    if wrap {
        out.push('(');
        write_node(node, out);
        out.push(')');
    } else {
        write_node(node, out);
    }
}

fn write_node(node: &Node, out: &mut String) {
    match node {
        Node::Const(c) => {
            if *c == std::f64::consts::PI {
                out.push_str("pi");
            } else if *c == std::f64::consts::E {
                out.push('e');
            } else if c.is_sign_negative() {
                out.push_str(&format!("({c})"));
            } else {
                out.push_str(&format!("{c}"));
            }
        }
        Node::Var(v) => out.push(*v),
        Node::Unary(UnaryOp::Neg, a) => {
            out.push('-');
            write_wrapped(a, node_precedence(a) < 3, out);
        }
        Node::Unary(op, a) => {
            out.push_str(op.name());
            out.push('(');
            write_node(a, out);
            out.push(')');
        }
        Node::Binary(BinaryOp::Pow, a, b) => {
            write_wrapped(a, node_precedence(a) <= 4, out);
            out.push('^');
            write_wrapped(b, node_precedence(b) < 3, out);
        }
        Node::Binary(op, a, b) => {
            let p = op.precedence();
            write_wrapped(a, node_precedence(a) < p, out);
            out.push(' ');
            out.push(op.symbol());
            out.push(' ');
            write_wrapped(b, node_precedence(b) <= p, out);
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    var: Option<char>,
}

impl<'a> Parser<'a> {
    fn error(&self, expected: &str) -> ParseError {
        self.error_at(self.pos, expected)
    }

    fn error_at(&self, offset: usize, expected: &str) -> ParseError {
        let line_start = self.src[..offset].rfind('\n').map_or(0, |i| i + 1);
        let line_end = self.src[offset..]
            .find('\n')
            .map_or(self.src.len(), |i| offset + i);
        ParseError {
            offset,
            expected: expected.to_string(),
            excerpt: self.src[line_start..line_end].to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn parse_expr(&mut self) -> Result<Arc<Node>, ParseError> {
        let mut lhs = self.parse_term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinaryOp::Add,
                Some(b'-') => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.parse_term()?;
            lhs = Arc::new(Node::Binary(op, lhs, rhs));
        }
    }

    fn parse_term(&mut self) -> Result<Arc<Node>, ParseError> {
        let mut lhs = self.parse_unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinaryOp::Mul,
                Some(b'/') => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.parse_unary()?;
            lhs = Arc::new(Node::Binary(op, lhs, rhs));
        }
    }

    fn parse_unary(&mut self) -> Result<Arc<Node>, ParseError> {
        if self.eat(b'-') {
            let operand = self.parse_unary()?;
            return Ok(Arc::new(Node::Unary(UnaryOp::Neg, operand)));
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Arc<Node>, ParseError> {
        let base = self.parse_primary()?;
        if self.eat(b'^') {
            let exponent = self.parse_unary()?;
            return Ok(Arc::new(Node::Binary(BinaryOp::Pow, base, exponent)));
        }
        Ok(base)
    }

    fn parse_primary(&mut self) -> Result<Arc<Node>, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.parse_expr()?;
                if !self.eat(b')') {
                    return Err(self.error("\")\""));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.parse_number(),
            Some(c) if c.is_ascii_alphabetic() => self.parse_ident(),
            _ => Err(self.error("number, variable, function or \"(\"")),
        }
    }

    fn parse_number(&mut self) -> Result<Arc<Node>, ParseError> {
        let start = self.pos;
        let b = self.bytes;
        let mut i = self.pos;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        if i < b.len() && b[i] == b'.' {
            i += 1;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
        }
        // Exponent only when digits follow, so that `2e` stays an error
        // rather than silently reading the constant e.
        if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
            let mut j = i + 1;
            if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                j += 1;
            }
            if j < b.len() && b[j].is_ascii_digit() {
                while j < b.len() && b[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let text = &self.src[start..i];
        let value: f64 = text.parse().map_err(|_| self.error_at(start, "number"))?;
        if !value.is_finite() {
            return Err(self.error_at(start, "finite number"));
        }
        self.pos = i;
        Ok(Arc::new(Node::Const(value)))
    }

    fn parse_ident(&mut self) -> Result<Arc<Node>, ParseError> {
        let start = self.pos;
        let mut i = self.pos;
        while i < self.bytes.len() && self.bytes[i].is_ascii_alphanumeric() {
            i += 1;
        }
        let name = &self.src[start..i];
        self.pos = i;
        match name {
            "pi" => return Ok(Arc::new(Node::Const(std::f64::consts::PI))),
            "e" => return Ok(Arc::new(Node::Const(std::f64::consts::E))),
            "x" | "t" => {
                let v = name.chars().next().unwrap();
                match self.var {
                    Some(existing) if existing != v => {
                        return Err(self.error_at(
                            start,
                            &format!("variable \"{existing}\" (only one free variable allowed)"),
                        ));
                    }
                    _ => self.var = Some(v),
                }
                return Ok(Arc::new(Node::Var(v)));
            }
            _ => {}
        }
        let Some(op) = UnaryOp::from_name(name) else {
            return Err(self.error_at(
                start,
                "variable x or t, constant pi or e, or function abs/exp/ln/sqrt/sin/cos",
            ));
        };
        if !self.eat(b'(') {
            return Err(self.error("\"(\" after function name"));
        }
        let arg = self.parse_expr()?;
        if !self.eat(b')') {
            return Err(self.error("\")\""));
        }
        Ok(Arc::new(Node::Unary(op, arg)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(v: f64) -> Arc<Node> {
        Arc::new(Node::Const(v))
    }

    fn x() -> Arc<Node> {
        Arc::new(Node::Var('x'))
    }

    fn bin(op: BinaryOp, a: Arc<Node>, b: Arc<Node>) -> Arc<Node> {
        Arc::new(Node::Binary(op, a, b))
    }

    #[test]
    fn parses_square() {
        let e = Expr::parse("x^2").unwrap();
        assert_eq!(e.root(), &Node::Binary(BinaryOp::Pow, x(), c(2.0)));
        assert_eq!(e.variable(), Some('x'));
    }

    #[test]
    fn precedence() {
        let e = Expr::parse("2*x^2 - 1/(x+3)").unwrap();
        let expected = bin(
            BinaryOp::Sub,
            bin(BinaryOp::Mul, c(2.0), bin(BinaryOp::Pow, x(), c(2.0))),
            bin(BinaryOp::Div, c(1.0), bin(BinaryOp::Add, x(), c(3.0))),
        );
        assert_eq!(e.root(), &*expected);
    }

    #[test]
    fn pow_is_right_associative_and_above_negation() {
        let e = Expr::parse("2^3^2").unwrap();
        assert_eq!(e.eval(0.0).unwrap(), 512.0);
        let e = Expr::parse("-x^2").unwrap();
        assert_eq!(e.eval(3.0).unwrap(), -9.0);
        let e = Expr::parse("2^-1").unwrap();
        assert_eq!(e.eval(0.0).unwrap(), 0.5);
    }

    #[test]
    fn unbalanced_paren() {
        let err = Expr::parse("t^(0.5").unwrap_err();
        assert_eq!(err.offset, 6);
        assert_eq!(err.expected, "\")\"");
        assert_eq!(err.excerpt, "t^(0.5");
    }

    #[test]
    fn rejects_two_variables() {
        let err = Expr::parse("x + t").unwrap_err();
        assert_eq!(err.offset, 4);
    }

    #[test]
    fn rejects_implicit_multiplication() {
        let err = Expr::parse("2x").unwrap_err();
        assert_eq!(err.offset, 1);
        assert!(Expr::parse("2 x").is_err());
        assert!(Expr::parse("2e").is_err());
    }

    #[test]
    fn rejects_garbage() {
        for src in ["", "+", "x +", "foo(x)", "sqrt x", "1e999", "(x))", "x ** 2"] {
            let err = Expr::parse(src).unwrap_err();
            assert!(err.offset <= src.len(), "{src}: {err}");
        }
    }

    #[test]
    fn constants_and_scientific_notation() {
        assert_eq!(Expr::parse("pi").unwrap().eval(0.0).unwrap(), std::f64::consts::PI);
        assert_eq!(Expr::parse("e").unwrap().eval(0.0).unwrap(), std::f64::consts::E);
        assert_eq!(Expr::parse("1.5e-3").unwrap().eval(0.0).unwrap(), 1.5e-3);
        assert_eq!(Expr::parse("2*e").unwrap().eval(0.0).unwrap(), 2.0 * std::f64::consts::E);
        assert_eq!(Expr::parse(".5").unwrap().eval(0.0).unwrap(), 0.5);
    }

    #[test]
    fn evaluation() {
        assert_eq!(Expr::parse("x^2").unwrap().eval(0.5), Ok(0.25));
        assert_eq!(Expr::parse("ln(x)").unwrap().eval(-1.0), Err(EvalError::Domain));
        assert_eq!(Expr::parse("1/t").unwrap().eval(0.0), Err(EvalError::Domain));
        assert_eq!(Expr::parse("sqrt(x)").unwrap().eval(-1e-300), Err(EvalError::Domain));
        assert_eq!(Expr::parse("x^0.5").unwrap().eval(-4.0), Err(EvalError::Domain));
        assert_eq!(Expr::parse("x^-1").unwrap().eval(0.0), Err(EvalError::Domain));
        assert_eq!(Expr::parse("x^3").unwrap().eval(-2.0), Ok(-8.0));
        assert_eq!(Expr::parse("exp(x)").unwrap().eval(1000.0), Err(EvalError::Overflow));
        assert_eq!(Expr::parse("abs(x) + cos(0) - sin(0)").unwrap().eval(-2.0), Ok(3.0));
    }

    #[test]
    fn builtin_equivalent_source_is_identity() {
        let e = Expr::parse("t").unwrap();
        for i in 1..1000 {
            let t = i as f64 / 1000.0;
            assert_eq!(e.eval(t).unwrap().to_bits(), t.to_bits());
        }
    }

    #[test]
    fn printing_round_trips() {
        for src in [
            "x^2",
            "2*x^2 - 1/(x+3)",
            "-x^2",
            "(-x)^2",
            "x - (x - 1)",
            "x / (x / 2)",
            "x + (x + 1)",
            "2^3^2",
            "(2^3)^2",
            "x^-2",
            "-(x + 1)",
            "--x",
            "sqrt(abs(x)) * exp(-x) + ln(x + 1) - sin(pi * x) / cos(e)",
            "0.1 + 1e-7 * x",
        ] {
            let e = Expr::parse(src).unwrap();
            let printed = e.to_infix();
            let again = Expr::parse(&printed).unwrap();
            assert_eq!(e.root(), again.root(), "{src} -> {printed}");
        }
    }

    #[test]
    fn combinators_share_subtrees() {
        let f = Expr::parse("x^2").unwrap();
        let g = Expr::parse("2*x^2").unwrap();
        let sum = Expr::add(&g, &f);
        assert_eq!(sum.eval(2.0), Ok(12.0));
        assert_eq!(sum.to_infix(), "2 * x^2 + x^2");
        assert_eq!(Expr::constant(-1.0).to_infix(), "(-1)");
    }
}
