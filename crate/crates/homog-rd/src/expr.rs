//! Minimal arithmetic expression evaluator for scenario coefficients.
//!
//! Scenario files can give scalar coefficients as formulas in the variables
//! `y1` (alias `y`), `y2`, `tau`, `r`, `x1` (alias `x`), `x2`, `t` with the
//! usual operators `+ - * / ^`, parentheses, the constants `pi` and `e`, and
//! the functions `sin cos tan exp log sqrt abs tanh floor` (one argument)
//! and `min max pow` (two arguments). Expressions compile to a small AST
//! that is evaluated directly; there is no user-extensible function table,
//! by design: coefficients are data, not plugins.

use crate::error::{Error, Result};

/// Variable slots, in the order of [`VAR_NAMES`].
pub const NVARS: usize = 7;
const VAR_NAMES: [&str; NVARS] = ["y1", "y2", "tau", "r", "x1", "x2", "t"];

/// Evaluation context: values for y1, y2, tau, r, x1, x2, t.
#[derive(Clone, Copy, Debug, Default)]
pub struct Ctx(pub [f64; NVARS]);

impl Ctx {
    pub fn new() -> Self {
        Ctx([0.0; NVARS])
    }
    pub fn y(mut self, y: [f64; 2]) -> Self {
        self.0[0] = y[0];
        self.0[1] = y[1];
        self
    }
    pub fn tau(mut self, tau: f64) -> Self {
        self.0[2] = tau;
        self
    }
    pub fn r(mut self, r: f64) -> Self {
        self.0[3] = r;
        self
    }
    pub fn x(mut self, x: [f64; 2]) -> Self {
        self.0[4] = x[0];
        self.0[5] = x[1];
        self
    }
    pub fn t(mut self, t: f64) -> Self {
        self.0[6] = t;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Fn1 {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
    Tanh,
    Floor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Fn2 {
    Min,
    Max,
    Pow,
}

#[derive(Clone, Debug)]
enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call1(Fn1, Box<Node>),
    Call2(Fn2, Box<Node>, Box<Node>),
}

/// A compiled expression.
#[derive(Clone, Debug)]
pub struct Expr {
    root: Node,
    /// The source text, kept for error messages and config hashing.
    pub source: String,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0, src };
        let root = p.parse_expr()?;
        if p.pos != p.tokens.len() {
            return Err(p.err("trailing input"));
        }
        Ok(Expr { root, source: src.to_string() })
    }

    pub fn eval(&self, ctx: &Ctx) -> f64 {
        eval_node(&self.root, ctx)
    }

    /// Whether the expression reads variable slot `idx` (see [`VAR_NAMES`]).
    pub fn uses_var(&self, idx: usize) -> bool {
        fn walk(n: &Node, idx: usize) -> bool {
            match n {
                Node::Const(_) => false,
                Node::Var(i) => *i == idx,
                Node::Neg(a) | Node::Call1(_, a) => walk(a, idx),
                Node::Add(a, b)
                | Node::Sub(a, b)
                | Node::Mul(a, b)
                | Node::Div(a, b)
                | Node::Pow(a, b)
                | Node::Call2(_, a, b) => walk(a, idx) || walk(b, idx),
            }
        }
        walk(&self.root, idx)
    }
}

/// Variable slots by name, for [`Expr::uses_var`].
pub const VAR_Y1: usize = 0;
pub const VAR_Y2: usize = 1;
pub const VAR_TAU: usize = 2;
pub const VAR_R: usize = 3;
pub const VAR_X1: usize = 4;
pub const VAR_X2: usize = 5;
pub const VAR_T: usize = 6;

fn eval_node(n: &Node, ctx: &Ctx) -> f64 {
    match n {
        Node::Const(c) => *c,
        Node::Var(i) => ctx.0[*i],
        Node::Neg(a) => -eval_node(a, ctx),
        Node::Add(a, b) => eval_node(a, ctx) + eval_node(b, ctx),
        Node::Sub(a, b) => eval_node(a, ctx) - eval_node(b, ctx),
        Node::Mul(a, b) => eval_node(a, ctx) * eval_node(b, ctx),
        Node::Div(a, b) => eval_node(a, ctx) / eval_node(b, ctx),
        Node::Pow(a, b) => eval_node(a, ctx).powf(eval_node(b, ctx)),
        Node::Call1(f, a) => {
            let v = eval_node(a, ctx);
            match f {
                Fn1::Sin => v.sin(),
                Fn1::Cos => v.cos(),
                Fn1::Tan => v.tan(),
                Fn1::Exp => v.exp(),
                Fn1::Log => v.ln(),
                Fn1::Sqrt => v.sqrt(),
                Fn1::Abs => v.abs(),
                Fn1::Tanh => v.tanh(),
                Fn1::Floor => v.floor(),
            }
        }
        Node::Call2(f, a, b) => {
            let u = eval_node(a, ctx);
            let v = eval_node(b, ctx);
            match f {
                Fn2::Min => u.min(v),
                Fn2::Max => u.max(v),
                Fn2::Pow => u.powf(v),
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let mut out = Vec::new();
    let bytes = src.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                out.push(Tok::Plus);
                i += 1;
            }
            '-' => {
                out.push(Tok::Minus);
                i += 1;
            }
            '*' => {
                out.push(Tok::Star);
                i += 1;
            }
            '/' => {
                out.push(Tok::Slash);
                i += 1;
            }
            '^' => {
                out.push(Tok::Caret);
                i += 1;
            }
            '(' => {
                out.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                out.push(Tok::RParen);
                i += 1;
            }
            ',' => {
                out.push(Tok::Comma);
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i] as char, '0'..='9' | '.') {
                    i += 1;
                }
                // exponent part like 1e-3
                if i < bytes.len() && matches!(bytes[i] as char, 'e' | 'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && matches!(bytes[j] as char, '+' | '-') {
                        j += 1;
                    }
                    if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let v: f64 = text
                    .parse()
                    .map_err(|_| Error::Config(format!("bad number {text:?} in expression {src:?}")))?;
                out.push(Tok::Num(v));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && matches!(bytes[i] as char, 'a'..='z' | 'A'..='Z' | '0'..='9' | '_')
                {
                    i += 1;
                }
                out.push(Tok::Ident(src[start..i].to_string()));
            }
            _ => {
                return Err(Error::Config(format!(
                    "unexpected character {c:?} in expression {src:?}"
                )))
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Tok>,
    pos: usize,
    src: &'a str,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> Error {
        Error::Config(format!("{msg} in expression {:?}", self.src))
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, t: Tok) -> Result<()> {
        match self.next() {
            Some(got) if got == t => Ok(()),
            _ => Err(self.err(&format!("expected {t:?}"))),
        }
    }

    fn parse_expr(&mut self) -> Result<Node> {
        let mut node = self.parse_term()?;
        while let Some(op) = self.peek() {
            let op = match op {
                Tok::Plus => true,
                Tok::Minus => false,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.parse_term()?;
            node = if op {
                Node::Add(Box::new(node), Box::new(rhs))
            } else {
                Node::Sub(Box::new(node), Box::new(rhs))
            };
        }
        Ok(node)
    }

    fn parse_term(&mut self) -> Result<Node> {
        let mut node = self.parse_unary()?;
        while let Some(op) = self.peek() {
            let mul = match op {
                Tok::Star => true,
                Tok::Slash => false,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.parse_unary()?;
            node = if mul {
                Node::Mul(Box::new(node), Box::new(rhs))
            } else {
                Node::Div(Box::new(node), Box::new(rhs))
            };
        }
        Ok(node)
    }

    fn parse_unary(&mut self) -> Result<Node> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.pos += 1;
            // unary minus binds looser than ^, so -2^2 = -(2^2)
            return Ok(Node::Neg(Box::new(self.parse_unary()?)));
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Node> {
        let base = self.parse_atom()?;
        if matches!(self.peek(), Some(Tok::Caret)) {
            self.pos += 1;
            let exp = self.parse_unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<Node> {
        match self.next() {
            Some(Tok::Num(v)) => Ok(Node::Const(v)),
            Some(Tok::LParen) => {
                let node = self.parse_expr()?;
                self.expect(Tok::RParen)?;
                Ok(node)
            }
            Some(Tok::Ident(name)) => {
                if matches!(self.peek(), Some(Tok::LParen)) {
                    self.pos += 1;
                    let a = self.parse_expr()?;
                    let one = |f: Fn1, a: Node, p: &mut Self| -> Result<Node> {
                        p.expect(Tok::RParen)?;
                        Ok(Node::Call1(f, Box::new(a)))
                    };
                    let two = |f: Fn2, a: Node, p: &mut Self| -> Result<Node> {
                        p.expect(Tok::Comma)?;
                        let b = p.parse_expr()?;
                        p.expect(Tok::RParen)?;
                        Ok(Node::Call2(f, Box::new(a), Box::new(b)))
                    };
                    match name.as_str() {
                        "sin" => one(Fn1::Sin, a, self),
                        "cos" => one(Fn1::Cos, a, self),
                        "tan" => one(Fn1::Tan, a, self),
                        "exp" => one(Fn1::Exp, a, self),
                        "log" => one(Fn1::Log, a, self),
                        "sqrt" => one(Fn1::Sqrt, a, self),
                        "abs" => one(Fn1::Abs, a, self),
                        "tanh" => one(Fn1::Tanh, a, self),
                        "floor" => one(Fn1::Floor, a, self),
                        "min" => two(Fn2::Min, a, self),
                        "max" => two(Fn2::Max, a, self),
                        "pow" => two(Fn2::Pow, a, self),
                        _ => Err(self.err(&format!("unknown function {name:?}"))),
                    }
                } else {
                    match name.as_str() {
                        "pi" => Ok(Node::Const(std::f64::consts::PI)),
                        "e" => Ok(Node::Const(std::f64::consts::E)),
                        "y" => Ok(Node::Var(0)),
                        "x" => Ok(Node::Var(4)),
                        _ => VAR_NAMES
                            .iter()
                            .position(|&v| v == name)
                            .map(Node::Var)
                            .ok_or_else(|| self.err(&format!("unknown variable {name:?}"))),
                    }
                }
            }
            _ => Err(self.err("expected a value")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(src: &str, ctx: Ctx) -> f64 {
        Expr::parse(src).unwrap().eval(&ctx)
    }

    #[test]
    fn precedence_and_unary() {
        let c = Ctx::new();
        assert_eq!(eval("2+3*4^2", c), 50.0);
        assert_eq!(eval("-2^2", c), -4.0);
        assert_eq!(eval("(2+3)*4", c), 20.0);
        assert_eq!(eval("2^3^2", c), 512.0, "power must be right associative");
        assert_eq!(eval("6/3/2", c), 1.0, "division must be left associative");
        assert_eq!(eval("1 - 2 - 3", c), -4.0);
    }

    #[test]
    fn variables_functions_constants() {
        let c = Ctx::new().y([0.25, 0.5]).tau(0.125).r(3.0);
        let v = eval("r*sin(2*pi*y)", c);
        assert!((v - 3.0).abs() < 1e-15);
        let v = eval("cos(2*pi*y2) + tau", c);
        assert!((v - (-1.0 + 0.125)).abs() < 1e-15);
        assert!((eval("max(1, 2.5e-1)", c) - 1.0).abs() < 1e-15);
        assert!((eval("pow(2, 10)", c) - 1024.0).abs() < 1e-12);
        assert!((eval("exp(log(7))", c) - 7.0).abs() < 1e-12);
        // y aliases y1, x aliases x1
        let c2 = Ctx::new().y([0.3, 0.0]).x([0.7, 0.0]);
        assert_eq!(eval("y1 - y", c2), 0.0);
        assert_eq!(eval("x1 - x", c2), 0.0);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(Expr::parse("2 +").is_err());
        assert!(Expr::parse("sin(2").is_err());
        assert!(Expr::parse("foo(1)").is_err());
        assert!(Expr::parse("bar + 1").is_err());
        assert!(Expr::parse("1 @ 2").is_err());
        assert!(Expr::parse("min(1)").is_err());
        assert!(Expr::parse("1 2").is_err());
    }

    #[test]
    fn variable_usage_is_detected() {
        let e = Expr::parse("r*sin(2*pi*y) + tau").unwrap();
        assert!(e.uses_var(VAR_Y1) && e.uses_var(VAR_TAU) && e.uses_var(VAR_R));
        assert!(!e.uses_var(VAR_Y2) && !e.uses_var(VAR_X1) && !e.uses_var(VAR_T));
    }

    #[test]
    fn periodic_expressions_are_periodic_to_roundoff() {
        let e = Expr::parse("sin(2*pi*y)*(1 + cos(2*pi*tau)/2)").unwrap();
        for i in 0..8 {
            let y = i as f64 / 8.0;
            let a = e.eval(&Ctx::new().y([y, 0.0]).tau(0.375));
            let b = e.eval(&Ctx::new().y([y + 1.0, 0.0]).tau(1.375));
            assert!((a - b).abs() < 1e-12);
        }
    }
}
