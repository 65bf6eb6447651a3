//! Claim expressions over terminal prices.
//!
//! Grammar:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | atom
//! atom   := number | var | call | '(' expr ')'
//! call   := ('max' | 'min') '(' expr (',' expr)+ ')'
//!         | ('call' | 'put') '(' expr ',' expr ')'
//! var    := S<i> | X<i> | S<i>_0
//! ```
//!
//! `S<i>` is the i-th traded price at the terminal node, `X<i>` the i-th
//! non-traded observable and `S<i>_0` the initial price. Indices start at 1.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("unexpected {found} at offset {pos}")]
    Unexpected { pos: usize, found: String },
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("`{name}` takes {expected} arguments, got {got}")]
    Arity { name: String, expected: &'static str, got: usize },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("variable `{name}` out of range (only {available} available)")]
    OutOfRange { name: String, available: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Var {
    Price(usize),
    Initial(usize),
    Aux(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(Op, Box<Node>, Box<Node>),
    Max(Vec<Node>),
    Min(Vec<Node>),
}

/// A parsed claim expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    source: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            // Exponent part, only when followed by digits.
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
            let v = text.parse().map_err(|_| ExprError::Unexpected { pos: start, found: format!("number `{}`", text) })?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if "+-*/(),".contains(c) {
            out.push((i, Tok::Sym(c)));
            i += 1;
        } else {
            return Err(ExprError::Unexpected { pos: i, found: format!("`{}`", c) });
        }
    }
    out.push((src.len(), Tok::End));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].1
    }

    fn fail<T>(&self) -> Result<T, ExprError> {
        let (pos, tok) = &self.toks[self.at];
        let found = match tok {
            Tok::Num(v) => format!("number {}", v),
            Tok::Ident(s) => format!("`{}`", s),
            Tok::Sym(c) => format!("`{}`", c),
            Tok::End => "end of input".to_string(),
        };
        Err(ExprError::Unexpected { pos: *pos, found })
    }

    fn eat(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Sym(c) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ExprError> {
        if self.eat(c) {
            Ok(())
        } else {
            self.fail()
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                Op::Add
            } else if self.eat('-') {
                Op::Sub
            } else {
                return Ok(lhs);
            };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                Op::Mul
            } else if self.eat('/') {
                Op::Div
            } else {
                return Ok(lhs);
            };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.at += 1;
                Ok(Node::Num(v))
            }
            Tok::Sym('(') => {
                self.at += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.at += 1;
                if self.eat('(') {
                    let mut args = vec![self.expr()?];
                    while self.eat(',') {
                        args.push(self.expr()?);
                    }
                    self.expect(')')?;
                    function(name, args)
                } else {
                    variable(&name).map(Node::Var)
                }
            }
            _ => self.fail(),
        }
    }
}

fn function(name: String, mut args: Vec<Node>) -> Result<Node, ExprError> {
    match name.as_str() {
        "max" | "min" if args.len() < 2 => Err(ExprError::Arity { name, expected: "at least 2", got: args.len() }),
        "max" => Ok(Node::Max(args)),
        "min" => Ok(Node::Min(args)),
        "call" | "put" if args.len() != 2 => Err(ExprError::Arity { name, expected: "2", got: args.len() }),
        "call" | "put" => {
            let strike = args.pop().unwrap();
            let under = args.pop().unwrap();
            let intrinsic = if name == "call" { Node::Bin(Op::Sub, Box::new(under), Box::new(strike)) } else { Node::Bin(Op::Sub, Box::new(strike), Box::new(under)) };
            Ok(Node::Max(vec![intrinsic, Node::Num(0.0)]))
        }
        _ => Err(ExprError::UnknownFunction(name)),
    }
}

fn variable(name: &str) -> Result<Var, ExprError> {
    let unknown = || ExprError::UnknownVariable(name.to_string());
    let (head, rest) = name.split_at(1);
    let (digits, initial) = match rest.strip_suffix("_0") {
        Some(d) => (d, true),
        None => (rest, false),
    };
    let index: usize = digits.parse().map_err(|_| unknown())?;
    if index == 0 || digits.starts_with('0') {
        return Err(unknown());
    }
    match (head, initial) {
        ("S", false) => Ok(Var::Price(index - 1)),
        ("S", true) => Ok(Var::Initial(index - 1)),
        ("X", false) => Ok(Var::Aux(index - 1)),
        _ => Err(unknown()),
    }
}

fn collect_vars(node: &Node, out: &mut Vec<Var>) {
    match node {
        Node::Num(_) => {}
        Node::Var(v) => out.push(*v),
        Node::Neg(a) => collect_vars(a, out),
        Node::Bin(_, a, b) => {
            collect_vars(a, out);
            collect_vars(b, out);
        }
        Node::Max(args) | Node::Min(args) => args.iter().for_each(|a| collect_vars(a, out)),
    }
}

/// Values bound to the variables of one evaluation.
pub struct Bindings<'a> {
    pub price: &'a [f64],
    pub initial: &'a [f64],
    pub aux: &'a [f64],
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self, ExprError> {
        let mut p = Parser { toks: tokenize(src)?, at: 0 };
        let root = p.expr()?;
        if *p.peek() != Tok::End {
            return p.fail();
        }
        Ok(Self { root, source: src.to_string() })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Reject variables beyond the available asset and observable counts.
    pub fn check_dimensions(&self, assets: usize, aux: usize) -> Result<(), ExprError> {
        let mut vars = Vec::new();
        collect_vars(&self.root, &mut vars);
        for v in vars {
            let (name, index, available) = match v {
                Var::Price(i) => (format!("S{}", i + 1), i, assets),
                Var::Initial(i) => (format!("S{}_0", i + 1), i, assets),
                Var::Aux(i) => (format!("X{}", i + 1), i, aux),
            };
            if index >= available {
                return Err(ExprError::OutOfRange { name, available });
            }
        }
        Ok(())
    }

    /// Evaluate; call [`Expr::check_dimensions`] first.
    pub fn eval(&self, b: &Bindings<'_>) -> f64 {
        eval(&self.root, b)
    }
}

fn eval(node: &Node, b: &Bindings<'_>) -> f64 {
    match node {
        Node::Num(v) => *v,
        Node::Var(Var::Price(i)) => b.price[*i],
        Node::Var(Var::Initial(i)) => b.initial[*i],
        Node::Var(Var::Aux(i)) => b.aux[*i],
        Node::Neg(a) => -eval(a, b),
        Node::Bin(op, x, y) => {
            let (x, y) = (eval(x, b), eval(y, b));
            match op {
                Op::Add => x + y,
                Op::Sub => x - y,
                Op::Mul => x * y,
                Op::Div => x / y,
            }
        }
        Node::Max(args) => args.iter().map(|a| eval(a, b)).fold(f64::NEG_INFINITY, f64::max),
        Node::Min(args) => args.iter().map(|a| eval(a, b)).fold(f64::INFINITY, f64::min),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(src: &str, price: &[f64], aux: &[f64]) -> f64 {
        let e = Expr::parse(src).unwrap();
        e.check_dimensions(price.len(), aux.len()).unwrap();
        e.eval(&Bindings { price, initial: &[1.0, 2.0], aux })
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(at("1 + 2 * 3", &[], &[]), 7.0);
        assert_eq!(at("(1 + 2) * 3", &[], &[]), 9.0);
        assert_eq!(at("8 / 4 / 2", &[], &[]), 1.0);
        assert_eq!(at("5 - 3 - 1", &[], &[]), 1.0);
        assert_eq!(at("-2 * -3", &[], &[]), 6.0);
        assert_eq!(at("1.5e1 + .5", &[], &[]), 15.5);
    }

    #[test]
    fn shorthands_match_their_definitions() {
        for s in [0.5, 1.0, 1.7] {
            assert_eq!(at("call(S1, 1.2)", &[s], &[]), (s - 1.2f64).max(0.0));
            assert_eq!(at("put(S1, 1.2)", &[s], &[]), (1.2 - s).max(0.0));
        }
        assert_eq!(at("max(S1, S2, 0.1) - min(S2, X1)", &[0.25, 0.75], &[0.25]), 0.5);
        assert_eq!(at("call(S2, S2_0)", &[0.0, 2.5], &[]), 0.5);
    }

    #[test]
    fn malformed_input_is_rejected() {
        assert!(matches!(Expr::parse("1 +"), Err(ExprError::Unexpected { .. })));
        assert!(matches!(Expr::parse("max(1)"), Err(ExprError::Arity { .. })));
        assert!(matches!(Expr::parse("call(S1)"), Err(ExprError::Arity { .. })));
        assert!(matches!(Expr::parse("exp(1)"), Err(ExprError::UnknownFunction(_))));
        assert!(matches!(Expr::parse("S0"), Err(ExprError::UnknownVariable(_))));
        assert!(matches!(Expr::parse("Y1"), Err(ExprError::UnknownVariable(_))));
        assert!(matches!(Expr::parse("X1_0"), Err(ExprError::UnknownVariable(_))));
        assert!(matches!(Expr::parse("1 $ 2"), Err(ExprError::Unexpected { pos: 2, .. })));
        assert!(matches!(Expr::parse("(1 2)"), Err(ExprError::Unexpected { .. })));
        let e = Expr::parse("S3 + X1").unwrap();
        assert!(matches!(e.check_dimensions(2, 1), Err(ExprError::OutOfRange { .. })));
    }
}
