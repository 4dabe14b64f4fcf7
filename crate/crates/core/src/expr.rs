//! Coefficient expressions: numbers, named variables, `pi`, the imaginary unit `i`,
//! `+ - * / ^`, parentheses and the functions `exp`, `sin`, `cos`, `abs`.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Exp,
    Sin,
    Cos,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
enum Node<V> {
    Num(C64),
    Var(V),
    Neg(Box<Node<V>>),
    Bin(BinOp, Box<Node<V>>, Box<Node<V>>),
    Call(Func, Box<Node<V>>),
}

/// A parsed expression that remembers its source text.
#[derive(Clone)]
pub struct Expression {
    source: String,
    ast: Node<String>,
}

/// An expression with variables resolved to argument slots.
#[derive(Debug, Clone)]
pub struct Compiled {
    ast: Node<usize>,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn parse_error(column: usize, message: impl Into<String>) -> Error {
    Error::Parse { line: 1, column, message: message.into() }
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut k = 0;
    while k < chars.len() {
        let c = chars[k];
        let col = k + 1;
        if c.is_whitespace() {
            k += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = k;
            while k < chars.len() && (chars[k].is_ascii_digit() || chars[k] == '.') {
                k += 1;
            }
            if k < chars.len() && (chars[k] == 'e' || chars[k] == 'E') {
                let mut j = k + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    k = j;
                    while k < chars.len() && chars[k].is_ascii_digit() {
                        k += 1;
                    }
                }
            }
            let text: String = chars[start..k].iter().collect();
            let v = text.parse::<f64>().map_err(|_| parse_error(col, format!("bad number `{text}`")))?;
            out.push((Tok::Num(v), col));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = k;
            while k < chars.len() && (chars[k].is_ascii_alphanumeric() || chars[k] == '_') {
                k += 1;
            }
            out.push((Tok::Ident(chars[start..k].iter().collect()), col));
        } else if "+-*/^".contains(c) {
            out.push((Tok::Op(c), col));
            k += 1;
        } else if c == '(' {
            out.push((Tok::LParen, col));
            k += 1;
        } else if c == ')' {
            out.push((Tok::RParen, col));
            k += 1;
        } else {
            return Err(parse_error(col, format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.1)
    }

    fn expr(&mut self) -> Result<Node<String>> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.pos += 1;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node<String>> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.pos += 1;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node<String>> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node<String>> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node<String>> {
        let col = self.col();
        let tok = self.toks.get(self.pos).map(|t| t.0.clone());
        self.pos += 1;
        match tok {
            Some(Tok::Num(v)) => Ok(Node::Num(C64::new(v, 0.0))),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                let func = match name.as_str() {
                    "exp" => Some(Func::Exp),
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "abs" => Some(Func::Abs),
                    _ => None,
                };
                if let Some(f) = func {
                    if self.peek() != Some(&Tok::LParen) {
                        return Err(parse_error(self.col(), format!("`{name}` must be followed by `(`")));
                    }
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    return Ok(Node::Call(f, Box::new(arg)));
                }
                Ok(match name.as_str() {
                    "pi" => Node::Num(C64::new(std::f64::consts::PI, 0.0)),
                    "i" => Node::Num(C64::new(0.0, 1.0)),
                    _ => Node::Var(name),
                })
            }
            Some(t) => Err(parse_error(col, format!("unexpected token {t:?}"))),
            None => Err(parse_error(col, "unexpected end of expression")),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        if self.peek() == Some(&Tok::RParen) {
            self.pos += 1;
            Ok(())
        } else {
            Err(parse_error(self.col(), "expected `)`"))
        }
    }
}

fn collect_vars(n: &Node<String>, out: &mut Vec<String>) {
    match n {
        Node::Num(_) => {}
        Node::Var(v) => {
            if !out.contains(v) {
                out.push(v.clone());
            }
        }
        Node::Neg(a) | Node::Call(_, a) => collect_vars(a, out),
        Node::Bin(_, a, b) => {
            collect_vars(a, out);
            collect_vars(b, out);
        }
    }
}

fn bind(n: &Node<String>, names: &[&str]) -> std::result::Result<Node<usize>, String> {
    Ok(match n {
        Node::Num(v) => Node::Num(*v),
        Node::Var(v) => Node::Var(names.iter().position(|s| s == v).ok_or_else(|| v.clone())?),
        Node::Neg(a) => Node::Neg(Box::new(bind(a, names)?)),
        Node::Call(f, a) => Node::Call(*f, Box::new(bind(a, names)?)),
        Node::Bin(op, a, b) => Node::Bin(*op, Box::new(bind(a, names)?), Box::new(bind(b, names)?)),
    })
}

fn pow(base: C64, e: C64) -> C64 {
    if e.im == 0.0 && e.re.fract() == 0.0 && e.re.abs() <= 64.0 {
        return base.powi(e.re as i32);
    }
    if base.im == 0.0 && base.re >= 0.0 && e.im == 0.0 {
        return C64::new(base.re.powf(e.re), 0.0);
    }
    base.powc(e)
}

fn eval(n: &Node<usize>, args: &[C64]) -> C64 {
    match n {
        Node::Num(v) => *v,
        Node::Var(k) => args[*k],
        Node::Neg(a) => -eval(a, args),
        Node::Call(f, a) => {
            let v = eval(a, args);
            match f {
                Func::Exp => v.exp(),
                Func::Sin => v.sin(),
                Func::Cos => v.cos(),
                Func::Abs => C64::new(v.norm(), 0.0),
            }
        }
        Node::Bin(op, a, b) => {
            let (x, y) = (eval(a, args), eval(b, args));
            match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => x / y,
                BinOp::Pow => pow(x, y),
            }
        }
    }
}

impl Expression {
    pub fn parse(src: &str) -> Result<Self> {
        let toks = tokenize(src)?;
        let mut p = Parser { toks, pos: 0, end: src.chars().count() + 1 };
        let ast = p.expr()?;
        if p.pos < p.toks.len() {
            return Err(parse_error(p.col(), "trailing input"));
        }
        Ok(Self { source: src.to_string(), ast })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn variables(&self) -> Vec<String> {
        let mut v = Vec::new();
        collect_vars(&self.ast, &mut v);
        v
    }

    /// Resolves variables to positions in `names`; an unknown variable is a validation error.
    pub fn compile(&self, names: &[&str]) -> Result<Compiled> {
        bind(&self.ast, names).map(|ast| Compiled { ast }).map_err(|v| Error::Validation {
            field: self.source.clone(),
            message: format!("unknown variable `{v}`, allowed: {names:?}"),
        })
    }

    /// Value of an expression without variables.
    pub fn constant(&self) -> Option<C64> {
        self.compile(&[]).ok().map(|c| c.eval(&[]))
    }
}

impl Compiled {
    pub fn constant(c: C64) -> Self {
        Self { ast: Node::Num(c) }
    }

    pub fn eval(&self, args: &[C64]) -> C64 {
        eval(&self.ast, args)
    }

    pub fn eval_real(&self, args: &[f64]) -> C64 {
        let a: Vec<C64> = args.iter().map(|&v| C64::new(v, 0.0)).collect();
        eval(&self.ast, &a)
    }
}

impl PartialEq for Expression {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl fmt::Debug for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expression({:?})", self.source)
    }
}

impl Serialize for Expression {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Expression {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Expression::parse(&s).map_err(serde::de::Error::custom)
    }
}
