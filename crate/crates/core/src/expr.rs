//! Scalar expressions over chart variables, evaluated on jets.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' integer | '^' '(' '-'? integer ')')?
//! atom  := number | name | func '(' expr ')' | '(' expr ')'
//! ```
//!
//! Names are chart variables `x0 … x{n−1}`, the constants `pi` and `tau`,
//! or caller-supplied parameters. Functions: `sin cos tan exp sqrt`.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use thiserror::Error;

use crate::jets::{Jet, JetError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("unexpected {found} at offset {at} in `{source_text}`")]
    Syntax { source_text: String, at: usize, found: String },
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("variable x{index} outside a {nvars}-dimensional chart")]
    Variable { index: usize, nvars: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Pow(Box<Node>, i32),
    Call(Func, Box<Node>),
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Name(String),
    Sym(char),
    End,
}

struct Parser<'s> {
    src: &'s str,
    tokens: Vec<(usize, Token)>,
    pos: usize,
    nvars: usize,
    params: &'s BTreeMap<String, f64>,
}

fn tokenize(src: &str) -> Result<Vec<(usize, Token)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
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
            let v = text.parse::<f64>().map_err(|_| ExprError::Syntax {
                source_text: src.to_string(),
                at: start,
                found: format!("number `{text}`"),
            })?;
            out.push((start, Token::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Token::Name(src[start..i].to_string())));
        } else if "+-*/^()".contains(c) {
            out.push((i, Token::Sym(c)));
            i += 1;
        } else {
            return Err(ExprError::Syntax {
                source_text: src.to_string(),
                at: i,
                found: format!("character `{c}`"),
            });
        }
    }
    out.push((src.len(), Token::End));
    Ok(out)
}

impl<'s> Parser<'s> {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos].1
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].1.clone();
        if t != Token::End {
            self.pos += 1;
        }
        t
    }

    fn error(&self) -> ExprError {
        let (at, tok) = &self.tokens[self.pos];
        let found = match tok {
            Token::Num(v) => format!("number {v}"),
            Token::Name(n) => format!("name `{n}`"),
            Token::Sym(c) => format!("`{c}`"),
            Token::End => "end of input".to_string(),
        };
        ExprError::Syntax {
            source_text: self.src.to_string(),
            at: *at,
            found,
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ExprError> {
        if *self.peek() == Token::Sym(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error())
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Token::Sym('+') => BinOp::Add,
                Token::Sym('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Token::Sym('*') => BinOp::Mul,
                Token::Sym('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if *self.peek() == Token::Sym('-') {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn integer(&mut self) -> Result<i32, ExprError> {
        match *self.peek() {
            Token::Num(v) if v.fract() == 0.0 && v.abs() <= 64.0 => {
                self.pos += 1;
                Ok(v as i32)
            }
            _ => Err(self.error()),
        }
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if *self.peek() != Token::Sym('^') {
            return Ok(base);
        }
        self.pos += 1;
        let exponent = if *self.peek() == Token::Sym('(') {
            self.pos += 1;
            let negative = *self.peek() == Token::Sym('-');
            if negative {
                self.pos += 1;
            }
            let k = self.integer()?;
            self.expect(')')?;
            if negative {
                -k
            } else {
                k
            }
        } else {
            self.integer()?
        };
        Ok(Node::Pow(Box::new(base), exponent))
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        match self.next() {
            Token::Num(v) => Ok(Node::Num(v)),
            Token::Sym('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Token::Name(name) => {
                if *self.peek() == Token::Sym('(') {
                    let f = match name.as_str() {
                        "sin" => Func::Sin,
                        "cos" => Func::Cos,
                        "tan" => Func::Tan,
                        "exp" => Func::Exp,
                        "sqrt" => Func::Sqrt,
                        _ => return Err(ExprError::UnknownFunction(name)),
                    };
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.expect(')')?;
                    return Ok(Node::Call(f, Box::new(arg)));
                }
                self.name(name)
            }
            _ => {
                self.pos = start;
                Err(self.error())
            }
        }
    }

    fn name(&self, name: String) -> Result<Node, ExprError> {
        if let Some(v) = self.params.get(&name) {
            return Ok(Node::Num(*v));
        }
        match name.as_str() {
            "pi" => return Ok(Node::Num(PI)),
            "tau" => return Ok(Node::Num(TAU)),
            _ => {}
        }
        if let Some(index) = name.strip_prefix('x').and_then(|d| d.parse::<usize>().ok()) {
            if index >= self.nvars {
                return Err(ExprError::Variable { index, nvars: self.nvars });
            }
            return Ok(Node::Var(index));
        }
        Err(ExprError::UnknownName(name))
    }
}

/// Parsed scalar expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr(Node);

impl Expr {
    /// Parses `src` for a chart of dimension `nvars`; `params` are inlined.
    pub fn parse(src: &str, nvars: usize, params: &BTreeMap<String, f64>) -> Result<Expr, ExprError> {
        let mut p = Parser {
            src,
            tokens: tokenize(src)?,
            pos: 0,
            nvars,
            params,
        };
        let e = p.expr()?;
        if *p.peek() != Token::End {
            return Err(p.error());
        }
        Ok(Expr(e))
    }

    pub fn eval(&self, x: &[Jet]) -> Result<Jet, JetError> {
        self.0.eval(x)
    }
}

impl Node {
    fn eval(&self, x: &[Jet]) -> Result<Jet, JetError> {
        Ok(match self {
            Node::Num(v) => x[0].constant_like(*v),
            Node::Var(k) => x[*k].clone(),
            Node::Neg(e) => -e.eval(x)?,
            Node::Bin(op, a, b) => {
                let (a, b) = (a.eval(x)?, b.eval(x)?);
                match op {
                    BinOp::Add => &a + &b,
                    BinOp::Sub => &a - &b,
                    BinOp::Mul => &a * &b,
                    BinOp::Div => a.div(&b)?,
                }
            }
            Node::Pow(e, k) => {
                let base = e.eval(x)?;
                let mut acc = base.constant_like(1.0);
                let mut sq = base;
                let mut n = k.unsigned_abs();
                while n > 0 {
                    if n & 1 == 1 {
                        acc = &acc * &sq;
                    }
                    n >>= 1;
                    if n > 0 {
                        sq = &sq * &sq;
                    }
                }
                if *k < 0 {
                    acc.recip()?
                } else {
                    acc
                }
            }
            Node::Call(f, e) => {
                let a = e.eval(x)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tan => a.sin().div(&a.cos())?,
                    Func::Exp => a.exp(),
                    Func::Sqrt => a.sqrt()?,
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_at(src: &str, p: &[f64]) -> f64 {
        let e = Expr::parse(src, p.len(), &BTreeMap::new()).unwrap();
        e.eval(&Jet::seed(p).unwrap()).unwrap().value()
    }

    #[test]
    fn precedence_and_powers() {
        assert_eq!(eval_at("1 + 2*3^2", &[0.0]), 19.0);
        assert_eq!(eval_at("-2^2", &[0.0]), -4.0);
        assert_eq!(eval_at("(1+1)^(-1)", &[0.0]), 0.5);
        assert_eq!(eval_at("x0*x1 - x1/4", &[3.0, 2.0]), 5.5);
        assert!((eval_at("sin(pi/2) + cos(0) + exp(0) + sqrt(4) + tan(0)", &[0.0]) - 5.0).abs() < 1e-15);
        assert_eq!(eval_at("1.5e1", &[0.0]), 15.0);
    }

    #[test]
    fn derivatives_follow_the_jets() {
        let e = Expr::parse("x0^3", 1, &BTreeMap::new()).unwrap();
        let j = e.eval(&Jet::seed(&[2.0]).unwrap()).unwrap();
        assert!((j.derivative_value(0).unwrap() - 12.0).abs() < 1e-12);
    }

    #[test]
    fn params_and_errors() {
        let params = BTreeMap::from([("r".to_string(), 2.0)]);
        let e = Expr::parse("r*x0", 1, &params).unwrap();
        assert_eq!(e.eval(&Jet::seed(&[3.0]).unwrap()).unwrap().value(), 6.0);
        assert!(matches!(Expr::parse("x1", 1, &params), Err(ExprError::Variable { .. })));
        assert!(matches!(Expr::parse("log(x0)", 1, &params), Err(ExprError::UnknownFunction(_))));
        assert!(matches!(Expr::parse("q", 1, &params), Err(ExprError::UnknownName(_))));
        assert!(matches!(Expr::parse("1 +", 1, &params), Err(ExprError::Syntax { .. })));
        assert!(matches!(Expr::parse("(1", 1, &params), Err(ExprError::Syntax { .. })));
        assert!(matches!(Expr::parse("2 3", 1, &params), Err(ExprError::Syntax { .. })));
        assert!(matches!(Expr::parse("x0^0.5", 1, &params), Err(ExprError::Syntax { .. })));
    }
}
