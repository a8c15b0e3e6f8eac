//! Closed-form expressions in the chart coordinates.
//!
//! Grammar: numbers, `pi`, coordinates `x0`..`x4` (aliases `x`, `y`, and `z` for the
//! last axis), `+ - * / ^`, unary minus and the functions `sin`, `cos`, `exp`.
//! `^` binds tighter than unary minus and associates to the right.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("expression error at column {column}: {message}")]
pub struct ExprError {
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Sin,
    Cos,
    Exp,
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
enum Node {
    Num(f64),
    Coord(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// A parsed expression bound to a chart dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl Expr {
    /// Parses `source` for coordinates in `dim` dimensions.
    pub fn parse(source: &str, dim: usize) -> Result<Expr, ExprError> {
        let tokens = lex(source)?;
        let mut parser = Parser { tokens, pos: 0, dim };
        let root = parser.expr()?;
        if let Some(tok) = parser.tokens.get(parser.pos) {
            return Err(ExprError {
                column: tok.column,
                message: format!("unexpected {}", tok.kind),
            });
        }
        Ok(Expr {
            source: source.to_string(),
            root,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        eval(&self.root, x)
    }
}

fn eval(node: &Node, x: &[f64]) -> f64 {
    match node {
        Node::Num(v) => *v,
        Node::Coord(i) => x[*i],
        Node::Neg(a) => -eval(a, x),
        Node::Bin(op, a, b) => {
            let (a, b) = (eval(a, x), eval(b, x));
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
                BinOp::Pow => a.powf(b),
            }
        }
        Node::Call(f, a) => {
            let a = eval(a, x);
            match f {
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Exp => a.exp(),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kind::Num(v) => write!(f, "number {v}"),
            Kind::Ident(s) => write!(f, "identifier '{s}'"),
            Kind::Op(c) => write!(f, "operator '{c}'"),
            Kind::LParen => write!(f, "'('"),
            Kind::RParen => write!(f, "')'"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: Kind,
    column: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ExprError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let column = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value = text.parse::<f64>().map_err(|_| ExprError {
                column,
                message: format!("malformed number '{text}'"),
            })?;
            out.push(Token { kind: Kind::Num(value), column });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token {
                kind: Kind::Ident(chars[start..i].iter().collect()),
                column,
            });
        } else if "+-*/^".contains(c) {
            out.push(Token { kind: Kind::Op(c), column });
            i += 1;
        } else if c == '(' || c == ')' {
            let kind = if c == '(' { Kind::LParen } else { Kind::RParen };
            out.push(Token { kind, column });
            i += 1;
        } else {
            return Err(ExprError {
                column,
                message: format!("unexpected character '{c}'"),
            });
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    dim: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Kind> {
        self.tokens.get(self.pos).map(|t| &t.kind)
    }

    fn column(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map_or_else(|| self.tokens.last().map_or(1, |t| t.column + 1), |t| t.column)
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError {
            column: self.column(),
            message: message.into(),
        })
    }

    fn eat_op(&mut self, ops: &str) -> Option<char> {
        match self.peek() {
            Some(Kind::Op(c)) if ops.contains(*c) => {
                let c = *c;
                self.pos += 1;
                Some(c)
            }
            _ => None,
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        while let Some(c) = self.eat_op("+-") {
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(c) = self.eat_op("*/") {
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.eat_op("-").is_some() {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat_op("+").is_some() {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if self.eat_op("^").is_some() {
            let exponent = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        let Some(kind) = self.peek().cloned() else {
            return self.error("unexpected end of expression");
        };
        match kind {
            Kind::Num(v) => {
                self.pos += 1;
                Ok(Node::Num(v))
            }
            Kind::LParen => {
                self.pos += 1;
                let inner = self.expr()?;
                self.close()?;
                Ok(inner)
            }
            Kind::Ident(name) => {
                let column = self.column();
                self.pos += 1;
                let func = match name.as_str() {
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "exp" => Some(Func::Exp),
                    _ => None,
                };
                if let Some(func) = func {
                    if self.peek() != Some(&Kind::LParen) {
                        return self.error(format!("'{name}' must be followed by '('"));
                    }
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.close()?;
                    return Ok(Node::Call(func, Box::new(arg)));
                }
                self.variable(&name, column)
            }
            other => self.error(format!("unexpected {other}")),
        }
    }

    fn close(&mut self) -> Result<(), ExprError> {
        if self.peek() == Some(&Kind::RParen) {
            self.pos += 1;
            Ok(())
        } else {
            self.error("expected ')'")
        }
    }

    fn variable(&self, name: &str, column: usize) -> Result<Node, ExprError> {
        let axis = match name {
            "pi" => return Ok(Node::Num(std::f64::consts::PI)),
            "x" => 0,
            "y" => 1,
            "z" => self.dim - 1,
            _ => match name.strip_prefix('x').and_then(|d| d.parse::<usize>().ok()) {
                Some(i) => i,
                None => {
                    return Err(ExprError {
                        column,
                        message: format!("unknown identifier '{name}'"),
                    })
                }
            },
        };
        if axis >= self.dim {
            return Err(ExprError {
                column,
                message: format!("coordinate '{name}' needs at least {} dimensions, found {}", axis + 1, self.dim),
            });
        }
        Ok(Node::Coord(axis))
    }
}
