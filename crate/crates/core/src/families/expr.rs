//! A small expression language for log-densities.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?          right-associative
//! primary := number | ident | func '(' expr ')' | '(' expr ')'
//! ident   := 'x' | 'th1' .. 'thn' | 'pi' | 'e'
//! func    := 'exp' | 'log' | 'sqrt' | 'abs'
//! ```
//!
//! Unary minus binds looser than `^`, so `-x^2` is `-(x^2)`.

use std::fmt;

use thiserror::Error;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnknownIdentifier(String),
    Arity {
        function: String,
        expected: usize,
        got: usize,
    },
    Syntax(String),
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::UnknownIdentifier(name) => write!(f, "unknown identifier '{name}'"),
            ParseErrorKind::Arity {
                function,
                expected,
                got,
            } => write!(f, "{function} takes {expected} argument(s), got {got}"),
            ParseErrorKind::Syntax(msg) => f.write_str(msg),
        }
    }
}

/// Positions are one-based.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at line {line}, column {column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => " + ",
            BinOp::Sub => " - ",
            BinOp::Mul => " * ",
            BinOp::Div => " / ",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Pi,
    E,
    X,
    /// Zero-based parameter index: `th1` is `Theta(0)`.
    Theta(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

const PREC_SUM: u8 = 1;
const PREC_PRODUCT: u8 = 2;
const PREC_UNARY: u8 = 3;
const PREC_ATOM: u8 = 5;

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => PREC_SUM,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => PREC_PRODUCT,
            Expr::Neg(_) => PREC_UNARY,
            Expr::Bin(BinOp::Pow, ..) => 4,
            _ => PREC_ATOM,
        }
    }

    pub fn eval(&self, x: f64, theta: &[f64]) -> Result<f64> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Pi => std::f64::consts::PI,
            Expr::E => std::f64::consts::E,
            Expr::X => x,
            Expr::Theta(i) => *theta.get(*i).ok_or(Error::Dimension {
                expected: i + 1,
                got: theta.len(),
            })?,
            Expr::Neg(a) => -a.eval(x, theta)?,
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(x, theta)?, b.eval(x, theta)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div if b == 0.0 => {
                        return Err(Error::Eval(format!("division by zero at x = {x}")))
                    }
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(f, a) => {
                let a = a.eval(x, theta)?;
                match f {
                    Func::Exp => a.exp(),
                    Func::Log if a <= 0.0 => {
                        return Err(Error::Eval(format!("log of {a} at x = {x}")))
                    }
                    Func::Log => a.ln(),
                    Func::Sqrt if a < 0.0 => {
                        return Err(Error::Eval(format!("sqrt of {a} at x = {x}")))
                    }
                    Func::Sqrt => a.sqrt(),
                    Func::Abs => a.abs(),
                }
            }
        };
        if v.is_nan() {
            return Err(Error::Eval(format!("NaN in '{self}' at x = {x}")));
        }
        Ok(v)
    }

    fn write_at(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        let wrap = self.precedence() < min_prec;
        if wrap {
            f.write_str("(")?;
        }
        match self {
            Expr::Num(v) => write!(f, "{v}")?,
            Expr::Pi => f.write_str("pi")?,
            Expr::E => f.write_str("e")?,
            Expr::X => f.write_str("x")?,
            Expr::Theta(i) => write!(f, "th{}", i + 1)?,
            Expr::Neg(a) => {
                f.write_str("-")?;
                a.write_at(f, PREC_UNARY)?;
            }
            Expr::Bin(op, a, b) => {
                // Left-associative operators need a tighter right operand;
                // `^` needs a primary base and accepts a unary exponent.
                let (lp, rp) = match op {
                    BinOp::Add | BinOp::Sub => (PREC_SUM, PREC_PRODUCT),
                    BinOp::Mul | BinOp::Div => (PREC_PRODUCT, PREC_UNARY),
                    BinOp::Pow => (PREC_ATOM, PREC_UNARY),
                };
                a.write_at(f, lp)?;
                f.write_str(op.symbol())?;
                b.write_at(f, rp)?;
            }
            Expr::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                a.write_at(f, 0)?;
                f.write_str(")")?;
            }
        }
        if wrap {
            f.write_str(")")?;
        }
        Ok(())
    }

    fn max_theta(&self) -> Option<usize> {
        match self {
            Expr::Theta(i) => Some(*i),
            Expr::Neg(a) | Expr::Call(_, a) => a.max_theta(),
            Expr::Bin(_, a, b) => a.max_theta().max(b.max_theta()),
            _ => None,
        }
    }
}

/// Minimal parentheses; reparsing yields the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_at(f, 0)
    }
}

/// A parsed log-density `l(x; th1..thn)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityExpression {
    expr: Expr,
    n: usize,
}

impl DensityExpression {
    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn eval(&self, x: f64, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: theta.len(),
            });
        }
        self.expr.eval(x, theta)
    }

    /// Highest parameter actually referenced (one-based), zero if none.
    pub fn parameters_used(&self) -> usize {
        self.expr.max_theta().map_or(0, |i| i + 1)
    }
}

impl fmt::Display for DensityExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.expr.fmt(f)
    }
}

/// Parses `src` over `x` and `th1..thn`.
pub fn parse_density(src: &str, n: usize) -> std::result::Result<DensityExpression, ParseError> {
    let tokens = lex(src)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        n,
        end: end_position(src),
    };
    if p.tokens.is_empty() {
        return Err(p.error_at(p.end, ParseErrorKind::Syntax("empty expression".into())));
    }
    let expr = p.expr()?;
    if let Some(t) = p.peek() {
        return Err(p.error_at(
            t.pos,
            ParseErrorKind::Syntax(format!("unexpected {}", t.tok.describe())),
        ));
    }
    Ok(DensityExpression { expr, n })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pos {
    line: usize,
    column: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Op(c) => format!("operator '{c}'"),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: Pos,
}

fn end_position(src: &str) -> Pos {
    let mut pos = Pos { line: 1, column: 1 };
    for c in src.chars() {
        if c == '\n' {
            pos.line += 1;
            pos.column = 1;
        } else {
            pos.column += 1;
        }
    }
    pos
}

fn lex(src: &str) -> std::result::Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, column: col };
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_digit() || c == '.' {
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // exponent only when digits follow, so `2*e` stays a constant
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
            let v = text.parse::<f64>().map_err(|_| ParseError {
                line: pos.line,
                column: pos.column,
                kind: ParseErrorKind::Syntax(format!("malformed number '{text}'")),
            })?;
            Tok::Num(v)
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else {
            i += 1;
            match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                _ => {
                    return Err(ParseError {
                        line: pos.line,
                        column: pos.column,
                        kind: ParseErrorKind::Syntax(format!("unexpected character '{c}'")),
                    })
                }
            }
        };
        col += i - start;
        out.push(Token { tok, pos });
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    n: usize,
    end: Pos,
}

type PResult<T> = std::result::Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn error_at(&self, pos: Pos, kind: ParseErrorKind) -> ParseError {
        ParseError {
            line: pos.line,
            column: pos.column,
            kind,
        }
    }

    fn peek_op(&self, ops: &[char]) -> Option<(char, Pos)> {
        match self.peek() {
            Some(Token {
                tok: Tok::Op(c),
                pos,
            }) if ops.contains(c) => Some((*c, *pos)),
            _ => None,
        }
    }

    /// An operator with nothing after it is reported at the operator.
    fn operand_follows(&self, op: char, at: Pos) -> PResult<()> {
        if self.peek().is_none() {
            return Err(self.error_at(
                at,
                ParseErrorKind::Syntax(format!("operator '{op}' is missing its right operand")),
            ));
        }
        Ok(())
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        while let Some((op, at)) = self.peek_op(&['+', '-']) {
            self.pos += 1;
            self.operand_follows(op, at)?;
            let rhs = self.term()?;
            let op = if op == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some((op, at)) = self.peek_op(&['*', '/']) {
            self.pos += 1;
            self.operand_follows(op, at)?;
            let rhs = self.unary()?;
            let op = if op == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if let Some((op, at)) = self.peek_op(&['-']) {
            self.pos += 1;
            self.operand_follows(op, at)?;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> PResult<Expr> {
        let base = self.primary()?;
        if let Some((op, at)) = self.peek_op(&['^']) {
            self.pos += 1;
            self.operand_follows(op, at)?;
            let exponent = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let Some(t) = self.next() else {
            return Err(self.error_at(
                self.end,
                ParseErrorKind::Syntax("unexpected end of input".into()),
            ));
        };
        match t.tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect_close(t.pos)?;
                Ok(inner)
            }
            Tok::Ident(name) => self.identifier(name, t.pos),
            other => Err(self.error_at(
                t.pos,
                ParseErrorKind::Syntax(format!("unexpected {}", other.describe())),
            )),
        }
    }

    fn expect_close(&mut self, open: Pos) -> PResult<()> {
        match self.next() {
            Some(Token {
                tok: Tok::RParen, ..
            }) => Ok(()),
            Some(t) => Err(self.error_at(
                t.pos,
                ParseErrorKind::Syntax(format!("expected ')', found {}", t.tok.describe())),
            )),
            None => Err(self.error_at(
                open,
                ParseErrorKind::Syntax("unclosed '('".into()),
            )),
        }
    }

    fn identifier(&mut self, name: String, at: Pos) -> PResult<Expr> {
        let called = matches!(self.peek(), Some(Token { tok: Tok::LParen, .. }));
        if let Some(func) = Func::from_name(&name) {
            if !called {
                return Err(self.error_at(
                    at,
                    ParseErrorKind::Syntax(format!("function '{name}' needs an argument list")),
                ));
            }
            let open = self.next().expect("peeked").pos;
            let mut args = Vec::new();
            if !matches!(self.peek(), Some(Token { tok: Tok::RParen, .. })) {
                args.push(self.expr()?);
                while matches!(self.peek(), Some(Token { tok: Tok::Comma, .. })) {
                    self.pos += 1;
                    args.push(self.expr()?);
                }
            }
            self.expect_close(open)?;
            if args.len() != 1 {
                return Err(self.error_at(
                    at,
                    ParseErrorKind::Arity {
                        function: name,
                        expected: 1,
                        got: args.len(),
                    },
                ));
            }
            return Ok(Expr::Call(func, Box::new(args.pop().expect("one argument"))));
        }
        let leaf = match name.as_str() {
            "x" => Expr::X,
            "pi" => Expr::Pi,
            "e" => Expr::E,
            _ => match name.strip_prefix("th").and_then(|d| d.parse::<usize>().ok()) {
                Some(k) if k >= 1 && k <= self.n && !name[2..].starts_with('0') => {
                    Expr::Theta(k - 1)
                }
                _ => {
                    return Err(self.error_at(at, ParseErrorKind::UnknownIdentifier(name)));
                }
            },
        };
        if called {
            return Err(self.error_at(
                at,
                ParseErrorKind::Syntax(format!("'{name}' is not a function")),
            ));
        }
        Ok(leaf)
    }
}
