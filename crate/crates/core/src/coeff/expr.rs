//! A small arithmetic expression language for coefficient functions.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! `^` binds tighter than unary minus and associates to the right, so
//! `-2^2 = -4` and `2^3^2 = 512`.

use std::fmt;

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Spatial coordinate `x{k+1}`.
    Coord(usize),
    Time,
    Pi,
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownIdentifier(String),
    WrongArity {
        name: String,
        expected: usize,
        found: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{kind} at byte {offset}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub offset: usize,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::Syntax(msg) => write!(f, "syntax error: {msg}"),
            ParseErrorKind::UnknownIdentifier(name) => write!(f, "unknown identifier '{name}'"),
            ParseErrorKind::WrongArity {
                name,
                expected,
                found,
            } => write!(f, "'{name}' takes {expected} argument(s), got {found}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EvalError {
    #[error("domain error in {subexpr}: argument {argument}")]
    Domain { subexpr: String, argument: f64 },
    #[error("division by zero in {subexpr}")]
    DivisionByZero { subexpr: String },
    #[error("coordinate x{index} is not defined on a {dim}-d point")]
    MissingCoordinate { index: usize, dim: usize },
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn next(&mut self) -> Result<(Tok, usize), ParseError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = bytes.get(self.pos) else {
            return Ok((Tok::End, start));
        };
        if c.is_ascii_digit() || c == b'.' {
            let mut end = start;
            while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
                end += 1;
            }
            if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
                let mut k = end + 1;
                if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                    k += 1;
                }
                if k < bytes.len() && bytes[k].is_ascii_digit() {
                    while k < bytes.len() && bytes[k].is_ascii_digit() {
                        k += 1;
                    }
                    end = k;
                }
            }
            let text = &self.src[start..end];
            let v = text.parse::<f64>().map_err(|_| ParseError {
                kind: ParseErrorKind::Syntax(format!("malformed number '{text}'")),
                offset: start,
            })?;
            self.pos = end;
            return Ok((Tok::Num(v), start));
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let mut end = start;
            while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
                end += 1;
            }
            self.pos = end;
            return Ok((Tok::Ident(self.src[start..end].to_string()), start));
        }
        if b"+-*/^(),".contains(&c) {
            self.pos += 1;
            return Ok((Tok::Sym(c as char), start));
        }
        let ch = self.src[start..].chars().next().unwrap_or('?');
        Err(ParseError {
            kind: ParseErrorKind::Syntax(format!("unexpected character '{ch}'")),
            offset: start,
        })
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    at: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self, ParseError> {
        let mut lexer = Lexer { src, pos: 0 };
        let (tok, at) = lexer.next()?;
        Ok(Self { lexer, tok, at })
    }

    fn bump(&mut self) -> Result<(), ParseError> {
        let (tok, at) = self.lexer.next()?;
        self.tok = tok;
        self.at = at;
        Ok(())
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            kind: ParseErrorKind::Syntax(msg.into()),
            offset: self.at,
        })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.tok {
                Tok::Sym('+') => BinOp::Add,
                Tok::Sym('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump()?;
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.tok {
                Tok::Sym('*') => BinOp::Mul,
                Tok::Sym('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump()?;
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.tok == Tok::Sym('-') {
            self.bump()?;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.tok == Tok::Sym('^') {
            self.bump()?;
            let exponent = self.unary()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.tok.clone() {
            Tok::Num(v) => {
                self.bump()?;
                Ok(Expr::Num(v))
            }
            Tok::Sym('(') => {
                self.bump()?;
                let e = self.expr()?;
                if self.tok != Tok::Sym(')') {
                    return self.syntax("expected ')'");
                }
                self.bump()?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let start = self.at;
                self.bump()?;
                let args = if self.tok == Tok::Sym('(') {
                    Some(self.arguments()?)
                } else {
                    None
                };
                resolve_ident(name, args, start)
            }
            Tok::End => self.syntax("unexpected end of input"),
            Tok::Sym(c) => self.syntax(format!("unexpected '{c}'")),
        }
    }

    fn arguments(&mut self) -> Result<Vec<Expr>, ParseError> {
        self.bump()?;
        let mut args = Vec::new();
        if self.tok == Tok::Sym(')') {
            self.bump()?;
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            match self.tok {
                Tok::Sym(',') => self.bump()?,
                Tok::Sym(')') => {
                    self.bump()?;
                    return Ok(args);
                }
                _ => return self.syntax("expected ',' or ')'"),
            }
        }
    }
}

fn resolve_ident(name: String, args: Option<Vec<Expr>>, offset: usize) -> Result<Expr, ParseError> {
    let arity_err = |expected: usize, found: usize, name: String| ParseError {
        kind: ParseErrorKind::WrongArity {
            name,
            expected,
            found,
        },
        offset,
    };
    if let Some(func) = Func::from_name(&name) {
        return match args {
            Some(mut a) if a.len() == 1 => Ok(Expr::Call(func, Box::new(a.remove(0)))),
            Some(a) => Err(arity_err(1, a.len(), name)),
            None => Err(arity_err(1, 0, name)),
        };
    }
    let atom = match name.as_str() {
        "x1" => Expr::Coord(0),
        "x2" => Expr::Coord(1),
        "t" => Expr::Time,
        "pi" => Expr::Pi,
        _ => {
            return Err(ParseError {
                kind: ParseErrorKind::UnknownIdentifier(name),
                offset,
            })
        }
    };
    match args {
        None => Ok(atom),
        Some(a) => Err(arity_err(0, a.len(), name)),
    }
}

pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    if src.trim().is_empty() {
        return Err(ParseError {
            kind: ParseErrorKind::Syntax("empty expression".into()),
            offset: 0,
        });
    }
    let mut p = Parser::new(src)?;
    let e = p.expr()?;
    if p.tok != Tok::End {
        return p.syntax("trailing input");
    }
    Ok(e)
}

pub fn eval_expr(e: &Expr, point: &[f64], time: f64) -> Result<f64, EvalError> {
    e.eval(point, time)
}

impl Expr {
    pub fn eval(&self, point: &[f64], time: f64) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Coord(k) => *point.get(*k).ok_or(EvalError::MissingCoordinate {
                index: k + 1,
                dim: point.len(),
            })?,
            Expr::Time => time,
            Expr::Pi => std::f64::consts::PI,
            Expr::Neg(a) => -a.eval(point, time)?,
            Expr::Binary(op, a, b) => {
                let x = a.eval(point, time)?;
                let y = b.eval(point, time)?;
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return Err(EvalError::DivisionByZero {
                                subexpr: self.to_string(),
                            });
                        }
                        x / y
                    }
                    BinOp::Pow => {
                        let r = x.powf(y);
                        if r.is_nan() {
                            return Err(EvalError::Domain {
                                subexpr: self.to_string(),
                                argument: x,
                            });
                        }
                        r
                    }
                }
            }
            Expr::Call(func, a) => {
                let x = a.eval(point, time)?;
                let domain = || EvalError::Domain {
                    subexpr: self.to_string(),
                    argument: x,
                };
                match func {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Abs => x.abs(),
                    Func::Log if x <= 0.0 => return Err(domain()),
                    Func::Log => x.ln(),
                    Func::Sqrt if x < 0.0 => return Err(domain()),
                    Func::Sqrt => x.sqrt(),
                }
            }
        })
    }

    pub fn depends_on_time(&self) -> bool {
        match self {
            Expr::Time => true,
            Expr::Num(_) | Expr::Coord(_) | Expr::Pi => false,
            Expr::Neg(a) | Expr::Call(_, a) => a.depends_on_time(),
            Expr::Binary(_, a, b) => a.depends_on_time() || b.depends_on_time(),
        }
    }

    /// Highest coordinate index referenced, 1-based (0 if none).
    pub fn max_coordinate(&self) -> usize {
        match self {
            Expr::Coord(k) => k + 1,
            Expr::Num(_) | Expr::Time | Expr::Pi => 0,
            Expr::Neg(a) | Expr::Call(_, a) => a.max_coordinate(),
            Expr::Binary(_, a, b) => a.max_coordinate().max(b.max_coordinate()),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, ..) => op.precedence(),
            Expr::Neg(_) => 3,
            _ => 5,
        }
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.precedence() < min_prec {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Coord(k) => write!(f, "x{}", k + 1),
            Expr::Time => f.write_str("t"),
            Expr::Pi => f.write_str("pi"),
            Expr::Neg(a) => {
                f.write_str("-")?;
                a.fmt_child(f, 3)
            }
            Expr::Binary(BinOp::Pow, a, b) => {
                a.fmt_child(f, 5)?;
                f.write_str("^")?;
                b.fmt_child(f, 3)
            }
            Expr::Binary(op, a, b) => {
                let p = op.precedence();
                a.fmt_child(f, p)?;
                write!(f, " {} ", op.symbol())?;
                b.fmt_child(f, p + 1)
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    include!("../../tests/data/parser_suites.rs");

    fn ev(src: &str, point: &[f64]) -> f64 {
        parse_expr(src).unwrap().eval(point, 0.0).unwrap()
    }

    #[test]
    fn precedence_suite() {
        let cases = PRECEDENCE;
        for (src, want) in cases {
            assert_eq!(ev(src, &[]), *want, "{src}");
        }
    }

    #[test]
    fn coefficient_style_expressions() {
        assert_eq!(ev("1 + 0.5*cos(2*pi*x1)", &[0.0]), 1.5);
        assert_eq!(ev("exp(0)", &[]), 1.0);
        assert_eq!(ev("x1^2", &[0.5]), 0.25);
        assert_eq!(ev("x1 + 10*x2", &[0.25, 0.5]), 5.25);
        let e = parse_expr("1 + t*sin(x1)").unwrap();
        assert!(e.depends_on_time());
        assert_eq!(e.max_coordinate(), 1);
        assert!(!parse_expr("x2*pi").unwrap().depends_on_time());
        assert_eq!(parse_expr("x2*pi").unwrap().max_coordinate(), 2);
    }

    #[test]
    fn error_offsets() {
        let cases = ERROR_OFFSETS;
        for (src, offset) in cases {
            let err = parse_expr(src).unwrap_err();
            assert_eq!(err.offset, *offset, "{src}: {err}");
        }
        assert!(matches!(
            parse_expr("foo(x1)").unwrap_err().kind,
            ParseErrorKind::UnknownIdentifier(ref n) if n == "foo"
        ));
        assert!(matches!(
            parse_expr("sin(1, 2)").unwrap_err().kind,
            ParseErrorKind::WrongArity { expected: 1, found: 2, .. }
        ));
        assert!(matches!(
            parse_expr("sqrt()").unwrap_err().kind,
            ParseErrorKind::WrongArity { expected: 1, found: 0, .. }
        ));
    }

    #[test]
    fn evaluation_errors() {
        let e = parse_expr("1 + log(-1)").unwrap();
        match e.eval(&[], 0.0) {
            Err(EvalError::Domain { subexpr, argument }) => {
                assert_eq!(subexpr, "log(-1)");
                assert_eq!(argument, -1.0);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_expr("sqrt(x1 - 1)").unwrap().eval(&[0.5], 0.0),
            Err(EvalError::Domain { .. })
        ));
        assert!(matches!(
            parse_expr("1/(x1 - x1)").unwrap().eval(&[0.3], 0.0),
            Err(EvalError::DivisionByZero { .. })
        ));
        assert!(matches!(
            parse_expr("x2").unwrap().eval(&[0.3], 0.0),
            Err(EvalError::MissingCoordinate { index: 2, dim: 1 })
        ));
    }

    #[test]
    fn round_trip_corpus() {
        for src in CORPUS {
            let e = parse_expr(src).unwrap();
            let printed = e.to_string();
            let again = parse_expr(&printed).unwrap_or_else(|err| panic!("{src} -> {printed}: {err}"));
            assert_eq!(e, again, "{src} -> {printed}");
        }
    }

    #[test]
    fn printing_is_minimal() {
        assert_eq!(parse_expr("(2+3)*4").unwrap().to_string(), "(2 + 3) * 4");
        assert_eq!(parse_expr("2-(3-4)").unwrap().to_string(), "2 - (3 - 4)");
        assert_eq!(parse_expr("(-2)^2").unwrap().to_string(), "(-2)^2");
        assert_eq!(parse_expr("-2^2").unwrap().to_string(), "-2^2");
    }
}
