//! Arithmetic coefficient expressions.
//!
//! Coefficients `b1`, `sigma1`, `b2`, `sigma2` are written as plain text in the
//! run configuration and parsed once into an [`Expr`] tree. Variables are
//! `x0..x{n-1}` (slow state) and `y0..y{m-1}` (fast state). Named parameters are
//! substituted while parsing and constant subtrees are folded, so evaluation
//! only needs `(x, y)`.
//!
//! Grammar, loosest to tightest:
//!
//! ```text
//! expr   := expr ('+' | '-') expr
//!         | expr ('*' | '/') expr
//!         | '-' expr              (binds looser than '^')
//!         | expr '^' expr         (right associative)
//!         | number | ident | ident '(' args ')' | '(' expr ')'
//! ```

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Named numeric parameters substituted at parse time.
pub type Params = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdent { name: String, offset: usize },
    #[error("`{name}` at offset {offset} exceeds declared dimension {dim}")]
    VarOutOfRange {
        name: String,
        offset: usize,
        dim: usize,
    },
    #[error("function `{func}` takes {expected} argument(s), got {got}")]
    Arity {
        func: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("domain error in `{op}` at argument {arg}")]
    Domain { op: &'static str, arg: f64 },
    #[error("entry ({row}, {col}): {source}")]
    Entry {
        row: usize,
        col: usize,
        source: Box<ExprError>,
    },
    #[error("expected {expected} values for `{what}`, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Slow and fast dimensions an expression is declared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
}

impl Dims {
    pub fn new(n: usize, m: usize) -> Self {
        Dims { n, m }
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

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
    Tanh,
    Min,
    Max,
    Pow,
}

impl Func {
    pub const ALL: [Func; 10] = [
        Func::Sin,
        Func::Cos,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Abs,
        Func::Tanh,
        Func::Min,
        Func::Max,
        Func::Pow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Tanh => "tanh",
            Func::Min => "min",
            Func::Max => "max",
            Func::Pow => "pow",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max | Func::Pow => 2,
            _ => 1,
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.iter().copied().find(|f| f.name() == name)
    }
}

/// Parsed expression tree. Immutable after parsing.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    X(usize),
    Y(usize),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

fn pow_checked(base: f64, exp: f64) -> Result<f64, ExprError> {
    if base < 0.0 && exp.fract() != 0.0 {
        return Err(ExprError::Domain {
            op: "^",
            arg: base,
        });
    }
    let v = base.powf(exp);
    if !v.is_finite() && base.is_finite() && exp.is_finite() {
        return Err(ExprError::Domain {
            op: "^",
            arg: base,
        });
    }
    Ok(v)
}

fn apply_binary(op: BinOp, a: f64, b: f64) -> Result<f64, ExprError> {
    match op {
        BinOp::Add => Ok(a + b),
        BinOp::Sub => Ok(a - b),
        BinOp::Mul => Ok(a * b),
        BinOp::Div => {
            if b == 0.0 {
                Err(ExprError::Domain { op: "/", arg: b })
            } else {
                Ok(a / b)
            }
        }
        BinOp::Pow => pow_checked(a, b),
    }
}

fn apply_func(f: Func, args: &[f64]) -> Result<f64, ExprError> {
    let a = args[0];
    match f {
        Func::Sin => Ok(a.sin()),
        Func::Cos => Ok(a.cos()),
        Func::Exp => Ok(a.exp()),
        Func::Log => {
            if a > 0.0 {
                Ok(a.ln())
            } else {
                Err(ExprError::Domain { op: "log", arg: a })
            }
        }
        Func::Sqrt => {
            if a >= 0.0 {
                Ok(a.sqrt())
            } else {
                Err(ExprError::Domain { op: "sqrt", arg: a })
            }
        }
        Func::Abs => Ok(a.abs()),
        Func::Tanh => Ok(a.tanh()),
        Func::Min => Ok(a.min(args[1])),
        Func::Max => Ok(a.max(args[1])),
        Func::Pow => pow_checked(a, args[1]),
    }
}

impl Expr {
    /// Parses `source` against declared dimensions, substituting `params`.
    pub fn parse(source: &str, dims: Dims, params: &Params) -> Result<Expr, ExprError> {
        let tokens = lex(source)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            dims,
            params,
        };
        let expr = parser.expr(0)?;
        let tok = parser.peek();
        if tok.kind != TokKind::End {
            return Err(ExprError::Syntax {
                offset: tok.offset,
                message: format!("unexpected {}", tok.kind.describe()),
            });
        }
        Ok(expr)
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64, ExprError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::X(i) => Ok(x[*i]),
            Expr::Y(i) => Ok(y[*i]),
            Expr::Neg(e) => Ok(-e.eval(x, y)?),
            Expr::Binary(op, l, r) => apply_binary(*op, l.eval(x, y)?, r.eval(x, y)?),
            Expr::Call(f, args) => {
                let mut vals = [0.0; 2];
                for (slot, arg) in vals.iter_mut().zip(args) {
                    *slot = arg.eval(x, y)?;
                }
                apply_func(*f, &vals[..args.len()])
            }
        }
    }

    pub fn uses_x(&self) -> bool {
        self.any_leaf(&|e| matches!(e, Expr::X(_)))
    }

    pub fn uses_y(&self) -> bool {
        self.any_leaf(&|e| matches!(e, Expr::Y(_)))
    }

    fn any_leaf(&self, pred: &dyn Fn(&Expr) -> bool) -> bool {
        match self {
            Expr::Num(_) | Expr::X(_) | Expr::Y(_) => pred(self),
            Expr::Neg(e) => e.any_leaf(pred),
            Expr::Binary(_, l, r) => l.any_leaf(pred) || r.any_leaf(pred),
            Expr::Call(_, args) => args.iter().any(|a| a.any_leaf(pred)),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, _, _) => op.precedence(),
            Expr::Neg(_) => 3,
            _ => 5,
        }
    }

    /// Folds nodes whose children are all literals.
    fn fold(self) -> Expr {
        let folded = match &self {
            Expr::Neg(e) => match **e {
                Expr::Num(v) => Some(-v),
                _ => None,
            },
            Expr::Binary(op, l, r) => match (&**l, &**r) {
                (Expr::Num(a), Expr::Num(b)) => apply_binary(*op, *a, *b).ok(),
                _ => None,
            },
            Expr::Call(f, args) if args.iter().all(|a| matches!(a, Expr::Num(_))) => {
                let vals: Vec<f64> = args
                    .iter()
                    .map(|a| match a {
                        Expr::Num(v) => *v,
                        _ => unreachable!(),
                    })
                    .collect();
                apply_func(*f, &vals).ok()
            }
            _ => None,
        };
        match folded {
            Some(v) if v.is_finite() => Expr::Num(v),
            _ => self,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if v.is_sign_negative() {
                    write!(f, "(-{})", -v)
                } else {
                    write!(f, "{v}")
                }
            }
            Expr::X(i) => write!(f, "x{i}"),
            Expr::Y(i) => write!(f, "y{i}"),
            Expr::Neg(e) => {
                if e.precedence() < 3 {
                    write!(f, "-({e})")
                } else {
                    write!(f, "-{e}")
                }
            }
            Expr::Binary(op, l, r) => {
                let p = op.precedence();
                let left_parens = if *op == BinOp::Pow {
                    l.precedence() <= p
                } else {
                    l.precedence() < p
                };
                let right_parens = if *op == BinOp::Pow {
                    r.precedence() < 3
                } else {
                    r.precedence() <= p
                };
                if left_parens {
                    write!(f, "({l})")?;
                } else {
                    write!(f, "{l}")?;
                }
                write!(f, "{}", op.symbol())?;
                if right_parens {
                    write!(f, "({r})")
                } else {
                    write!(f, "{r}")
                }
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

impl TokKind {
    fn describe(&self) -> String {
        match self {
            TokKind::Num(v) => format!("number {v}"),
            TokKind::Ident(s) => format!("identifier `{s}`"),
            TokKind::Op(c) => format!("operator `{c}`"),
            TokKind::LParen => "`(`".into(),
            TokKind::RParen => "`)`".into(),
            TokKind::Comma => "`,`".into(),
            TokKind::End => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokKind,
    offset: usize,
}

fn lex(source: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = source.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let kind = match c {
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                i += 1;
                TokKind::Op(c as char)
            }
            b'(' => {
                i += 1;
                TokKind::LParen
            }
            b')' => {
                i += 1;
                TokKind::RParen
            }
            b',' => {
                i += 1;
                TokKind::Comma
            }
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &source[start..i];
                let v: f64 = text.parse().map_err(|_| ExprError::Syntax {
                    offset: start,
                    message: format!("malformed number `{text}`"),
                })?;
                TokKind::Num(v)
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                TokKind::Ident(source[start..i].to_string())
            }
            _ => {
                return Err(ExprError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{}`", &source[start..].chars().next().unwrap()),
                })
            }
        };
        tokens.push(Token {
            kind,
            offset: start,
        });
    }
    tokens.push(Token {
        kind: TokKind::End,
        offset: source.len(),
    });
    Ok(tokens)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    dims: Dims,
    params: &'a Params,
}

const PREFIX_NEG_BP: u8 = 5;

fn infix_binding(op: char) -> Option<(u8, u8, BinOp)> {
    match op {
        '+' => Some((1, 2, BinOp::Add)),
        '-' => Some((1, 2, BinOp::Sub)),
        '*' => Some((3, 4, BinOp::Mul)),
        '/' => Some((3, 4, BinOp::Div)),
        // right associative
        '^' => Some((7, 6, BinOp::Pow)),
        _ => None,
    }
}

impl Parser<'_> {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if t.kind != TokKind::End {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, kind: TokKind) -> Result<(), ExprError> {
        let t = self.next();
        if t.kind == kind {
            Ok(())
        } else {
            Err(ExprError::Syntax {
                offset: t.offset,
                message: format!("expected {}, found {}", kind.describe(), t.kind.describe()),
            })
        }
    }

    fn expr(&mut self, min_bp: u8) -> Result<Expr, ExprError> {
        let mut lhs = self.prefix()?;
        loop {
            let (lbp, rbp, op) = match &self.peek().kind {
                TokKind::Op(c) => match infix_binding(*c) {
                    Some(b) => b,
                    None => break,
                },
                _ => break,
            };
            if lbp < min_bp {
                break;
            }
            self.next();
            let rhs = self.expr(rbp)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs)).fold();
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Expr, ExprError> {
        let tok = self.next();
        match tok.kind {
            TokKind::Num(v) => Ok(Expr::Num(v)),
            TokKind::Op('-') => {
                let operand = self.expr(PREFIX_NEG_BP)?;
                Ok(Expr::Neg(Box::new(operand)).fold())
            }
            TokKind::LParen => {
                let inner = self.expr(0)?;
                self.expect(TokKind::RParen)?;
                Ok(inner)
            }
            TokKind::Ident(name) => {
                if self.peek().kind == TokKind::LParen {
                    self.call(name, tok.offset)
                } else {
                    self.variable(name, tok.offset)
                }
            }
            other => Err(ExprError::Syntax {
                offset: tok.offset,
                message: format!("unexpected {}", other.describe()),
            }),
        }
    }

    fn call(&mut self, name: String, offset: usize) -> Result<Expr, ExprError> {
        let func = Func::from_name(&name).ok_or(ExprError::UnknownIdent { name, offset })?;
        self.expect(TokKind::LParen)?;
        let mut args = Vec::new();
        if self.peek().kind != TokKind::RParen {
            loop {
                args.push(self.expr(0)?);
                if self.peek().kind == TokKind::Comma {
                    self.next();
                } else {
                    break;
                }
            }
        }
        self.expect(TokKind::RParen)?;
        if args.len() != func.arity() {
            return Err(ExprError::Arity {
                func: func.name(),
                expected: func.arity(),
                got: args.len(),
            });
        }
        Ok(Expr::Call(func, args).fold())
    }

    fn variable(&mut self, name: String, offset: usize) -> Result<Expr, ExprError> {
        if let Some(index) = var_index(&name, 'x') {
            if index >= self.dims.n {
                return Err(ExprError::VarOutOfRange {
                    name,
                    offset,
                    dim: self.dims.n,
                });
            }
            return Ok(Expr::X(index));
        }
        if let Some(index) = var_index(&name, 'y') {
            if index >= self.dims.m {
                return Err(ExprError::VarOutOfRange {
                    name,
                    offset,
                    dim: self.dims.m,
                });
            }
            return Ok(Expr::Y(index));
        }
        match self.params.get(&name) {
            Some(v) => Ok(Expr::Num(*v)),
            None => Err(ExprError::UnknownIdent { name, offset }),
        }
    }
}

fn var_index(name: &str, prefix: char) -> Option<usize> {
    let rest = name.strip_prefix(prefix)?;
    if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    rest.parse().ok()
}

/// Output shape of a coefficient field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Scalar,
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    pub fn len(self) -> usize {
        match self {
            Shape::Scalar => 1,
            Shape::Vector(k) => k,
            Shape::Matrix(k, l) => k * l,
        }
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }

    pub fn cols(self) -> usize {
        match self {
            Shape::Matrix(_, l) => l,
            _ => 1,
        }
    }
}

/// A scalar, vector or matrix of expressions sharing declared dims.
/// Matrix entries are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffField {
    shape: Shape,
    entries: Vec<Expr>,
    dims: Dims,
}

impl CoeffField {
    pub fn scalar(source: &str, dims: Dims, params: &Params) -> Result<Self, ExprError> {
        Ok(CoeffField {
            shape: Shape::Scalar,
            entries: vec![Expr::parse(source, dims, params)?],
            dims,
        })
    }

    pub fn vector<S: AsRef<str>>(sources: &[S], dims: Dims, params: &Params) -> Result<Self, ExprError> {
        let entries = sources
            .iter()
            .enumerate()
            .map(|(i, s)| {
                Expr::parse(s.as_ref(), dims, params).map_err(|e| ExprError::Entry {
                    row: i,
                    col: 0,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CoeffField {
            shape: Shape::Vector(entries.len()),
            entries,
            dims,
        })
    }

    pub fn matrix<S: AsRef<str>>(rows: &[Vec<S>], dims: Dims, params: &Params) -> Result<Self, ExprError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut entries = Vec::with_capacity(rows.len() * cols);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(ExprError::Shape {
                    what: "matrix row",
                    expected: cols,
                    got: row.len(),
                });
            }
            for (c, s) in row.iter().enumerate() {
                entries.push(Expr::parse(s.as_ref(), dims, params).map_err(|e| ExprError::Entry {
                    row: r,
                    col: c,
                    source: Box::new(e),
                })?);
            }
        }
        Ok(CoeffField {
            shape: Shape::Matrix(rows.len(), cols),
            entries,
            dims,
        })
    }

    /// Builds a field from already parsed entries.
    pub fn from_entries(shape: Shape, entries: Vec<Expr>, dims: Dims) -> Result<Self, ExprError> {
        if entries.len() != shape.len() {
            return Err(ExprError::Shape {
                what: "field entries",
                expected: shape.len(),
                got: entries.len(),
            });
        }
        Ok(CoeffField { shape, entries, dims })
    }

    /// Constant zero field of the given shape.
    pub fn zeros(shape: Shape, dims: Dims) -> Self {
        CoeffField {
            shape,
            entries: vec![Expr::Num(0.0); shape.len()],
            dims,
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn entries(&self) -> &[Expr] {
        &self.entries
    }

    pub fn uses_x(&self) -> bool {
        self.entries.iter().any(Expr::uses_x)
    }

    pub fn uses_y(&self) -> bool {
        self.entries.iter().any(Expr::uses_y)
    }

    /// Evaluates every entry into `out` (row-major).
    pub fn eval_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) -> Result<(), ExprError> {
        debug_assert_eq!(out.len(), self.entries.len());
        let cols = self.shape.cols();
        for (k, (slot, e)) in out.iter_mut().zip(&self.entries).enumerate() {
            *slot = e.eval(x, y).map_err(|err| ExprError::Entry {
                row: k / cols,
                col: k % cols,
                source: Box::new(err),
            })?;
        }
        Ok(())
    }

    /// Evaluates the field; the result is row-major with `shape().len()` entries.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>, ExprError> {
        if x.len() != self.dims.n {
            return Err(ExprError::Shape {
                what: "x",
                expected: self.dims.n,
                got: x.len(),
            });
        }
        if y.len() != self.dims.m {
            return Err(ExprError::Shape {
                what: "y",
                expected: self.dims.m,
                got: y.len(),
            });
        }
        let mut out = vec![0.0; self.entries.len()];
        self.eval_into(x, y, &mut out)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(src: &str) -> Result<Expr, ExprError> {
        let mut params = Params::new();
        params.insert("r".into(), 0.1);
        params.insert("s".into(), 0.3);
        Expr::parse(src, Dims::new(2, 2), &params)
    }

    #[test]
    fn cos_at_zero() {
        assert_eq!(p("cos(y0)").unwrap().eval(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn params_substituted() {
        let e = p("r - 0.5*cos(y0)^2").unwrap();
        let v = e.eval(&[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!((v + 0.4).abs() < 1e-15);
        let g = p("exp(-(y0-2*s)^2)").unwrap();
        assert_eq!(g.eval(&[0.0, 0.0], &[0.6, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn unbalanced_paren_offset() {
        match p("cos(") {
            Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn precedence() {
        let at = |s: &str| p(s).unwrap().eval(&[2.0, 3.0], &[0.0, 0.0]).unwrap();
        assert_eq!(at("1 + 2 * 3"), 7.0);
        assert_eq!(at("2^3^2"), 512.0);
        assert_eq!(at("-x0^2"), -4.0);
        assert_eq!(at("(-x0)^2"), 4.0);
        assert_eq!(at("x1 - x0 - 1"), 0.0);
        assert_eq!(at("2^-1"), 0.5);
        assert_eq!(at("x1 / x0 * 2"), 3.0);
        assert_eq!(at("min(x0, x1) + max(x0, x1)"), 5.0);
        assert_eq!(at("pow(x0, 3)"), 8.0);
        assert_eq!(at("1.5e1 + .5"), 15.5);
    }

    #[test]
    fn error_kinds() {
        assert!(matches!(p("foo(y0)"), Err(ExprError::UnknownIdent { .. })));
        assert!(matches!(p("q + 1"), Err(ExprError::UnknownIdent { .. })));
        assert!(matches!(p("min(y0)"), Err(ExprError::Arity { expected: 2, got: 1, .. })));
        assert!(matches!(p("y2"), Err(ExprError::VarOutOfRange { .. })));
        assert!(matches!(p(""), Err(ExprError::Syntax { offset: 0, .. })));
        assert!(matches!(p("1 +* 2"), Err(ExprError::Syntax { offset: 3, .. })));
        assert!(matches!(p("1 2"), Err(ExprError::Syntax { offset: 2, .. })));
        assert!(matches!(p("3 $"), Err(ExprError::Syntax { offset: 2, .. })));
    }

    #[test]
    fn domain_errors() {
        let e = p("log(y0)").unwrap();
        assert!(matches!(e.eval(&[0.0, 0.0], &[-1.0, 0.0]), Err(ExprError::Domain { op: "log", .. })));
        let e = p("y0^0.5").unwrap();
        assert!(matches!(e.eval(&[0.0, 0.0], &[-1.0, 0.0]), Err(ExprError::Domain { .. })));
        assert_eq!(p("y0^2").unwrap().eval(&[0.0, 0.0], &[-3.0, 0.0]).unwrap(), 9.0);
        assert!(p("sqrt(y0)").unwrap().eval(&[0.0, 0.0], &[-0.1, 0.0]).is_err());
        assert!(p("1/y0").unwrap().eval(&[0.0, 0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn constant_folding() {
        assert_eq!(p("2*r + 1").unwrap(), Expr::Num(1.2));
        assert_eq!(p("-(3)").unwrap(), Expr::Num(-3.0));
        // domain errors in constants are left for evaluation to report
        assert!(matches!(p("log(0)").unwrap(), Expr::Call(Func::Log, _)));
    }

    #[test]
    fn matrix_field() {
        let f = CoeffField::matrix(
            &[vec!["x0", "0"], vec!["0", "y0"]],
            Dims::new(1, 1),
            &Params::new(),
        )
        .unwrap();
        assert_eq!(f.shape(), Shape::Matrix(2, 2));
        assert_eq!(f.eval(&[2.0], &[3.0]).unwrap(), vec![2.0, 0.0, 0.0, 3.0]);
        assert!(f.uses_x() && f.uses_y());
    }

    #[test]
    fn field_errors_carry_entry_index() {
        let f = CoeffField::vector(&["1", "log(y0)"], Dims::new(1, 1), &Params::new()).unwrap();
        match f.eval(&[0.0], &[-1.0]) {
            Err(ExprError::Entry { row: 1, col: 0, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(f.eval(&[0.0, 1.0], &[1.0]).is_err());
    }

    #[test]
    fn display_reparses() {
        for src in ["-x0^2", "(x0-x1)-(y0-y1)", "2^-x0*y0", "-(x0*y0)", "(2^x0)^3", "x0/(x1*y0)", "min(-1, x0)"] {
            let e = p(src).unwrap();
            let printed = e.to_string();
            assert_eq!(p(&printed).unwrap(), e, "{src} -> {printed}");
        }
    }
}
