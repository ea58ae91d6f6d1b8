//! A small expression language for coefficient fields, boundary data and
//! analytic test solutions.
//!
//! Variables are `x`, `y`, `z` (aliases `x1`, `x2`, `x3`), the polar radius
//! `r = |x|` and the polar angle `theta = atan2(y, x)`. The constant `pi` is
//! predefined. Operators follow the usual precedence with `^` binding tightest
//! and associating to the right, so `-x^2` is `-(x^2)`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
    Z,
    R,
    Theta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
    Sign,
    Atan2,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" | "ln" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            "atan2" => Func::Atan2,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sign => "sign",
            Func::Atan2 => "atan2",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Atan2 => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Parses `source` into an expression tree.
pub fn parse_expr(source: &str) -> Result<Expr> {
    if source.trim().is_empty() {
        return Err(Error::Parse {
            offset: 0,
            message: "empty expression".into(),
        });
    }
    let tokens = tokenize(source)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: source.len(),
    };
    let expr = parser.expr()?;
    if let Some(tok) = parser.peek() {
        return Err(Error::Parse {
            offset: tok.offset,
            message: format!("unexpected {}", tok.kind.describe()),
        });
    }
    Ok(expr)
}

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

impl TokKind {
    fn describe(&self) -> String {
        match self {
            TokKind::Num(v) => format!("number {v}"),
            TokKind::Ident(s) => format!("identifier '{s}'"),
            TokKind::Op(c) => format!("operator '{c}'"),
            TokKind::LParen => "'('".into(),
            TokKind::RParen => "')'".into(),
            TokKind::Comma => "','".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokKind,
    offset: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == '.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            // exponent part, only when followed by digits
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
            let text = &src[start..i];
            let value: f64 = text.parse().map_err(|_| Error::Parse {
                offset: start,
                message: format!("malformed number '{text}'"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    offset: start,
                    message: format!("number '{text}' is not finite"),
                });
            }
            out.push(Token {
                kind: TokKind::Num(value),
                offset: start,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                kind: TokKind::Ident(src[start..i].to_string()),
                offset: start,
            });
            continue;
        }
        let kind = match c {
            '+' | '-' | '*' | '/' | '^' => TokKind::Op(c),
            '(' => TokKind::LParen,
            ')' => TokKind::RParen,
            ',' => TokKind::Comma,
            _ => {
                return Err(Error::Parse {
                    offset: start,
                    message: format!("unexpected character '{c}'"),
                })
            }
        };
        out.push(Token { kind, offset: start });
        i += c.len_utf8();
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.end, |t| t.offset)
    }

    fn eat_op(&mut self, op: char) -> bool {
        if matches!(self.peek(), Some(Token { kind: TokKind::Op(c), .. }) if *c == op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kind: TokKind) -> Result<()> {
        match self.peek() {
            Some(t) if t.kind == kind => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(Error::Parse {
                offset: t.offset,
                message: format!("expected {}, found {}", kind.describe(), t.kind.describe()),
            }),
            None => Err(Error::Parse {
                offset: self.end,
                message: format!("expected {}, found end of input", kind.describe()),
            }),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat_op('+') {
                lhs = Expr::Bin(BinOp::Add, Box::new(lhs), Box::new(self.term()?));
            } else if self.eat_op('-') {
                lhs = Expr::Bin(BinOp::Sub, Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat_op('*') {
                lhs = Expr::Bin(BinOp::Mul, Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat_op('/') {
                lhs = Expr::Bin(BinOp::Div, Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat_op('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat_op('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.eat_op('^') {
            let exponent = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        let offset = self.offset();
        let Some(tok) = self.peek().cloned() else {
            return Err(Error::Parse {
                offset,
                message: "unexpected end of input".into(),
            });
        };
        self.pos += 1;
        match tok.kind {
            TokKind::Num(v) => Ok(Expr::Num(v)),
            TokKind::LParen => {
                let inner = self.expr()?;
                self.expect(TokKind::RParen)?;
                Ok(inner)
            }
            TokKind::Ident(name) => {
                if let Some(func) = Func::from_name(&name) {
                    self.expect(TokKind::LParen)?;
                    let mut args = vec![self.expr()?];
                    while matches!(
                        self.peek(),
                        Some(Token {
                            kind: TokKind::Comma,
                            ..
                        })
                    ) {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(TokKind::RParen)?;
                    if args.len() != func.arity() {
                        return Err(Error::Parse {
                            offset,
                            message: format!("{} takes {} argument(s), got {}", func.name(), func.arity(), args.len()),
                        });
                    }
                    return Ok(Expr::Call(func, args));
                }
                let var = match name.as_str() {
                    "x" | "x1" => Var::X,
                    "y" | "x2" => Var::Y,
                    "z" | "x3" => Var::Z,
                    "r" => Var::R,
                    "theta" => Var::Theta,
                    "pi" => return Ok(Expr::Num(std::f64::consts::PI)),
                    _ => {
                        return Err(Error::Parse {
                            offset,
                            message: format!("unknown identifier '{name}'"),
                        })
                    }
                };
                Ok(Expr::Var(var))
            }
            other => Err(Error::Parse {
                offset,
                message: format!("unexpected {}", other.describe()),
            }),
        }
    }
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    /// Evaluates at a point with 1 to 3 coordinates; missing coordinates are zero.
    pub fn eval(&self, p: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(var) => eval_var(*var, p),
            Expr::Neg(a) => -a.eval(p),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(p), b.eval(p));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => pow(a, b),
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval(p);
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Log => a.ln(),
                    Func::Sqrt => a.sqrt(),
                    Func::Abs => a.abs(),
                    Func::Sign => sign(a),
                    Func::Atan2 => a.atan2(args[1].eval(p)),
                }
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Num(_) => true,
            Expr::Var(_) => false,
            Expr::Neg(a) => a.is_constant(),
            Expr::Bin(_, a, b) => a.is_constant() && b.is_constant(),
            Expr::Call(_, args) => args.iter().all(Expr::is_constant),
        }
    }

    /// Returns the constant value when the expression does not depend on any variable.
    pub fn constant_value(&self) -> Option<f64> {
        self.is_constant().then(|| self.eval(&[0.0, 0.0, 0.0]))
    }

    fn depends_on(&self, axis: usize) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => match v {
                Var::X => axis == 0,
                Var::Y => axis == 1,
                Var::Z => axis == 2,
                Var::R => true,
                Var::Theta => axis < 2,
            },
            Expr::Neg(a) => a.depends_on(axis),
            Expr::Bin(_, a, b) => a.depends_on(axis) || b.depends_on(axis),
            Expr::Call(_, args) => args.iter().any(|a| a.depends_on(axis)),
        }
    }

    /// Symbolic Laplacian in the first `dim` coordinates.
    pub fn laplacian(&self, dim: usize) -> Expr {
        (1..dim).fold(self.derivative(0).derivative(0), |acc, k| {
            add(acc, self.derivative(k).derivative(k))
        })
    }

    /// Symbolic partial derivative along coordinate `axis` (0 = x, 1 = y, 2 = z).
    pub fn derivative(&self, axis: usize) -> Expr {
        if !self.depends_on(axis) {
            return Expr::Num(0.0);
        }
        match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(v) => match v {
                Var::X | Var::Y | Var::Z => Expr::Num(1.0),
                // d r / d x_i = x_i / r
                Var::R => div(Expr::Var(axis_var(axis)), Expr::Var(Var::R)),
                // d theta / dx = -y / (x^2 + y^2), d theta / dy = x / (x^2 + y^2)
                Var::Theta => {
                    let rho2 = add(
                        mul(Expr::Var(Var::X), Expr::Var(Var::X)),
                        mul(Expr::Var(Var::Y), Expr::Var(Var::Y)),
                    );
                    if axis == 0 {
                        neg(div(Expr::Var(Var::Y), rho2))
                    } else {
                        div(Expr::Var(Var::X), rho2)
                    }
                }
            },
            Expr::Neg(a) => neg(a.derivative(axis)),
            Expr::Bin(op, a, b) => {
                let da = a.derivative(axis);
                let db = b.derivative(axis);
                let (a, b) = (a.as_ref().clone(), b.as_ref().clone());
                match op {
                    BinOp::Add => add(da, db),
                    BinOp::Sub => sub(da, db),
                    BinOp::Mul => add(mul(da, b), mul(a, db)),
                    BinOp::Div => div(sub(mul(da, b.clone()), mul(a, db)), mul(b.clone(), b)),
                    BinOp::Pow => {
                        if !b.depends_on(axis) {
                            // b * a^(b-1) * a'
                            let reduced = pow_expr(a, sub(b.clone(), Expr::Num(1.0)));
                            mul(mul(b, reduced), da)
                        } else {
                            // a^b * (b' log a + b a' / a)
                            let whole = pow_expr(a.clone(), b.clone());
                            let log_a = Expr::Call(Func::Log, vec![a.clone()]);
                            mul(whole, add(mul(db, log_a), div(mul(b, da), a)))
                        }
                    }
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].clone();
                let da = a.derivative(axis);
                match f {
                    Func::Sin => mul(Expr::Call(Func::Cos, vec![a]), da),
                    Func::Cos => neg(mul(Expr::Call(Func::Sin, vec![a]), da)),
                    Func::Exp => mul(Expr::Call(Func::Exp, vec![a]), da),
                    Func::Log => div(da, a),
                    Func::Sqrt => div(da, mul(Expr::Num(2.0), Expr::Call(Func::Sqrt, vec![a]))),
                    Func::Abs => mul(Expr::Call(Func::Sign, vec![a]), da),
                    Func::Sign => Expr::Num(0.0),
                    Func::Atan2 => {
                        // atan2(a, b)' = (b a' - a b') / (a^2 + b^2)
                        let b = args[1].clone();
                        let db = b.derivative(axis);
                        let denom = add(mul(a.clone(), a.clone()), mul(b.clone(), b.clone()));
                        div(sub(mul(b, da), mul(a, db)), denom)
                    }
                }
            }
        }
    }
}

fn axis_var(axis: usize) -> Var {
    match axis {
        0 => Var::X,
        1 => Var::Y,
        _ => Var::Z,
    }
}

fn eval_var(var: Var, p: &[f64]) -> f64 {
    let x = p.first().copied().unwrap_or(0.0);
    let y = p.get(1).copied().unwrap_or(0.0);
    match var {
        Var::X => x,
        Var::Y => y,
        Var::Z => p.get(2).copied().unwrap_or(0.0),
        Var::R => p.iter().map(|c| c * c).sum::<f64>().sqrt(),
        Var::Theta => y.atan2(x),
    }
}

fn sign(a: f64) -> f64 {
    if a > 0.0 {
        1.0
    } else if a < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn pow(a: f64, b: f64) -> f64 {
    if b == b.trunc() && b.abs() <= 64.0 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), _) if *x == 0.0 => b,
        (_, Expr::Num(y)) if *y == 0.0 => a,
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x + y),
        _ => Expr::Bin(BinOp::Add, Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (_, Expr::Num(y)) if *y == 0.0 => a,
        (Expr::Num(x), _) if *x == 0.0 => neg(b),
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x - y),
        _ => Expr::Bin(BinOp::Sub, Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), _) | (_, Expr::Num(x)) if *x == 0.0 => Expr::Num(0.0),
        (Expr::Num(x), _) if *x == 1.0 => b,
        (_, Expr::Num(y)) if *y == 1.0 => a,
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x * y),
        _ => Expr::Bin(BinOp::Mul, Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), _) if *x == 0.0 => Expr::Num(0.0),
        (_, Expr::Num(y)) if *y == 1.0 => a,
        _ => Expr::Bin(BinOp::Div, Box::new(a), Box::new(b)),
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(x) => Expr::Num(-x),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn pow_expr(a: Expr, b: Expr) -> Expr {
    match &b {
        Expr::Num(y) if *y == 0.0 => Expr::Num(1.0),
        Expr::Num(y) if *y == 1.0 => a,
        _ => Expr::Bin(BinOp::Pow, Box::new(a), Box::new(b)),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // Debug formatting of f64 is the shortest exact round trip.
            Expr::Num(v) if *v < 0.0 => write!(f, "(-{:?})", -v),
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(v) => f.write_str(match v {
                Var::X => "x",
                Var::Y => "y",
                Var::Z => "z",
                Var::R => "r",
                Var::Theta => "theta",
            }),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Bin(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a} {sym} {b})")
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}
