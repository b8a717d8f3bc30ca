//! The expression language used to define scalar fields.
//!
//! Grammar (whitespace, including newlines, separates nothing and is
//! skipped):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := unary ('^' unary)?
//! unary  := '-' unary | atom
//! atom   := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'
//! ```
//!
//! `^` is non-associative: `2^3^2` is a syntax error, write `2^(3^2)`.
//! Because the exponent grabs a whole `unary`, `-x^2` parses as `(-x)^2`.
//!
//! `NUMBER` is a decimal literal: digits with an optional fraction and an
//! optional `e`/`E` exponent (`1`, `2.5`, `.5`, `1e-3`). `IDENT` is
//! `[A-Za-z_][A-Za-z0-9_]*` and must resolve against the chart the
//! expression is parsed on — either a coordinate or a parameter. The
//! built-in functions `sin cos tan exp log sqrt abs` are reserved words; a
//! chart cannot name a coordinate after them.
//!
//! Powers: an exponent that contains no coordinates (literals and
//! parameters only) is treated as a constant. Integer constant exponents
//! use the power rule and allow negative bases; any other exponent requires
//! a strictly positive base at the evaluation point.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::chart::{Chart, Slot};
use crate::error::{Error, ParseError, ParseErrorKind, Pos, Result};
use crate::jet::{Dual, Jet};

/// The built-in unary functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
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
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    pub fn eval(self, u: f64) -> f64 {
        match self {
            Func::Sin => libm::sin(u),
            Func::Cos => libm::cos(u),
            Func::Tan => libm::tan(u),
            Func::Exp => libm::exp(u),
            Func::Log => libm::log(u),
            Func::Sqrt => libm::sqrt(u),
            Func::Abs => u.abs(),
        }
    }

    /// Value and first two derivatives at `u`.
    fn derivs(self, u: f64) -> (f64, f64, f64) {
        match self {
            Func::Sin => {
                let (s, c) = (libm::sin(u), libm::cos(u));
                (s, c, -s)
            }
            Func::Cos => {
                let (s, c) = (libm::sin(u), libm::cos(u));
                (c, -s, -c)
            }
            Func::Tan => {
                let t = libm::tan(u);
                let s = 1.0 + t * t;
                (t, s, 2.0 * t * s)
            }
            Func::Exp => {
                let e = libm::exp(u);
                (e, e, e)
            }
            Func::Log => (libm::log(u), 1.0 / u, -1.0 / (u * u)),
            Func::Sqrt => {
                let s = libm::sqrt(u);
                (s, 0.5 / s, -0.25 / (u * s))
            }
            Func::Abs => {
                let sign = if u > 0.0 {
                    1.0
                } else if u < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                (u.abs(), sign, 0.0)
            }
        }
    }
}

/// Parsed expression tree. Variables are slot indices into the owning
/// chart: `0..dim` are coordinates, `dim..` are parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

// ---------------------------------------------------------------------------
// Lexing

#[derive(Debug, Clone, PartialEq)]
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
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("{v:?}"),
            Tok::Ident(s) => s.clone(),
            Tok::Plus => "+".into(),
            Tok::Minus => "-".into(),
            Tok::Star => "*".into(),
            Tok::Slash => "/".into(),
            Tok::Caret => "^".into(),
            Tok::LParen => "(".into(),
            Tok::RParen => ")".into(),
        }
    }
}

fn lex(src: &str) -> core::result::Result<Vec<(Tok, Pos)>, ParseError> {
    let mut out = Vec::new();
    let mut line: u32 = 1;
    let mut col: u32 = 1;
    let bytes = src.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let pos = Pos { line, col };
        let c = bytes[i] as char;
        match c {
            '\n' => {
                line += 1;
                col = 1;
                i += 1;
            }
            ' ' | '\t' | '\r' => {
                col += 1;
                i += 1;
            }
            '+' | '-' | '*' | '/' | '^' | '(' | ')' => {
                out.push((
                    match c {
                        '+' => Tok::Plus,
                        '-' => Tok::Minus,
                        '*' => Tok::Star,
                        '/' => Tok::Slash,
                        '^' => Tok::Caret,
                        '(' => Tok::LParen,
                        _ => Tok::RParen,
                    },
                    pos,
                ));
                col += 1;
                i += 1;
            }
            _ if c.is_ascii_digit() || (c == '.' && i + 1 < bytes.len() && (bytes[i + 1] as char).is_ascii_digit()) => {
                let start = i;
                while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
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
                let v: f64 = text.parse().map_err(|_| ParseError {
                    pos,
                    kind: ParseErrorKind::InvalidNumber(text.into()),
                })?;
                if !v.is_finite() {
                    return Err(ParseError {
                        pos,
                        kind: ParseErrorKind::InvalidNumber(text.into()),
                    });
                }
                col += (i - start) as u32;
                out.push((Tok::Num(v), pos));
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                col += (i - start) as u32;
                out.push((Tok::Ident(src[start..i].into()), pos));
            }
            _ => {
                return Err(ParseError {
                    pos,
                    kind: ParseErrorKind::UnexpectedChar(c),
                })
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parsing

struct Parser<'a> {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    chart: &'a Chart,
    end: Pos,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(t, _)| t)
    }

    fn pos(&self) -> Pos {
        self.toks.get(self.at).map_or(self.end, |(_, p)| *p)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.at).map(|(t, _)| t.clone());
        if t.is_some() {
            self.at += 1;
        }
        t
    }

    fn expr(&mut self) -> core::result::Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> core::result::Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Some(Tok::Slash) => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> core::result::Result<Expr, ParseError> {
        let base = self.unary()?;
        if let Some(Tok::Caret) = self.peek() {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn unary(&mut self) -> core::result::Result<Expr, ParseError> {
        if let Some(Tok::Minus) = self.peek() {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> core::result::Result<Expr, ParseError> {
        let pos = self.pos();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Expr::Num(v)),
            Some(Tok::Ident(name)) => {
                if let Some(Tok::LParen) = self.peek() {
                    let func = Func::from_name(&name).ok_or(ParseError {
                        pos,
                        kind: ParseErrorKind::UnknownFunction(name),
                    })?;
                    self.bump();
                    let arg = self.expr()?;
                    match self.bump() {
                        Some(Tok::RParen) => Ok(Expr::Call(func, Box::new(arg))),
                        Some(t) => Err(self.fail_prev(ParseErrorKind::UnexpectedToken(t.describe()))),
                        None => Err(ParseError {
                            pos: self.end,
                            kind: ParseErrorKind::UnexpectedEnd,
                        }),
                    }
                } else if Func::from_name(&name).is_some() {
                    Err(ParseError {
                        pos,
                        kind: ParseErrorKind::MissingArgument(name),
                    })
                } else {
                    match self.chart.lookup(&name) {
                        Some(Slot::Coord(i)) => Ok(Expr::Var(i)),
                        Some(Slot::Param(k)) => Ok(Expr::Var(self.chart.dim() + k)),
                        None => Err(ParseError {
                            pos,
                            kind: ParseErrorKind::UnknownIdentifier(name),
                        }),
                    }
                }
            }
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                match self.bump() {
                    Some(Tok::RParen) => Ok(inner),
                    Some(t) => Err(self.fail_prev(ParseErrorKind::UnexpectedToken(t.describe()))),
                    None => Err(ParseError {
                        pos: self.end,
                        kind: ParseErrorKind::UnexpectedEnd,
                    }),
                }
            }
            Some(t) => Err(ParseError {
                pos,
                kind: ParseErrorKind::UnexpectedToken(t.describe()),
            }),
            None => Err(ParseError {
                pos,
                kind: ParseErrorKind::UnexpectedEnd,
            }),
        }
    }

    fn fail_prev(&self, kind: ParseErrorKind) -> ParseError {
        let pos = self
            .toks
            .get(self.at.saturating_sub(1))
            .map_or(self.end, |(_, p)| *p);
        ParseError { pos, kind }
    }
}

impl Expr {
    /// Parses `src` against `chart`, resolving identifiers to coordinate or
    /// parameter slots.
    pub fn parse(chart: &Chart, src: &str) -> Result<Expr> {
        let toks = lex(src).map_err(Error::Parse)?;
        let end = {
            let last_line = src.lines().count().max(1) as u32;
            let last_col = src.lines().last().map_or(1, |l| l.chars().count() + 1) as u32;
            Pos {
                line: last_line,
                col: last_col,
            }
        };
        let mut p = Parser {
            toks,
            at: 0,
            chart,
            end,
        };
        let e = p.expr().map_err(Error::Parse)?;
        if let Some(t) = p.peek() {
            return Err(Error::Parse(ParseError {
                pos: p.pos(),
                kind: ParseErrorKind::TrailingInput(t.describe()),
            }));
        }
        Ok(e)
    }

    /// True when no coordinate of the chart occurs (parameters are fine),
    /// which is the condition for an exponent to count as constant.
    pub fn is_coord_free(&self, dim: usize) -> bool {
        match self {
            Expr::Num(_) => true,
            Expr::Var(i) => *i >= dim,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.is_coord_free(dim) && b.is_coord_free(dim),
            Expr::Neg(a) | Expr::Call(_, a) => a.is_coord_free(dim),
        }
    }

    /// Calls `f` on every variable slot referenced by the tree.
    pub fn for_each_var(&self, f: &mut impl FnMut(usize)) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(i) => f(*i),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b)
            | Expr::Pow(a, b) => {
                a.for_each_var(f);
                b.for_each_var(f);
            }
            Expr::Neg(a) | Expr::Call(_, a) => a.for_each_var(f),
        }
    }

    /// Plain value evaluation; `x` supplies the coordinates, `chart` the
    /// parameters. NaN and infinities propagate and are rejected by the
    /// callers that require finite output.
    pub fn eval_values(&self, chart: &Chart, x: &[f64]) -> Result<f64> {
        let dim = chart.dim();
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => {
                if *i < dim {
                    x[*i]
                } else {
                    chart.param_value(*i - dim)
                }
            }
            Expr::Add(a, b) => a.eval_values(chart, x)? + b.eval_values(chart, x)?,
            Expr::Sub(a, b) => a.eval_values(chart, x)? - b.eval_values(chart, x)?,
            Expr::Mul(a, b) => a.eval_values(chart, x)? * b.eval_values(chart, x)?,
            Expr::Div(a, b) => a.eval_values(chart, x)? / b.eval_values(chart, x)?,
            Expr::Neg(a) => -a.eval_values(chart, x)?,
            Expr::Call(f, a) => f.eval(a.eval_values(chart, x)?),
            Expr::Pow(a, b) => {
                let u = a.eval_values(chart, x)?;
                if b.is_coord_free(dim) {
                    let c = b.eval_values(chart, x)?;
                    if is_integral(c) {
                        crate::jet::powi_f64(u, c as i64)
                    } else if u > 0.0 {
                        libm::pow(u, c)
                    } else {
                        return Err(Error::NonPositiveBase { base: u });
                    }
                } else {
                    let v = b.eval_values(chart, x)?;
                    if u > 0.0 {
                        libm::pow(u, v)
                    } else {
                        return Err(Error::NonPositiveBase { base: u });
                    }
                }
            }
        })
    }

    /// Jet evaluation: the coordinate slots are supplied as jets in some
    /// ambient space, parameters become constants.
    pub fn eval_jets(&self, chart: &Chart, args: &[Jet]) -> Result<Jet> {
        let dim = chart.dim();
        let ambient = args.first().map_or(0, Jet::dim);
        Ok(match self {
            Expr::Num(v) => Jet::constant(ambient, *v),
            Expr::Var(i) => {
                if *i < dim {
                    args[*i].clone()
                } else {
                    Jet::constant(ambient, chart.param_value(*i - dim))
                }
            }
            Expr::Add(a, b) => a.eval_jets(chart, args)?.add(&b.eval_jets(chart, args)?),
            Expr::Sub(a, b) => a.eval_jets(chart, args)?.sub(&b.eval_jets(chart, args)?),
            Expr::Mul(a, b) => a.eval_jets(chart, args)?.mul(&b.eval_jets(chart, args)?),
            Expr::Div(a, b) => a.eval_jets(chart, args)?.div(&b.eval_jets(chart, args)?),
            Expr::Neg(a) => a.eval_jets(chart, args)?.neg(),
            Expr::Call(f, a) => {
                let u = a.eval_jets(chart, args)?;
                let (f0, f1, f2) = f.derivs(u.val);
                u.map_unary(f0, f1, f2)
            }
            Expr::Pow(a, b) => {
                let base = a.eval_jets(chart, args)?;
                if b.is_coord_free(dim) {
                    let c = b.eval_values(chart, &alloc::vec![0.0; dim])?;
                    if is_integral(c) {
                        base.powi(c as i64)
                    } else if base.val > 0.0 {
                        let u = base.val;
                        base.map_unary(
                            libm::pow(u, c),
                            c * libm::pow(u, c - 1.0),
                            c * (c - 1.0) * libm::pow(u, c - 2.0),
                        )
                    } else {
                        return Err(Error::NonPositiveBase { base: base.val });
                    }
                } else {
                    if base.val <= 0.0 {
                        return Err(Error::NonPositiveBase { base: base.val });
                    }
                    let expo = b.eval_jets(chart, args)?;
                    let ln = {
                        let u = base.val;
                        base.map_unary(libm::log(u), 1.0 / u, -1.0 / (u * u))
                    };
                    let w = expo.mul(&ln);
                    let e = libm::exp(w.val);
                    w.map_unary(e, e, e)
                }
            }
        })
    }

    /// First-order evaluation: like [`Expr::eval_jets`] but propagating
    /// only values and gradients, which skips the quadratic Hessian work.
    pub fn eval_duals(&self, chart: &Chart, args: &[Dual]) -> Result<Dual> {
        let dim = chart.dim();
        let ambient = args.first().map_or(0, Dual::dim);
        Ok(match self {
            Expr::Num(v) => Dual::constant(ambient, *v),
            Expr::Var(i) => {
                if *i < dim {
                    args[*i].clone()
                } else {
                    Dual::constant(ambient, chart.param_value(*i - dim))
                }
            }
            Expr::Add(a, b) => a.eval_duals(chart, args)?.add(&b.eval_duals(chart, args)?),
            Expr::Sub(a, b) => a.eval_duals(chart, args)?.sub(&b.eval_duals(chart, args)?),
            Expr::Mul(a, b) => a.eval_duals(chart, args)?.mul(&b.eval_duals(chart, args)?),
            Expr::Div(a, b) => a.eval_duals(chart, args)?.div(&b.eval_duals(chart, args)?),
            Expr::Neg(a) => a.eval_duals(chart, args)?.neg(),
            Expr::Call(f, a) => {
                let u = a.eval_duals(chart, args)?;
                let (f0, f1, _) = f.derivs(u.val);
                u.map_unary(f0, f1)
            }
            Expr::Pow(a, b) => {
                let base = a.eval_duals(chart, args)?;
                if b.is_coord_free(dim) {
                    let c = match &**b {
                        Expr::Num(v) => *v,
                        _ => b.eval_values(chart, &alloc::vec![0.0; dim])?,
                    };
                    if is_integral(c) {
                        base.powi(c as i64)
                    } else if base.val > 0.0 {
                        let u = base.val;
                        base.map_unary(libm::pow(u, c), c * libm::pow(u, c - 1.0))
                    } else {
                        return Err(Error::NonPositiveBase { base: base.val });
                    }
                } else {
                    if base.val <= 0.0 {
                        return Err(Error::NonPositiveBase { base: base.val });
                    }
                    let expo = b.eval_duals(chart, args)?;
                    let u = base.val;
                    let ln = base.map_unary(libm::log(u), 1.0 / u);
                    let w = expo.mul(&ln);
                    let e = libm::exp(w.val);
                    w.map_unary(e, e)
                }
            }
        })
    }

    /// Exact derivative with respect to coordinate slot `var`, as a new
    /// tree. Only trivial constant folds are applied (`0 * x`, `x + 0`,
    /// literal arithmetic), no general simplification.
    pub fn derivative(&self, chart: &Chart, var: usize) -> Expr {
        let dim = chart.dim();
        match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(i) => Expr::Num(if *i == var { 1.0 } else { 0.0 }),
            Expr::Add(a, b) => fadd(a.derivative(chart, var), b.derivative(chart, var)),
            Expr::Sub(a, b) => fsub(a.derivative(chart, var), b.derivative(chart, var)),
            Expr::Mul(a, b) => fadd(
                fmul(a.derivative(chart, var), (**b).clone()),
                fmul((**a).clone(), b.derivative(chart, var)),
            ),
            Expr::Div(a, b) => {
                // (a/b)' = a'/b - a b' / b^2
                let da = a.derivative(chart, var);
                let db = b.derivative(chart, var);
                fsub(
                    fdiv(da, (**b).clone()),
                    fdiv(
                        fmul((**a).clone(), db),
                        fmul((**b).clone(), (**b).clone()),
                    ),
                )
            }
            Expr::Neg(a) => fneg(a.derivative(chart, var)),
            Expr::Pow(a, b) => {
                let da = a.derivative(chart, var);
                if b.is_coord_free(dim) {
                    // (u^c)' = c u^(c-1) u'
                    let cm1 = fsub((**b).clone(), Expr::Num(1.0));
                    fmul((**b).clone(), fmul(fpow((**a).clone(), cm1), da))
                } else {
                    // (u^v)' = u^v (v' log u + v u' / u)
                    let db = b.derivative(chart, var);
                    let inner = fadd(
                        fmul(db, Expr::Call(Func::Log, Box::new((**a).clone()))),
                        fdiv(fmul((**b).clone(), da), (**a).clone()),
                    );
                    fmul(self.clone(), inner)
                }
            }
            Expr::Call(f, a) => {
                let da = a.derivative(chart, var);
                let fp = match f {
                    Func::Sin => Expr::Call(Func::Cos, a.clone()),
                    Func::Cos => fneg(Expr::Call(Func::Sin, a.clone())),
                    Func::Tan => fadd(
                        Expr::Num(1.0),
                        fpow(Expr::Call(Func::Tan, a.clone()), Expr::Num(2.0)),
                    ),
                    Func::Exp => Expr::Call(Func::Exp, a.clone()),
                    Func::Log => fdiv(Expr::Num(1.0), (**a).clone()),
                    Func::Sqrt => fdiv(
                        Expr::Num(1.0),
                        fmul(Expr::Num(2.0), Expr::Call(Func::Sqrt, a.clone())),
                    ),
                    Func::Abs => fdiv((**a).clone(), Expr::Call(Func::Abs, a.clone())),
                };
                fmul(fp, da)
            }
        }
    }

    /// Rewrites every variable slot through `map`; `None` keeps the slot.
    pub fn substitute(&self, map: &dyn Fn(usize) -> Option<Expr>) -> Expr {
        match self {
            Expr::Num(v) => Expr::Num(*v),
            Expr::Var(i) => map(*i).unwrap_or(Expr::Var(*i)),
            Expr::Add(a, b) => fadd(a.substitute(map), b.substitute(map)),
            Expr::Sub(a, b) => fsub(a.substitute(map), b.substitute(map)),
            Expr::Mul(a, b) => fmul(a.substitute(map), b.substitute(map)),
            Expr::Div(a, b) => fdiv(a.substitute(map), b.substitute(map)),
            Expr::Neg(a) => fneg(a.substitute(map)),
            Expr::Pow(a, b) => fpow(a.substitute(map), b.substitute(map)),
            Expr::Call(f, a) => Expr::Call(*f, Box::new(a.substitute(map))),
        }
    }

    /// Renders the tree with the chart's names, parenthesizing only where
    /// precedence demands it. Reparsing the output yields a tree that
    /// evaluates bitwise identically.
    pub fn pretty(&self, chart: &Chart) -> String {
        let mut s = String::new();
        self.fmt_prec(chart, 0, &mut s);
        s
    }

    fn prec(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Pow(..) => 3,
            Expr::Neg(..) => 4,
            Expr::Num(v) if *v < 0.0 => 4,
            _ => 5,
        }
    }

    fn fmt_prec(&self, chart: &Chart, min: u8, out: &mut String) {
        let me = self.prec();
        let paren = me < min;
        if paren {
            out.push('(');
        }
        match self {
            Expr::Num(v) => out.push_str(&format!("{v:?}")),
            Expr::Var(i) => {
                let dim = chart.dim();
                if *i < dim {
                    out.push_str(chart.coord_name(*i));
                } else {
                    out.push_str(&chart.params()[*i - dim].0);
                }
            }
            Expr::Add(a, b) => {
                a.fmt_prec(chart, 1, out);
                out.push_str(" + ");
                b.fmt_prec(chart, 2, out);
            }
            Expr::Sub(a, b) => {
                a.fmt_prec(chart, 1, out);
                out.push_str(" - ");
                b.fmt_prec(chart, 2, out);
            }
            Expr::Mul(a, b) => {
                a.fmt_prec(chart, 2, out);
                out.push('*');
                b.fmt_prec(chart, 3, out);
            }
            Expr::Div(a, b) => {
                a.fmt_prec(chart, 2, out);
                out.push('/');
                b.fmt_prec(chart, 3, out);
            }
            Expr::Pow(a, b) => {
                a.fmt_prec(chart, 4, out);
                out.push('^');
                b.fmt_prec(chart, 4, out);
            }
            Expr::Neg(a) => {
                out.push('-');
                a.fmt_prec(chart, 4, out);
            }
            Expr::Call(f, a) => {
                out.push_str(f.name());
                out.push('(');
                a.fmt_prec(chart, 0, out);
                out.push(')');
            }
        }
        if paren {
            out.push(')');
        }
    }
}

/// True for finite values that are exact integers small enough for the
/// repeated-squaring power path.
fn is_integral(c: f64) -> bool {
    c.is_finite() && c == libm::trunc(c) && c.abs() <= 2e9
}

// ---------------------------------------------------------------------------
// Folding constructors used by `derivative` and `substitute`. They apply
// only the rewrites that keep derivative trees from drowning in zeros and
// ones; anything smarter is out of scope.

fn is_zero(e: &Expr) -> bool {
    matches!(e, Expr::Num(v) if *v == 0.0)
}

fn is_one(e: &Expr) -> bool {
    matches!(e, Expr::Num(v) if *v == 1.0)
}

fn num2(a: &Expr, b: &Expr) -> Option<(f64, f64)> {
    if let (Expr::Num(x), Expr::Num(y)) = (a, b) {
        Some((*x, *y))
    } else {
        None
    }
}

pub(crate) fn fadd(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) {
        return b;
    }
    if is_zero(&b) {
        return a;
    }
    if let Some((x, y)) = num2(&a, &b) {
        if (x + y).is_finite() {
            return Expr::Num(x + y);
        }
    }
    Expr::Add(Box::new(a), Box::new(b))
}

pub(crate) fn fsub(a: Expr, b: Expr) -> Expr {
    if is_zero(&b) {
        return a;
    }
    if let Some((x, y)) = num2(&a, &b) {
        if (x - y).is_finite() {
            return Expr::Num(x - y);
        }
    }
    if is_zero(&a) {
        return fneg(b);
    }
    Expr::Sub(Box::new(a), Box::new(b))
}

pub(crate) fn fmul(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) || is_zero(&b) {
        return Expr::Num(0.0);
    }
    if is_one(&a) {
        return b;
    }
    if is_one(&b) {
        return a;
    }
    if let Some((x, y)) = num2(&a, &b) {
        if (x * y).is_finite() {
            return Expr::Num(x * y);
        }
    }
    Expr::Mul(Box::new(a), Box::new(b))
}

pub(crate) fn fdiv(a: Expr, b: Expr) -> Expr {
    if is_one(&b) {
        return a;
    }
    if is_zero(&a) {
        return Expr::Num(0.0);
    }
    if let Some((x, y)) = num2(&a, &b) {
        if y != 0.0 && (x / y).is_finite() {
            return Expr::Num(x / y);
        }
    }
    Expr::Div(Box::new(a), Box::new(b))
}

pub(crate) fn fneg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

pub(crate) fn fpow(a: Expr, b: Expr) -> Expr {
    if is_one(&b) {
        return a;
    }
    if is_zero(&b) {
        return Expr::Num(1.0);
    }
    Expr::Pow(Box::new(a), Box::new(b))
}
