//! Error types shared by every module in the crate.

use alloc::string::String;
use core::fmt;

/// Line/column position inside expression source text, both 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// What went wrong while tokenizing or parsing an expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    /// A character that cannot start any token.
    UnexpectedChar(char),
    /// A well-formed token in a position where it is not allowed.
    UnexpectedToken(String),
    /// Input ended in the middle of a production.
    UnexpectedEnd,
    /// Identifier that is neither a coordinate, a parameter, nor a function.
    UnknownIdentifier(String),
    /// `name(...)` where `name` is not one of the built-in functions.
    UnknownFunction(String),
    /// A function name used without a parenthesized argument.
    MissingArgument(String),
    /// Numeric literal that does not scan as a finite float.
    InvalidNumber(String),
    /// Extra tokens after a complete expression.
    TrailingInput(String),
}

/// Parse failure with the source position where it was detected.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub pos: Pos,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ParseErrorKind::*;
        write!(f, "{}: ", self.pos)?;
        match &self.kind {
            UnexpectedChar(c) => write!(f, "unexpected character `{c}`"),
            UnexpectedToken(t) => write!(f, "unexpected token `{t}`"),
            UnexpectedEnd => write!(f, "unexpected end of expression"),
            UnknownIdentifier(n) => write!(f, "unknown identifier `{n}`"),
            UnknownFunction(n) => write!(f, "unknown function `{n}`"),
            MissingArgument(n) => write!(f, "function `{n}` needs a parenthesized argument"),
            InvalidNumber(s) => write!(f, "invalid number `{s}`"),
            TrailingInput(t) => write!(f, "trailing input starting at `{t}`"),
        }
    }
}

/// Crate-wide error type.
///
/// Variants are grouped roughly by origin: expression parsing, chart
/// construction, evaluation, and the iterative numeric routines (LU
/// solves, Newton inversions).
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    Parse(ParseError),
    /// A chart name is empty, not identifier-shaped, or collides with a
    /// built-in function name.
    BadName(String),
    /// The same name used twice among coordinates and parameters.
    DuplicateName(String),
    /// A chart needs at least one base coordinate.
    EmptyBase,
    /// Fiber name count does not match the base dimension.
    FiberMismatch { base: usize, fiber: usize },
    /// Operation received data on a different chart than it was built for.
    ChartMismatch,
    /// Wrong number of point components, section components, and the like.
    DimensionMismatch { expected: usize, got: usize },
    /// An evaluation produced NaN or an infinity.
    NonFinite { context: &'static str },
    /// Fractional power of a non-positive base.
    NonPositiveBase { base: f64 },
    /// A linear solve hit a pivot that is exactly or numerically zero.
    SingularMatrix { context: &'static str },
    /// Newton iteration failed to reach tolerance.
    NewtonDiverged {
        context: &'static str,
        residual: f64,
        iterations: u32,
    },
    /// Catch-all for construction-time validation failures.
    Invalid(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Error::*;
        match self {
            Parse(e) => write!(f, "parse error: {e}"),
            BadName(n) => write!(f, "invalid name `{n}`"),
            DuplicateName(n) => write!(f, "duplicate name `{n}`"),
            EmptyBase => write!(f, "chart needs at least one base coordinate"),
            FiberMismatch { base, fiber } => {
                write!(f, "fiber has {fiber} names but base has {base}")
            }
            ChartMismatch => write!(f, "objects live on different charts"),
            DimensionMismatch { expected, got } => {
                write!(f, "expected {expected} components, got {got}")
            }
            NonFinite { context } => write!(f, "non-finite value in {context}"),
            NonPositiveBase { base } => {
                write!(f, "fractional power needs a positive base, got {base}")
            }
            SingularMatrix { context } => write!(f, "singular matrix in {context}"),
            NewtonDiverged {
                context,
                residual,
                iterations,
            } => write!(
                f,
                "Newton iteration in {context} stalled at residual {residual:e} after {iterations} steps"
            ),
            Invalid(msg) => write!(f, "{msg}"),
        }
    }
}

impl core::error::Error for Error {}

impl From<ParseError> for Error {
    fn from(e: ParseError) -> Self {
        Error::Parse(e)
    }
}

pub type Result<T> = core::result::Result<T, Error>;
