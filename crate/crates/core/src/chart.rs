//! Coordinate charts: named base coordinates, an optional fiber block of
//! momenta or velocities, and named real parameters.
//!
//! A chart fixes the variable layout every expression and field on it uses:
//! slots `0..n` are the base coordinates, `n..2n` the fiber coordinates (when
//! present), and parameters follow the coordinates. Parameters are constants
//! baked into the chart — evaluation points never carry them.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::expr::Func;

/// What the fiber block of a chart means.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FiberKind {
    /// Configuration-only chart; points have `n` components.
    None,
    /// Cotangent chart `(q, p)`; points have `2n` components.
    Momenta,
    /// Tangent chart `(q, v)`; points have `2n` components.
    Velocities,
}

/// Where a name resolved inside a chart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    /// Coordinate index into an evaluation point.
    Coord(usize),
    /// Parameter index into the chart's constants.
    Param(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    base: Vec<String>,
    fiber_kind: FiberKind,
    fiber: Vec<String>,
    params: Vec<(String, f64)>,
}

impl Chart {
    /// Builds a chart after validating the naming rules: every name is a
    /// distinct, identifier-shaped string that does not collide with a
    /// built-in function, the base is nonempty, and the fiber (when the kind
    /// has one) matches the base dimension.
    pub fn new(
        base: Vec<String>,
        fiber_kind: FiberKind,
        fiber: Vec<String>,
        params: Vec<(String, f64)>,
    ) -> Result<Self> {
        if base.is_empty() {
            return Err(Error::EmptyBase);
        }
        match fiber_kind {
            FiberKind::None => {
                if !fiber.is_empty() {
                    return Err(Error::FiberMismatch {
                        base: 0,
                        fiber: fiber.len(),
                    });
                }
            }
            _ => {
                if fiber.len() != base.len() {
                    return Err(Error::FiberMismatch {
                        base: base.len(),
                        fiber: fiber.len(),
                    });
                }
            }
        }
        let mut seen: Vec<&str> = Vec::new();
        for name in base
            .iter()
            .chain(fiber.iter())
            .chain(params.iter().map(|(n, _)| n))
        {
            check_name(name)?;
            if seen.contains(&name.as_str()) {
                return Err(Error::DuplicateName(name.clone()));
            }
            seen.push(name);
        }
        for (_, v) in &params {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: "chart parameter",
                });
            }
        }
        Ok(Chart {
            base,
            fiber_kind,
            fiber,
            params,
        })
    }

    /// Configuration chart without a fiber block.
    pub fn config(base: Vec<String>, params: Vec<(String, f64)>) -> Result<Self> {
        Chart::new(base, FiberKind::None, Vec::new(), params)
    }

    /// Cotangent chart with conventional names `q1..qn`, `p1..pn`.
    pub fn standard_momenta(n: usize, params: Vec<(String, f64)>) -> Result<Self> {
        Chart::new(
            (1..=n).map(|i| format!("q{i}")).collect(),
            FiberKind::Momenta,
            (1..=n).map(|i| format!("p{i}")).collect(),
            params,
        )
    }

    /// Tangent chart with conventional names `q1..qn`, `v1..vn`.
    pub fn standard_velocities(n: usize, params: Vec<(String, f64)>) -> Result<Self> {
        Chart::new(
            (1..=n).map(|i| format!("q{i}")).collect(),
            FiberKind::Velocities,
            (1..=n).map(|i| format!("v{i}")).collect(),
            params,
        )
    }

    /// Base dimension `n`.
    pub fn n(&self) -> usize {
        self.base.len()
    }

    /// Total coordinate count: `n` or `2n`.
    pub fn dim(&self) -> usize {
        self.base.len() + self.fiber.len()
    }

    pub fn fiber_kind(&self) -> FiberKind {
        self.fiber_kind
    }

    pub fn has_fiber(&self) -> bool {
        !self.fiber.is_empty()
    }

    pub fn base_names(&self) -> &[String] {
        &self.base
    }

    pub fn fiber_names(&self) -> &[String] {
        &self.fiber
    }

    pub fn params(&self) -> &[(String, f64)] {
        &self.params
    }

    pub fn coord_name(&self, i: usize) -> &str {
        if i < self.base.len() {
            &self.base[i]
        } else {
            &self.fiber[i - self.base.len()]
        }
    }

    pub fn is_base_index(&self, i: usize) -> bool {
        i < self.base.len()
    }

    pub fn param_value(&self, i: usize) -> f64 {
        self.params[i].1
    }

    pub fn lookup(&self, name: &str) -> Option<Slot> {
        if let Some(i) = self.base.iter().position(|n| n == name) {
            return Some(Slot::Coord(i));
        }
        if let Some(i) = self.fiber.iter().position(|n| n == name) {
            return Some(Slot::Coord(self.base.len() + i));
        }
        self.params
            .iter()
            .position(|(n, _)| n == name)
            .map(Slot::Param)
    }

    /// Extends a base point with zeroed fiber components so that base-only
    /// fields can be evaluated on it.
    pub fn embed_base(&self, q: &[f64]) -> Result<Vec<f64>> {
        if q.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: q.len(),
            });
        }
        let mut x = q.to_vec();
        x.resize(self.dim(), 0.0);
        Ok(x)
    }

    /// True when both charts have the same coordinate layout and identical
    /// parameters, ignoring the fiber interpretation. This is the condition
    /// for transplanting a field from one chart to the other.
    pub fn layout_matches(&self, other: &Chart) -> bool {
        self.base.len() == other.base.len()
            && self.fiber.len() == other.fiber.len()
            && self.params == other.params
    }

    /// The cotangent companion of a tangent chart: same base coordinates and
    /// parameters, momentum names derived from the velocity names (`v<x>`
    /// becomes `p<x>`, anything else gains a `p_` prefix).
    pub fn momentum_partner(&self) -> Result<Chart> {
        if self.fiber_kind != FiberKind::Velocities {
            return Err(Error::ChartMismatch);
        }
        let fiber = self
            .fiber
            .iter()
            .map(|v| rename_fiber(v, 'v', 'p'))
            .collect();
        Chart::new(self.base.clone(), FiberKind::Momenta, fiber, self.params.clone())
    }

    /// The tangent companion of a cotangent chart; inverse of
    /// [`Chart::momentum_partner`] for conventional names.
    pub fn velocity_partner(&self) -> Result<Chart> {
        if self.fiber_kind != FiberKind::Momenta {
            return Err(Error::ChartMismatch);
        }
        let fiber = self
            .fiber
            .iter()
            .map(|p| rename_fiber(p, 'p', 'v'))
            .collect();
        Chart::new(
            self.base.clone(),
            FiberKind::Velocities,
            fiber,
            self.params.clone(),
        )
    }
}

fn rename_fiber(name: &str, from: char, to: char) -> String {
    match name.strip_prefix(from) {
        Some(rest) if !rest.is_empty() => format!("{to}{rest}"),
        _ => format!("{to}_{name}"),
    }
}

fn check_name(name: &str) -> Result<()> {
    let mut chars = name.chars();
    let head_ok = chars
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_');
    if !head_ok || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(Error::BadName(name.to_string()));
    }
    if Func::from_name(name).is_some() {
        return Err(Error::BadName(name.to_string()));
    }
    Ok(())
}
