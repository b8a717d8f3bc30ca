//! Scalar fields on a chart, differentiable to second order.
//!
//! A [`ScalarField`] pairs a chart with one of several evaluation backends:
//!
//! * a parsed expression (exact derivatives, pretty-printable),
//! * a user closure, optionally with a gradient closure (missing
//!   derivatives fall back to central finite differences),
//! * combinators over other fields: weighted sums, products, partial
//!   derivatives, and composition,
//! * entries of the pointwise inverse of a square [`MatrixField`]
//!   (derivatives from the matrix calculus of `A^{-1}`), and
//! * components of the velocity solved implicitly from the fiber
//!   derivative of a Lagrangian-like field (first derivatives by the
//!   implicit function theorem).
//!
//! Values, gradients, and Hessians are finite-checked at the public entry
//! points; domain problems (fractional powers of negative numbers,
//! singular Jacobians, stalled Newton iterations) surface as dedicated
//! error variants rather than NaNs.
//!
//! Derivative quality: everything expression-backed is exact. The
//! closure, inverse-entry, and implicit-velocity backends give exact
//! first derivatives wherever an analytic rule exists, and fall back to
//! finite differences only for the highest order they expose (their own
//! second derivatives, or third derivatives of whatever they wrap).

use alloc::boxed::Box;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::chart::{Chart, FiberKind};
use crate::error::{Error, Result};
use crate::expr::{fadd, fmul, Expr};
use crate::jet::{Dual, Jet};
use crate::linalg::Matrix;

type EvalFn = dyn Fn(&[f64]) -> Result<f64> + Send + Sync;
type GradFn = dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync;
type HessFn = dyn Fn(&[f64]) -> Result<Matrix> + Send + Sync;

/// A real-valued function of the chart coordinates.
#[derive(Clone)]
pub struct ScalarField {
    chart: Arc<Chart>,
    imp: Arc<Imp>,
}

enum Imp {
    Expr(Expr),
    Callable {
        eval: Box<EvalFn>,
        grad: Option<Box<GradFn>>,
        hess: Option<Box<HessFn>>,
    },
    Sum(Vec<(f64, ScalarField)>),
    Product(Vec<ScalarField>),
    Partial {
        f: ScalarField,
        wrt: usize,
    },
    Compose {
        outer: ScalarField,
        inner: Vec<ScalarField>,
    },
    InverseEntry {
        mat: Arc<MatrixField>,
        i: usize,
        j: usize,
    },
    ImplicitVelocity {
        lag: ScalarField,
        component: usize,
    },
}

impl core::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let kind = match &*self.imp {
            Imp::Expr(_) => "expr",
            Imp::Callable { .. } => "callable",
            Imp::Sum(_) => "sum",
            Imp::Product(_) => "product",
            Imp::Partial { .. } => "partial",
            Imp::Compose { .. } => "compose",
            Imp::InverseEntry { .. } => "inverse-entry",
            Imp::ImplicitVelocity { .. } => "implicit-velocity",
        };
        write!(f, "ScalarField<{kind}, dim {}>", self.chart.dim())
    }
}

impl ScalarField {
    fn wrap(chart: &Arc<Chart>, imp: Imp) -> ScalarField {
        ScalarField {
            chart: chart.clone(),
            imp: Arc::new(imp),
        }
    }

    /// Parses `src` on `chart`.
    pub fn parse(chart: &Arc<Chart>, src: &str) -> Result<ScalarField> {
        let e = Expr::parse(chart, src)?;
        Ok(Self::wrap(chart, Imp::Expr(e)))
    }

    /// Wraps an already-built expression after checking its variable slots
    /// fit the chart.
    pub fn from_expr(chart: &Arc<Chart>, expr: Expr) -> Result<ScalarField> {
        let limit = chart.dim() + chart.params().len();
        let mut bad = false;
        expr.for_each_var(&mut |i| bad |= i >= limit);
        if bad {
            return Err(Error::Invalid(
                "expression references a slot outside the chart".into(),
            ));
        }
        Ok(Self::wrap(chart, Imp::Expr(expr)))
    }

    pub fn constant(chart: &Arc<Chart>, v: f64) -> Result<ScalarField> {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: "constant field",
            });
        }
        Ok(Self::wrap(chart, Imp::Expr(Expr::Num(v))))
    }

    /// The `idx`-th coordinate as a field.
    pub fn coordinate(chart: &Arc<Chart>, idx: usize) -> Result<ScalarField> {
        if idx >= chart.dim() {
            return Err(Error::DimensionMismatch {
                expected: chart.dim(),
                got: idx,
            });
        }
        Ok(Self::wrap(chart, Imp::Expr(Expr::Var(idx))))
    }

    /// The linear function `sum_i coeffs[i] * x_i`.
    pub fn linear(chart: &Arc<Chart>, coeffs: &[f64]) -> Result<ScalarField> {
        if coeffs.len() != chart.dim() {
            return Err(Error::DimensionMismatch {
                expected: chart.dim(),
                got: coeffs.len(),
            });
        }
        let mut e = Expr::Num(0.0);
        for (i, &c) in coeffs.iter().enumerate() {
            if !c.is_finite() {
                return Err(Error::NonFinite {
                    context: "linear field coefficients",
                });
            }
            e = fadd(e, fmul(Expr::Num(c), Expr::Var(i)));
        }
        Ok(Self::wrap(chart, Imp::Expr(e)))
    }

    /// A field backed by a plain closure; derivatives use central finite
    /// differences.
    pub fn from_callable(
        chart: &Arc<Chart>,
        eval: impl Fn(&[f64]) -> Result<f64> + Send + Sync + 'static,
    ) -> ScalarField {
        Self::wrap(
            chart,
            Imp::Callable {
                eval: Box::new(eval),
                grad: None,
                hess: None,
            },
        )
    }

    /// A closure-backed field with an exact gradient closure; only its
    /// second derivatives are finite-differenced (from the gradient).
    pub fn from_callable_with_grad(
        chart: &Arc<Chart>,
        eval: impl Fn(&[f64]) -> Result<f64> + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    ) -> ScalarField {
        Self::wrap(
            chart,
            Imp::Callable {
                eval: Box::new(eval),
                grad: Some(Box::new(grad)),
                hess: None,
            },
        )
    }

    /// A closure-backed field with exact gradient and Hessian closures; no
    /// finite differencing is involved at any order it exposes.
    pub fn from_callable_exact(
        chart: &Arc<Chart>,
        eval: impl Fn(&[f64]) -> Result<f64> + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
        hess: impl Fn(&[f64]) -> Result<Matrix> + Send + Sync + 'static,
    ) -> ScalarField {
        Self::wrap(
            chart,
            Imp::Callable {
                eval: Box::new(eval),
                grad: Some(Box::new(grad)),
                hess: Some(Box::new(hess)),
            },
        )
    }

    /// `sum_k c_k f_k` over fields with matching chart layouts.
    pub fn weighted_sum(parts: Vec<(f64, ScalarField)>) -> Result<ScalarField> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Invalid("weighted_sum needs at least one part".into()))?;
        let chart = first.1.chart.clone();
        for (c, f) in &parts {
            if !c.is_finite() {
                return Err(Error::NonFinite {
                    context: "sum coefficients",
                });
            }
            if !f.chart.layout_matches(&chart) {
                return Err(Error::ChartMismatch);
            }
        }
        if parts.iter().all(|(_, f)| f.expr().is_some()) {
            let mut e = Expr::Num(0.0);
            for (c, f) in &parts {
                e = fadd(e, fmul(Expr::Num(*c), f.expr().unwrap().clone()));
            }
            return Ok(Self::wrap(&chart, Imp::Expr(e)));
        }
        Ok(Self::wrap(&chart, Imp::Sum(parts)))
    }

    /// Pointwise product of fields with matching chart layouts.
    pub fn product(parts: Vec<ScalarField>) -> Result<ScalarField> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Invalid("product needs at least one part".into()))?;
        let chart = first.chart.clone();
        for f in &parts {
            if !f.chart.layout_matches(&chart) {
                return Err(Error::ChartMismatch);
            }
        }
        if parts.iter().all(|f| f.expr().is_some()) {
            let mut e = Expr::Num(1.0);
            for f in &parts {
                e = fmul(e, f.expr().unwrap().clone());
            }
            return Ok(Self::wrap(&chart, Imp::Expr(e)));
        }
        Ok(Self::wrap(&chart, Imp::Product(parts)))
    }

    pub fn scale(&self, c: f64) -> Result<ScalarField> {
        Self::weighted_sum(vec![(c, self.clone())])
    }

    pub fn add(&self, other: &ScalarField) -> Result<ScalarField> {
        Self::weighted_sum(vec![(1.0, self.clone()), (1.0, other.clone())])
    }

    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        Self::weighted_sum(vec![(1.0, self.clone()), (-1.0, other.clone())])
    }

    pub fn mul(&self, other: &ScalarField) -> Result<ScalarField> {
        Self::product(vec![self.clone(), other.clone()])
    }

    /// `outer(inner_1(x), ..., inner_m(x))`: the inner fields supply the
    /// coordinates of the outer chart. When every piece is
    /// expression-backed the composition is collapsed symbolically, with
    /// outer parameters remapped by name (or baked to their values).
    pub fn compose(outer: &ScalarField, inner: &[ScalarField]) -> Result<ScalarField> {
        if inner.len() != outer.chart.dim() {
            return Err(Error::DimensionMismatch {
                expected: outer.chart.dim(),
                got: inner.len(),
            });
        }
        let chart = inner[0].chart.clone();
        for f in inner {
            if !f.chart.layout_matches(&chart) {
                return Err(Error::ChartMismatch);
            }
        }
        if let Some(oe) = outer.expr() {
            if inner.iter().all(|f| f.expr().is_some()) {
                let odim = outer.chart.dim();
                let collapsed = oe.substitute(&|idx| {
                    if idx < odim {
                        Some(inner[idx].expr().unwrap().clone())
                    } else {
                        let (name, val) = &outer.chart.params()[idx - odim];
                        match chart
                            .params()
                            .iter()
                            .position(|(n, v)| n == name && v == val)
                        {
                            Some(k) => Some(Expr::Var(chart.dim() + k)),
                            None => Some(Expr::Num(*val)),
                        }
                    }
                });
                return Self::from_expr(&chart, collapsed);
            }
        }
        Ok(Self::wrap(
            &chart,
            Imp::Compose {
                outer: outer.clone(),
                inner: inner.to_vec(),
            },
        ))
    }

    /// Exact partial derivative as a new field. Expression-backed fields
    /// (and sums, products, and compositions of them) differentiate
    /// symbolically; other backends wrap a derivative node whose own
    /// highest-order derivatives are finite-differenced.
    pub fn partial(&self, idx: usize) -> Result<ScalarField> {
        if idx >= self.chart.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.chart.dim(),
                got: idx,
            });
        }
        match &*self.imp {
            Imp::Expr(e) => Self::from_expr(&self.chart, e.derivative(&self.chart, idx)),
            Imp::Sum(parts) => {
                let mut out = Vec::with_capacity(parts.len());
                for (c, f) in parts {
                    out.push((*c, f.partial(idx)?));
                }
                Self::weighted_sum(out)
            }
            Imp::Product(parts) => {
                let mut terms = Vec::with_capacity(parts.len());
                for k in 0..parts.len() {
                    let mut factors = Vec::with_capacity(parts.len());
                    for (m, f) in parts.iter().enumerate() {
                        factors.push(if m == k { f.partial(idx)? } else { f.clone() });
                    }
                    terms.push((1.0, Self::product(factors)?));
                }
                Self::weighted_sum(terms)
            }
            Imp::Compose { outer, inner } => {
                let mut terms = Vec::with_capacity(inner.len());
                for k in 0..inner.len() {
                    let dk = Self::compose(&outer.partial(k)?, inner)?;
                    terms.push((1.0, dk.mul(&inner[k].partial(idx)?)?));
                }
                Self::weighted_sum(terms)
            }
            _ => Ok(Self::wrap(
                &self.chart,
                Imp::Partial {
                    f: self.clone(),
                    wrt: idx,
                },
            )),
        }
    }

    /// Component `component` of the velocity `v(q, p)` solved from
    /// `d(lag)/dv_i (q, v) = p_i` by damped Newton iteration; lives on
    /// `momentum_chart`. First derivatives come from the implicit
    /// function theorem.
    pub fn implicit_velocity(
        momentum_chart: &Arc<Chart>,
        lag: &ScalarField,
        component: usize,
    ) -> Result<ScalarField> {
        let n = momentum_chart.n();
        if momentum_chart.fiber_kind() != FiberKind::Momenta
            || lag.chart.fiber_kind() != FiberKind::Velocities
            || lag.chart.n() != n
        {
            return Err(Error::ChartMismatch);
        }
        if component >= n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: component,
            });
        }
        Ok(Self::wrap(
            momentum_chart,
            Imp::ImplicitVelocity {
                lag: lag.clone(),
                component,
            },
        ))
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    /// Moves the field to a chart with the same layout (dimension split
    /// and parameters); used to reinterpret e.g. a velocity-chart
    /// function on a matching momentum chart.
    pub fn with_chart(&self, chart: &Arc<Chart>) -> Result<ScalarField> {
        if !self.chart.layout_matches(chart) {
            return Err(Error::ChartMismatch);
        }
        Ok(ScalarField {
            chart: chart.clone(),
            imp: self.imp.clone(),
        })
    }

    /// The backing expression, when there is one.
    pub fn expr(&self) -> Option<&Expr> {
        match &*self.imp {
            Imp::Expr(e) => Some(e),
            _ => None,
        }
    }

    /// Renders the backing expression with the chart's names;
    /// `None` for non-expression backends.
    pub fn pretty(&self) -> Option<String> {
        self.expr().map(|e| e.pretty(&self.chart))
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.chart.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.chart.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "evaluation point",
            });
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let v = self.value_raw(x)?;
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: "field value",
            });
        }
        Ok(v)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let g = self.gradient_raw(x)?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "field gradient",
            });
        }
        Ok(g)
    }

    /// Symmetric matrix of second derivatives.
    pub fn hessian(&self, x: &[f64]) -> Result<Matrix> {
        let j = self.jet(x)?;
        let d = x.len();
        let mut m = Matrix::zeros(d, d);
        for i in 0..d {
            for k in 0..d {
                m.set(i, k, j.hess(i, k));
            }
        }
        Ok(m)
    }

    /// Value, gradient, and Hessian in one pass.
    pub fn jet(&self, x: &[f64]) -> Result<Jet> {
        self.check_point(x)?;
        let j = self.jet_args(&Jet::seed_point(x))?;
        if !j.is_finite() {
            return Err(Error::NonFinite {
                context: "field jet",
            });
        }
        Ok(j)
    }

    /// Second-order evaluation through already-seeded jets (the chain rule
    /// entry point used by compositions). `args` must contain one jet per
    /// chart coordinate, all of the same ambient dimension.
    pub fn jet_args(&self, args: &[Jet]) -> Result<Jet> {
        if args.len() != self.chart.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.chart.dim(),
                got: args.len(),
            });
        }
        match &*self.imp {
            Imp::Expr(e) => e.eval_jets(&self.chart, args),
            Imp::Sum(parts) => {
                let mut acc = Jet::constant(args.first().map_or(0, Jet::dim), 0.0);
                for (c, f) in parts {
                    acc = acc.add(&f.jet_args(args)?.scale(*c));
                }
                Ok(acc)
            }
            Imp::Product(parts) => {
                let mut acc = Jet::constant(args.first().map_or(0, Jet::dim), 1.0);
                for f in parts {
                    acc = acc.mul(&f.jet_args(args)?);
                }
                Ok(acc)
            }
            Imp::Compose { outer, inner } => {
                let mut inner_jets = Vec::with_capacity(inner.len());
                for f in inner {
                    inner_jets.push(f.jet_args(args)?);
                }
                outer.jet_args(&inner_jets)
            }
            _ => {
                let x: Vec<f64> = args.iter().map(|j| j.val).collect();
                let (v, g, h) = self.local_quadratic(&x)?;
                Jet::chain(v, &g, &h, args)
            }
        }
    }

    // -- backend dispatch ---------------------------------------------------

    fn value_raw(&self, x: &[f64]) -> Result<f64> {
        match &*self.imp {
            Imp::Expr(e) => e.eval_values(&self.chart, x),
            Imp::Callable { eval, .. } => eval(x),
            Imp::Sum(parts) => {
                let mut acc = 0.0;
                for (c, f) in parts {
                    acc += c * f.value_raw(x)?;
                }
                Ok(acc)
            }
            Imp::Product(parts) => {
                let mut acc = 1.0;
                for f in parts {
                    acc *= f.value_raw(x)?;
                }
                Ok(acc)
            }
            Imp::Partial { f, wrt } => Ok(f.gradient_raw(x)?[*wrt]),
            Imp::Compose { outer, inner } => {
                let mut vals = Vec::with_capacity(inner.len());
                for f in inner {
                    vals.push(f.value_raw(x)?);
                }
                outer.value_raw(&vals)
            }
            Imp::InverseEntry { mat, i, j } => {
                let a = mat.value(x)?;
                let inv = a.lu()?.inverse()?;
                Ok(inv.get(*i, *j))
            }
            Imp::ImplicitVelocity { lag, component } => {
                let v = solve_velocity(lag, self.chart.n(), x)?;
                Ok(v[*component])
            }
        }
    }

    fn gradient_raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &*self.imp {
            Imp::Expr(e) => Ok(e
                .eval_duals(&self.chart, &Dual::seed_point(x))?
                .into_grad()),
            Imp::Callable { eval, grad, .. } => match grad {
                Some(g) => {
                    let out = g(x)?;
                    if out.len() != x.len() {
                        return Err(Error::DimensionMismatch {
                            expected: x.len(),
                            got: out.len(),
                        });
                    }
                    Ok(out)
                }
                None => fd_gradient(&|y| eval(y), x),
            },
            Imp::Sum(parts) => {
                let mut acc = vec![0.0; x.len()];
                for (c, f) in parts {
                    for (a, g) in acc.iter_mut().zip(f.gradient_raw(x)?) {
                        *a += c * g;
                    }
                }
                Ok(acc)
            }
            Imp::Product(parts) => {
                let vals: Vec<f64> = parts
                    .iter()
                    .map(|f| f.value_raw(x))
                    .collect::<Result<_>>()?;
                let mut acc = vec![0.0; x.len()];
                for (k, f) in parts.iter().enumerate() {
                    let mut rest = 1.0;
                    for (m, v) in vals.iter().enumerate() {
                        if m != k {
                            rest *= v;
                        }
                    }
                    for (a, g) in acc.iter_mut().zip(f.gradient_raw(x)?) {
                        *a += rest * g;
                    }
                }
                Ok(acc)
            }
            Imp::Partial { f, wrt } => {
                let h = f.hessian_of_raw(x)?;
                Ok(h.row(*wrt).to_vec())
            }
            Imp::Compose { outer, inner } => {
                let mut vals = Vec::with_capacity(inner.len());
                for f in inner {
                    vals.push(f.value_raw(x)?);
                }
                let og = outer.gradient_raw(&vals)?;
                let mut acc = vec![0.0; x.len()];
                for (k, f) in inner.iter().enumerate() {
                    if og[k] == 0.0 {
                        continue;
                    }
                    for (a, g) in acc.iter_mut().zip(f.gradient_raw(x)?) {
                        *a += og[k] * g;
                    }
                }
                Ok(acc)
            }
            Imp::InverseEntry { mat, i, j } => {
                let (_, g, _) = inverse_entry_quadratic(mat, *i, *j, x, false)?;
                Ok(g)
            }
            Imp::ImplicitVelocity { lag, component } => {
                let n = self.chart.n();
                let v = solve_velocity(lag, n, x)?;
                implicit_velocity_gradient(lag, n, x, &v, *component)
            }
        }
    }

    /// Hessian without the public finite screen, used internally where the
    /// caller does its own checking.
    fn hessian_of_raw(&self, x: &[f64]) -> Result<Matrix> {
        let j = self.jet_args(&Jet::seed_point(x))?;
        let d = x.len();
        let mut m = Matrix::zeros(d, d);
        for i in 0..d {
            for k in 0..d {
                m.set(i, k, j.hess(i, k));
            }
        }
        Ok(m)
    }

    /// Local value/gradient/packed-Hessian for the backends that chain as
    /// opaque functions.
    fn local_quadratic(&self, x: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        match &*self.imp {
            Imp::Callable { eval, grad, hess } => {
                let v = eval(x)?;
                match grad {
                    Some(g) => {
                        let gr = g(x)?;
                        if gr.len() != x.len() {
                            return Err(Error::DimensionMismatch {
                                expected: x.len(),
                                got: gr.len(),
                            });
                        }
                        let h = match hess {
                            Some(hf) => {
                                let m = hf(x)?;
                                if m.rows() != x.len() || m.cols() != x.len() {
                                    return Err(Error::DimensionMismatch {
                                        expected: x.len(),
                                        got: m.rows(),
                                    });
                                }
                                pack_lower(&m)
                            }
                            None => fd_hessian_from_grad(&|y| g(y), x)?,
                        };
                        Ok((v, gr, h))
                    }
                    None => {
                        let gr = fd_gradient(&|y| eval(y), x)?;
                        let h = fd_hessian_from_values(&|y| eval(y), x)?;
                        Ok((v, gr, h))
                    }
                }
            }
            Imp::Partial { f, wrt } => {
                let wrt = *wrt;
                let v = f.gradient_raw(x)?[wrt];
                let hf = f.hessian_of_raw(x)?;
                let gr = hf.row(wrt).to_vec();
                let h = fd_hessian_from_grad(&|y| Ok(f.hessian_of_raw(y)?.row(wrt).to_vec()), x)?;
                Ok((v, gr, h))
            }
            Imp::InverseEntry { mat, i, j } => {
                let (v, g, h) = inverse_entry_quadratic(mat, *i, *j, x, true)?;
                Ok((v, g, h.unwrap()))
            }
            Imp::ImplicitVelocity { lag, component } => {
                let n = self.chart.n();
                let comp = *component;
                let v = solve_velocity(lag, n, x)?;
                let gr = implicit_velocity_gradient(lag, n, x, &v, comp)?;
                let h = fd_hessian_from_grad(
                    &|y| {
                        let vy = solve_velocity(lag, n, y)?;
                        implicit_velocity_gradient(lag, n, y, &vy, comp)
                    },
                    x,
                )?;
                Ok((v[comp], gr, h))
            }
            // Expr, Sum, Product, Compose all chain jets directly.
            _ => unreachable!("jet-propagating backend in local_quadratic"),
        }
    }
}

// A field must be shareable across worker threads.
const _: () = {
    const fn assert_send_sync<T: Send + Sync>() {}
    assert_send_sync::<ScalarField>();
    assert_send_sync::<MatrixField>();
};

// ---------------------------------------------------------------------------
// Matrix-valued fields

/// A rectangular array of scalar fields on one chart.
#[derive(Clone, Debug)]
pub struct MatrixField {
    chart: Arc<Chart>,
    rows: Vec<Vec<ScalarField>>,
}

impl MatrixField {
    pub fn new(chart: &Arc<Chart>, rows: Vec<Vec<ScalarField>>) -> Result<MatrixField> {
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || ncols == 0 {
            return Err(Error::Invalid("matrix field needs at least one entry".into()));
        }
        for r in &rows {
            if r.len() != ncols {
                return Err(Error::Invalid("ragged matrix field".into()));
            }
            for f in r {
                if !f.chart().layout_matches(chart) {
                    return Err(Error::ChartMismatch);
                }
            }
        }
        Ok(MatrixField {
            chart: chart.clone(),
            rows,
        })
    }

    /// Builds the matrix from a closure over `(row, col)`.
    pub fn from_fn(
        chart: &Arc<Chart>,
        nrows: usize,
        ncols: usize,
        mut f: impl FnMut(usize, usize) -> Result<ScalarField>,
    ) -> Result<MatrixField> {
        let mut rows = Vec::with_capacity(nrows);
        for i in 0..nrows {
            let mut row = Vec::with_capacity(ncols);
            for j in 0..ncols {
                row.push(f(i, j)?);
            }
            rows.push(row);
        }
        MatrixField::new(chart, rows)
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.rows[0].len()
    }

    pub fn entry(&self, i: usize, j: usize) -> &ScalarField {
        &self.rows[i][j]
    }

    pub fn value(&self, x: &[f64]) -> Result<Matrix> {
        let mut m = Matrix::zeros(self.nrows(), self.ncols());
        for (i, row) in self.rows.iter().enumerate() {
            for (j, f) in row.iter().enumerate() {
                m.set(i, j, f.value(x)?);
            }
        }
        Ok(m)
    }

    /// The pointwise inverse as a matrix of fields; the matrix must be
    /// square (and invertible wherever the result is evaluated).
    pub fn inverse_field(&self) -> Result<MatrixField> {
        if self.nrows() != self.ncols() {
            return Err(Error::Invalid("only square matrix fields invert".into()));
        }
        let shared = Arc::new(self.clone());
        let n = self.nrows();
        MatrixField::from_fn(&self.chart, n, n, |i, j| {
            Ok(ScalarField::wrap(
                &shared.chart,
                Imp::InverseEntry {
                    mat: shared.clone(),
                    i,
                    j,
                },
            ))
        })
    }
}

// ---------------------------------------------------------------------------
// Inverse-entry calculus

/// Value, gradient, and (optionally) packed Hessian of `(A^{-1})_{ij}`
/// from the derivatives of the entries of `A`:
/// `dB = -B dA B` and `d2B = B dA B dA' B + B dA' B dA B - B d2A B`.
fn inverse_entry_quadratic(
    mat: &MatrixField,
    i: usize,
    j: usize,
    x: &[f64],
    want_hess: bool,
) -> Result<(f64, Vec<f64>, Option<Vec<f64>>)> {
    let k = mat.nrows();
    let dim = x.len();
    let mut a = Matrix::zeros(k, k);
    let mut jets = Vec::with_capacity(k * k);
    for r in 0..k {
        for c in 0..k {
            let jet = mat.entry(r, c).jet_args(&Jet::seed_point(x))?;
            a.set(r, c, jet.val);
            jets.push(jet);
        }
    }
    let b = a.lu()?.inverse()?;
    let da: Vec<Matrix> = (0..dim)
        .map(|m| {
            let mut d = Matrix::zeros(k, k);
            for r in 0..k {
                for c in 0..k {
                    d.set(r, c, jets[r * k + c].grad()[m]);
                }
            }
            d
        })
        .collect();
    // -B dA_m B, kept whole for reuse in the second-order term.
    let mut grad = vec![0.0; dim];
    let mut db = Vec::with_capacity(dim);
    for m in 0..dim {
        let t = b.matmul(&da[m])?.matmul(&b)?.scaled(-1.0);
        grad[m] = t.get(i, j);
        db.push(t);
    }
    if !want_hess {
        return Ok((b.get(i, j), grad, None));
    }
    let mut h = vec![0.0; dim * (dim + 1) / 2];
    let mut idx = 0;
    for m in 0..dim {
        for l in 0..=m {
            // d_l(-B dA_m B) = -dB_l dA_m B - B d2A B - B dA_m dB_l
            let mut d2a = Matrix::zeros(k, k);
            for r in 0..k {
                for c in 0..k {
                    d2a.set(r, c, jets[r * k + c].hess(m, l));
                }
            }
            let t1 = db[l].matmul(&da[m])?.matmul(&b)?;
            let t2 = b.matmul(&d2a)?.matmul(&b)?;
            let t3 = b.matmul(&da[m])?.matmul(&db[l])?;
            h[idx] = -(t1.get(i, j) + t2.get(i, j) + t3.get(i, j));
            idx += 1;
        }
    }
    Ok((b.get(i, j), grad, Some(h)))
}

// ---------------------------------------------------------------------------
// Implicit velocity calculus

/// Solves `d(lag)/dv (q, v) = p` for `v` with damped Newton from `v = 0`.
/// The evaluation point `x` is `(q, p)` on the momentum chart.
fn solve_velocity(lag: &ScalarField, n: usize, x: &[f64]) -> Result<Vec<f64>> {
    let (q, p) = x.split_at(n);
    let mut z = vec![0.0; 2 * n];
    z[..n].copy_from_slice(q);
    let scale = 1.0 + p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale;
    let mut v = vec![0.0; n];
    let mut res = residual_norm(lag, n, &mut z, &v, p)?;
    for iter in 0..50u32 {
        if res <= tol {
            return Ok(v);
        }
        z[n..].copy_from_slice(&v);
        let jet = lag.jet_args(&Jet::seed_point(&z))?;
        let mut w = Matrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                w.set(a, b, jet.hess(n + a, n + b));
            }
        }
        let f: Vec<f64> = (0..n).map(|a| jet.grad()[n + a] - p[a]).collect();
        let neg_f: Vec<f64> = f.iter().map(|v| -v).collect();
        let delta = w.lu()?.solve(&neg_f)?;
        // Backtrack if the full step does not decrease the residual.
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..8 {
            let trial: Vec<f64> = v.iter().zip(&delta).map(|(a, d)| a + t * d).collect();
            let trial_res = residual_norm(lag, n, &mut z, &trial, p)?;
            if trial_res < res || trial_res <= tol {
                v = trial;
                res = trial_res;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonDiverged {
                context: "velocity inversion",
                residual: res,
                iterations: iter + 1,
            });
        }
    }
    if res <= tol {
        Ok(v)
    } else {
        Err(Error::NewtonDiverged {
            context: "velocity inversion",
            residual: res,
            iterations: 50,
        })
    }
}

fn residual_norm(
    lag: &ScalarField,
    n: usize,
    z: &mut [f64],
    v: &[f64],
    p: &[f64],
) -> Result<f64> {
    z[n..].copy_from_slice(v);
    let g = lag.gradient_raw(z)?;
    Ok((0..n).fold(0.0f64, |m, a| m.max((g[n + a] - p[a]).abs())))
}

/// Row `component` of `[-W^{-1} B | W^{-1}]`, where `W` is the
/// velocity-velocity block and `B` the velocity-base block of the
/// Lagrangian Hessian at the solved point.
fn implicit_velocity_gradient(
    lag: &ScalarField,
    n: usize,
    x: &[f64],
    v: &[f64],
    component: usize,
) -> Result<Vec<f64>> {
    let mut z = vec![0.0; 2 * n];
    z[..n].copy_from_slice(&x[..n]);
    z[n..].copy_from_slice(v);
    let jet = lag.jet_args(&Jet::seed_point(&z))?;
    let mut w = Matrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            w.set(a, b, jet.hess(n + a, n + b));
        }
    }
    // W is symmetric, so row `component` of W^{-1} solves W y = e_c.
    let mut e = vec![0.0; n];
    e[component] = 1.0;
    let y = w.lu()?.solve(&e)?;
    let mut out = vec![0.0; 2 * n];
    for k in 0..n {
        let mut s = 0.0;
        for m in 0..n {
            s += y[m] * jet.hess(n + m, k);
        }
        out[k] = -s;
        out[n + k] = y[k];
    }
    Ok(out)
}

/// Packs a full (symmetrized) matrix into the lower-triangular layout jets
/// use.
fn pack_lower(m: &Matrix) -> Vec<f64> {
    let d = m.rows();
    let mut h = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in 0..=i {
            h.push(0.5 * (m.get(i, j) + m.get(j, i)));
        }
    }
    h
}

// ---------------------------------------------------------------------------
// Finite-difference fallbacks

const FD_GRAD_BASE: f64 = 1e-5;
const FD_HESS_BASE: f64 = 1e-4;

fn fd_step(xi: f64, base: f64) -> f64 {
    base * (1.0 + xi.abs())
}

fn fd_gradient(f: &dyn Fn(&[f64]) -> Result<f64>, x: &[f64]) -> Result<Vec<f64>> {
    let mut g = vec![0.0; x.len()];
    let mut y = x.to_vec();
    for i in 0..x.len() {
        let h = fd_step(x[i], FD_GRAD_BASE);
        y[i] = x[i] + h;
        let fp = f(&y)?;
        y[i] = x[i] - h;
        let fm = f(&y)?;
        y[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

/// Packed lower-triangular Hessian by differencing an exact gradient,
/// symmetrized across the two mixed estimates.
fn fd_hessian_from_grad(
    g: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    x: &[f64],
) -> Result<Vec<f64>> {
    let d = x.len();
    let mut cols = Vec::with_capacity(d);
    let mut y = x.to_vec();
    for k in 0..d {
        let h = fd_step(x[k], FD_GRAD_BASE);
        y[k] = x[k] + h;
        let gp = g(&y)?;
        y[k] = x[k] - h;
        let gm = g(&y)?;
        y[k] = x[k];
        if gp.len() != d || gm.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: gp.len(),
            });
        }
        cols.push(
            gp.iter()
                .zip(&gm)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect::<Vec<f64>>(),
        );
    }
    let mut out = vec![0.0; d * (d + 1) / 2];
    let mut idx = 0;
    for i in 0..d {
        for j in 0..=i {
            out[idx] = 0.5 * (cols[j][i] + cols[i][j]);
            idx += 1;
        }
    }
    Ok(out)
}

/// Packed lower-triangular Hessian from values alone: three-point second
/// differences on the diagonal, four-point cross differences off it.
fn fd_hessian_from_values(f: &dyn Fn(&[f64]) -> Result<f64>, x: &[f64]) -> Result<Vec<f64>> {
    let d = x.len();
    let f0 = f(x)?;
    let mut y = x.to_vec();
    let mut out = vec![0.0; d * (d + 1) / 2];
    let mut idx = 0;
    for i in 0..d {
        for j in 0..=i {
            let hi = fd_step(x[i], FD_HESS_BASE);
            if i == j {
                y[i] = x[i] + hi;
                let fp = f(&y)?;
                y[i] = x[i] - hi;
                let fm = f(&y)?;
                y[i] = x[i];
                out[idx] = (fp - 2.0 * f0 + fm) / (hi * hi);
            } else {
                let hj = fd_step(x[j], FD_HESS_BASE);
                let mut probe = |si: f64, sj: f64| -> Result<f64> {
                    y[i] = x[i] + si * hi;
                    y[j] = x[j] + sj * hj;
                    let v = f(&y);
                    y[i] = x[i];
                    y[j] = x[j];
                    v
                };
                out[idx] = (probe(1.0, 1.0)? - probe(1.0, -1.0)? - probe(-1.0, 1.0)?
                    + probe(-1.0, -1.0)?)
                    / (4.0 * hi * hj);
            }
            idx += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn chart() -> Arc<Chart> {
        Arc::new(Chart::standard_momenta(2, vec![("m".into(), 2.0)]).unwrap())
    }

    #[test]
    fn expr_field_round_trip() {
        let c = chart();
        let f = ScalarField::parse(&c, "q1^2*p2 + m*sin(q2)").unwrap();
        let x = [1.5, 0.4, -0.3, 2.0];
        let v = f.value(&x).unwrap();
        assert!((v - (1.5 * 1.5 * 2.0 + 2.0 * libm::sin(0.4))).abs() < 1e-14);
        let g = f.gradient(&x).unwrap();
        assert!((g[0] - 2.0 * 1.5 * 2.0).abs() < 1e-14);
        assert!((g[1] - 2.0 * libm::cos(0.4)).abs() < 1e-14);
        assert_eq!(g[2], 0.0);
        assert!((g[3] - 2.25).abs() < 1e-14);
        let h = f.hessian(&x).unwrap();
        assert!((h.get(0, 3) - 3.0).abs() < 1e-14);
        assert!((h.get(0, 0) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn partial_of_expr_is_symbolic() {
        let c = chart();
        let f = ScalarField::parse(&c, "q1^3 + q1*p1").unwrap();
        let d = f.partial(0).unwrap();
        assert!(d.pretty().is_some());
        let x = [2.0, 0.0, 5.0, 0.0];
        assert!((d.value(&x).unwrap() - (12.0 + 5.0)).abs() < 1e-14);
        // Second-order partials still exact.
        let dd = d.partial(0).unwrap();
        assert!((dd.value(&x).unwrap() - 12.0).abs() < 1e-14);
    }

    #[test]
    fn callable_uses_fd_but_exact_grad_when_given() {
        let c = chart();
        let f = ScalarField::from_callable(&c, |x| Ok(x[0] * x[0] * x[3]));
        let x = [1.2, 0.0, 0.0, -0.7];
        let g = f.gradient(&x).unwrap();
        assert!((g[0] - 2.0 * 1.2 * -0.7).abs() < 1e-8);
        assert!((g[3] - 1.2 * 1.2).abs() < 1e-8);
        let h = f.hessian(&x).unwrap();
        assert!((h.get(0, 3) - 2.0 * 1.2).abs() < 1e-5);

        let f2 = ScalarField::from_callable_with_grad(
            &c,
            |x| Ok(x[0] * x[0] * x[3]),
            |x| Ok(vec![2.0 * x[0] * x[3], 0.0, 0.0, x[0] * x[0]]),
        );
        let g2 = f2.gradient(&x).unwrap();
        assert_eq!(g2[0], 2.0 * 1.2 * -0.7);
        let h2 = f2.hessian(&x).unwrap();
        assert!((h2.get(0, 3) - 2.0 * 1.2).abs() < 1e-9);
    }

    #[test]
    fn compose_collapses_expressions() {
        let c = chart();
        let outer_chart = Arc::new(Chart::config(vec!["u".into()], vec![]).unwrap());
        let outer = ScalarField::parse(&outer_chart, "u^2 + 1").unwrap();
        let inner = ScalarField::parse(&c, "q1 + p2").unwrap();
        let comp = ScalarField::compose(&outer, &[inner]).unwrap();
        assert!(comp.pretty().is_some());
        let x = [2.0, 0.0, 0.0, 3.0];
        assert_eq!(comp.value(&x).unwrap(), 26.0);
        let g = comp.gradient(&x).unwrap();
        assert_eq!(g[0], 10.0);
        assert_eq!(g[3], 10.0);
    }

    #[test]
    fn compose_chains_jets_through_callables() {
        let c = chart();
        let outer_chart = Arc::new(Chart::config(vec!["u".into(), "w".into()], vec![]).unwrap());
        // F(u, w) = u^2 w, u = sin(q1), w = p1.
        let outer = ScalarField::from_callable_with_grad(
            &outer_chart,
            |x| Ok(x[0] * x[0] * x[1]),
            |x| Ok(vec![2.0 * x[0] * x[1], x[0] * x[0]]),
        );
        let u = ScalarField::parse(&c, "sin(q1)").unwrap();
        let w = ScalarField::parse(&c, "p1").unwrap();
        let comp = ScalarField::compose(&outer, &[u, w]).unwrap();
        let x = [0.7, 0.0, 1.3, 0.0];
        let (s, co) = (libm::sin(0.7), libm::cos(0.7));
        assert!((comp.value(&x).unwrap() - s * s * 1.3).abs() < 1e-14);
        let g = comp.gradient(&x).unwrap();
        assert!((g[0] - 2.0 * s * co * 1.3).abs() < 1e-12);
        assert!((g[2] - s * s).abs() < 1e-12);
        // d2/dq1 dp1 = 2 s c — crosses the callable boundary.
        let h = comp.hessian(&x).unwrap();
        assert!((h.get(0, 2) - 2.0 * s * co).abs() < 1e-8);
    }

    #[test]
    fn inverse_entries_have_exact_derivatives() {
        let c = Arc::new(Chart::config(vec!["q1".into(), "q2".into()], vec![]).unwrap());
        // A = [[1 + q1^2, q1 q2], [q1 q2, 2 + q2^2]]
        let rows = vec![
            vec![
                ScalarField::parse(&c, "1 + q1^2").unwrap(),
                ScalarField::parse(&c, "q1*q2").unwrap(),
            ],
            vec![
                ScalarField::parse(&c, "q1*q2").unwrap(),
                ScalarField::parse(&c, "2 + q2^2").unwrap(),
            ],
        ];
        let a = MatrixField::new(&c, rows).unwrap();
        let b = a.inverse_field().unwrap();
        let x = [0.6, -0.9];
        let av = a.value(&x).unwrap();
        let bv = b.value(&x).unwrap();
        let prod = av.matmul(&bv).unwrap();
        assert!(prod.sub(&Matrix::identity(2)).unwrap().max_abs() < 1e-14);
        // Compare against finite differences of the entry value.
        let e01 = b.entry(0, 1).clone();
        let g = e01.gradient(&x).unwrap();
        let fd = fd_gradient(&|y| e01.value(y), &x).unwrap();
        for k in 0..2 {
            assert!((g[k] - fd[k]).abs() < 1e-8, "{g:?} vs {fd:?}");
        }
        let h = e01.hessian(&x).unwrap();
        let probe = |y: &[f64]| e01.gradient(y);
        let hfd = fd_hessian_from_grad(&probe, &x).unwrap();
        assert!((h.get(1, 0) - hfd[1]).abs() < 1e-7);
        assert!((h.get(0, 0) - hfd[0]).abs() < 1e-7);
    }

    #[test]
    fn implicit_velocity_inverts_quadratic_fiber_derivative() {
        // lag = m/2 (v1^2 + v2^2) + q1 v2 has dl/dv = (m v1, m v2 + q1).
        let vel = Arc::new(Chart::standard_velocities(2, vec![("m".into(), 2.0)]).unwrap());
        let mom = Arc::new(Chart::standard_momenta(2, vec![("m".into(), 2.0)]).unwrap());
        let lag = ScalarField::parse(&vel, "m/2*(v1^2 + v2^2) + q1*v2").unwrap();
        let v1 = ScalarField::implicit_velocity(&mom, &lag, 0).unwrap();
        let v2 = ScalarField::implicit_velocity(&mom, &lag, 1).unwrap();
        let x = [0.5, -1.0, 3.0, 1.2]; // q = (0.5, -1), p = (3, 1.2)
        assert!((v1.value(&x).unwrap() - 1.5).abs() < 1e-12);
        assert!((v2.value(&x).unwrap() - (1.2 - 0.5) / 2.0).abs() < 1e-12);
        // v2 = (p2 - q1)/m: gradient (-1/m, 0, 0, 1/m).
        let g = v2.gradient(&x).unwrap();
        assert!((g[0] + 0.5).abs() < 1e-12);
        assert!((g[3] - 0.5).abs() < 1e-12);
        assert!(g[1].abs() < 1e-12 && g[2].abs() < 1e-12);
    }

    #[test]
    fn nonfinite_surfaces_as_error() {
        let c = chart();
        let f = ScalarField::parse(&c, "1/q1").unwrap();
        assert!(matches!(
            f.value(&[0.0, 0.0, 0.0, 0.0]),
            Err(Error::NonFinite { .. })
        ));
        let g = ScalarField::parse(&c, "q1^0.5").unwrap();
        assert!(matches!(
            g.value(&[-1.0, 0.0, 0.0, 0.0]),
            Err(Error::NonPositiveBase { .. })
        ));
        assert!(matches!(
            f.value(&[f64::NAN, 0.0, 0.0, 0.0]),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn with_chart_transplants_layout_compatible_fields() {
        let vel = Arc::new(Chart::standard_velocities(2, vec![("m".into(), 2.0)]).unwrap());
        let mom = Arc::new(Chart::standard_momenta(2, vec![("m".into(), 2.0)]).unwrap());
        let f = ScalarField::parse(&vel, "m*v1 + q2").unwrap();
        let g = f.with_chart(&mom).unwrap();
        assert_eq!(g.value(&[0.0, 3.0, 4.0, 0.0]).unwrap(), 11.0);
        assert_eq!(g.pretty().unwrap(), "m*p1 + q2");
        let other = Arc::new(Chart::standard_momenta(2, vec![("m".into(), 3.0)]).unwrap());
        assert!(f.with_chart(&other).is_err());
    }
}
