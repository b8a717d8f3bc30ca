//! Forced Lagrangian systems on a tangent chart `(q, v)`.
//!
//! The central type couples a Lagrangian with a semibasic force and exposes
//! the pieces the rest of the toolkit needs: the energy function, the
//! velocity Hessian and its regularity verdict, the second-order evolution
//! field, the dissipative bracket, and the fiber-derivative transform to the
//! momentum side. [`NaturalLagrangian`] covers the kinetic-minus-potential
//! shape, where the fiber derivative is linear and everything stays in
//! closed form.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::chart::{Chart, FiberKind};
use crate::error::{Error, Result};
use crate::field::{MatrixField, ScalarField};
use crate::geometry::{FibredMap, Section, SemibasicForm, VectorField};
use crate::hamiltonian::{linear_momentum_force, ForcedHamiltonianSystem};
use crate::linalg::Matrix;

/// Determinant threshold below which the velocity Hessian counts as
/// singular.
pub const REGULARITY_TOL: f64 = 1e-12;

/// A Lagrangian together with a semibasic force, both on one tangent chart.
#[derive(Debug, Clone)]
pub struct ForcedLagrangianSystem {
    chart: Arc<Chart>,
    l: ScalarField,
    force: SemibasicForm,
}

impl ForcedLagrangianSystem {
    pub fn new(
        chart: &Arc<Chart>,
        l: ScalarField,
        force: SemibasicForm,
    ) -> Result<ForcedLagrangianSystem> {
        if chart.fiber_kind() != FiberKind::Velocities {
            return Err(Error::Invalid(
                "forced Lagrangian systems live on a velocity chart".into(),
            ));
        }
        Ok(ForcedLagrangianSystem {
            chart: chart.clone(),
            l: l.with_chart(chart)?,
            force: force.with_chart(chart)?,
        })
    }

    pub fn unforced(chart: &Arc<Chart>, l: ScalarField) -> Result<ForcedLagrangianSystem> {
        let zero = SemibasicForm::zero(chart)?;
        ForcedLagrangianSystem::new(chart, l, zero)
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn n(&self) -> usize {
        self.chart.n()
    }

    pub fn lagrangian(&self) -> &ScalarField {
        &self.l
    }

    pub fn force(&self) -> &SemibasicForm {
        &self.force
    }

    /// The energy `E = sum_i v^i dL/dv^i - L` as a field on the same chart.
    pub fn energy(&self) -> Result<ScalarField> {
        let n = self.n();
        let mut parts = Vec::with_capacity(n + 1);
        for i in 0..n {
            let vi = ScalarField::coordinate(&self.chart, n + i)?;
            parts.push((1.0, vi.mul(&self.l.partial(n + i)?)?));
        }
        parts.push((-1.0, self.l.clone()));
        ScalarField::weighted_sum(parts)
    }

    /// The fiber Hessian `W_ab = d2L/dv^a dv^b` at a point.
    pub fn velocity_hessian(&self, z: &[f64]) -> Result<Matrix> {
        let n = self.n();
        let jet = self.l.jet(z)?;
        let mut w = Matrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                w.set(a, b, jet.hess(n + a, n + b));
            }
        }
        Ok(w)
    }

    /// Regularity verdict at a point: `|det W|` above [`REGULARITY_TOL`].
    pub fn is_regular(&self, z: &[f64]) -> Result<bool> {
        Ok(self.velocity_hessian(z)?.det()?.abs() > REGULARITY_TOL)
    }

    fn acceleration(&self, z: &[f64], forced: bool) -> Result<Vec<f64>> {
        let n = self.n();
        let jet = self.l.jet(z)?;
        let mut w = Matrix::zeros(n, n);
        let mut rhs = vec![0.0; n];
        for a in 0..n {
            let mut r = jet.grad()[a];
            for b in 0..n {
                w.set(a, b, jet.hess(n + a, n + b));
                r -= jet.hess(n + a, b) * z[n + b];
            }
            rhs[a] = r;
        }
        if forced {
            let alpha = self.force.value(z)?;
            for a in 0..n {
                rhs[a] -= alpha[a];
            }
        }
        w.solve(&rhs)
    }

    /// The second-order evolution field `(q, v) -> (v, a(q, v))`, where the
    /// acceleration solves `W a = dL/dq - B v - alpha` with
    /// `B_ab = d2L/dv^a dq^b`.
    pub fn vector_field(&self) -> VectorField {
        let sys = self.clone();
        VectorField::new(&self.chart, move |z| {
            let n = sys.n();
            let a = sys.acceleration(z, true)?;
            let mut out = Vec::with_capacity(2 * n);
            out.extend_from_slice(&z[n..2 * n]);
            out.extend_from_slice(&a);
            Ok(out)
        })
    }

    /// Energy drain along the evolution: `-sum_i alpha_i v^i`.
    pub fn energy_rate(&self, z: &[f64]) -> Result<f64> {
        let n = self.n();
        let alpha = self.force.value(z)?;
        Ok(-alpha.iter().zip(&z[n..2 * n]).map(|(a, v)| a * v).sum::<f64>())
    }

    /// The bracket `[f, g] = (d_v f) W^{-1} (d_v g)` induced by the fiber
    /// Hessian. Symmetric, and positive on `f = g` when `W` is positive
    /// definite.
    pub fn dissipative_bracket(&self, f: &ScalarField, g: &ScalarField, z: &[f64]) -> Result<f64> {
        let n = self.n();
        if !f.chart().layout_matches(&self.chart) || !g.chart().layout_matches(&self.chart) {
            return Err(Error::ChartMismatch);
        }
        let w = self.velocity_hessian(z)?;
        let gf = f.gradient(z)?;
        let gg = g.gradient(z)?;
        let y = w.solve(&gg[n..2 * n])?;
        Ok(gf[n..2 * n].iter().zip(&y).map(|(u, v)| u * v).sum())
    }

    /// Rate of `f` along the flow forced by the velocity potential `r`,
    /// computed as (free rate of `f`) minus `[f, r]`; zero identifies `f`
    /// as a constant of the forced motion.
    pub fn motion_constant_residual(
        &self,
        f: &ScalarField,
        r: &ScalarField,
        z: &[f64],
    ) -> Result<f64> {
        let n = self.n();
        if !f.chart().layout_matches(&self.chart) {
            return Err(Error::ChartMismatch);
        }
        let free = self.acceleration(z, false)?;
        let gf = f.gradient(z)?;
        let mut rate = 0.0;
        for i in 0..n {
            rate += gf[i] * z[n + i] + gf[n + i] * free[i];
        }
        Ok(rate - self.dissipative_bracket(f, r, z)?)
    }

    /// The fiber derivative `(q, v) -> (q, dL/dv)` into the cotangent
    /// companion chart.
    pub fn legendre(&self) -> Result<FibredMap> {
        let n = self.n();
        let to = Arc::new(self.chart.momentum_partner()?);
        let comps = (0..n)
            .map(|i| self.l.partial(n + i))
            .collect::<Result<Vec<_>>>()?;
        FibredMap::new(&self.chart, &to, comps)
    }

    /// The inverse fiber derivative `(q, p) -> (q, v(q, p))`, with the
    /// velocity solved implicitly from `dL/dv = p`.
    pub fn legendre_inverse(&self) -> Result<FibredMap> {
        let n = self.n();
        let from = Arc::new(self.chart.momentum_partner()?);
        let comps = (0..n)
            .map(|i| ScalarField::implicit_velocity(&from, &self.l, i))
            .collect::<Result<Vec<_>>>()?;
        FibredMap::new(&from, &self.chart, comps)
    }

    /// Pushes a velocity section through the fiber derivative, yielding the
    /// covector section `q -> (q, dL/dv |_{v = X(q)})`.
    pub fn transported_section(&self, x: &Section) -> Result<Section> {
        self.legendre()?.along_section(x)
    }

    /// The momentum-side image of the system: energy and force pulled back
    /// through the inverse fiber derivative.
    pub fn to_hamiltonian(&self) -> Result<ForcedHamiltonianSystem> {
        let inv = self.legendre_inverse()?;
        let h = inv.transport(&self.energy()?)?;
        let beta = inv.transport_form(&self.force)?;
        ForcedHamiltonianSystem::new(inv.from_chart(), h, beta)
    }
}

/// The force with components `alpha_i = dR/dv^i` of a velocity potential.
pub fn rayleigh_force(chart: &Arc<Chart>, r: &ScalarField) -> Result<SemibasicForm> {
    if chart.fiber_kind() != FiberKind::Velocities {
        return Err(Error::Invalid(
            "velocity potentials live on a velocity chart".into(),
        ));
    }
    let n = chart.n();
    let r = r.with_chart(chart)?;
    let comps = (0..n)
        .map(|i| r.partial(n + i))
        .collect::<Result<Vec<_>>>()?;
    SemibasicForm::new(chart, comps)
}

/// The force with components `alpha_j = sum_i m[i][j] v^i` for a square
/// matrix of fields on the velocity chart; the tangent-side analogue of
/// [`linear_momentum_force`].
pub fn linear_velocity_force(chart: &Arc<Chart>, m: &MatrixField) -> Result<SemibasicForm> {
    let n = chart.n();
    if chart.fiber_kind() != FiberKind::Velocities {
        return Err(Error::Invalid(
            "velocity-linear forces live on a velocity chart".into(),
        ));
    }
    if m.nrows() != n || m.ncols() != n || !m.chart().layout_matches(chart) {
        return Err(Error::ChartMismatch);
    }
    let mut comps = Vec::with_capacity(n);
    for j in 0..n {
        let mut parts = Vec::with_capacity(n);
        for i in 0..n {
            let vi = ScalarField::coordinate(chart, n + i)?;
            parts.push((1.0, m.entry(i, j).with_chart(chart)?.mul(&vi)?));
        }
        comps.push(ScalarField::weighted_sum(parts)?);
    }
    SemibasicForm::new(chart, comps)
}

/// Kinetic-minus-potential data: a metric and a potential on a
/// configuration chart. The induced fiber derivative is the linear raising
/// and lowering of indices by the metric, so the momentum-side objects stay
/// in closed form.
#[derive(Debug, Clone)]
pub struct NaturalLagrangian {
    config: Arc<Chart>,
    vel: Arc<Chart>,
    mom: Arc<Chart>,
    metric: MatrixField,
    metric_inv: MatrixField,
    potential: ScalarField,
}

/// Momentum-side picture of a velocity-quadratic dissipation tensor: the
/// quadratic potential in `p`, the induced semibasic force, and the mixed
/// tensor with one index raised.
#[derive(Debug, Clone)]
pub struct MomentumRayleigh {
    pub potential: ScalarField,
    pub force: SemibasicForm,
    pub tensor: MatrixField,
}

impl NaturalLagrangian {
    pub fn new(metric: &MatrixField, potential: Option<&ScalarField>) -> Result<NaturalLagrangian> {
        let config = metric.chart().clone();
        if config.fiber_kind() != FiberKind::None {
            return Err(Error::Invalid(
                "metric components live on a configuration chart".into(),
            ));
        }
        let n = config.n();
        if metric.nrows() != n || metric.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: metric.nrows(),
            });
        }
        let potential = match potential {
            Some(v) => v.with_chart(&config)?,
            None => ScalarField::constant(&config, 0.0)?,
        };
        let vel = Arc::new(tangent_chart(&config)?);
        let mom = Arc::new(vel.momentum_partner()?);
        Ok(NaturalLagrangian {
            metric_inv: metric.inverse_field()?,
            metric: metric.clone(),
            config,
            vel,
            mom,
            potential,
        })
    }

    pub fn config_chart(&self) -> &Arc<Chart> {
        &self.config
    }

    pub fn velocity_chart(&self) -> &Arc<Chart> {
        &self.vel
    }

    pub fn momentum_chart(&self) -> &Arc<Chart> {
        &self.mom
    }

    pub fn metric(&self) -> &MatrixField {
        &self.metric
    }

    pub fn metric_inverse(&self) -> &MatrixField {
        &self.metric_inv
    }

    fn lift(&self, f: &ScalarField, phase: &Arc<Chart>) -> Result<ScalarField> {
        let inner = (0..self.config.n())
            .map(|i| ScalarField::coordinate(phase, i))
            .collect::<Result<Vec<_>>>()?;
        ScalarField::compose(f, &inner)
    }

    /// `L = (1/2) g_ij v^i v^j - V` on the velocity chart.
    pub fn lagrangian(&self) -> Result<ScalarField> {
        let n = self.config.n();
        let mut parts = Vec::with_capacity(n * n + 1);
        for i in 0..n {
            for j in 0..n {
                let gij = self.lift(self.metric.entry(i, j), &self.vel)?;
                let vi = ScalarField::coordinate(&self.vel, n + i)?;
                let vj = ScalarField::coordinate(&self.vel, n + j)?;
                parts.push((0.5, ScalarField::product(vec![gij, vi, vj])?));
            }
        }
        parts.push((-1.0, self.lift(&self.potential, &self.vel)?));
        ScalarField::weighted_sum(parts)
    }

    /// `H = (1/2) g^ij p_i p_j + V` on the momentum chart.
    pub fn hamiltonian(&self) -> Result<ScalarField> {
        let n = self.config.n();
        let mut parts = Vec::with_capacity(n * n + 1);
        for i in 0..n {
            for j in 0..n {
                let gij = self.lift(self.metric_inv.entry(i, j), &self.mom)?;
                let pi = ScalarField::coordinate(&self.mom, n + i)?;
                let pj = ScalarField::coordinate(&self.mom, n + j)?;
                parts.push((0.5, ScalarField::product(vec![gij, pi, pj])?));
            }
        }
        parts.push((1.0, self.lift(&self.potential, &self.mom)?));
        ScalarField::weighted_sum(parts)
    }

    /// Raises the first index of a covariant square tensor with the inverse
    /// metric: `out[i][j] = sum_k g^ik r[k][j]`, on the configuration chart.
    pub fn raise(&self, r: &MatrixField) -> Result<MatrixField> {
        let n = self.config.n();
        if r.nrows() != n || r.ncols() != n || !r.chart().layout_matches(&self.config) {
            return Err(Error::ChartMismatch);
        }
        MatrixField::from_fn(&self.config, n, n, |i, j| {
            let mut parts = Vec::with_capacity(n);
            for k in 0..n {
                parts.push((
                    1.0,
                    self.metric_inv.entry(i, k).mul(&r.entry(k, j).with_chart(&self.config)?)?,
                ));
            }
            ScalarField::weighted_sum(parts)
        })
    }

    /// Transports a covariant dissipation tensor `r` to the momentum side:
    /// potential `(1/2) g^ik g^jl r_kl p_i p_j`, force
    /// `sum_i (g^ik r_kj) p_i dq^j`, and the raised tensor itself.
    pub fn momentum_rayleigh(&self, r: &MatrixField) -> Result<MomentumRayleigh> {
        let n = self.config.n();
        let raised = self.raise(r)?;
        let tensor = MatrixField::from_fn(&self.mom, n, n, |i, j| {
            self.lift(raised.entry(i, j), &self.mom)
        })?;
        let force = linear_momentum_force(&self.mom, &tensor)?;
        let mut parts = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut entry_parts = Vec::with_capacity(n * n);
                for k in 0..n {
                    for l in 0..n {
                        entry_parts.push((
                            1.0,
                            ScalarField::product(vec![
                                self.metric_inv.entry(i, k).clone(),
                                self.metric_inv.entry(j, l).clone(),
                                r.entry(k, l).with_chart(&self.config)?,
                            ])?,
                        ));
                    }
                }
                let upup = ScalarField::weighted_sum(entry_parts)?;
                let pi = ScalarField::coordinate(&self.mom, n + i)?;
                let pj = ScalarField::coordinate(&self.mom, n + j)?;
                parts.push((
                    0.5,
                    ScalarField::product(vec![self.lift(&upup, &self.mom)?, pi, pj])?,
                ));
            }
        }
        Ok(MomentumRayleigh {
            potential: ScalarField::weighted_sum(parts)?,
            force,
            tensor,
        })
    }
}

/// Velocity companion of a configuration chart: coordinate `q<x>` gains the
/// velocity `v<x>`, anything else a `v_` prefix.
pub fn tangent_chart(config: &Chart) -> Result<Chart> {
    if config.fiber_kind() != FiberKind::None {
        return Err(Error::ChartMismatch);
    }
    let fiber: Vec<String> = config
        .base_names()
        .iter()
        .map(|b| match b.strip_prefix('q') {
            Some(rest) if !rest.is_empty() => format!("v{rest}"),
            _ => format!("v_{b}"),
        })
        .collect();
    Chart::new(
        config.base_names().to_vec(),
        FiberKind::Velocities,
        fiber,
        config.params().to_vec(),
    )
}
