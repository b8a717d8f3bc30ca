//! Dynamics on a momentum chart driven by a Hamiltonian and an external
//! force covector.
//!
//! The evolution field of a pair `(h, b)` — scalar `h` and semibasic form
//! `b = b_i dq^i` — is
//!
//! ```text
//! q^i' = dh/dp_i,        p_i' = -dh/dq^i - b_i .
//! ```
//!
//! Along this field the energy drains at rate `-b_i dh/dp_i`, which is the
//! basic balance law the test suites keep returning to. The canonical
//! Poisson bracket lives here too, together with its gradient (so that
//! nested brackets can be formed without third derivatives) and a helper
//! for forces that are linear in the momenta.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::chart::{Chart, FiberKind};
use crate::error::{Error, Result};
use crate::field::{MatrixField, ScalarField};
use crate::geometry::{SemibasicForm, VectorField};
use crate::linalg::Matrix;

/// A Hamiltonian together with an external force on the same chart.
#[derive(Debug, Clone)]
pub struct ForcedHamiltonianSystem {
    chart: Arc<Chart>,
    h: ScalarField,
    force: SemibasicForm,
}

impl ForcedHamiltonianSystem {
    pub fn new(
        chart: &Arc<Chart>,
        h: ScalarField,
        force: SemibasicForm,
    ) -> Result<ForcedHamiltonianSystem> {
        if chart.fiber_kind() != FiberKind::Momenta {
            return Err(Error::Invalid(
                "forced Hamiltonian systems live on a momentum chart".into(),
            ));
        }
        let h = h.with_chart(chart)?;
        let force = force.with_chart(chart)?;
        Ok(ForcedHamiltonianSystem {
            chart: chart.clone(),
            h,
            force,
        })
    }

    pub fn unforced(chart: &Arc<Chart>, h: ScalarField) -> Result<ForcedHamiltonianSystem> {
        let zero = SemibasicForm::zero(chart)?;
        ForcedHamiltonianSystem::new(chart, h, zero)
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn n(&self) -> usize {
        self.chart.n()
    }

    pub fn hamiltonian(&self) -> &ScalarField {
        &self.h
    }

    pub fn force(&self) -> &SemibasicForm {
        &self.force
    }

    /// The evolution field `(dh/dp, -dh/dq - b)`.
    pub fn vector_field(&self) -> VectorField {
        let h = self.h.clone();
        let force = self.force.clone();
        let n = self.chart.n();
        VectorField::new(&self.chart, move |z| {
            let g = h.gradient(z)?;
            let b = force.value(z)?;
            let mut out = vec![0.0; 2 * n];
            for i in 0..n {
                out[i] = g[n + i];
                out[n + i] = -g[i] - b[i];
            }
            Ok(out)
        })
    }

    /// `-b_i dh/dp_i` at `z`: the rate of change of `h` along the
    /// evolution field.
    pub fn energy_rate(&self, z: &[f64]) -> Result<f64> {
        let n = self.chart.n();
        let g = self.h.gradient(z)?;
        let b = self.force.value(z)?;
        Ok(-(0..n).map(|i| b[i] * g[n + i]).sum::<f64>())
    }
}

fn bracket_guard(f: &ScalarField, g: &ScalarField) -> Result<usize> {
    if f.chart().fiber_kind() != FiberKind::Momenta {
        return Err(Error::Invalid(
            "the canonical bracket needs momentum-chart fields".into(),
        ));
    }
    if !f.chart().layout_matches(g.chart()) {
        return Err(Error::ChartMismatch);
    }
    Ok(f.chart().n())
}

/// Canonical Poisson bracket `{f, g}` at a phase point.
pub fn poisson_bracket(f: &ScalarField, g: &ScalarField, z: &[f64]) -> Result<f64> {
    let n = bracket_guard(f, g)?;
    let gf = f.gradient(z)?;
    let gg = g.gradient(z)?;
    Ok((0..n)
        .map(|i| gf[i] * gg[n + i] - gf[n + i] * gg[i])
        .sum())
}

/// Gradient of `{f, g}` at a phase point, assembled from first and second
/// derivatives of `f` and `g`. This is what makes double brackets (and
/// hence Jacobi-identity checks) computable without third derivatives.
pub fn poisson_bracket_gradient(
    f: &ScalarField,
    g: &ScalarField,
    z: &[f64],
) -> Result<Vec<f64>> {
    let n = bracket_guard(f, g)?;
    let jf = f.jet(z)?;
    let jg = g.jet(z)?;
    let dim = 2 * n;
    let mut out = vec![0.0; dim];
    for k in 0..dim {
        let mut s = 0.0;
        for i in 0..n {
            s += jf.hess(i, k) * jg.grad()[n + i] + jf.grad()[i] * jg.hess(n + i, k)
                - jf.hess(n + i, k) * jg.grad()[i]
                - jf.grad()[n + i] * jg.hess(i, k);
        }
        out[k] = s;
    }
    Ok(out)
}

/// `{f, g}` as a field, built from partial-derivative combinators; exact
/// (and printable) whenever `f` and `g` are expression-backed.
pub fn poisson_bracket_field(f: &ScalarField, g: &ScalarField) -> Result<ScalarField> {
    let n = bracket_guard(f, g)?;
    let mut parts = Vec::with_capacity(2 * n);
    for i in 0..n {
        parts.push((1.0, f.partial(i)?.mul(&g.partial(n + i)?)?));
        parts.push((-1.0, f.partial(n + i)?.mul(&g.partial(i)?)?));
    }
    ScalarField::weighted_sum(parts)
}

/// The force with components `b_j = sum_i m[i][j] p_i` for a square matrix
/// of base functions `m` given on the momentum chart.
pub fn linear_momentum_force(
    chart: &Arc<Chart>,
    m: &MatrixField,
) -> Result<SemibasicForm> {
    let n = chart.n();
    if chart.fiber_kind() != FiberKind::Momenta {
        return Err(Error::Invalid(
            "momentum-linear forces live on a momentum chart".into(),
        ));
    }
    if m.nrows() != n || m.ncols() != n || !m.chart().layout_matches(chart) {
        return Err(Error::ChartMismatch);
    }
    let mut comps = Vec::with_capacity(n);
    for j in 0..n {
        let mut parts = Vec::with_capacity(n);
        for i in 0..n {
            let p_i = ScalarField::coordinate(chart, n + i)?;
            parts.push((1.0, m.entry(i, j).with_chart(chart)?.mul(&p_i)?));
        }
        comps.push(ScalarField::weighted_sum(parts)?);
    }
    SemibasicForm::new(chart, comps)
}

/// Coefficient matrix, in the frame `(d/dq, d/dp)`, of the exterior
/// derivative of the one-form `sum_j (sum_i m[i][j] p_i) dq^j`:
///
/// ```text
/// [ A        -M^T ]        A_ij = sum_k (dm[k][j]/dq^i - dm[k][i]/dq^j) p_k
/// [ M         0   ]        M_kj = m[k][j]
/// ```
pub fn momentum_force_exterior(m: &MatrixField, z: &[f64]) -> Result<Matrix> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Invalid("square matrix expected".into()));
    }
    if z.len() != 2 * n {
        return Err(Error::DimensionMismatch {
            expected: 2 * n,
            got: z.len(),
        });
    }
    let mut vals = Matrix::zeros(n, n);
    let mut grads = Vec::with_capacity(n * n);
    for k in 0..n {
        for j in 0..n {
            let f = m.entry(k, j);
            vals.set(k, j, f.value(z)?);
            grads.push(f.gradient(z)?);
        }
    }
    let mut out = Matrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let mut a = 0.0;
            for k in 0..n {
                a += (grads[k * n + j][i] - grads[k * n + i][j]) * z[n + k];
            }
            out.set(i, j, a);
            out.set(i, n + j, -vals.get(j, i));
            out.set(n + i, j, vals.get(i, j));
        }
    }
    Ok(out)
}

/// Kernel verdict for a two-form coefficient matrix: nondegenerate exactly
/// when `|det| > 1e-12`.
pub fn form_nondegenerate(m: &Matrix) -> Result<bool> {
    Ok(m.det()?.abs() > 1e-12)
}
