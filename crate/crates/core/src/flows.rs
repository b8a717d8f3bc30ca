//! Fixed-step integration of chart vector fields, and the comparison
//! between lifting a base trajectory through a candidate section and
//! integrating the forced dynamics directly from the lifted start point.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{Section, VectorField};
use crate::hamiltonian::ForcedHamiltonianSystem;
use crate::hj::projected_field;

/// A sampled solution curve: strictly monotone time grid and one state row
/// per node.
#[derive(Debug, Clone)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    step: f64,
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i]
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("nonempty trajectory")
    }

    /// Max-norm distance over matching grid nodes; the grids must agree in
    /// length.
    pub fn sup_distance(&self, other: &Trajectory) -> Result<f64> {
        if self.len() != other.len() || self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.len() * self.dim(),
                got: other.len() * other.dim(),
            });
        }
        let mut sup = 0.0_f64;
        for (a, b) in self.states.iter().zip(&other.states) {
            for (x, y) in a.iter().zip(b) {
                sup = sup.max((x - y).abs());
            }
        }
        Ok(sup)
    }
}

/// Classical fourth-order Runge-Kutta with a fixed step; the final partial
/// step is shortened so the grid ends exactly at `t_span.1`. Integrating
/// backwards (`t_span.1 < t_span.0`) is allowed.
pub fn integrate(
    field: &VectorField,
    x0: &[f64],
    t_span: (f64, f64),
    step: f64,
) -> Result<Trajectory> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::Invalid(format!("step must be positive, got {step}")));
    }
    let (t0, t1) = t_span;
    if !t0.is_finite() || !t1.is_finite() || t0 == t1 {
        return Err(Error::Invalid(format!(
            "degenerate time span [{t0}, {t1}]"
        )));
    }
    let dir = if t1 > t0 { 1.0 } else { -1.0 };
    let total = (t1 - t0).abs();
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut t = t0;
    let mut x = x0.to_vec();
    times.push(t);
    states.push(x.clone());
    let tiny = 1e-12 * total.max(1.0);
    loop {
        let remaining = (t1 - t) * dir;
        if remaining <= tiny {
            break;
        }
        let h = dir * step.min(remaining);
        x = rk4_step(field, &x, h)?;
        t = if remaining <= step + tiny { t1 } else { t + h };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "integration produced a non-finite state at t = {t}"
            )));
        }
        times.push(t);
        states.push(x.clone());
    }
    Ok(Trajectory {
        times,
        states,
        step,
    })
}

fn rk4_step(field: &VectorField, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let shift = |x: &[f64], k: &[f64], c: f64| -> Vec<f64> {
        x.iter().zip(k).map(|(a, b)| a + c * b).collect()
    };
    let k1 = field.eval(x)?;
    let k2 = field.eval(&shift(x, &k1, 0.5 * h))?;
    let k3 = field.eval(&shift(x, &k2, 0.5 * h))?;
    let k4 = field.eval(&shift(x, &k3, h))?;
    Ok(x.iter()
        .enumerate()
        .map(|(i, a)| a + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Result of [`lift_and_compare`]: the base curve of the projected
/// dynamics, its lift through the candidate, the directly integrated phase
/// curve from the same lifted start, and their sup distance.
#[derive(Debug, Clone)]
pub struct LiftComparison {
    pub base: Trajectory,
    pub lifted: Trajectory,
    pub direct: Trajectory,
    pub deviation: f64,
}

/// Integrates the projected dynamics of `gamma` from `q0`, lifts the
/// resulting curve through `gamma`, and compares it against the forced
/// dynamics integrated from `gamma`'s graph point over `q0` on the same
/// grid. Small deviations certify that graphs of solutions are invariant.
pub fn lift_and_compare(
    sys: &ForcedHamiltonianSystem,
    gamma: &Section,
    q0: &[f64],
    t_span: (f64, f64),
    step: f64,
) -> Result<LiftComparison> {
    let projected = projected_field(sys, gamma)?;
    let base = integrate(&projected, q0, t_span, step)?;
    let lifted_states = base
        .states()
        .iter()
        .map(|q| gamma.graph_point(q))
        .collect::<Result<Vec<_>>>()?;
    let lifted = Trajectory {
        times: base.times().to_vec(),
        states: lifted_states,
        step,
    };
    let direct = integrate(&sys.vector_field(), &gamma.graph_point(q0)?, t_span, step)?;
    let deviation = lifted.sup_distance(&direct)?;
    Ok(LiftComparison {
        base,
        lifted,
        direct,
        deviation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::Chart;
    use crate::field::ScalarField;
    use crate::geometry::{base_chart, SectionKind, SemibasicForm};
    use crate::lagrangian::{rayleigh_force, ForcedLagrangianSystem};
    use alloc::sync::Arc;
    use alloc::vec;

    #[test]
    fn zero_field_stays_put() {
        let chart = Arc::new(Chart::config(vec!["q1".into()], vec![]).unwrap());
        let f = VectorField::from_components(
            &chart,
            vec![ScalarField::constant(&chart, 0.0).unwrap()],
        )
        .unwrap();
        let tr = integrate(&f, &[0.4], (0.0, 1.0), 0.1).unwrap();
        assert_eq!(tr.len(), 11);
        assert!(tr.states().iter().all(|s| (s[0] - 0.4).abs() < 1e-15));
    }

    #[test]
    fn dragged_particle_matches_the_closed_form() {
        let chart = Arc::new(
            Chart::standard_velocities(1, vec![("m".into(), 1.0), ("k".into(), 1.0)]).unwrap(),
        );
        let l = ScalarField::parse(&chart, "m*v1^2/2").unwrap();
        let r = ScalarField::parse(&chart, "k*v1^3/3").unwrap();
        let force = rayleigh_force(&chart, &r).unwrap();
        let sys = ForcedLagrangianSystem::new(&chart, l, force).unwrap();
        let tr = integrate(&sys.vector_field(), &[0.0, 1.0], (0.0, 1.0), 1e-3).unwrap();
        // q(t) = log(v0 k t / m + 1) m / k + q0 and v = q'.
        let end = tr.final_state();
        assert!((end[0] - libm::log(2.0)).abs() < 1e-8, "{}", end[0]);
        assert!((end[1] - 0.5).abs() < 1e-8);
        // Time grid ends exactly at the requested endpoint.
        assert_eq!(*tr.times().last().unwrap(), 1.0);
    }

    #[test]
    fn oscillator_returns_after_a_period_and_reverses() {
        let chart = Arc::new(Chart::standard_momenta(1, vec![]).unwrap());
        let h = ScalarField::parse(&chart, "(q1^2 + p1^2)/2").unwrap();
        let sys = crate::hamiltonian::ForcedHamiltonianSystem::unforced(&chart, h).unwrap();
        let field = sys.vector_field();
        let period = 2.0 * core::f64::consts::PI;
        let tr = integrate(&field, &[0.7, 0.0], (0.0, period), 1e-3).unwrap();
        let end = tr.final_state();
        assert!((end[0] - 0.7).abs() < 1e-6 && end[1].abs() < 1e-6);
        // Forward then backward lands on the start.
        let fwd = integrate(&field, &[0.7, 0.0], (0.0, 1.0), 1e-3).unwrap();
        let back = integrate(&field, fwd.final_state(), (1.0, 0.0), 1e-3).unwrap();
        let s = back.final_state();
        assert!((s[0] - 0.7).abs() < 1e-7 && s[1].abs() < 1e-7);
    }

    #[test]
    fn lifting_a_solution_tracks_the_direct_flow() {
        let chart = Arc::new(Chart::standard_momenta(2, vec![("k".into(), 1.0)]).unwrap());
        let h = ScalarField::parse(&chart, "(p1^2 + p2^2)/2").unwrap();
        let beta = SemibasicForm::parse(&chart, &["k*p1^2", "k*p2^2"]).unwrap();
        let sys = crate::hamiltonian::ForcedHamiltonianSystem::new(&chart, h, beta).unwrap();
        let base = base_chart(&chart).unwrap();
        let gamma =
            Section::parse(SectionKind::Covector, &base, &["exp(-k*q1)", "exp(-k*q2)"]).unwrap();
        let cmp = lift_and_compare(&sys, &gamma, &[0.0, 0.0], (0.0, 1.0), 1e-3).unwrap();
        assert!(cmp.deviation < 1e-8, "{}", cmp.deviation);
        // Both flows follow q(t) = log(t + 1), p(t) = 1 / (t + 1).
        let end = cmp.direct.final_state();
        assert!((end[0] - libm::log(2.0)).abs() < 1e-8);
        assert!((end[2] - 0.5).abs() < 1e-8);

        // A constant candidate is not invariant: the deviation is visible.
        let bad = Section::parse(SectionKind::Covector, &base, &["1", "1"]).unwrap();
        let cmp = lift_and_compare(&sys, &bad, &[0.0, 0.0], (0.0, 1.0), 1e-3).unwrap();
        assert!(cmp.deviation > 0.05, "{}", cmp.deviation);
    }
}
