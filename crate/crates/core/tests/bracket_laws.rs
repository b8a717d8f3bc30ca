//! Algebraic laws of the canonical and dissipative brackets, and the two
//! energy-balance identities they feed.

use std::sync::Arc;

use proptest::prelude::*;

use mechforce_core::chart::Chart;
use mechforce_core::field::ScalarField;
use mechforce_core::flows::integrate;
use mechforce_core::geometry::SemibasicForm;
use mechforce_core::hamiltonian::{poisson_bracket, poisson_bracket_field, ForcedHamiltonianSystem};
use mechforce_core::lagrangian::{rayleigh_force, ForcedLagrangianSystem};
use mechforce_core::sample::SampleBox;

fn observables(chart: &Arc<Chart>) -> Vec<ScalarField> {
    [
        "q1*p2 - q2*p1",
        "(p1^2 + p2^2)/2 + cos(q1)",
        "exp(q2/3)*p1",
        "q1^2*q2 + p1*p2",
    ]
    .iter()
    .map(|s| ScalarField::parse(chart, s).unwrap())
    .collect()
}

#[test]
fn canonical_bracket_is_antisymmetric_and_satisfies_jacobi() {
    let chart = Arc::new(Chart::standard_momenta(2, vec![]).unwrap());
    let fs = observables(&chart);
    let pts = SampleBox::unit(4).sample(40, 12);
    for f in &fs {
        for g in &fs {
            for z in &pts {
                let fg = poisson_bracket(f, g, z).unwrap();
                let gf = poisson_bracket(g, f, z).unwrap();
                assert!((fg + gf).abs() < 1e-12 * (1.0 + fg.abs()));
            }
        }
    }
    // Jacobi over the battery, with the nested brackets taken as fields.
    for a in &fs {
        for b in &fs {
            for c in &fs {
                let ab = poisson_bracket_field(a, b).unwrap();
                let bc = poisson_bracket_field(b, c).unwrap();
                let ca = poisson_bracket_field(c, a).unwrap();
                for z in pts.iter().take(15) {
                    let cyc = poisson_bracket(&ab, c, z).unwrap()
                        + poisson_bracket(&bc, a, z).unwrap()
                        + poisson_bracket(&ca, b, z).unwrap();
                    assert!(cyc.abs() < 1e-8, "jacobi defect {cyc}");
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn canonical_bracket_is_bilinear_and_leibniz(
        a in -2.0..2.0f64,
        b in -2.0..2.0f64,
        z in prop::collection::vec(-1.0..1.0f64, 4),
    ) {
        let chart = Arc::new(Chart::standard_momenta(2, vec![]).unwrap());
        let fs = observables(&chart);
        let (f, g, h) = (&fs[0], &fs[1], &fs[2]);
        let lin = ScalarField::weighted_sum(vec![(a, f.clone()), (b, g.clone())]).unwrap();
        let combo = poisson_bracket(&lin, h, &z).unwrap();
        let split = a * poisson_bracket(f, h, &z).unwrap() + b * poisson_bracket(g, h, &z).unwrap();
        prop_assert!((combo - split).abs() < 1e-10 * (1.0 + combo.abs()));

        let prod = f.mul(g).unwrap();
        let lhs = poisson_bracket(&prod, h, &z).unwrap();
        let rhs = f.value(&z).unwrap() * poisson_bracket(g, h, &z).unwrap()
            + g.value(&z).unwrap() * poisson_bracket(f, h, &z).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
    }
}

#[test]
fn bracket_with_the_hamiltonian_gives_the_unforced_evolution_rate() {
    let chart = Arc::new(Chart::standard_momenta(2, vec![]).unwrap());
    let h = ScalarField::parse(&chart, "(p1^2 + p2^2)/2 + cos(q1) + q2^2").unwrap();
    let sys = ForcedHamiltonianSystem::unforced(&chart, h.clone()).unwrap();
    let field = sys.vector_field();
    let f = ScalarField::parse(&chart, "q1*p2 + exp(q2)").unwrap();
    for z in SampleBox::unit(4).sample(30, 8) {
        let rate: f64 = f
            .gradient(&z)
            .unwrap()
            .iter()
            .zip(&field.eval(&z).unwrap())
            .map(|(a, b)| a * b)
            .sum();
        let pb = poisson_bracket(&f, &h, &z).unwrap();
        assert!((rate - pb).abs() < 1e-12 * (1.0 + rate.abs()));
    }
}

fn damped_particle() -> ForcedLagrangianSystem {
    let chart = Arc::new(Chart::standard_velocities(2, vec![("c".into(), 0.4)]).unwrap());
    let l = ScalarField::parse(&chart, "(v1^2 + v2^2)/2 - q1^2/2 - q2^2/2").unwrap();
    let r = ScalarField::parse(&chart, "c*(v1^2 + v2^2)/2 + c*(v1^3 + v2^3)/6").unwrap();
    let force = rayleigh_force(&chart, &r).unwrap();
    ForcedLagrangianSystem::new(&chart, l, force).unwrap()
}

#[test]
fn dissipative_bracket_is_symmetric_positive_and_leibniz() {
    let sys = damped_particle();
    let chart = sys.chart().clone();
    let f = ScalarField::parse(&chart, "v1*q2 + v2^2").unwrap();
    let g = ScalarField::parse(&chart, "sin(q1) + v1*v2").unwrap();
    let h = ScalarField::parse(&chart, "q1 + q2*v1").unwrap();
    for z in SampleBox::unit(4).sample(30, 21) {
        let fg = sys.dissipative_bracket(&f, &g, &z).unwrap();
        let gf = sys.dissipative_bracket(&g, &f, &z).unwrap();
        assert!((fg - gf).abs() < 1e-12 * (1.0 + fg.abs()));
        let ff = sys.dissipative_bracket(&f, &f, &z).unwrap();
        assert!(ff >= -1e-13, "bracket of a function with itself went negative: {ff}");
        // Leibniz in the first slot.
        let prod = f.mul(&h).unwrap();
        let lhs = sys.dissipative_bracket(&prod, &g, &z).unwrap();
        let rhs = f.value(&z).unwrap() * sys.dissipative_bracket(&h, &g, &z).unwrap()
            + h.value(&z).unwrap() * fg;
        assert!((lhs - rhs).abs() < 1e-11 * (1.0 + lhs.abs()));
    }
}

#[test]
fn velocity_side_energy_balance_holds_along_trajectories() {
    let sys = damped_particle();
    let energy = sys.energy().unwrap();
    let field = sys.vector_field();
    // Pointwise: the analytic rate equals the force paired with velocity.
    for z in SampleBox::unit(4).sample(25, 31) {
        let rate = sys.energy_rate(&z).unwrap();
        let forces = sys.force().value(&z).unwrap();
        let paired: f64 = forces.iter().zip(&z[2..]).map(|(a, v)| a * v).sum();
        assert!((rate + paired).abs() < 1e-12 * (1.0 + rate.abs()));
        let drift: f64 = energy
            .gradient(&z)
            .unwrap()
            .iter()
            .zip(&field.eval(&z).unwrap())
            .map(|(a, b)| a * b)
            .sum();
        assert!((rate - drift).abs() < 1e-11 * (1.0 + rate.abs()));
    }
    // Integrated: energy loss matches the time integral of the rate.
    let traj = integrate(&field, &[0.6, -0.3, 0.8, 0.5], (0.0, 2.0), 1e-3).unwrap();
    let mut integral = 0.0;
    for i in 1..traj.len() {
        let a = sys.energy_rate(traj.state(i - 1)).unwrap();
        let b = sys.energy_rate(traj.state(i)).unwrap();
        integral += 0.5 * (a + b) * (traj.times()[i] - traj.times()[i - 1]);
    }
    let drop = energy.value(traj.final_state()).unwrap() - energy.value(traj.state(0)).unwrap();
    assert!((drop - integral).abs() < 1e-6, "{drop} vs {integral}");
    assert!(drop < -1e-3, "dissipation should drain energy, got {drop}");
}

#[test]
fn momentum_side_energy_balance_matches_the_force_pairing() {
    let chart = Arc::new(Chart::standard_momenta(2, vec![("k".into(), 0.3)]).unwrap());
    let h = ScalarField::parse(&chart, "(p1^2 + p2^2)/2 + q1^2*q2^2").unwrap();
    let beta = SemibasicForm::parse(&chart, &["k*p1^2", "k*p2^2"]).unwrap();
    let sys = ForcedHamiltonianSystem::new(&chart, h.clone(), beta).unwrap();
    let field = sys.vector_field();
    for z in SampleBox::unit(4).sample(25, 17) {
        let rate = sys.energy_rate(&z).unwrap();
        let slope = h.gradient(&z).unwrap();
        let forces = sys.force().value(&z).unwrap();
        let paired: f64 = forces.iter().zip(&slope[2..]).map(|(b, dh)| b * dh).sum();
        assert!((rate + paired).abs() < 1e-12 * (1.0 + rate.abs()));
        let drift: f64 = slope
            .iter()
            .zip(&field.eval(&z).unwrap())
            .map(|(a, b)| a * b)
            .sum();
        assert!((rate - drift).abs() < 1e-11 * (1.0 + rate.abs()));
    }
}
