//! Transport across the fiber derivative: second-order form of the
//! velocity-side dynamics, relatedness of the two vector fields, roundtrip
//! inversion, and agreement of transported systems with closed forms.

use std::sync::Arc;

use mechforce_core::chart::Chart;
use mechforce_core::field::{MatrixField, ScalarField};
use mechforce_core::geometry::{base_chart, Section, SectionKind};
use mechforce_core::hj::{legendre_transport_check, Verdict, VerifyOptions};
use mechforce_core::lagrangian::{rayleigh_force, ForcedLagrangianSystem, NaturalLagrangian};
use mechforce_core::sample::SampleBox;

fn mixed_drag() -> ForcedLagrangianSystem {
    let params = vec![
        ("m1".into(), 1.0),
        ("m2".into(), 2.0),
        ("m3".into(), 0.5),
        ("k1".into(), 0.3),
        ("k2".into(), 0.7),
        ("k3".into(), 1.1),
    ];
    let chart = Arc::new(Chart::standard_velocities(3, params).unwrap());
    let l = ScalarField::parse(&chart, "(m1*v1^2 + m2*v2^2 + m3*v3^2)/2").unwrap();
    let r = ScalarField::parse(&chart, "(k1*v1^3 + k2*v2^3 + k3*v3^3)/3").unwrap();
    let force = rayleigh_force(&chart, &r).unwrap();
    ForcedLagrangianSystem::new(&chart, l, force).unwrap()
}

fn curved_metric() -> ForcedLagrangianSystem {
    let config = Arc::new(Chart::config(vec!["q1".into(), "q2".into()], vec![]).unwrap());
    let g = MatrixField::from_fn(&config, 2, 2, |i, j| {
        let src = match (i, j) {
            (0, 0) => "2 + q2^2",
            (1, 1) => "1 + q1^2/2",
            _ => "q1*q2/4",
        };
        ScalarField::parse(&config, src)
    })
    .unwrap();
    let v = ScalarField::parse(&config, "(q1^2 + q2^2)/2").unwrap();
    let nat = NaturalLagrangian::new(&g, Some(&v)).unwrap();
    let chart = nat.velocity_chart().clone();
    let l = nat.lagrangian().unwrap();
    let r = ScalarField::parse(&chart, "(v1^2 + v2^2)^2/8").unwrap();
    let force = rayleigh_force(&chart, &r).unwrap();
    ForcedLagrangianSystem::new(&chart, l, force).unwrap()
}

#[test]
fn velocity_side_dynamics_is_second_order() {
    for sys in [mixed_drag(), curved_metric()] {
        let n = sys.n();
        let field = sys.vector_field();
        for z in SampleBox::unit(2 * n).sample(25, 4) {
            let v = field.eval(&z).unwrap();
            for i in 0..n {
                assert_eq!(v[i], z[n + i], "position rate must be the velocity coordinate");
            }
        }
    }
}

#[test]
fn fiber_derivative_roundtrips_both_ways() {
    for sys in [mixed_drag(), curved_metric()] {
        let n = sys.n();
        let leg = sys.legendre().unwrap();
        let inv = sys.legendre_inverse().unwrap();
        for z in SampleBox::unit(2 * n).sample(20, 9) {
            let w = leg.apply(&z).unwrap();
            let back = inv.apply(&w).unwrap();
            for (a, b) in back.iter().zip(&z) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
            let fwd = leg.apply(&inv.apply(&z).unwrap()).unwrap();
            for (a, b) in fwd.iter().zip(&z) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }
}

/// Central-difference Jacobian of a fibred map.
fn fd_jacobian(
    map: &mechforce_core::geometry::FibredMap,
    z: &[f64],
    h: f64,
) -> Vec<Vec<f64>> {
    let d = z.len();
    let mut cols = vec![vec![0.0; d]; d];
    for j in 0..d {
        let mut hi = z.to_vec();
        let mut lo = z.to_vec();
        hi[j] += h;
        lo[j] -= h;
        let a = map.apply(&hi).unwrap();
        let b = map.apply(&lo).unwrap();
        for i in 0..d {
            cols[j][i] = (a[i] - b[i]) / (2.0 * h);
        }
    }
    cols
}

#[test]
fn the_two_vector_fields_are_related_by_the_fiber_derivative() {
    for sys in [mixed_drag(), curved_metric()] {
        let n = sys.n();
        let ham = sys.to_hamiltonian().unwrap();
        let leg = sys.legendre().unwrap();
        let lag_field = sys.vector_field();
        let ham_field = ham.vector_field();
        for z in SampleBox::unit(2 * n).sample(15, 13) {
            let xl = lag_field.eval(&z).unwrap();
            let xh = ham_field.eval(&leg.apply(&z).unwrap()).unwrap();
            let cols = fd_jacobian(&leg, &z, 1e-5);
            for i in 0..2 * n {
                let pushed: f64 = (0..2 * n).map(|j| cols[j][i] * xl[j]).sum();
                assert!(
                    (pushed - xh[i]).abs() < 1e-8 * (1.0 + xh[i].abs()),
                    "component {i}: {pushed} vs {}",
                    xh[i]
                );
            }
        }
    }
}

#[test]
fn transported_drag_system_matches_its_closed_form() {
    let sys = mixed_drag();
    let ham = sys.to_hamiltonian().unwrap();
    let ms = [1.0, 2.0, 0.5];
    let ks = [0.3, 0.7, 1.1];
    for z in SampleBox::unit(6).sample(30, 2) {
        let mut h = 0.0;
        for i in 0..3 {
            h += z[3 + i] * z[3 + i] / (2.0 * ms[i]);
        }
        assert!((ham.hamiltonian().value(&z).unwrap() - h).abs() < 1e-10);
        let beta = ham.force().value(&z).unwrap();
        for i in 0..3 {
            let expect = ks[i] / (ms[i] * ms[i]) * z[3 + i] * z[3 + i];
            assert!((beta[i] - expect).abs() < 1e-10);
        }
    }
}

#[test]
fn natural_hamiltonians_agree_with_numeric_transport() {
    let config = Arc::new(Chart::config(vec!["q1".into(), "q2".into()], vec![]).unwrap());
    let g = MatrixField::from_fn(&config, 2, 2, |i, j| {
        let src = match (i, j) {
            (0, 0) => "2 + q2^2",
            (1, 1) => "1 + q1^2/2",
            _ => "q1*q2/4",
        };
        ScalarField::parse(&config, src)
    })
    .unwrap();
    let v = ScalarField::parse(&config, "(q1^2 + q2^2)/2").unwrap();
    let nat = NaturalLagrangian::new(&g, Some(&v)).unwrap();
    let closed = nat.hamiltonian().unwrap();
    let sys = ForcedLagrangianSystem::unforced(nat.velocity_chart(), nat.lagrangian().unwrap())
        .unwrap();
    let transported = sys.to_hamiltonian().unwrap();
    for z in SampleBox::unit(4).sample(25, 6) {
        let a = closed.value(&z).unwrap();
        let b = transported.hamiltonian().value(&z).unwrap();
        assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
    }
}

#[test]
fn transport_preserves_verification_verdicts() {
    // A single damped particle with the known generating section.
    let chart = Arc::new(
        Chart::standard_velocities(1, vec![("m".into(), 1.5), ("k".into(), 0.6), ("lam".into(), 0.9)])
            .unwrap(),
    );
    let l = ScalarField::parse(&chart, "m*v1^2/2").unwrap();
    let r = ScalarField::parse(&chart, "k*v1^3/3").unwrap();
    let sys =
        ForcedLagrangianSystem::new(&chart, l, rayleigh_force(&chart, &r).unwrap()).unwrap();
    let base = base_chart(sys.chart()).unwrap();
    let x = Section::parse(
        SectionKind::Vector,
        &base,
        &["lam/m*exp(-k*q1/m)"],
    )
    .unwrap();
    let opts = VerifyOptions::default();
    let bounds = SampleBox::unit(1);
    let (lag, ham) = legendre_transport_check(&sys, &x, &bounds, &opts).unwrap();
    assert_eq!(lag.verdict, Verdict::Strict);
    assert_eq!(ham.verdict, Verdict::Strict);

    // Three particles with distinct masses and drags.
    let sys = mixed_drag();
    let base = base_chart(sys.chart()).unwrap();
    let x = Section::parse(
        SectionKind::Vector,
        &base,
        &[
            "7/10/m1*exp(-k1*q1/m1)",
            "-2/5/m2*exp(-k2*q2/m2)",
            "1/m3*exp(-k3*q3/m3)",
        ],
    )
    .unwrap();
    let (lag, ham) = legendre_transport_check(&sys, &x, &SampleBox::unit(3), &opts).unwrap();
    assert_eq!(lag.verdict, Verdict::Strict);
    assert_eq!(ham.verdict, Verdict::Strict);

    // A non-solution transports to a non-solution.
    let bad = Section::parse(SectionKind::Vector, &base, &["q2", "q3", "q1"]).unwrap();
    let (lag, ham) = legendre_transport_check(&sys, &bad, &SampleBox::unit(3), &opts).unwrap();
    assert_eq!(lag.verdict, Verdict::None);
    assert_eq!(ham.verdict, Verdict::None);
}

#[test]
fn transported_sections_are_the_fiber_derivative_along_the_graph() {
    let sys = curved_metric();
    let base = base_chart(sys.chart()).unwrap();
    let x = Section::parse(SectionKind::Vector, &base, &["q2^2", "1 - q1/2"]).unwrap();
    let gamma = sys.transported_section(&x).unwrap();
    let leg = sys.legendre().unwrap();
    for q in SampleBox::unit(2).sample(20, 3) {
        let z = x.graph_point(&q).unwrap();
        let w = leg.apply(&z).unwrap();
        let g = gamma.value(&q).unwrap();
        for i in 0..2 {
            assert!((g[i] - w[2 + i]).abs() < 1e-12);
        }
    }
}
