//! The generalized residual against an independent finite-difference
//! oracle, and the constants of the motion extracted from complete
//! families.

use std::sync::Arc;

use mechforce_core::chart::Chart;
use mechforce_core::field::{MatrixField, ScalarField};
use mechforce_core::geometry::{base_chart, Section, SectionKind, SemibasicForm};
use mechforce_core::hamiltonian::{linear_momentum_force, ForcedHamiltonianSystem};
use mechforce_core::hj::{
    hj_residual, verify, weak_hj_residual, CompleteSolution, Verdict, VerifyOptions,
};
use mechforce_core::sample::SampleBox;

fn forced_system() -> ForcedHamiltonianSystem {
    let chart = Arc::new(Chart::standard_momenta(2, vec![("k".into(), 0.4)]).unwrap());
    let h = ScalarField::parse(&chart, "(p1^2 + p2^2)/2 + p1*q2/2 + cos(q1)").unwrap();
    let beta = SemibasicForm::parse(&chart, &["k*p1^2", "k*p1*p2"]).unwrap();
    ForcedHamiltonianSystem::new(&chart, h, beta).unwrap()
}

/// Central-difference directional slope of a scalar function of the base
/// point.
fn fd_slope(f: &dyn Fn(&[f64]) -> f64, q: &[f64], i: usize, h: f64) -> f64 {
    let mut hi = q.to_vec();
    let mut lo = q.to_vec();
    hi[i] += h;
    lo[i] -= h;
    (f(&hi) - f(&lo)) / (2.0 * h)
}

#[test]
fn generalized_residual_matches_the_rearranged_rate_form() {
    // The residual can be rewritten as L_X gamma + gamma-pullback of the
    // force + d(H on the graph minus the pairing of gamma with X), where X
    // is the slope field of the graph. Rebuild that combination purely from
    // point values by finite differences and compare.
    let sys = forced_system();
    let base = base_chart(sys.chart()).unwrap();
    let gamma = Section::parse(
        SectionKind::Covector,
        &base,
        &["q2^2", "q1 - q2/2"],
    )
    .unwrap();
    let h_at = {
        let sys = sys.clone();
        let gamma = gamma.clone();
        move |q: &[f64]| {
            let z = gamma.graph_point(q).unwrap();
            sys.hamiltonian().value(&z).unwrap()
        }
    };
    let slope = {
        let sys = sys.clone();
        let gamma = gamma.clone();
        move |q: &[f64], j: usize| {
            let mut z = gamma.graph_point(q).unwrap();
            let h = 1e-5;
            z[2 + j] += h;
            let hi = sys.hamiltonian().value(&z).unwrap();
            z[2 + j] -= 2.0 * h;
            let lo = sys.hamiltonian().value(&z).unwrap();
            (hi - lo) / (2.0 * h)
        }
    };
    for q in SampleBox::unit(2).sample(25, 14) {
        let weak = weak_hj_residual(&sys, &gamma, &q).unwrap();
        let gv = gamma.value(&q).unwrap();
        let z = gamma.graph_point(&q).unwrap();
        let beta = sys.force().value(&z).unwrap();
        let mut oracle = vec![0.0; 2];
        for i in 0..2 {
            // Lie-derivative part: X^j d_j gamma_i + gamma_j d_i X^j.
            let mut lie = 0.0;
            for j in 0..2 {
                let gamma_i = {
                    let gamma = gamma.clone();
                    move |qq: &[f64]| gamma.value(qq).unwrap()[i]
                };
                lie += slope(&q, j) * fd_slope(&gamma_i, &q, j, 1e-4);
                let xj = {
                    let slope = &slope;
                    move |qq: &[f64]| slope(qq, j)
                };
                lie += gv[j] * fd_slope(&xj, &q, i, 1e-4);
            }
            // Exact part: d of (H on the graph - pairing with the slope).
            let scalar = {
                let h_at = &h_at;
                let slope = &slope;
                let gamma = gamma.clone();
                move |qq: &[f64]| {
                    let g = gamma.value(qq).unwrap();
                    let pair: f64 = (0..2).map(|j| g[j] * slope(qq, j)).sum();
                    h_at(qq) - pair
                }
            };
            oracle[i] = lie + beta[i] + fd_slope(&scalar, &q, i, 1e-4);
        }
        for i in 0..2 {
            assert!(
                (oracle[i] - weak[i]).abs() < 1e-5 * (1.0 + weak[i].abs()),
                "component {i}: oracle {} vs computed {}",
                oracle[i],
                weak[i]
            );
        }
    }
}

#[test]
fn closed_candidates_collapse_weak_to_strict() {
    let sys = forced_system();
    let base = base_chart(sys.chart()).unwrap();
    // Exact differential of sin(q1) q2 + q1^2 / 2.
    let gamma = Section::parse(
        SectionKind::Covector,
        &base,
        &["cos(q1)*q2 + q1", "sin(q1)"],
    )
    .unwrap();
    for q in SampleBox::unit(2).sample(50, 77) {
        let a = hj_residual(&sys, &gamma, &q).unwrap();
        let b = weak_hj_residual(&sys, &gamma, &q).unwrap();
        for i in 0..2 {
            assert!((a[i] - b[i]).abs() < 1e-12 * (1.0 + a[i].abs()));
        }
    }
}

fn drag_family() -> (ForcedHamiltonianSystem, CompleteSolution) {
    let params = vec![("k1".into(), 0.5), ("k2".into(), 1.25)];
    let chart = Arc::new(Chart::standard_momenta(2, params.clone()).unwrap());
    let h = ScalarField::parse(&chart, "(p1^2 + p2^2)/2").unwrap();
    let beta = SemibasicForm::parse(&chart, &["k1*p1^2", "k2*p2^2"]).unwrap();
    let sys = ForcedHamiltonianSystem::new(&chart, h, beta).unwrap();
    let base = base_chart(sys.chart()).unwrap();
    let family = Arc::new(CompleteSolution::family_chart(&base, &["l1", "l2"]).unwrap());
    let comps = vec![
        ScalarField::parse(&family, "l1*exp(-k1*q1)").unwrap(),
        ScalarField::parse(&family, "l2*exp(-k2*q2)").unwrap(),
    ];
    let lambda_box = SampleBox::new(vec![0.5, 0.5], vec![2.0, 2.0]).unwrap();
    let cs = CompleteSolution::new(&family, comps, lambda_box).unwrap();
    (sys, cs)
}

#[test]
fn drag_family_members_are_strict_and_invert_cleanly() {
    let (sys, cs) = drag_family();
    let opts = VerifyOptions::default();
    let report = cs.check(&sys, &SampleBox::unit(2), &opts, 12).unwrap();
    assert!(report.all_strict, "{report:?}");
    assert!(report.worst_residual_sup < 1e-9);
    assert!(report.min_jacobian_det.abs() > 1e-3);
    assert!(report.roundtrip_sup < 1e-10, "{}", report.roundtrip_sup);
}

#[test]
fn drag_constants_recover_the_exponential_momenta() {
    let (sys, cs) = drag_family();
    let ks = [0.5, 1.25];
    // Pick phase points whose momenta land inside the family's coverage.
    for q in SampleBox::unit(2).sample(20, 3) {
        let p: Vec<f64> = (0..2)
            .map(|i| (0.9 + 0.4 * q[i]) * (-ks[i] * q[i]).exp())
            .collect();
        let z = [q[0], q[1], p[0], p[1]];
        let lam = cs.constants(&z).unwrap();
        for i in 0..2 {
            let expect = (ks[i] * q[i]).exp() * p[i];
            assert!((lam[i] - expect).abs() < 1e-10, "{} vs {expect}", lam[i]);
        }
        let inv = cs.involution_matrix(&z).unwrap();
        assert!(inv.max_abs() < 1e-9, "involution defect {}", inv.max_abs());
        let rates = cs.conservation_rates(&sys, &z).unwrap();
        for r in rates {
            assert!(r.abs() < 1e-9, "conservation defect {r}");
        }
    }
}

#[test]
fn linear_friction_family_is_strict_for_symmetric_coupling() {
    let r = [[1.0, 0.3], [0.3, 0.8]];
    let params = vec![
        ("r11".into(), r[0][0]),
        ("r12".into(), r[0][1]),
        ("r22".into(), r[1][1]),
    ];
    let chart = Arc::new(Chart::standard_momenta(2, params).unwrap());
    let h = ScalarField::parse(&chart, "(p1^2 + p2^2)/2").unwrap();
    let coupling = MatrixField::from_fn(&chart, 2, 2, |i, j| {
        ScalarField::constant(&chart, r[i][j])
    })
    .unwrap();
    let beta = linear_momentum_force(&chart, &coupling).unwrap();
    let sys = ForcedHamiltonianSystem::new(&chart, h, beta).unwrap();
    let base = base_chart(sys.chart()).unwrap();

    let family = Arc::new(CompleteSolution::family_chart(&base, &["l1", "l2"]).unwrap());
    let comps = vec![
        ScalarField::parse(&family, "l1 - (r11*q1 + r12*q2)").unwrap(),
        ScalarField::parse(&family, "l2 - (r12*q1 + r22*q2)").unwrap(),
    ];
    let lambda_box = SampleBox::unit(2);
    let cs = CompleteSolution::new(&family, comps, lambda_box).unwrap();
    let opts = VerifyOptions::default();
    let report = cs.check(&sys, &SampleBox::unit(2), &opts, 9).unwrap();
    assert!(report.all_strict, "{report:?}");

    // Constants are p_i plus the coupled positions.
    for z in SampleBox::unit(4).sample(20, 5) {
        let lam = cs.constants(&z).unwrap();
        for i in 0..2 {
            let expect = z[2 + i] + r[i][0] * z[0] + r[i][1] * z[1];
            assert!((lam[i] - expect).abs() < 1e-10);
        }
        let inv = cs.involution_matrix(&z).unwrap();
        assert!(inv.max_abs() < 1e-9);
        let rates = cs.conservation_rates(&sys, &z).unwrap();
        for r in rates {
            assert!(r.abs() < 1e-9);
        }
    }

    // An antisymmetric perturbation of the coupling breaks strictness.
    let skew = Section::parse(
        SectionKind::Covector,
        &base,
        &["1 - (r11*q1 + (r12 + 1/2)*q2)", "1 - ((r12 - 1/2)*q1 + r22*q2)"],
    )
    .unwrap();
    let rep = verify(&sys, &skew, &SampleBox::unit(2), &opts).unwrap();
    assert_ne!(rep.verdict, Verdict::Strict);
}
