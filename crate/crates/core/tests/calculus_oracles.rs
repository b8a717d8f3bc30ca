//! Cross-checks the exact derivative engine against finite-difference
//! oracles, and the printer against the parser.

use std::sync::Arc;
use std::thread;

use mechforce_core::chart::Chart;
use mechforce_core::field::ScalarField;
use mechforce_core::sample::SampleBox;

fn fd_gradient(f: &ScalarField, z: &[f64], h: f64) -> Vec<f64> {
    (0..z.len())
        .map(|i| {
            let mut hi = z.to_vec();
            let mut lo = z.to_vec();
            hi[i] += h;
            lo[i] -= h;
            (f.value(&hi).unwrap() - f.value(&lo).unwrap()) / (2.0 * h)
        })
        .collect()
}

fn fd_hessian(f: &ScalarField, z: &[f64], h: f64) -> Vec<Vec<f64>> {
    let d = z.len();
    let mut out = vec![vec![0.0; d]; d];
    let f0 = f.value(z).unwrap();
    for i in 0..d {
        for j in i..d {
            let v = if i == j {
                let mut hi = z.to_vec();
                let mut lo = z.to_vec();
                hi[i] += h;
                lo[i] -= h;
                (f.value(&hi).unwrap() - 2.0 * f0 + f.value(&lo).unwrap()) / (h * h)
            } else {
                let mut pp = z.to_vec();
                let mut pm = z.to_vec();
                let mut mp = z.to_vec();
                let mut mm = z.to_vec();
                pp[i] += h;
                pp[j] += h;
                pm[i] += h;
                pm[j] -= h;
                mp[i] -= h;
                mp[j] += h;
                mm[i] -= h;
                mm[j] -= h;
                (f.value(&pp).unwrap() - f.value(&pm).unwrap() - f.value(&mp).unwrap()
                    + f.value(&mm).unwrap())
                    / (4.0 * h * h)
            };
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

fn battery(chart: &Arc<Chart>) -> Vec<ScalarField> {
    [
        "q1^2*p1 + q2*p2^2/3",
        "sin(q1)*cos(p2) + exp(q2/2)",
        "exp(-(q1^2 + q2^2)/2)*p1*p2",
        "log(3 + q1 + p1/2)*sqrt(4 + q2)",
        "(p1^2 + p2^2)/2 + k*(q1 - q2)^2",
        "tan(q1/3) + q2^3*p2 - k*p1",
        "1/(3 + q1*p2)",
    ]
    .iter()
    .map(|s| ScalarField::parse(chart, s).unwrap())
    .collect()
}

#[test]
fn gradients_match_central_differences() {
    let chart = Arc::new(Chart::standard_momenta(2, vec![("k".into(), 0.7)]).unwrap());
    let pts = SampleBox::unit(4).sample(100, 42);
    for f in battery(&chart) {
        for z in &pts {
            let ad = f.gradient(z).unwrap();
            let fd = fd_gradient(&f, z, 1e-5);
            for (a, b) in ad.iter().zip(&fd) {
                assert!(
                    (a - b).abs() <= 1e-6 * (1.0 + a.abs()),
                    "{} vs {} for {} at {:?}",
                    a,
                    b,
                    f.pretty().unwrap(),
                    z
                );
            }
        }
    }
}

#[test]
fn hessians_match_central_differences_and_are_symmetric() {
    let chart = Arc::new(Chart::standard_momenta(2, vec![("k".into(), 0.7)]).unwrap());
    let pts = SampleBox::unit(4).sample(40, 7);
    for f in battery(&chart) {
        for z in &pts {
            let ad = f.hessian(z).unwrap();
            let fd = fd_hessian(&f, z, 1e-4);
            for i in 0..4 {
                for j in 0..4 {
                    let a = ad.get(i, j);
                    assert_eq!(a, ad.get(j, i));
                    assert!(
                        (a - fd[i][j]).abs() <= 2e-5 * (1.0 + a.abs()),
                        "{} vs {} for {}",
                        a,
                        fd[i][j],
                        f.pretty().unwrap()
                    );
                }
            }
        }
    }
}

#[test]
fn printed_forms_reparse_to_the_same_function() {
    let chart = Arc::new(Chart::standard_momenta(2, vec![("k".into(), 0.7)]).unwrap());
    let pts = SampleBox::unit(4).sample(30, 99);
    for f in battery(&chart) {
        let printed = f.pretty().unwrap();
        let re = ScalarField::parse(&chart, &printed).unwrap();
        for z in &pts {
            let a = f.value(z).unwrap();
            let b = re.value(z).unwrap();
            assert!(
                (a - b).abs() <= 1e-12 * (1.0 + a.abs()),
                "{printed}: {a} vs {b}"
            );
        }
    }
}

#[test]
fn partial_derivative_fields_agree_with_gradient_slots() {
    let chart = Arc::new(Chart::standard_momenta(2, vec![("k".into(), 0.7)]).unwrap());
    let pts = SampleBox::unit(4).sample(25, 5);
    for f in battery(&chart) {
        for i in 0..4 {
            let df = f.partial(i).unwrap();
            for z in &pts {
                let a = df.value(z).unwrap();
                let b = f.gradient(z).unwrap()[i];
                assert!((a - b).abs() <= 1e-11 * (1.0 + a.abs()));
            }
        }
    }
}

#[test]
fn fields_evaluate_concurrently() {
    let chart = Arc::new(Chart::standard_momenta(2, vec![("k".into(), 0.7)]).unwrap());
    let f = Arc::new(
        ScalarField::parse(&chart, "exp(-(q1^2 + q2^2)/2)*sin(p1*p2) + k*q1").unwrap(),
    );
    let reference: Vec<(Vec<f64>, f64, Vec<f64>)> = SampleBox::unit(4)
        .sample(64, 3)
        .into_iter()
        .map(|z| {
            let v = f.value(&z).unwrap();
            let g = f.gradient(&z).unwrap();
            (z, v, g)
        })
        .collect();
    let reference = Arc::new(reference);
    let mut handles = Vec::new();
    for _ in 0..8 {
        let f = f.clone();
        let reference = reference.clone();
        handles.push(thread::spawn(move || {
            for (z, v, g) in reference.iter() {
                assert_eq!(f.value(z).unwrap(), *v);
                assert_eq!(&f.gradient(z).unwrap(), g);
            }
        }));
    }
    for h in handles {
        h.join().unwrap();
    }
}
