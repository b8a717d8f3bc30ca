//! Built-in systems, generated as ordinary config documents.
//!
//! Each builtin expands to the same TOML text a user could have written,
//! so the rest of the pipeline (hashing, parsing, validation, reports)
//! treats builtins and files identically. Command-line overrides for the
//! dimension and the model constants are substituted into the generated
//! text.

use crate::Failure;

pub const BUILTIN_NAMES: [&str; 6] = [
    "drag-1d",
    "drag-nd",
    "homog-rayleigh-ham",
    "homog-rayleigh-lag",
    "calogero",
    "mobile-robot",
];

/// Numeric overrides accepted by the builtin generators. Lists must match
/// the system dimension; scalars take the first entry.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub n: Option<usize>,
    pub kappa: Option<Vec<f64>>,
    pub lambda: Option<Vec<f64>>,
    pub mu: Option<Vec<f64>>,
}

/// TOML float literal; integral values keep one decimal so the field is
/// unambiguously a float.
fn lit(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{x:.1}")
    } else {
        format!("{x}")
    }
}

fn scalar(list: &Option<Vec<f64>>, what: &str, default: f64) -> Result<f64, Failure> {
    match list {
        None => Ok(default),
        Some(v) if v.len() == 1 => Ok(v[0]),
        Some(v) => Err(Failure::input(format!(
            "--{what} takes a single value here, got {}",
            v.len()
        ))),
    }
}

fn vector(list: &Option<Vec<f64>>, what: &str, n: usize, default: f64) -> Result<Vec<f64>, Failure> {
    match list {
        None => Ok(vec![default; n]),
        Some(v) if v.len() == n => Ok(v.clone()),
        Some(v) => Err(Failure::input(format!(
            "--{what} needs {n} comma-separated values, got {}",
            v.len()
        ))),
    }
}

fn no_dim(n: &Option<usize>, name: &str) -> Result<(), Failure> {
    match n {
        None => Ok(()),
        Some(_) => Err(Failure::input(format!("--n does not apply to {name}"))),
    }
}

pub fn document(name: &str, ov: &Overrides) -> Result<String, Failure> {
    match name {
        "drag-1d" => drag_1d(ov),
        "drag-nd" => drag_nd(ov),
        "homog-rayleigh-ham" => homog_rayleigh_ham(ov),
        "homog-rayleigh-lag" => homog_rayleigh_lag(ov),
        "calogero" => calogero(ov),
        "mobile-robot" => mobile_robot(ov),
        other => Err(Failure::input(format!(
            "unknown system `{other}`; builtins: {}",
            BUILTIN_NAMES.join(", ")
        ))),
    }
}

/// Point particle with drag quadratic in the velocity. On the momentum
/// side the force is `(k/m^2) p^2 dq` and the invariant graphs are the
/// exponential covectors `lam e^{-(k/m) q} dq`.
fn drag_1d(ov: &Overrides) -> Result<String, Failure> {
    no_dim(&ov.n, "drag-1d")?;
    if ov.mu.is_some() {
        return Err(Failure::input("--mu does not apply to drag-1d".into()));
    }
    let k = scalar(&ov.kappa, "kappa", 1.0)?;
    let lam = scalar(&ov.lambda, "lambda", 1.0)?;
    Ok(format!(
        r#"[systems."drag-1d"]
kind = "hamiltonian"
coords = ["q1"]
hamiltonian = "p1^2/(2*m)"
force = ["(k/m^2)*p1^2"]
params = {{ m = 1.0, k = {k}, lam = {lam} }}
box = [[-1.0, 1.0]]

[systems."drag-1d".candidates.exponential]
components = ["lam*exp(-(k/m)*q1)"]
expect = "strict"
q0 = [0.0]
t1 = 1.0
step = 0.001
"#,
        k = lit(k),
        lam = lit(lam),
    ))
}

/// Independent drag channels in `n` dimensions: unit masses, force
/// `kappa_i p_i^2 dq^i`, exponential candidate per channel.
fn drag_nd(ov: &Overrides) -> Result<String, Failure> {
    let n = ov.n.unwrap_or(2);
    if n == 0 || n > 16 {
        return Err(Failure::input(format!(
            "drag-nd supports 1..=16 dimensions, got {n}"
        )));
    }
    if ov.mu.is_some() {
        return Err(Failure::input("--mu does not apply to drag-nd".into()));
    }
    let kappa = vector(&ov.kappa, "kappa", n, 1.0)?;
    let lambda = vector(&ov.lambda, "lambda", n, 1.0)?;
    let coords: Vec<String> = (1..=n).map(|i| format!("\"q{i}\"")).collect();
    let h: Vec<String> = (1..=n).map(|i| format!("p{i}^2")).collect();
    let force: Vec<String> = (1..=n).map(|i| format!("\"k{i}*p{i}^2\"")).collect();
    let comps: Vec<String> = (1..=n)
        .map(|i| format!("\"l{i}*exp(-k{i}*q{i})\""))
        .collect();
    let mut params = Vec::new();
    for i in 1..=n {
        params.push(format!("k{i} = {}", lit(kappa[i - 1])));
    }
    for i in 1..=n {
        params.push(format!("l{i} = {}", lit(lambda[i - 1])));
    }
    let boxes = vec!["[-1.0, 1.0]"; n].join(", ");
    let q0 = vec!["0.0"; n].join(", ");
    Ok(format!(
        r#"[systems."drag-nd"]
kind = "hamiltonian"
coords = [{coords}]
hamiltonian = "({h})/2"
force = [{force}]
params = {{ {params} }}
box = [{boxes}]

[systems."drag-nd".candidates.exponential]
components = [{comps}]
expect = "strict"
q0 = [{q0}]
t1 = 1.0
step = 0.001
"#,
        coords = coords.join(", "),
        h = h.join(" + "),
        force = force.join(", "),
        params = params.join(", "),
        comps = comps.join(", "),
    ))
}

/// Free particle with a force linear in the momenta through a symmetric
/// matrix. The affine candidates `l_i - (R q)_i` are exact invariant
/// graphs; the `skewed` variant perturbs the matrix antisymmetrically,
/// which breaks both closedness and the corrected residual.
fn homog_rayleigh_ham(ov: &Overrides) -> Result<String, Failure> {
    no_dim(&ov.n, "homog-rayleigh-ham")?;
    if ov.kappa.is_some() || ov.mu.is_some() {
        return Err(Failure::input(
            "only --lambda applies to homog-rayleigh-ham".into(),
        ));
    }
    let lam = vector(&ov.lambda, "lambda", 2, 1.0)?;
    Ok(format!(
        r#"[systems."homog-rayleigh-ham"]
kind = "hamiltonian"
coords = ["q1", "q2"]
hamiltonian = "(p1^2 + p2^2)/2"
force = ["r11*p1 + r12*p2", "r12*p1 + r22*p2"]
params = {{ r11 = 1.0, r12 = 0.3, r22 = 0.8, l1 = {l1}, l2 = {l2}, s = 0.25 }}
box = [[-1.0, 1.0], [-1.0, 1.0]]

[systems."homog-rayleigh-ham".candidates.linear]
components = ["l1 - (r11*q1 + r12*q2)", "l2 - (r12*q1 + r22*q2)"]
expect = "strict"
q0 = [0.0, 0.0]
t1 = 1.0
step = 0.001

[systems."homog-rayleigh-ham".candidates.skewed]
components = ["l1 - (r11*q1 + (r12 + s)*q2)", "l2 - ((r12 - s)*q1 + r22*q2)"]
expect = "none"
"#,
        l1 = lit(lam[0]),
        l2 = lit(lam[1]),
    ))
}

/// Velocity-side twin of `homog-rayleigh-ham`: diagonal kinetic metric and
/// a quadratic dissipation potential whose fiber gradient is the same
/// linear force.
fn homog_rayleigh_lag(ov: &Overrides) -> Result<String, Failure> {
    no_dim(&ov.n, "homog-rayleigh-lag")?;
    if ov.kappa.is_some() || ov.mu.is_some() {
        return Err(Failure::input(
            "only --lambda applies to homog-rayleigh-lag".into(),
        ));
    }
    let lam = vector(&ov.lambda, "lambda", 2, 1.0)?;
    Ok(format!(
        r#"[systems."homog-rayleigh-lag"]
kind = "lagrangian"
coords = ["q1", "q2"]
lagrangian = "(m1*v1^2 + m2*v2^2)/2"
rayleigh = "(r11*v1^2 + 2*r12*v1*v2 + r22*v2^2)/2"
params = {{ m1 = 1.0, m2 = 2.0, r11 = 1.0, r12 = 0.3, r22 = 0.8, l1 = {l1}, l2 = {l2} }}
box = [[-1.0, 1.0], [-1.0, 1.0]]

[systems."homog-rayleigh-lag".candidates.linear]
components = ["l1 - (r11*q1 + r12*q2)/m1", "l2 - (r12*q1 + r22*q2)/m2"]
expect = "strict"
q0 = [0.0, 0.0]
t1 = 1.0
step = 0.001
"#,
        l1 = lit(lam[0]),
        l2 = lit(lam[1]),
    ))
}

/// Two particles with an inverse-square pair potential, dragged through
/// the total momentum. The diagonal translation action reduces the pair
/// to one degree of freedom at momentum level mu1; the `balanced` family
/// solves the problem exactly on both levels, while `displayed` is closed
/// but not a solution.
fn calogero(ov: &Overrides) -> Result<String, Failure> {
    no_dim(&ov.n, "calogero")?;
    if ov.kappa.is_some() {
        return Err(Failure::input("--kappa does not apply to calogero".into()));
    }
    let mu = scalar(&ov.mu, "mu", 1.0)?;
    let lam = scalar(&ov.lambda, "lambda", 0.0)?;
    Ok(format!(
        r#"[systems.calogero]
kind = "hamiltonian"
coords = ["q1", "q2"]
hamiltonian = "(p1^2 + p2^2 + 1/(q1 - q2)^2)/2"
force = ["p1 + p2", "-(p1 + p2)"]
params = {{ mu1 = {mu}, cc = 16.0, lam = {lam} }}
box = [[0.6, 1.5], [-0.5, 0.4]]

[systems.calogero.action]
generators = [[1.0, 1.0]]
complement = [[1.0, -1.0]]
mu = [{mu}]

[systems.calogero.candidates.balanced]
components = [
  "mu1/2 + sqrt(cc + lam - mu1*(q1 - q2) - 1/(2*(q1 - q2)^2))",
  "mu1/2 - sqrt(cc + lam - mu1*(q1 - q2) - 1/(2*(q1 - q2)^2))",
]
expect = "strict"
q0 = [1.0, 0.0]
t1 = 1.0
step = 0.001

[systems.calogero.reduced_candidates.balanced]
components = ["mu1/2 + sqrt(cc + lam - mu1*q1 - 1/(2*q1^2))"]
expect = "strict"
box = [[0.2, 2.0]]

[systems.calogero.reduced_candidates.displayed]
components = ["q1 + 1/(2*mu1*q1^2) + lam"]
expect = "none"
box = [[0.2, 2.0]]
"#,
        mu = lit(mu),
        lam = lit(lam),
    ))
}

/// Differential-drive platform: chassis angle th, wheel angle ps, contact
/// point (x, y). Rolling without slipping ties the contact velocity to
/// the wheels through a connection whose gyroscopic force cancels, so the
/// constrained Lagrangian reduces to two decoupled rotors.
fn mobile_robot(ov: &Overrides) -> Result<String, Failure> {
    no_dim(&ov.n, "mobile-robot")?;
    if ov.kappa.is_some() || ov.mu.is_some() {
        return Err(Failure::input(
            "only --lambda applies to mobile-robot".into(),
        ));
    }
    let lam = vector(&ov.lambda, "lambda", 2, 1.0)?;
    Ok(format!(
        r#"[systems."mobile-robot"]
kind = "caplygin"
coords = ["th", "ps", "x", "y"]
lagrangian = "(jj*v_th^2 + 3*jw*v_ps^2 + m*(v_x^2 + v_y^2))/2"
params = {{ jj = 2.0, jw = 0.7, m = 1.5, r = 0.8, l1 = {l1}, l2 = {l2} }}
box = [[-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0]]

[systems."mobile-robot".connection]
base = 2
christoffel = [["0", "-r*cos(th)"], ["0", "-r*sin(th)"]]

[systems."mobile-robot".candidates.roll]
components = ["l1", "l2", "l2*r*cos(th)", "l2*r*sin(th)"]
expect = "strict"

[systems."mobile-robot".candidates."slide-x"]
components = ["0", "0", "1", "0"]
expect = "none"

[systems."mobile-robot".reduced_candidates.steady]
components = ["l1*jj", "l2*(m*r^2 + 3*jw)"]
expect = "strict"
box = [[-1.0, 1.0], [-1.0, 1.0]]
"#,
        l1 = lit(lam[0]),
        l2 = lit(lam[1]),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_parses() {
        for name in BUILTIN_NAMES {
            let doc = document(name, &Overrides::default()).unwrap();
            let cfg = crate::config::parse_document(&doc).unwrap();
            assert!(cfg.systems.contains_key(name), "{name}");
        }
    }

    #[test]
    fn overrides_substitute() {
        let ov = Overrides {
            n: Some(3),
            kappa: Some(vec![0.5, 1.0, 2.0]),
            lambda: Some(vec![2.0, 0.5, 1.0]),
            mu: None,
        };
        let doc = document("drag-nd", &ov).unwrap();
        assert!(doc.contains("k1 = 0.5"));
        assert!(doc.contains("l3 = 1.0"));
        assert!(doc.contains("\"q3\""));
        let bad = Overrides {
            kappa: Some(vec![1.0]),
            ..Overrides::default()
        };
        assert_eq!(document("calogero", &bad).unwrap_err().code, 2);
        assert_eq!(
            document("nope", &Overrides::default()).unwrap_err().code,
            2
        );
    }
}
