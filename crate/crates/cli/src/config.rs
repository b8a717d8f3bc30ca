//! Config documents and their translation into core objects.
//!
//! A document is TOML with one `[systems.NAME]` table per system. Each
//! system declares its kind, base coordinate names, defining scalar
//! (Hamiltonian or Lagrangian), an optional force block, numeric
//! parameters, a sampling box, and named candidate sections with the
//! verdict they are expected to earn. Hamiltonian systems may carry an
//! `action` table (translation generators, a transverse complement, and
//! momentum levels) and quotient-side candidates; constrained systems
//! carry a `connection` table instead.

use std::collections::BTreeMap;
use std::sync::Arc;

use mechforce_core::chart::{Chart, FiberKind};
use mechforce_core::field::{MatrixField, ScalarField};
use mechforce_core::geometry::{base_chart, Section, SectionKind, SemibasicForm};
use mechforce_core::hamiltonian::ForcedHamiltonianSystem;
use mechforce_core::hj::{Verdict, DEFAULT_TOL};
use mechforce_core::lagrangian::{
    linear_velocity_force, rayleigh_force, tangent_chart, ForcedLagrangianSystem,
};
use mechforce_core::reduction::{CaplyginSystem, EhresmannConnection};
use mechforce_core::sample::SampleBox;
use serde::Deserialize;

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Hamiltonian,
    Lagrangian,
    Caplygin,
}

impl SystemKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SystemKind::Hamiltonian => "hamiltonian",
            SystemKind::Lagrangian => "lagrangian",
            SystemKind::Caplygin => "caplygin",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expectation {
    Strict,
    Weak,
    None,
}

impl Expectation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Expectation::Strict => "strict",
            Expectation::Weak => "weak",
            Expectation::None => "none",
        }
    }

    pub fn matches(&self, v: Verdict) -> bool {
        matches!(
            (self, v),
            (Expectation::Strict, Verdict::Strict)
                | (Expectation::Weak, Verdict::Weak)
                | (Expectation::None, Verdict::None)
        )
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    pub systems: BTreeMap<String, SystemConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub kind: SystemKind,
    pub coords: Vec<String>,
    #[serde(default)]
    pub hamiltonian: Option<String>,
    #[serde(default)]
    pub lagrangian: Option<String>,
    /// Semibasic force components, one per coordinate, on the matching side.
    #[serde(default)]
    pub force: Option<Vec<String>>,
    /// Velocity-side dissipation potential; the force is its fiber gradient.
    #[serde(default)]
    pub rayleigh: Option<String>,
    /// Velocity-side force linear in the velocities, given by its matrix.
    #[serde(default)]
    pub rayleigh_tensor: Option<Vec<Vec<String>>>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, rename = "box")]
    pub sample_box: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub tol: Option<f64>,
    /// Default expectation for candidates that do not state their own.
    #[serde(default)]
    pub expect: Option<Expectation>,
    #[serde(default)]
    pub candidates: BTreeMap<String, CandidateConfig>,
    #[serde(default)]
    pub action: Option<ActionConfig>,
    #[serde(default)]
    pub reduced_candidates: BTreeMap<String, CandidateConfig>,
    #[serde(default)]
    pub connection: Option<ConnectionConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateConfig {
    pub components: Vec<String>,
    #[serde(default)]
    pub expect: Option<Expectation>,
    #[serde(default, rename = "box")]
    pub sample_box: Option<Vec<[f64; 2]>>,
    /// Base start point for trajectory comparison.
    #[serde(default)]
    pub q0: Option<Vec<f64>>,
    #[serde(default)]
    pub t1: Option<f64>,
    #[serde(default)]
    pub step: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionConfig {
    pub generators: Vec<Vec<f64>>,
    pub complement: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectionConfig {
    /// Dimension of the base of the bundle; the leading `base` coordinates
    /// span it and the rest are fiber directions.
    pub base: usize,
    /// Connection coefficients, rows indexed by fiber direction, columns by
    /// base direction.
    pub christoffel: Vec<Vec<String>>,
}

pub fn parse_document(text: &str) -> Result<ConfigFile, Failure> {
    let cfg: ConfigFile =
        toml::from_str(text).map_err(|e| Failure::input(format!("config parse error: {e}")))?;
    if cfg.systems.is_empty() {
        return Err(Failure::input("config declares no systems".into()));
    }
    Ok(cfg)
}

pub fn select_system<'a>(
    cfg: &'a ConfigFile,
    name: Option<&str>,
) -> Result<(&'a str, &'a SystemConfig), Failure> {
    match name {
        Some(n) => cfg
            .systems
            .get_key_value(n)
            .map(|(k, v)| (k.as_str(), v))
            .ok_or_else(|| {
                let known: Vec<_> = cfg.systems.keys().map(String::as_str).collect();
                Failure::input(format!(
                    "system `{n}` not found in config (choices: {})",
                    known.join(", ")
                ))
            }),
        None => {
            if cfg.systems.len() == 1 {
                let (k, v) = cfg.systems.iter().next().unwrap();
                Ok((k.as_str(), v))
            } else {
                Err(Failure::input(
                    "config declares several systems; pass --system NAME".into(),
                ))
            }
        }
    }
}

/// A system from a config document, compiled into core objects.
pub struct Built {
    pub name: String,
    pub kind: SystemKind,
    pub engine: Engine,
    pub bounds: SampleBox,
    pub tol: f64,
    pub seed: Option<u64>,
    pub candidates: Vec<BuiltCandidate>,
    pub action: Option<BuiltAction>,
    /// Quotient-side candidates, compiled only once the reduced chart exists.
    pub reduced: Vec<(String, CandidateConfig)>,
}

pub enum Engine {
    Hamiltonian(ForcedHamiltonianSystem),
    Lagrangian(ForcedLagrangianSystem),
    Caplygin(CaplyginSystem),
}

/// Raw action data. The gauge (the transverse complement's block
/// structure) is only validated when a reduction actually runs, after the
/// generators have passed the symmetry gate.
pub struct BuiltAction {
    pub generators: Vec<Vec<f64>>,
    pub complement: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
}

pub struct BuiltCandidate {
    pub name: String,
    pub section: Section,
    pub expect: Option<Expectation>,
    pub bounds: SampleBox,
    pub q0: Option<Vec<f64>>,
    pub t1: Option<f64>,
    pub step: Option<f64>,
}

fn input<T>(r: mechforce_core::error::Result<T>, what: &str) -> Result<T, Failure> {
    r.map_err(|e| Failure::input(format!("{what}: {e}")))
}

fn box_from(pairs: &[[f64; 2]], what: &str) -> Result<SampleBox, Failure> {
    let lo: Vec<f64> = pairs.iter().map(|p| p[0]).collect();
    let hi: Vec<f64> = pairs.iter().map(|p| p[1]).collect();
    for p in pairs {
        if !(p[0].is_finite() && p[1].is_finite() && p[0] < p[1]) {
            return Err(Failure::input(format!(
                "{what}: each box axis needs finite bounds with lo < hi, got [{}, {}]",
                p[0], p[1]
            )));
        }
    }
    input(SampleBox::new(lo, hi), what)
}

/// Momentum fiber names mirroring the velocity naming rule: `q<i>` pairs
/// with `p<i>`, anything else gets a `p_` prefix.
fn momentum_names(coords: &[String]) -> Vec<String> {
    coords
        .iter()
        .map(|b| match b.strip_prefix('q') {
            Some(rest) if !rest.is_empty() => format!("p{rest}"),
            _ => format!("p_{b}"),
        })
        .collect()
}

pub fn build_system(
    name: &str,
    sc: &SystemConfig,
    file_tol: Option<f64>,
    file_seed: Option<u64>,
) -> Result<Built, Failure> {
    let n = sc.coords.len();
    if n == 0 {
        return Err(Failure::input(format!(
            "system `{name}`: coords must not be empty"
        )));
    }
    let params: Vec<(String, f64)> = sc.params.iter().map(|(k, v)| (k.clone(), *v)).collect();
    let tol = sc.tol.or(file_tol).unwrap_or(DEFAULT_TOL);
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Failure::input(format!(
            "system `{name}`: tolerance must be positive and finite, got {tol}"
        )));
    }
    let bounds = match &sc.sample_box {
        Some(pairs) => {
            if pairs.len() != n {
                return Err(Failure::input(format!(
                    "system `{name}`: box has {} axes for {} coordinates",
                    pairs.len(),
                    n
                )));
            }
            box_from(pairs, &format!("system `{name}` box"))?
        }
        None => SampleBox::unit(n),
    };

    let reject = |field: &str, present: bool| -> Result<(), Failure> {
        if present {
            Err(Failure::input(format!(
                "system `{name}`: `{field}` does not apply to kind {}",
                sc.kind.as_str()
            )))
        } else {
            Ok(())
        }
    };

    let engine = match sc.kind {
        SystemKind::Hamiltonian => {
            reject("lagrangian", sc.lagrangian.is_some())?;
            reject("rayleigh", sc.rayleigh.is_some())?;
            reject("rayleigh_tensor", sc.rayleigh_tensor.is_some())?;
            reject("connection", sc.connection.is_some())?;
            let h_src = sc.hamiltonian.as_deref().ok_or_else(|| {
                Failure::input(format!("system `{name}`: kind hamiltonian needs `hamiltonian`"))
            })?;
            let chart = Arc::new(input(
                Chart::new(
                    sc.coords.clone(),
                    FiberKind::Momenta,
                    momentum_names(&sc.coords),
                    params.clone(),
                ),
                &format!("system `{name}` chart"),
            )?);
            let h = input(
                ScalarField::parse(&chart, h_src),
                &format!("system `{name}` hamiltonian"),
            )?;
            let force = match &sc.force {
                Some(comps) => {
                    let srcs: Vec<&str> = comps.iter().map(String::as_str).collect();
                    input(
                        SemibasicForm::parse(&chart, &srcs),
                        &format!("system `{name}` force"),
                    )?
                }
                None => input(
                    SemibasicForm::zero(&chart),
                    &format!("system `{name}` force"),
                )?,
            };
            Engine::Hamiltonian(input(
                ForcedHamiltonianSystem::new(&chart, h, force),
                &format!("system `{name}`"),
            )?)
        }
        SystemKind::Lagrangian | SystemKind::Caplygin => {
            reject("hamiltonian", sc.hamiltonian.is_some())?;
            let l_src = sc.lagrangian.as_deref().ok_or_else(|| {
                Failure::input(format!(
                    "system `{name}`: kind {} needs `lagrangian`",
                    sc.kind.as_str()
                ))
            })?;
            let config = Arc::new(input(
                Chart::config(sc.coords.clone(), params.clone()),
                &format!("system `{name}` chart"),
            )?);
            let vel = Arc::new(input(
                tangent_chart(&config),
                &format!("system `{name}` velocity chart"),
            )?);
            let l = input(
                ScalarField::parse(&vel, l_src),
                &format!("system `{name}` lagrangian"),
            )?;
            if sc.kind == SystemKind::Caplygin {
                reject("force", sc.force.is_some())?;
                reject("rayleigh", sc.rayleigh.is_some())?;
                reject("rayleigh_tensor", sc.rayleigh_tensor.is_some())?;
                let cc = sc.connection.as_ref().ok_or_else(|| {
                    Failure::input(format!(
                        "system `{name}`: kind caplygin needs a `connection` table"
                    ))
                })?;
                if cc.base == 0 || cc.base >= n {
                    return Err(Failure::input(format!(
                        "system `{name}`: connection base {} must be strictly between 0 and {n}",
                        cc.base
                    )));
                }
                let srcs: Vec<Vec<&str>> = cc
                    .christoffel
                    .iter()
                    .map(|row| row.iter().map(String::as_str).collect())
                    .collect();
                let conn = input(
                    EhresmannConnection::parse(&config, cc.base, &srcs),
                    &format!("system `{name}` connection"),
                )?;
                Engine::Caplygin(input(
                    CaplyginSystem::new(conn, l),
                    &format!("system `{name}`"),
                )?)
            } else {
                reject("connection", sc.connection.is_some())?;
                let declared = sc.force.is_some() as u8
                    + sc.rayleigh.is_some() as u8
                    + sc.rayleigh_tensor.is_some() as u8;
                if declared > 1 {
                    return Err(Failure::input(format!(
                        "system `{name}`: declare at most one of force, rayleigh, rayleigh_tensor"
                    )));
                }
                let force = if let Some(comps) = &sc.force {
                    let srcs: Vec<&str> = comps.iter().map(String::as_str).collect();
                    input(
                        SemibasicForm::parse(&vel, &srcs),
                        &format!("system `{name}` force"),
                    )?
                } else if let Some(r_src) = &sc.rayleigh {
                    let r = input(
                        ScalarField::parse(&vel, r_src),
                        &format!("system `{name}` rayleigh"),
                    )?;
                    input(rayleigh_force(&vel, &r), &format!("system `{name}` force"))?
                } else if let Some(rows) = &sc.rayleigh_tensor {
                    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                        return Err(Failure::input(format!(
                            "system `{name}`: rayleigh_tensor must be {n}x{n}"
                        )));
                    }
                    let mf = input(
                        MatrixField::from_fn(&vel, n, n, |i, j| {
                            ScalarField::parse(&vel, &rows[i][j])
                        }),
                        &format!("system `{name}` rayleigh_tensor"),
                    )?;
                    input(
                        linear_velocity_force(&vel, &mf),
                        &format!("system `{name}` force"),
                    )?
                } else {
                    input(SemibasicForm::zero(&vel), &format!("system `{name}` force"))?
                };
                Engine::Lagrangian(input(
                    ForcedLagrangianSystem::new(&vel, l, force),
                    &format!("system `{name}`"),
                )?)
            }
        }
    };

    let action = match (&sc.action, sc.kind) {
        (None, _) => None,
        (Some(_), SystemKind::Lagrangian | SystemKind::Caplygin) => {
            return Err(Failure::input(format!(
                "system `{name}`: `action` applies only to kind hamiltonian"
            )))
        }
        (Some(ac), SystemKind::Hamiltonian) => {
            let k = ac.generators.len();
            if k == 0 || k >= n {
                return Err(Failure::input(format!(
                    "system `{name}`: an action needs between 1 and {} generators",
                    n - 1
                )));
            }
            for row in ac.generators.iter().chain(ac.complement.iter()) {
                if row.len() != n || row.iter().any(|v| !v.is_finite()) {
                    return Err(Failure::input(format!(
                        "system `{name}`: action rows need {n} finite entries"
                    )));
                }
            }
            if ac.complement.len() != n - k {
                return Err(Failure::input(format!(
                    "system `{name}`: {} generators need {} complement rows, got {}",
                    k,
                    n - k,
                    ac.complement.len()
                )));
            }
            if ac.mu.len() != k || ac.mu.iter().any(|v| !v.is_finite()) {
                return Err(Failure::input(format!(
                    "system `{name}`: need {k} finite momentum levels"
                )));
            }
            Some(BuiltAction {
                generators: ac.generators.clone(),
                complement: ac.complement.clone(),
                mu: ac.mu.clone(),
            })
        }
    };
    if !sc.reduced_candidates.is_empty() && action.is_none() && sc.kind != SystemKind::Caplygin {
        return Err(Failure::input(format!(
            "system `{name}`: reduced_candidates need an `action` or `connection` table"
        )));
    }

    // Candidate sections live over the base of the relevant bundle: the
    // configuration chart. Constrained candidates span the full chart.
    let (candidate_base, candidate_kind, comps_expected) = match &engine {
        Engine::Hamiltonian(sys) => (
            input(base_chart(sys.chart()), "base chart")?,
            SectionKind::Covector,
            n,
        ),
        Engine::Lagrangian(sys) => (
            input(base_chart(sys.chart()), "base chart")?,
            SectionKind::Vector,
            n,
        ),
        Engine::Caplygin(sys) => (sys.connection().chart().clone(), SectionKind::Vector, n),
    };

    let mut candidates = Vec::new();
    for (cname, cc) in &sc.candidates {
        if cc.components.len() != comps_expected {
            return Err(Failure::input(format!(
                "candidate `{cname}`: {} components for {} coordinates",
                cc.components.len(),
                comps_expected
            )));
        }
        let srcs: Vec<&str> = cc.components.iter().map(String::as_str).collect();
        let section = input(
            Section::parse(candidate_kind, &candidate_base, &srcs),
            &format!("candidate `{cname}`"),
        )?;
        let cbounds = match &cc.sample_box {
            Some(pairs) => {
                if pairs.len() != n {
                    return Err(Failure::input(format!(
                        "candidate `{cname}`: box has {} axes for {} coordinates",
                        pairs.len(),
                        n
                    )));
                }
                box_from(pairs, &format!("candidate `{cname}` box"))?
            }
            None => bounds.clone(),
        };
        if let Some(q0) = &cc.q0 {
            if q0.len() != n || q0.iter().any(|v| !v.is_finite()) {
                return Err(Failure::input(format!(
                    "candidate `{cname}`: q0 must hold {n} finite entries"
                )));
            }
        }
        candidates.push(BuiltCandidate {
            name: cname.clone(),
            section,
            expect: cc.expect.or(sc.expect),
            bounds: cbounds,
            q0: cc.q0.clone(),
            t1: cc.t1,
            step: cc.step,
        });
    }

    Ok(Built {
        name: name.to_string(),
        kind: sc.kind,
        engine,
        bounds,
        tol,
        seed: file_seed,
        candidates,
        action,
        reduced: sc
            .reduced_candidates
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect(),
    })
}
