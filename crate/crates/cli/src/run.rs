//! Command drivers: verify, integrate, reduce, list.
//!
//! Exit-code policy: 0 when every requested check matched its expectation,
//! 1 when anything analytic disagreed (wrong verdict, broken symmetry,
//! blown-up integration), 2 when the request itself was unusable. Sample
//! sweeps and candidate batches fan out through rayon; report rows keep
//! the declaration order so output bytes do not depend on scheduling.

use std::path::PathBuf;

use mechforce_core::field::ScalarField;
use mechforce_core::flows::lift_and_compare;
use mechforce_core::geometry::{base_chart, Section, SectionKind};
use mechforce_core::hamiltonian::ForcedHamiltonianSystem;
use mechforce_core::hj::{
    HjReport, PreparedCandidate, PreparedTangentCandidate, Verdict, VerifyOptions,
    DEFAULT_SAMPLES, DEFAULT_SEED,
};
use mechforce_core::reduction::{
    invariance_report, reduce_translation, CaplyginSystem, TranslationAction,
};
use mechforce_core::sample::SampleBox;
use rayon::prelude::*;

use crate::config::{
    build_system, parse_document, select_system, Built, BuiltCandidate, Engine,
};
use crate::registry;
use crate::report::{
    config_hash, write_csv, CandidateReport, CandidateSummary, ConstraintChecks, CurvatureSample,
    GeneratorCheck, ListReport, ReducedBlock, RunReport, SystemSummary, TrajectoryFile,
};
use crate::Failure;

/// Options shared by every command, resolved from flags.
#[derive(Debug, Clone, Default)]
pub struct RunContext {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    /// Replacement sampling box for candidate verification.
    pub sample_box: Option<Vec<(f64, f64)>>,
    pub candidate: Option<String>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default)]
pub struct IntegrateOpts {
    pub q0: Option<Vec<f64>>,
    pub t1: Option<f64>,
    pub step: Option<f64>,
}

/// A document compiled into a runnable system plus its provenance hash.
pub struct Prepared {
    pub document: String,
    pub hash: String,
    pub built: Built,
}

pub fn prepare(document: String, system: Option<&str>) -> Result<Prepared, Failure> {
    let cfg = parse_document(&document)?;
    let (name, sc) = select_system(&cfg, system)?;
    let built = build_system(name, sc, cfg.tol, cfg.seed)?;
    Ok(Prepared {
        hash: config_hash(&document),
        document,
        built,
    })
}

fn effective(ctx: &RunContext, built: &Built) -> (u64, f64) {
    let seed = ctx.seed.or(built.seed).unwrap_or(DEFAULT_SEED);
    let tol = ctx.tol.unwrap_or(built.tol);
    (seed, tol)
}

fn override_box(ctx: &RunContext, bounds: &SampleBox) -> Result<SampleBox, Failure> {
    match &ctx.sample_box {
        None => Ok(bounds.clone()),
        Some(pairs) => {
            if pairs.len() != bounds.dim() {
                return Err(Failure::input(format!(
                    "--box has {} axes but the sampling domain has {}",
                    pairs.len(),
                    bounds.dim()
                )));
            }
            for (lo, hi) in pairs {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Failure::input(format!(
                        "--box axes need finite lo < hi, got {lo}:{hi}"
                    )));
                }
            }
            SampleBox::new(
                pairs.iter().map(|p| p.0).collect(),
                pairs.iter().map(|p| p.1).collect(),
            )
            .map_err(|e| Failure::input(format!("--box: {e}")))
        }
    }
}

fn classify(closed: f64, strict: f64, weak: f64, tol: f64) -> Verdict {
    if closed <= tol && strict <= tol {
        Verdict::Strict
    } else if weak <= tol {
        Verdict::Weak
    } else {
        Verdict::None
    }
}

fn sup_fold(
    results: Vec<mechforce_core::error::Result<(f64, f64, f64)>>,
) -> mechforce_core::error::Result<(f64, f64, f64)> {
    let mut acc = (0.0_f64, 0.0_f64, 0.0_f64);
    for r in results {
        let (c, s, w) = r?;
        acc = (acc.0.max(c), acc.1.max(s), acc.2.max(w));
    }
    Ok(acc)
}

fn finite(v: f64, what: &str) -> Result<f64, Failure> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Failure::run(format!("{what} produced a non-finite value")))
    }
}

fn assemble(
    sups: (f64, f64, f64),
    bounds: &SampleBox,
    samples: usize,
    tol: f64,
) -> Result<HjReport, Failure> {
    let closed = finite(sups.0, "closedness sampling")?;
    let strict = finite(sups.1, "residual sampling")?;
    let weak = finite(sups.2, "corrected residual sampling")?;
    Ok(HjReport {
        verdict: classify(closed, strict, weak, tol),
        closedness_sup: closed,
        residual_sup: strict,
        weak_residual_sup: weak,
        sample_lo: bounds.lo().to_vec(),
        sample_hi: bounds.hi().to_vec(),
        n_samples: samples,
        tol,
    })
}

/// Momentum-side sweep with the sample points spread over rayon workers.
/// The per-point arithmetic matches the sequential report, and folding
/// with `max` keeps the result independent of the split.
pub fn verify_hamiltonian(
    sys: &ForcedHamiltonianSystem,
    gamma: &Section,
    bounds: &SampleBox,
    opts: &VerifyOptions,
) -> Result<HjReport, Failure> {
    let prep = PreparedCandidate::new(sys, gamma).map_err(|e| Failure::run(e.to_string()))?;
    let n = sys.n();
    let pts = bounds.sample(opts.samples, opts.seed);
    let per_point: Vec<_> = pts
        .par_iter()
        .map(|q| {
            let sr = prep.strict_residual(q)?;
            let x = prep.momentum_slope(q)?;
            let j = prep.section().jacobian(q)?;
            let mut closed = 0.0_f64;
            let mut wr = sr.clone();
            for i in 0..n {
                for (jj, xv) in x.iter().enumerate() {
                    let anti = j.get(i, jj) - j.get(jj, i);
                    closed = closed.max(anti.abs());
                    wr[i] += xv * anti;
                }
            }
            let strict = sr.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let weak = wr.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            Ok((closed, strict, weak))
        })
        .collect();
    let sups = sup_fold(per_point).map_err(|e| Failure::run(e.to_string()))?;
    assemble(sups, bounds, pts.len(), opts.tol)
}

/// Velocity-side analogue of [`verify_hamiltonian`].
pub fn verify_lagrangian(
    sys: &mechforce_core::lagrangian::ForcedLagrangianSystem,
    x: &Section,
    bounds: &SampleBox,
    opts: &VerifyOptions,
) -> Result<HjReport, Failure> {
    let prep = PreparedTangentCandidate::new(sys, x).map_err(|e| Failure::run(e.to_string()))?;
    let n = sys.n();
    let pts = bounds.sample(opts.samples, opts.seed);
    let per_point: Vec<_> = pts
        .par_iter()
        .map(|q| {
            let sr = prep.strict_residual(q)?;
            let xv = prep.section().value(q)?;
            let j = prep.momentum_image().jacobian(q)?;
            let mut closed = 0.0_f64;
            let mut wr = sr.clone();
            for i in 0..n {
                for (jj, x) in xv.iter().enumerate() {
                    let anti = j.get(i, jj) - j.get(jj, i);
                    closed = closed.max(anti.abs());
                    wr[i] += x * anti;
                }
            }
            let strict = sr.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let weak = wr.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            Ok((closed, strict, weak))
        })
        .collect();
    let sups = sup_fold(per_point).map_err(|e| Failure::run(e.to_string()))?;
    assemble(sups, bounds, pts.len(), opts.tol)
}

fn candidate_row(
    cand: &BuiltCandidate,
    stage: &'static str,
    rep: &HjReport,
) -> CandidateReport {
    let verdict = rep.verdict;
    CandidateReport {
        name: cand.name.clone(),
        stage,
        verdict: verdict.as_str().to_string(),
        closedness_sup: rep.closedness_sup,
        residual_sup: rep.residual_sup,
        weak_residual_sup: rep.weak_residual_sup,
        expect: cand.expect.map(|e| e.as_str()),
        matched: cand.expect.map_or(true, |e| e.matches(verdict)),
        deviation: None,
        checks: None,
    }
}

fn selected<'a>(
    built: &'a Built,
    filter: Option<&str>,
) -> Result<Vec<&'a BuiltCandidate>, Failure> {
    let picked: Vec<_> = built
        .candidates
        .iter()
        .filter(|c| filter.map_or(true, |f| c.name == f))
        .collect();
    if picked.is_empty() {
        return Err(Failure::input(match filter {
            Some(f) => format!("system `{}` has no candidate named `{f}`", built.name),
            None => format!("system `{}` declares no candidates", built.name),
        }));
    }
    Ok(picked)
}

pub fn cmd_verify(p: &Prepared, ctx: &RunContext) -> Result<(RunReport, i32), Failure> {
    let built = &p.built;
    let (seed, tol) = effective(ctx, built);
    let opts = VerifyOptions {
        samples: DEFAULT_SAMPLES,
        seed,
        tol,
    };
    let picked = selected(built, ctx.candidate.as_deref())?;
    let rows: Vec<Result<CandidateReport, Failure>> = picked
        .par_iter()
        .map(|cand| {
            let bounds = override_box(ctx, &cand.bounds)?;
            let rep = match &built.engine {
                Engine::Hamiltonian(sys) => verify_hamiltonian(sys, &cand.section, &bounds, &opts)?,
                Engine::Lagrangian(sys) => verify_lagrangian(sys, &cand.section, &bounds, &opts)?,
                Engine::Caplygin(_) => {
                    return Err(Failure::input(
                        "constrained systems are checked with `mechforce reduce`".into(),
                    ))
                }
            };
            Ok(candidate_row(cand, "full", &rep))
        })
        .collect();
    let mut candidates = Vec::with_capacity(rows.len());
    for r in rows {
        candidates.push(r?);
    }
    let all_matched = candidates.iter().all(|c| c.matched);
    let report = RunReport {
        command: "verify".into(),
        system: built.name.clone(),
        config_hash: p.hash.clone(),
        seed,
        tol,
        candidates,
        reduced: None,
        trajectories: Vec::new(),
        error: None,
        timing_ms: 0,
    };
    Ok((report, if all_matched { 0 } else { 1 }))
}

pub fn cmd_integrate(
    p: &Prepared,
    ctx: &RunContext,
    io: &IntegrateOpts,
) -> Result<(RunReport, i32), Failure> {
    let built = &p.built;
    let (seed, tol) = effective(ctx, built);
    let opts = VerifyOptions {
        samples: DEFAULT_SAMPLES,
        seed,
        tol,
    };
    let picked = selected(built, ctx.candidate.as_deref())?;
    let cand = if picked.len() == 1 {
        picked[0]
    } else {
        return Err(Failure::input(format!(
            "system `{}` has several candidates; pass --candidate NAME",
            built.name
        )));
    };
    let n = built.bounds.dim();
    let q0 = io
        .q0
        .clone()
        .or_else(|| cand.q0.clone())
        .ok_or_else(|| Failure::input("no start point: pass --q0 or set q0 on the candidate".into()))?;
    if q0.len() != n || q0.iter().any(|v| !v.is_finite()) {
        return Err(Failure::input(format!("--q0 needs {n} finite entries")));
    }
    let t1 = io.t1.or(cand.t1).unwrap_or(1.0);
    if !t1.is_finite() || t1 == 0.0 {
        return Err(Failure::input(format!(
            "end time must be finite and nonzero, got {t1}"
        )));
    }
    let step = io.step.or(cand.step).unwrap_or(1e-3);
    if !(step > 0.0) || !step.is_finite() {
        return Err(Failure::input(format!(
            "step must be positive and finite, got {step}"
        )));
    }

    // The comparison always runs on the momentum side; a velocity-side
    // system is transported across its fiber derivative first.
    let (sys, gamma) = match &built.engine {
        Engine::Hamiltonian(sys) => (sys.clone(), cand.section.clone()),
        Engine::Lagrangian(lag) => {
            let sys = lag
                .to_hamiltonian()
                .map_err(|e| Failure::run(format!("transport failed: {e}")))?;
            let gamma = lag
                .transported_section(&cand.section)
                .map_err(|e| Failure::run(format!("transport failed: {e}")))?;
            (sys, gamma)
        }
        Engine::Caplygin(_) => {
            return Err(Failure::input(
                "constrained systems are checked with `mechforce reduce`".into(),
            ))
        }
    };

    let bounds = override_box(ctx, &cand.bounds)?;
    let sweep = match &built.engine {
        Engine::Lagrangian(lag) => verify_lagrangian(lag, &cand.section, &bounds, &opts)?,
        _ => verify_hamiltonian(&sys, &gamma, &bounds, &opts)?,
    };
    let mut row = candidate_row(cand, "full", &sweep);

    let out_dir = ctx.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| Failure::input(format!("cannot create {}: {e}", out_dir.display())))?;

    match lift_and_compare(&sys, &gamma, &q0, (0.0, t1), step) {
        Err(e) => {
            let report = RunReport {
                command: "integrate".into(),
                system: built.name.clone(),
                config_hash: p.hash.clone(),
                seed,
                tol,
                candidates: vec![row],
                reduced: None,
                trajectories: Vec::new(),
                error: Some(e.to_string()),
                timing_ms: 0,
            };
            Ok((report, 1))
        }
        Ok(cmp) => {
            row.deviation = Some(cmp.deviation);
            let phase = sys.chart();
            let base = base_chart(phase).map_err(|e| Failure::run(e.to_string()))?;
            let base_names: Vec<String> =
                (0..base.dim()).map(|i| base.coord_name(i).to_string()).collect();
            let phase_names: Vec<String> =
                (0..phase.dim()).map(|i| phase.coord_name(i).to_string()).collect();
            let mut manifest = Vec::new();
            for (role, names, traj) in [
                ("base", &base_names, &cmp.base),
                ("lifted", &phase_names, &cmp.lifted),
                ("direct", &phase_names, &cmp.direct),
            ] {
                let file = format!("{}-{}-{role}.csv", built.name, cand.name);
                write_csv(&out_dir.join(&file), names, traj)?;
                manifest.push(TrajectoryFile {
                    candidate: cand.name.clone(),
                    role,
                    file,
                    rows: traj.len(),
                    columns: 1 + names.len(),
                });
            }
            let report = RunReport {
                command: "integrate".into(),
                system: built.name.clone(),
                config_hash: p.hash.clone(),
                seed,
                tol,
                candidates: vec![row],
                reduced: None,
                trajectories: manifest,
                error: None,
                timing_ms: 0,
            };
            Ok((report, 0))
        }
    }
}

fn phase_box(base: &SampleBox) -> SampleBox {
    let n = base.dim();
    let mut lo = base.lo().to_vec();
    let mut hi = base.hi().to_vec();
    lo.extend(std::iter::repeat(-1.0).take(n));
    hi.extend(std::iter::repeat(1.0).take(n));
    SampleBox::new(lo, hi).expect("phase box")
}

/// Pretty forms for a whole component list, or `None` if any component is
/// backed by a closure rather than an expression tree (the JSON simply omits
/// displays it cannot print faithfully).
fn pretty_all(fields: &[ScalarField]) -> Option<Vec<String>> {
    fields.iter().map(|f| f.pretty()).collect()
}

pub fn cmd_reduce(p: &Prepared, ctx: &RunContext) -> Result<(RunReport, i32), Failure> {
    let built = &p.built;
    match &built.engine {
        Engine::Hamiltonian(sys) => {
            let Some(ba) = &built.action else {
                return Err(Failure::input(format!(
                    "system `{}` declares no `action` table to reduce by",
                    built.name
                )));
            };
            reduce_by_translation(p, ctx, sys, ba)
        }
        Engine::Caplygin(sys) => reduce_constrained(p, ctx, sys),
        Engine::Lagrangian(_) => Err(Failure::input(format!(
            "system `{}` is velocity-side; reduction works on the momentum side or on constrained systems",
            built.name
        ))),
    }
}

fn build_reduced_candidates(
    built: &Built,
    chart: &std::sync::Arc<mechforce_core::chart::Chart>,
    m: usize,
    filter: Option<&str>,
) -> Result<Vec<BuiltCandidate>, Failure> {
    let base = base_chart(chart).map_err(|e| Failure::run(e.to_string()))?;
    let mut out = Vec::new();
    for (name, cc) in &built.reduced {
        if let Some(f) = filter {
            if name != f {
                continue;
            }
        }
        if cc.components.len() != m {
            return Err(Failure::input(format!(
                "reduced candidate `{name}`: {} components for {m} coordinates",
                cc.components.len()
            )));
        }
        let srcs: Vec<&str> = cc.components.iter().map(String::as_str).collect();
        let section = Section::parse(SectionKind::Covector, &base, &srcs)
            .map_err(|e| Failure::input(format!("reduced candidate `{name}`: {e}")))?;
        let bounds = match &cc.sample_box {
            Some(pairs) => {
                if pairs.len() != m {
                    return Err(Failure::input(format!(
                        "reduced candidate `{name}`: box has {} axes for {m} coordinates",
                        pairs.len()
                    )));
                }
                SampleBox::new(
                    pairs.iter().map(|p| p[0]).collect(),
                    pairs.iter().map(|p| p[1]).collect(),
                )
                .map_err(|e| Failure::input(format!("reduced candidate `{name}` box: {e}")))?
            }
            None => SampleBox::unit(m),
        };
        out.push(BuiltCandidate {
            name: name.clone(),
            section,
            expect: cc.expect,
            bounds,
            q0: cc.q0.clone(),
            t1: cc.t1,
            step: cc.step,
        });
    }
    Ok(out)
}

fn reduce_by_translation(
    p: &Prepared,
    ctx: &RunContext,
    sys: &ForcedHamiltonianSystem,
    ba: &crate::config::BuiltAction,
) -> Result<(RunReport, i32), Failure> {
    let built = &p.built;
    let (seed, tol) = effective(ctx, built);
    let opts = VerifyOptions {
        samples: DEFAULT_SAMPLES,
        seed,
        tol,
    };
    // The symmetry gate needs only the generators; the gauge blocks of the
    // complement are checked afterwards, so a broken symmetry is reported
    // even when the complement is badly aligned.
    let gate_box = phase_box(&built.bounds);
    let mut gen_checks = Vec::new();
    let mut broken: Option<String> = None;
    for (a, gen) in ba.generators.iter().enumerate() {
        let rep = invariance_report(sys, gen, &gate_box, &opts)
            .map_err(|e| Failure::run(e.to_string()))?;
        let ok = rep.invariant(tol);
        if !ok && broken.is_none() {
            let mut parts = Vec::new();
            if rep.lifted_h_sup > tol {
                parts.push(format!(
                    "nonzero Hamiltonian drift along the lift (sup {:.3e})",
                    rep.lifted_h_sup
                ));
            }
            if rep.force_pairing_sup > tol {
                parts.push(format!(
                    "nonzero force pairing (sup {:.3e})",
                    rep.force_pairing_sup
                ));
            }
            if rep.force_exterior_sup > tol {
                parts.push(format!(
                    "nonzero force exterior drift (sup {:.3e})",
                    rep.force_exterior_sup
                ));
            }
            broken = Some(format!(
                "generator {a} breaks the symmetry: {}",
                parts.join(", ")
            ));
        }
        gen_checks.push(GeneratorCheck {
            generator: a,
            lifted_h_sup: rep.lifted_h_sup,
            force_pairing_sup: rep.force_pairing_sup,
            force_exterior_sup: rep.force_exterior_sup,
            invariant: ok,
        });
    }
    if let Some(msg) = broken {
        let report = RunReport {
            command: "reduce".into(),
            system: built.name.clone(),
            config_hash: p.hash.clone(),
            seed,
            tol,
            candidates: Vec::new(),
            reduced: Some(ReducedBlock {
                invariance: Some(gen_checks),
                ..ReducedBlock::default()
            }),
            trajectories: Vec::new(),
            error: Some(msg),
            timing_ms: 0,
        };
        return Ok((report, 1));
    }

    let action = TranslationAction::new(&ba.generators, &ba.complement)
        .map_err(|e| Failure::input(format!("action table: {e}")))?;
    let red =
        reduce_translation(sys, &action, &ba.mu).map_err(|e| Failure::run(e.to_string()))?;
    let m = action.m();
    let cands = build_reduced_candidates(built, red.chart(), m, ctx.candidate.as_deref())?;
    if cands.is_empty() && ctx.candidate.is_some() {
        return Err(Failure::input(format!(
            "system `{}` has no reduced candidate named `{}`",
            built.name,
            ctx.candidate.as_deref().unwrap()
        )));
    }
    let rows: Vec<Result<CandidateReport, Failure>> = cands
        .par_iter()
        .map(|cand| {
            let bounds = override_box(ctx, &cand.bounds)?;
            let rep = verify_hamiltonian(&red, &cand.section, &bounds, &opts)?;
            Ok(candidate_row(cand, "reduced", &rep))
        })
        .collect();
    let mut candidates = Vec::with_capacity(rows.len());
    for r in rows {
        candidates.push(r?);
    }
    let all_matched = candidates.iter().all(|c| c.matched);
    let reduced = ReducedBlock {
        hamiltonian: red.hamiltonian().pretty(),
        force: pretty_all(red.force().components()),
        invariance: Some(gen_checks),
        ..ReducedBlock::default()
    };
    let report = RunReport {
        command: "reduce".into(),
        system: built.name.clone(),
        config_hash: p.hash.clone(),
        seed,
        tol,
        candidates,
        reduced: Some(reduced),
        trajectories: Vec::new(),
        error: None,
        timing_ms: 0,
    };
    Ok((report, if all_matched { 0 } else { 1 }))
}

fn reduce_constrained(
    p: &Prepared,
    ctx: &RunContext,
    sys: &CaplyginSystem,
) -> Result<(RunReport, i32), Failure> {
    let built = &p.built;
    let (seed, tol) = effective(ctx, built);
    let opts = VerifyOptions {
        samples: DEFAULT_SAMPLES,
        seed,
        tol,
    };
    let conn = sys.connection();
    let m = conn.base_dim();
    let nf = conn.fiber_dim();

    let inv = sys
        .invariance_sup(&built.bounds, 64, seed)
        .map_err(|e| Failure::run(e.to_string()))?;
    if inv > tol {
        let report = RunReport {
            command: "reduce".into(),
            system: built.name.clone(),
            config_hash: p.hash.clone(),
            seed,
            tol,
            candidates: Vec::new(),
            reduced: None,
            trajectories: Vec::new(),
            error: Some(format!(
                "the constrained Lagrangian depends on the fiber coordinates (sup {inv:.3e}); \
                 the quotient dynamics are not defined"
            )),
            timing_ms: 0,
        };
        return Ok((report, 1));
    }

    let red = sys.reduce().map_err(|e| Failure::run(e.to_string()))?;

    // Curvature components on a handful of sampled configuration points.
    let mut curvature = Vec::new();
    for q in built.bounds.sample(5, seed) {
        let mats = conn
            .curvature_at(&q)
            .map_err(|e| Failure::run(e.to_string()))?;
        let mut entries = Vec::new();
        for (i, mat) in mats.iter().enumerate().take(nf) {
            for a in 0..m {
                for b in (a + 1)..m {
                    entries.push((i, a, b, mat.get(a, b)));
                }
            }
        }
        curvature.push(CurvatureSample { point: q, entries });
    }

    // Sup of the gyroscopic force over the reduced velocity phase box.
    let alpha = red.lagrangian.force();
    let mut gyro_sup = 0.0_f64;
    for z in SampleBox::unit(2 * m).sample(64, seed) {
        let v = alpha.value(&z).map_err(|e| Failure::run(e.to_string()))?;
        for c in v {
            gyro_sup = gyro_sup.max(c.abs());
        }
    }

    let filter = ctx.candidate.as_deref();
    let picked: Vec<_> = built
        .candidates
        .iter()
        .filter(|c| filter.map_or(true, |f| c.name == f))
        .collect();
    let full_rows: Vec<Result<CandidateReport, Failure>> = picked
        .par_iter()
        .map(|cand| {
            let bounds = override_box(ctx, &cand.bounds)?;
            let rep = sys
                .nonholonomic_checks(&cand.section, &bounds, &opts)
                .map_err(|e| Failure::run(e.to_string()))?;
            let verdict = if rep.all_pass() {
                Verdict::Strict
            } else {
                Verdict::None
            };
            Ok(CandidateReport {
                name: cand.name.clone(),
                stage: "full",
                verdict: verdict.as_str().to_string(),
                closedness_sup: rep.ideal_membership_sup,
                residual_sup: rep.energy_annihilation_sup,
                weak_residual_sup: rep.horizontal_sup,
                expect: cand.expect.map(|e| e.as_str()),
                matched: cand.expect.map_or(true, |e| e.matches(verdict)),
                deviation: None,
                checks: Some(ConstraintChecks {
                    horizontal_sup: rep.horizontal_sup,
                    ideal_membership_sup: rep.ideal_membership_sup,
                    energy_annihilation_sup: rep.energy_annihilation_sup,
                }),
            })
        })
        .collect();
    let mut candidates = Vec::with_capacity(full_rows.len());
    for r in full_rows {
        candidates.push(r?);
    }

    let red_cands = build_reduced_candidates(built, red.hamiltonian.chart(), m, filter)?;
    let red_rows: Vec<Result<CandidateReport, Failure>> = red_cands
        .par_iter()
        .map(|cand| {
            let bounds = override_box(ctx, &cand.bounds)?;
            let rep = verify_hamiltonian(&red.hamiltonian, &cand.section, &bounds, &opts)?;
            Ok(candidate_row(cand, "reduced", &rep))
        })
        .collect();
    for r in red_rows {
        candidates.push(r?);
    }
    if candidates.is_empty() {
        return Err(Failure::input(match filter {
            Some(f) => format!("system `{}` has no candidate named `{f}`", built.name),
            None => format!("system `{}` declares no candidates", built.name),
        }));
    }

    let all_matched = candidates.iter().all(|c| c.matched);
    let reduced = ReducedBlock {
        hamiltonian: red.hamiltonian.hamiltonian().pretty(),
        force: pretty_all(red.hamiltonian.force().components()),
        lagrangian: red.lagrangian.lagrangian().pretty(),
        gyroscopic_force: pretty_all(alpha.components()),
        gyroscopic_sup: Some(gyro_sup),
        curvature: Some(curvature),
        invariance: None,
    };
    let report = RunReport {
        command: "reduce".into(),
        system: built.name.clone(),
        config_hash: p.hash.clone(),
        seed,
        tol,
        candidates,
        reduced: Some(reduced),
        trajectories: Vec::new(),
        error: None,
        timing_ms: 0,
    };
    Ok((report, if all_matched { 0 } else { 1 }))
}

/// Summaries for `mechforce list`: either the systems of one config file
/// or the whole builtin registry.
pub fn cmd_list(config_text: Option<String>, source: String, seed: u64) -> Result<ListReport, Failure> {
    let mut systems = Vec::new();
    let mut push_from = |doc: &str| -> Result<(), Failure> {
        let cfg = parse_document(doc)?;
        for (name, sc) in &cfg.systems {
            let summarize = |set: &std::collections::BTreeMap<String, crate::config::CandidateConfig>| {
                set.iter()
                    .map(|(cname, cc)| CandidateSummary {
                        name: cname.clone(),
                        expect: cc.expect.or(sc.expect).map(|e| e.as_str()),
                    })
                    .collect::<Vec<_>>()
            };
            systems.push(SystemSummary {
                name: name.clone(),
                kind: sc.kind.as_str(),
                coords: sc.coords.clone(),
                candidates: summarize(&sc.candidates),
                reduced_candidates: summarize(&sc.reduced_candidates),
            });
        }
        Ok(())
    };
    match config_text {
        Some(text) => push_from(&text)?,
        None => {
            for name in registry::BUILTIN_NAMES {
                let doc = registry::document(name, &registry::Overrides::default())?;
                push_from(&doc)?;
            }
        }
    }
    Ok(ListReport {
        command: "list".into(),
        source,
        systems,
        seed,
        timing_ms: 0,
    })
}
