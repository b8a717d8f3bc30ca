//! Verification of candidate generating sections against forced dynamics.
//!
//! A covector section `gamma` on the base is a *strict* solution when it is
//! closed and `d(H o gamma) + gamma*beta = 0`; dropping closedness but adding
//! the antisymmetric correction from `d gamma` contracted with the projected
//! dynamics gives the *weak* form. The tangent-side problem replaces `H` by
//! the energy, `beta` by the semibasic force, and the candidate by a vector
//! section whose fiber-derivative image plays the role of `gamma`; verdicts
//! on the two sides agree for regular Lagrangians. Families of strict
//! candidates indexed by as many parameters as base dimensions yield
//! conserved quantities by inverting the family map, which is done here with
//! a damped Newton iteration and implicit differentiation.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::chart::{Chart, FiberKind};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{base_chart, Section, SectionKind, VectorField};
use crate::hamiltonian::ForcedHamiltonianSystem;
use crate::lagrangian::ForcedLagrangianSystem;
use crate::linalg::Matrix;
use crate::sample::SampleBox;

/// Default sup-norm tolerance for verdicts.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Default number of quasi-random verification points.
pub const DEFAULT_SAMPLES: usize = 200;
/// Default sampling seed.
pub const DEFAULT_SEED: u64 = 0x00C0_FFEE;
/// Determinant floor for the family map to count as a local diffeomorphism.
pub const DIFFEO_TOL: f64 = 1e-10;

/// Outcome of a candidate verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Closed and the residual vanishes on the sample box.
    Strict,
    /// Only the corrected residual vanishes.
    Weak,
    /// Neither form holds.
    None,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Strict => "strict",
            Verdict::Weak => "weak",
            Verdict::None => "none",
        }
    }
}

impl core::fmt::Display for Verdict {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Knobs for sampled verification.
#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            samples: DEFAULT_SAMPLES,
            seed: DEFAULT_SEED,
            tol: DEFAULT_TOL,
        }
    }
}

/// Sampled sup-norms and the verdict they imply.
#[derive(Debug, Clone)]
pub struct HjReport {
    pub verdict: Verdict,
    pub closedness_sup: f64,
    pub residual_sup: f64,
    pub weak_residual_sup: f64,
    pub sample_lo: Vec<f64>,
    pub sample_hi: Vec<f64>,
    pub n_samples: usize,
    pub tol: f64,
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

fn sup(acc: f64, xs: &[f64]) -> f64 {
    xs.iter().fold(acc, |m, x| m.max(x.abs()))
}

fn finite_or(v: f64, context: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { context })
    }
}

/// A momentum-side candidate with its composite fields precomputed: the
/// Hamiltonian restricted to the graph and the force pulled back along it.
#[derive(Debug, Clone)]
pub struct PreparedCandidate {
    sys: ForcedHamiltonianSystem,
    gamma: Section,
    hg: ScalarField,
    pulled: Vec<ScalarField>,
    n: usize,
}

impl PreparedCandidate {
    pub fn new(sys: &ForcedHamiltonianSystem, gamma: &Section) -> Result<PreparedCandidate> {
        if gamma.kind() != SectionKind::Covector {
            return Err(Error::Invalid(
                "momentum-side candidates carry covector components".into(),
            ));
        }
        let base = base_chart(sys.chart())?;
        if !base.layout_matches(gamma.base()) {
            return Err(Error::ChartMismatch);
        }
        let n = sys.n();
        let mut inner = Vec::with_capacity(2 * n);
        for i in 0..n {
            inner.push(ScalarField::coordinate(gamma.base(), i)?);
        }
        inner.extend(gamma.components().iter().cloned());
        let hg = ScalarField::compose(sys.hamiltonian(), &inner)?;
        let pulled = sys.force().pull_back(gamma)?;
        Ok(PreparedCandidate {
            sys: sys.clone(),
            gamma: gamma.clone(),
            hg,
            pulled,
            n,
        })
    }

    pub fn section(&self) -> &Section {
        &self.gamma
    }

    /// Components of `d(H o gamma) + gamma*beta` at a base point.
    pub fn strict_residual(&self, q: &[f64]) -> Result<Vec<f64>> {
        let grad = self.hg.gradient(q)?;
        let mut out = Vec::with_capacity(self.n);
        for i in 0..self.n {
            out.push(grad[i] + self.pulled[i].value(q)?);
        }
        Ok(out)
    }

    /// `dH/dp` along the graph — the projected dynamics on the base.
    pub fn momentum_slope(&self, q: &[f64]) -> Result<Vec<f64>> {
        let z = self.gamma.graph_point(q)?;
        let grad = self.sys.hamiltonian().gradient(&z)?;
        Ok(grad[self.n..2 * self.n].to_vec())
    }

    /// Strict residual plus the contraction of the exterior derivative of
    /// the candidate with the projected dynamics.
    pub fn weak_residual(&self, q: &[f64]) -> Result<Vec<f64>> {
        let mut r = self.strict_residual(q)?;
        let x = self.momentum_slope(q)?;
        let j = self.gamma.jacobian(q)?;
        for i in 0..self.n {
            let mut t = 0.0;
            for (jj, xv) in x.iter().enumerate() {
                t += xv * (j.get(i, jj) - j.get(jj, i));
            }
            r[i] += t;
        }
        Ok(r)
    }

    /// Difference between the forced dynamics at the graph point and the
    /// tangent image of the projected dynamics; zero exactly when the
    /// dynamics is tangent to the graph.
    pub fn tangency_defect(&self, q: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        let z = self.gamma.graph_point(q)?;
        let full = self.sys.vector_field().eval(&z)?;
        let slope = self.momentum_slope(q)?;
        let j = self.gamma.jacobian(q)?;
        let lifted = j.matvec(&slope)?;
        let mut out = Vec::with_capacity(2 * n);
        for i in 0..n {
            out.push(full[i] - slope[i]);
        }
        for i in 0..n {
            out.push(full[n + i] - lifted[i]);
        }
        Ok(out)
    }

    /// Sampled verification over a box in the base.
    pub fn report(&self, bounds: &SampleBox, opts: &VerifyOptions) -> Result<HjReport> {
        if bounds.dim() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: bounds.dim(),
            });
        }
        let pts = bounds.sample(opts.samples, opts.seed);
        let mut closed = 0.0_f64;
        let mut strict = 0.0_f64;
        let mut weak = 0.0_f64;
        for q in &pts {
            let sr = self.strict_residual(q)?;
            let x = self.momentum_slope(q)?;
            let j = self.gamma.jacobian(q)?;
            let mut wr = sr.clone();
            for i in 0..self.n {
                for (jj, xv) in x.iter().enumerate() {
                    let anti = j.get(i, jj) - j.get(jj, i);
                    closed = closed.max(anti.abs());
                    wr[i] += xv * anti;
                }
            }
            strict = sup(strict, &sr);
            weak = sup(weak, &wr);
        }
        let closed = finite_or(closed, "closedness sampling")?;
        let strict = finite_or(strict, "residual sampling")?;
        let weak = finite_or(weak, "corrected residual sampling")?;
        Ok(HjReport {
            verdict: classify(closed, strict, weak, opts.tol),
            closedness_sup: closed,
            residual_sup: strict,
            weak_residual_sup: weak,
            sample_lo: bounds.lo().to_vec(),
            sample_hi: bounds.hi().to_vec(),
            n_samples: pts.len(),
            tol: opts.tol,
        })
    }
}

/// The base-space dynamics induced by a candidate: `q -> dH/dp (q, gamma(q))`.
pub fn projected_field(sys: &ForcedHamiltonianSystem, gamma: &Section) -> Result<VectorField> {
    let prep = PreparedCandidate::new(sys, gamma)?;
    let base = gamma.base().clone();
    Ok(VectorField::new(&base, move |q| prep.momentum_slope(q)))
}

/// Strict residual of `gamma` at one point.
pub fn hj_residual(
    sys: &ForcedHamiltonianSystem,
    gamma: &Section,
    q: &[f64],
) -> Result<Vec<f64>> {
    PreparedCandidate::new(sys, gamma)?.strict_residual(q)
}

/// Corrected residual of `gamma` at one point; coincides with
/// [`hj_residual`] when `gamma` is closed.
pub fn weak_hj_residual(
    sys: &ForcedHamiltonianSystem,
    gamma: &Section,
    q: &[f64],
) -> Result<Vec<f64>> {
    PreparedCandidate::new(sys, gamma)?.weak_residual(q)
}

/// Tangency defect of the forced dynamics against the graph of `gamma`.
pub fn tangency_check(
    sys: &ForcedHamiltonianSystem,
    gamma: &Section,
    q: &[f64],
) -> Result<Vec<f64>> {
    PreparedCandidate::new(sys, gamma)?.tangency_defect(q)
}

/// Sampled verification of a momentum-side candidate.
pub fn verify(
    sys: &ForcedHamiltonianSystem,
    gamma: &Section,
    bounds: &SampleBox,
    opts: &VerifyOptions,
) -> Result<HjReport> {
    PreparedCandidate::new(sys, gamma)?.report(bounds, opts)
}

/// A tangent-side candidate: a vector section together with the energy
/// restricted to its graph, the force along it, and its fiber-derivative
/// image (whose closedness is the relevant one).
#[derive(Debug, Clone)]
pub struct PreparedTangentCandidate {
    sys: ForcedLagrangianSystem,
    x: Section,
    eg: ScalarField,
    pulled: Vec<ScalarField>,
    leg: Section,
    n: usize,
}

impl PreparedTangentCandidate {
    pub fn new(sys: &ForcedLagrangianSystem, x: &Section) -> Result<PreparedTangentCandidate> {
        if x.kind() != SectionKind::Vector {
            return Err(Error::Invalid(
                "tangent-side candidates carry vector components".into(),
            ));
        }
        let base = base_chart(sys.chart())?;
        if !base.layout_matches(x.base()) {
            return Err(Error::ChartMismatch);
        }
        let n = sys.n();
        let mut inner = Vec::with_capacity(2 * n);
        for i in 0..n {
            inner.push(ScalarField::coordinate(x.base(), i)?);
        }
        inner.extend(x.components().iter().cloned());
        let eg = ScalarField::compose(&sys.energy()?, &inner)?;
        let pulled = sys.force().pull_back(x)?;
        let leg = sys.transported_section(x)?;
        Ok(PreparedTangentCandidate {
            sys: sys.clone(),
            x: x.clone(),
            eg,
            pulled,
            leg,
            n,
        })
    }

    pub fn section(&self) -> &Section {
        &self.x
    }

    /// The fiber-derivative image of the candidate.
    pub fn momentum_image(&self) -> &Section {
        &self.leg
    }

    /// Components of `d(E o X) + X*alpha` at a base point. Errors when the
    /// fiber Hessian degenerates on the graph.
    pub fn strict_residual(&self, q: &[f64]) -> Result<Vec<f64>> {
        self.guard_regular(q)?;
        let grad = self.eg.gradient(q)?;
        let mut out = Vec::with_capacity(self.n);
        for i in 0..self.n {
            out.push(grad[i] + self.pulled[i].value(q)?);
        }
        Ok(out)
    }

    fn guard_regular(&self, q: &[f64]) -> Result<()> {
        let z = self.x.graph_point(q)?;
        if self.sys.is_regular(&z)? {
            Ok(())
        } else {
            Err(Error::SingularMatrix {
                context: "fiber Hessian along the candidate graph",
            })
        }
    }

    /// Strict residual plus the exterior derivative of the momentum image
    /// contracted with the candidate itself.
    pub fn weak_residual(&self, q: &[f64]) -> Result<Vec<f64>> {
        let mut r = self.strict_residual(q)?;
        let xv = self.x.value(q)?;
        let j = self.leg.jacobian(q)?;
        for i in 0..self.n {
            let mut t = 0.0;
            for (jj, x) in xv.iter().enumerate() {
                t += x * (j.get(i, jj) - j.get(jj, i));
            }
            r[i] += t;
        }
        Ok(r)
    }

    /// Sampled verification over a box in the base.
    pub fn report(&self, bounds: &SampleBox, opts: &VerifyOptions) -> Result<HjReport> {
        if bounds.dim() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: bounds.dim(),
            });
        }
        let pts = bounds.sample(opts.samples, opts.seed);
        let mut closed = 0.0_f64;
        let mut strict = 0.0_f64;
        let mut weak = 0.0_f64;
        for q in &pts {
            let sr = self.strict_residual(q)?;
            let xv = self.x.value(q)?;
            let j = self.leg.jacobian(q)?;
            let mut wr = sr.clone();
            for i in 0..self.n {
                for (jj, x) in xv.iter().enumerate() {
                    let anti = j.get(i, jj) - j.get(jj, i);
                    closed = closed.max(anti.abs());
                    wr[i] += x * anti;
                }
            }
            strict = sup(strict, &sr);
            weak = sup(weak, &wr);
        }
        let closed = finite_or(closed, "closedness sampling")?;
        let strict = finite_or(strict, "residual sampling")?;
        let weak = finite_or(weak, "corrected residual sampling")?;
        Ok(HjReport {
            verdict: classify(closed, strict, weak, opts.tol),
            closedness_sup: closed,
            residual_sup: strict,
            weak_residual_sup: weak,
            sample_lo: bounds.lo().to_vec(),
            sample_hi: bounds.hi().to_vec(),
            n_samples: pts.len(),
            tol: opts.tol,
        })
    }
}

/// Strict tangent-side residual of `x` at one point.
pub fn lagrangian_hj_residual(
    sys: &ForcedLagrangianSystem,
    x: &Section,
    q: &[f64],
) -> Result<Vec<f64>> {
    PreparedTangentCandidate::new(sys, x)?.strict_residual(q)
}

/// Corrected tangent-side residual of `x` at one point.
pub fn lagrangian_weak_residual(
    sys: &ForcedLagrangianSystem,
    x: &Section,
    q: &[f64],
) -> Result<Vec<f64>> {
    PreparedTangentCandidate::new(sys, x)?.weak_residual(q)
}

/// Sampled verification of a tangent-side candidate.
pub fn verify_lagrangian(
    sys: &ForcedLagrangianSystem,
    x: &Section,
    bounds: &SampleBox,
    opts: &VerifyOptions,
) -> Result<HjReport> {
    PreparedTangentCandidate::new(sys, x)?.report(bounds, opts)
}

/// Verifies `x` on the tangent side and its fiber-derivative image on the
/// momentum side of the transported system, with identical sampling. The
/// two verdicts agree for regular systems.
pub fn legendre_transport_check(
    sys: &ForcedLagrangianSystem,
    x: &Section,
    bounds: &SampleBox,
    opts: &VerifyOptions,
) -> Result<(HjReport, HjReport)> {
    let prep = PreparedTangentCandidate::new(sys, x)?;
    let tangent = prep.report(bounds, opts)?;
    let ham = sys.to_hamiltonian()?;
    let momentum = verify(&ham, prep.momentum_image(), bounds, opts)?;
    Ok((tangent, momentum))
}

/// A family of covector candidates `gamma(q; lambda)` with as many
/// parameters as base dimensions, stored over a doubled configuration chart
/// whose first half is `q` and second half is `lambda`.
#[derive(Debug, Clone)]
pub struct CompleteSolution {
    family: Arc<Chart>,
    base: Arc<Chart>,
    comps: Vec<ScalarField>,
    lambda_box: SampleBox,
    n: usize,
}

/// Aggregate outcome of [`CompleteSolution::check`].
#[derive(Debug, Clone)]
pub struct CompleteCheck {
    /// Every sampled member passed the strict verdict.
    pub all_strict: bool,
    pub worst_residual_sup: f64,
    pub worst_closedness_sup: f64,
    /// Smallest `|det d gamma / d lambda|` seen; compare with [`DIFFEO_TOL`].
    pub min_jacobian_det: f64,
    /// Sup-norm error of inverting the family at sampled graph points.
    pub roundtrip_sup: f64,
}

impl CompleteSolution {
    /// Builds the doubled chart `(q..., lambda...)` for a family over the
    /// given configuration chart.
    pub fn family_chart(base: &Chart, lambda_names: &[&str]) -> Result<Chart> {
        if base.fiber_kind() != FiberKind::None {
            return Err(Error::Invalid(
                "families extend a configuration chart".into(),
            ));
        }
        let mut names = base.base_names().to_vec();
        names.extend(lambda_names.iter().map(|s| alloc::string::String::from(*s)));
        Chart::config(names, base.params().to_vec())
    }

    pub fn new(
        family: &Arc<Chart>,
        comps: Vec<ScalarField>,
        lambda_box: SampleBox,
    ) -> Result<CompleteSolution> {
        if family.fiber_kind() != FiberKind::None {
            return Err(Error::Invalid(
                "family charts are configuration charts with q then lambda".into(),
            ));
        }
        let d = family.n();
        if d % 2 != 0 {
            return Err(Error::Invalid(
                "family charts pair each base coordinate with one parameter".into(),
            ));
        }
        let n = d / 2;
        if comps.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: comps.len(),
            });
        }
        if lambda_box.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: lambda_box.dim(),
            });
        }
        for c in &comps {
            if !c.chart().layout_matches(family) {
                return Err(Error::ChartMismatch);
            }
        }
        let base = Arc::new(Chart::config(
            family.base_names()[..n].to_vec(),
            family.params().to_vec(),
        )?);
        Ok(CompleteSolution {
            family: family.clone(),
            base,
            comps,
            lambda_box,
            n,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn family_chart_ref(&self) -> &Arc<Chart> {
        &self.family
    }

    pub fn base(&self) -> &Arc<Chart> {
        &self.base
    }

    pub fn lambda_box(&self) -> &SampleBox {
        &self.lambda_box
    }

    fn joined(&self, q: &[f64], lambda: &[f64]) -> Result<Vec<f64>> {
        if q.len() != self.n || lambda.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: if q.len() != self.n { q.len() } else { lambda.len() },
            });
        }
        let mut z = Vec::with_capacity(2 * self.n);
        z.extend_from_slice(q);
        z.extend_from_slice(lambda);
        Ok(z)
    }

    /// Component values `gamma(q; lambda)`.
    pub fn value(&self, q: &[f64], lambda: &[f64]) -> Result<Vec<f64>> {
        let z = self.joined(q, lambda)?;
        self.comps.iter().map(|c| c.value(&z)).collect()
    }

    /// The member section at a fixed parameter value.
    pub fn section_at(&self, lambda: &[f64]) -> Result<Section> {
        if lambda.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: lambda.len(),
            });
        }
        let mut inner = Vec::with_capacity(2 * self.n);
        for i in 0..self.n {
            inner.push(ScalarField::coordinate(&self.base, i)?);
        }
        for l in lambda {
            inner.push(ScalarField::constant(&self.base, *l)?);
        }
        let comps = self
            .comps
            .iter()
            .map(|c| ScalarField::compose(c, &inner))
            .collect::<Result<Vec<_>>>()?;
        Section::covector(&self.base, comps)
    }

    /// `A[i][a] = d gamma_i / d lambda_a`.
    pub fn lambda_jacobian(&self, q: &[f64], lambda: &[f64]) -> Result<Matrix> {
        let z = self.joined(q, lambda)?;
        let mut a = Matrix::zeros(self.n, self.n);
        for (i, c) in self.comps.iter().enumerate() {
            let g = c.gradient(&z)?;
            for j in 0..self.n {
                a.set(i, j, g[self.n + j]);
            }
        }
        Ok(a)
    }

    /// Determinant of the parameter Jacobian; also the determinant of the
    /// full family map `(q, lambda) -> (q, gamma)` by block triangularity.
    pub fn jacobian_det(&self, q: &[f64], lambda: &[f64]) -> Result<f64> {
        self.lambda_jacobian(q, lambda)?.det()
    }

    /// Solves `gamma(q; lambda) = p` for `lambda` by damped Newton,
    /// starting from `guess` or the parameter-box center.
    pub fn solve_lambda(&self, q: &[f64], p: &[f64], guess: Option<&[f64]>) -> Result<Vec<f64>> {
        if p.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: p.len(),
            });
        }
        let mut lam = match guess {
            Some(g) => g.to_vec(),
            None => self.lambda_box.center(),
        };
        let resid = |lam: &[f64]| -> Result<Vec<f64>> {
            let v = self.value(q, lam)?;
            Ok(v.iter().zip(p).map(|(a, b)| a - b).collect())
        };
        let norm = |r: &[f64]| r.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let mut r = resid(&lam)?;
        let mut rn = norm(&r);
        for iter in 0..60u32 {
            if rn <= 1e-12 {
                return Ok(lam);
            }
            if !rn.is_finite() {
                return Err(Error::NonFinite {
                    context: "family inversion residual",
                });
            }
            let a = self.lambda_jacobian(q, &lam)?;
            let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
            let delta = a.solve(&rhs)?;
            let mut t = 1.0_f64;
            let mut moved = false;
            for _ in 0..40 {
                let cand: Vec<f64> = lam.iter().zip(&delta).map(|(l, d)| l + t * d).collect();
                let rc = resid(&cand)?;
                let rcn = norm(&rc);
                if rcn <= 1e-12 || rcn < rn * (1.0 - 1e-4 * t) {
                    lam = cand;
                    r = rc;
                    rn = rcn;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                return Err(Error::NewtonDiverged {
                    context: "family inversion stalled",
                    residual: rn,
                    iterations: iter,
                });
            }
        }
        Err(Error::NewtonDiverged {
            context: "family inversion",
            residual: rn,
            iterations: 60,
        })
    }

    /// Conserved-quantity values at a phase point: the parameter vector the
    /// family maps to that point.
    pub fn constants(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != 2 * self.n {
            return Err(Error::DimensionMismatch {
                expected: 2 * self.n,
                got: z.len(),
            });
        }
        self.solve_lambda(&z[..self.n], &z[self.n..], None)
    }

    /// Phase gradient of each conserved quantity, `n x 2n`, by implicit
    /// differentiation of `gamma(q; lambda(q, p)) = p`.
    pub fn constant_jacobian(&self, z: &[f64]) -> Result<Matrix> {
        let n = self.n;
        let lam = self.constants(z)?;
        let q = &z[..n];
        let joined = self.joined(q, &lam)?;
        let a = self.lambda_jacobian(q, &lam)?;
        let lu = a.lu()?;
        let mut out = Matrix::zeros(n, 2 * n);
        // d lambda / d p = A^{-1}: columns are solves against unit vectors.
        let mut jq = Matrix::zeros(n, n);
        for (i, c) in self.comps.iter().enumerate() {
            let g = c.gradient(&joined)?;
            for j in 0..n {
                jq.set(i, j, g[j]);
            }
        }
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = lu.solve(&e)?;
            for i in 0..n {
                out.set(i, n + j, col[i]);
            }
            let qcol: Vec<f64> = (0..n).map(|i| jq.get(i, j)).collect();
            let col = lu.solve(&qcol)?;
            for i in 0..n {
                out.set(i, j, -col[i]);
            }
        }
        Ok(out)
    }

    /// Matrix of canonical brackets between the conserved quantities; zero
    /// for a genuine complete family.
    pub fn involution_matrix(&self, z: &[f64]) -> Result<Matrix> {
        let n = self.n;
        let g = self.constant_jacobian(z)?;
        let mut out = Matrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                let mut s = 0.0;
                for i in 0..n {
                    s += g.get(a, i) * g.get(b, n + i) - g.get(a, n + i) * g.get(b, i);
                }
                out.set(a, b, s);
            }
        }
        Ok(out)
    }

    /// Rate of each conserved quantity along the forced dynamics; zero for
    /// a genuine complete family.
    pub fn conservation_rates(
        &self,
        sys: &ForcedHamiltonianSystem,
        z: &[f64],
    ) -> Result<Vec<f64>> {
        let n = self.n;
        let g = self.constant_jacobian(z)?;
        let xv = sys.vector_field().eval(z)?;
        let mut out = Vec::with_capacity(n);
        for a in 0..n {
            let mut s = 0.0;
            for (j, x) in xv.iter().enumerate() {
                s += g.get(a, j) * x;
            }
            out.push(s);
        }
        Ok(out)
    }

    /// Verifies sampled members strictly, measures the worst parameter
    /// Jacobian, and round-trips the inversion at sampled graph points.
    pub fn check(
        &self,
        sys: &ForcedHamiltonianSystem,
        bounds: &SampleBox,
        opts: &VerifyOptions,
        lambda_samples: usize,
    ) -> Result<CompleteCheck> {
        let lams = self.lambda_box.sample(lambda_samples, opts.seed ^ 0x9E37_79B9_7F4A_7C15);
        let qs = bounds.sample(opts.samples.min(32).max(8), opts.seed.wrapping_add(1));
        let mut all_strict = true;
        let mut worst_res = 0.0_f64;
        let mut worst_closed = 0.0_f64;
        let mut min_det = f64::INFINITY;
        let mut roundtrip = 0.0_f64;
        for lam in &lams {
            let sec = self.section_at(lam)?;
            let rep = verify(sys, &sec, bounds, opts)?;
            all_strict &= rep.verdict == Verdict::Strict;
            worst_res = worst_res.max(rep.residual_sup);
            worst_closed = worst_closed.max(rep.closedness_sup);
            for q in &qs {
                min_det = min_det.min(self.jacobian_det(q, lam)?.abs());
                let p = self.value(q, lam)?;
                let back = self.solve_lambda(q, &p, Some(lam))?;
                for (a, b) in back.iter().zip(lam) {
                    roundtrip = roundtrip.max((a - b).abs());
                }
            }
        }
        Ok(CompleteCheck {
            all_strict,
            worst_residual_sup: worst_res,
            worst_closedness_sup: worst_closed,
            min_jacobian_det: min_det,
            roundtrip_sup: roundtrip,
        })
    }
}

/// Sequential evaluator for the conserved quantities of a family, reusing
/// the previous solution as the Newton start and falling back to a cold
/// start when that stalls.
#[derive(Debug)]
pub struct Inverter<'a> {
    cs: &'a CompleteSolution,
    last: Option<Vec<f64>>,
}

impl<'a> Inverter<'a> {
    pub fn new(cs: &'a CompleteSolution) -> Inverter<'a> {
        Inverter { cs, last: None }
    }

    pub fn constants(&mut self, z: &[f64]) -> Result<Vec<f64>> {
        let n = self.cs.n();
        if z.len() != 2 * n {
            return Err(Error::DimensionMismatch {
                expected: 2 * n,
                got: z.len(),
            });
        }
        let (q, p) = (&z[..n], &z[n..]);
        let lam = match self.cs.solve_lambda(q, p, self.last.as_deref()) {
            Ok(l) => l,
            Err(_) if self.last.is_some() => self.cs.solve_lambda(q, p, None)?,
            Err(e) => return Err(e),
        };
        self.last = Some(lam.clone());
        Ok(lam)
    }
}
