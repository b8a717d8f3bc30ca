//! Symmetry machinery on both sides of the fiber derivative: complete
//! lifts and momentum functions for translation groups acting on a flat
//! configuration space, invariance diagnostics, reduction of a forced
//! momentum-side system by an abelian translation action together with the
//! reconstruction of candidates from the quotient, and constrained systems
//! carried by an Ehresmann connection (curvature, reduced forced Lagrangian
//! with its gyroscopic force, horizontal lifts, and the constrained
//! generating-section checks).

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::chart::{Chart, FiberKind};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{base_chart, Section, SectionKind, SemibasicForm, VectorField};
use crate::hamiltonian::ForcedHamiltonianSystem;
use crate::hj::VerifyOptions;
use crate::lagrangian::{tangent_chart, ForcedLagrangianSystem};
use crate::linalg::Matrix;
use crate::sample::SampleBox;

/// Linear-independence threshold for action and connection data.
const RANK_TOL: f64 = 1e-12;

/// The momentum function of a constant translation generator:
/// `J(q, p) = xi^i p_i` on a momentum chart.
pub fn momentum_function(chart: &Arc<Chart>, xi: &[f64]) -> Result<ScalarField> {
    if chart.fiber_kind() != FiberKind::Momenta {
        return Err(Error::Invalid(
            "momentum functions live on a momentum chart".into(),
        ));
    }
    let n = chart.n();
    if xi.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: xi.len(),
        });
    }
    let mut parts = Vec::with_capacity(n);
    for (i, c) in xi.iter().enumerate() {
        if *c != 0.0 {
            parts.push((*c, ScalarField::coordinate(chart, n + i)?));
        }
    }
    if parts.is_empty() {
        return ScalarField::constant(chart, 0.0);
    }
    ScalarField::weighted_sum(parts)
}

/// Cotangent lift of a base vector section:
/// `X^c = X^i d/dq^i - p_j dX^j/dq^i d/dp_i` on the given momentum chart.
pub fn complete_lift(phase: &Arc<Chart>, x: &Section) -> Result<VectorField> {
    if phase.fiber_kind() != FiberKind::Momenta {
        return Err(Error::Invalid(
            "complete lifts land on a momentum chart".into(),
        ));
    }
    if x.kind() != SectionKind::Vector {
        return Err(Error::Invalid("complete lifts start from vector sections".into()));
    }
    let base = base_chart(phase)?;
    if !base.layout_matches(x.base()) {
        return Err(Error::ChartMismatch);
    }
    let n = phase.n();
    let x = x.clone();
    Ok(VectorField::new(phase, move |z| {
        let q = &z[..n];
        let p = &z[n..2 * n];
        let xv = x.value(q)?;
        let j = x.jacobian(q)?;
        let mut out = Vec::with_capacity(2 * n);
        out.extend_from_slice(&xv);
        for i in 0..n {
            let mut s = 0.0;
            for (jj, pj) in p.iter().enumerate() {
                s -= pj * j.get(jj, i);
            }
            out.push(s);
        }
        Ok(out)
    }))
}

/// Sampled sup-norms of the three invariance obstructions of a constant
/// generator: the lifted derivative of the Hamiltonian, the pairing of the
/// force with the lift, and the contraction of the force's exterior
/// derivative with the lift.
#[derive(Debug, Clone)]
pub struct InvarianceReport {
    pub lifted_h_sup: f64,
    pub force_pairing_sup: f64,
    pub force_exterior_sup: f64,
}

impl InvarianceReport {
    /// The momentum function is conserved along the forced dynamics.
    pub fn conserves_momentum(&self, tol: f64) -> bool {
        self.lifted_h_sup <= tol && self.force_pairing_sup <= tol
    }

    /// All three obstructions vanish, as reduction requires.
    pub fn invariant(&self, tol: f64) -> bool {
        self.conserves_momentum(tol) && self.force_exterior_sup <= tol
    }
}

/// Measures the invariance obstructions of `sys` under the constant
/// generator `xi` over a phase-space sample box.
pub fn invariance_report(
    sys: &ForcedHamiltonianSystem,
    xi: &[f64],
    bounds: &SampleBox,
    opts: &VerifyOptions,
) -> Result<InvarianceReport> {
    let n = sys.n();
    if xi.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: xi.len(),
        });
    }
    if bounds.dim() != 2 * n {
        return Err(Error::DimensionMismatch {
            expected: 2 * n,
            got: bounds.dim(),
        });
    }
    let mut h_sup = 0.0_f64;
    let mut pair_sup = 0.0_f64;
    let mut ext_sup = 0.0_f64;
    for z in bounds.sample(opts.samples, opts.seed) {
        let gh = sys.hamiltonian().gradient(&z)?;
        let mut s = 0.0;
        for i in 0..n {
            s += xi[i] * gh[i];
        }
        h_sup = h_sup.max(s.abs());

        let b = sys.force().value(&z)?;
        let mut s = 0.0;
        for i in 0..n {
            s += xi[i] * b[i];
        }
        pair_sup = pair_sup.max(s.abs());

        // Exterior-derivative contraction for a lift with no momentum part:
        // base components sum xi^j (db_l/dq^j - db_j/dq^l), fiber components
        // -sum xi^j db_j/dp_l.
        let grads = (0..n)
            .map(|j| sys.force().component(j).gradient(&z))
            .collect::<Result<Vec<_>>>()?;
        for l in 0..n {
            let mut dq = 0.0;
            let mut dp = 0.0;
            for j in 0..n {
                dq += xi[j] * (grads[l][j] - grads[j][l]);
                dp -= xi[j] * grads[j][n + l];
            }
            ext_sup = ext_sup.max(dq.abs()).max(dp.abs());
        }
    }
    Ok(InvarianceReport {
        lifted_h_sup: h_sup,
        force_pairing_sup: pair_sup,
        force_exterior_sup: ext_sup,
    })
}

/// An abelian group of translations on a flat configuration space, given by
/// constant generator rows plus complement rows that pick the quotient
/// coordinates. The complement rows must annihilate the generators, the
/// leading complement block and the trailing generator block must both be
/// invertible, and the stacked matrix must be a basis.
#[derive(Debug, Clone)]
pub struct TranslationAction {
    gens: Vec<Vec<f64>>,
    comp: Vec<Vec<f64>>,
    n: usize,
    sinv: Matrix,
    minv: Option<Matrix>,
    einv: Option<Matrix>,
}

impl TranslationAction {
    pub fn new(generators: &[Vec<f64>], complement: &[Vec<f64>]) -> Result<TranslationAction> {
        let m = complement.len();
        if m == 0 {
            return Err(Error::Invalid(
                "at least one quotient coordinate is required".into(),
            ));
        }
        let n = complement[0].len();
        let k = generators.len();
        if k + m != n {
            return Err(Error::Invalid(format!(
                "{k} generators and {m} complement rows do not fill dimension {n}"
            )));
        }
        for row in generators.iter().chain(complement) {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
        }
        let mut rows = generators.to_vec();
        rows.extend_from_slice(complement);
        let stacked = Matrix::from_rows(&rows)?;
        let det = stacked.det()?;
        if det.abs() <= RANK_TOL {
            return Err(Error::Invalid(
                "generators and complement rows must form a basis".into(),
            ));
        }
        for (a, g) in generators.iter().enumerate() {
            for (b, c) in complement.iter().enumerate() {
                let dot: f64 = g.iter().zip(c).map(|(x, y)| x * y).sum();
                if dot.abs() > RANK_TOL {
                    return Err(Error::Invalid(format!(
                        "complement row {b} does not annihilate generator {a}; \
                         quotient coordinates must be invariant under the action"
                    )));
                }
            }
        }
        let sinv = stacked.inverse()?;
        let minv = {
            let mut mm = Matrix::zeros(m, m);
            for (b, row) in complement.iter().enumerate() {
                for i in 0..m {
                    mm.set(b, i, row[i]);
                }
            }
            match mm.inverse() {
                Ok(inv) => Some(inv),
                Err(_) => {
                    return Err(Error::Invalid(
                        "the leading block of the complement is singular; \
                         reorder coordinates so the quotient directions come first"
                            .into(),
                    ))
                }
            }
        };
        let einv = if k == 0 {
            None
        } else {
            let mut ee = Matrix::zeros(k, k);
            for (a, row) in generators.iter().enumerate() {
                for c in 0..k {
                    ee.set(a, c, row[m + c]);
                }
            }
            match ee.inverse() {
                Ok(inv) => Some(inv),
                Err(_) => {
                    return Err(Error::Invalid(
                        "the trailing block of the generators is singular; \
                         reorder coordinates so the group directions come last"
                            .into(),
                    ))
                }
            }
        };
        Ok(TranslationAction {
            gens: generators.to_vec(),
            comp: complement.to_vec(),
            n,
            sinv,
            minv,
            einv,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of generators.
    pub fn k(&self) -> usize {
        self.gens.len()
    }

    /// Quotient dimension.
    pub fn m(&self) -> usize {
        self.comp.len()
    }

    pub fn generator(&self, a: usize) -> &[f64] {
        &self.gens[a]
    }

    pub fn complement_row(&self, b: usize) -> &[f64] {
        &self.comp[b]
    }

    /// Quotient coordinates of a configuration point.
    pub fn project(&self, q: &[f64]) -> Result<Vec<f64>> {
        if q.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: q.len(),
            });
        }
        Ok(self
            .comp
            .iter()
            .map(|row| row.iter().zip(q).map(|(c, x)| c * x).sum())
            .collect())
    }
}

fn coordinate_combo(chart: &Arc<Chart>, weights: &[(f64, usize)]) -> Result<ScalarField> {
    let mut parts = Vec::new();
    for (w, idx) in weights {
        if *w != 0.0 {
            parts.push((*w, ScalarField::coordinate(chart, *idx)?));
        }
    }
    if parts.is_empty() {
        return ScalarField::constant(chart, 0.0);
    }
    ScalarField::weighted_sum(parts)
}

/// Builds the gauge embedding of the reduced phase space into the full one:
/// `2n` fields on the reduced chart giving `(q*, p*)` with zero group phase
/// and momentum-map value pinned to the `mu` parameters.
fn embedding_fields(
    action: &TranslationAction,
    reduced: &Arc<Chart>,
) -> Result<Vec<ScalarField>> {
    let n = action.n();
    let k = action.k();
    let m = action.m();
    let mut fields = Vec::with_capacity(2 * n);
    // q*_j = sum_b Sinv[j][k + b] y_b.
    for j in 0..n {
        let weights: Vec<(f64, usize)> =
            (0..m).map(|b| (action.sinv.get(j, k + b), b)).collect();
        fields.push(coordinate_combo(reduced, &weights)?);
    }
    // First m momenta: p*_i = sum_b C[b][i] rho_b.
    let mut leading = Vec::with_capacity(m);
    for i in 0..m {
        let weights: Vec<(f64, usize)> =
            (0..m).map(|b| (action.comp[b][i], m + b)).collect();
        leading.push(coordinate_combo(reduced, &weights)?);
    }
    fields.extend(leading.iter().cloned());
    // Trailing momenta solve the momentum constraint:
    // p*_{m+a} = sum_c Einv[a][c] (mu_c - sum_i G[c][i] p*_i).
    if k > 0 {
        let einv = action.einv.as_ref().expect("generator block inverse");
        for a in 0..k {
            let mut parts = Vec::new();
            for c in 0..k {
                let w = einv.get(a, c);
                if w != 0.0 {
                    let mu = ScalarField::parse(reduced, &format!("mu{}", c + 1))?;
                    parts.push((w, mu));
                }
                for i in 0..m {
                    let wi = -w * action.gens[c][i];
                    if wi != 0.0 {
                        parts.push((wi, leading[i].clone()));
                    }
                }
            }
            if parts.is_empty() {
                fields.push(ScalarField::constant(reduced, 0.0)?);
            } else {
                fields.push(ScalarField::weighted_sum(parts)?);
            }
        }
    }
    Ok(fields)
}

/// Reduces a forced momentum-side system by a translation action at the
/// momentum-map level `mu`, after checking invariance under every
/// generator. The reduced chart uses standard names with one `mu`
/// parameter per generator.
pub fn reduce_translation(
    sys: &ForcedHamiltonianSystem,
    action: &TranslationAction,
    mu: &[f64],
) -> Result<ForcedHamiltonianSystem> {
    let n = sys.n();
    let k = action.k();
    let m = action.m();
    if action.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: action.n(),
        });
    }
    if mu.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: mu.len(),
        });
    }
    let gate = VerifyOptions {
        samples: 64,
        ..VerifyOptions::default()
    };
    let bounds = SampleBox::unit(2 * n);
    for a in 0..k {
        let rep = invariance_report(sys, action.generator(a), &bounds, &gate)?;
        if !rep.invariant(gate.tol) {
            return Err(Error::Invalid(format!(
                "system is not invariant under generator {a}: \
                 lifted derivative {:.3e}, force pairing {:.3e}, \
                 force exterior {:.3e}",
                rep.lifted_h_sup, rep.force_pairing_sup, rep.force_exterior_sup
            )));
        }
    }
    let mut params = sys.chart().params().to_vec();
    for (c, v) in mu.iter().enumerate() {
        let name = format!("mu{}", c + 1);
        match params.iter().find(|(n, _)| *n == name) {
            None => params.push((name, *v)),
            Some((_, existing)) if *existing == *v => {}
            Some((_, existing)) => {
                return Err(Error::Invalid(format!(
                    "parameter {name} already has value {existing}, which disagrees \
                     with the requested momentum level {v}"
                )))
            }
        }
    }
    let reduced = Arc::new(Chart::standard_momenta(m, params)?);
    let embed = embedding_fields(action, &reduced)?;
    let h = ScalarField::compose(sys.hamiltonian(), &embed)?;
    let minv = action.minv.as_ref().expect("complement block inverse");
    let mut comps = Vec::with_capacity(m);
    for b in 0..m {
        let mut parts = Vec::new();
        for bp in 0..m {
            // Transpose of the inverse leading block.
            let w = minv.get(bp, b);
            if w != 0.0 {
                parts.push((
                    w,
                    ScalarField::compose(sys.force().component(bp), &embed)?,
                ));
            }
        }
        if parts.is_empty() {
            comps.push(ScalarField::constant(&reduced, 0.0)?);
        } else {
            comps.push(ScalarField::weighted_sum(parts)?);
        }
    }
    let r = SemibasicForm::new(&reduced, comps)?;
    ForcedHamiltonianSystem::new(&reduced, h, r)
}

/// Rebuilds a full-space covector section from a quotient candidate: the
/// leading components carry the candidate pulled back along the projection,
/// the trailing ones are fixed by the momentum-map values `mu`. Candidate
/// components may reference parameters of the target chart.
pub fn reconstruct_solution(
    action: &TranslationAction,
    mu: &[f64],
    gamma_tilde: &Section,
    base: &Arc<Chart>,
) -> Result<Section> {
    let n = action.n();
    let k = action.k();
    let m = action.m();
    if base.fiber_kind() != FiberKind::None || base.n() != n {
        return Err(Error::Invalid(
            "reconstruction targets the full configuration chart".into(),
        ));
    }
    if gamma_tilde.kind() != SectionKind::Covector || gamma_tilde.n() != m {
        return Err(Error::Invalid(
            "the quotient candidate must be a covector section of the quotient dimension".into(),
        ));
    }
    if mu.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: mu.len(),
        });
    }
    // y_b(q) = sum_j C[b][j] q^j, then g_b = gamma_tilde_b(y(q)).
    let mut inner = Vec::with_capacity(m);
    for b in 0..m {
        let weights: Vec<(f64, usize)> = (0..n).map(|j| (action.comp[b][j], j)).collect();
        inner.push(coordinate_combo(base, &weights)?);
    }
    let g = gamma_tilde
        .components()
        .iter()
        .map(|c| ScalarField::compose(c, &inner))
        .collect::<Result<Vec<_>>>()?;
    let mut leading = Vec::with_capacity(m);
    for i in 0..m {
        let mut parts = Vec::new();
        for (b, gb) in g.iter().enumerate() {
            let w = action.comp[b][i];
            if w != 0.0 {
                parts.push((w, gb.clone()));
            }
        }
        if parts.is_empty() {
            leading.push(ScalarField::constant(base, 0.0)?);
        } else {
            leading.push(ScalarField::weighted_sum(parts)?);
        }
    }
    let mut comps = leading.clone();
    if k > 0 {
        let einv = action.einv.as_ref().expect("generator block inverse");
        for a in 0..k {
            let mut shift = 0.0;
            let mut parts = Vec::new();
            for c in 0..k {
                let w = einv.get(a, c);
                shift += w * mu[c];
                for i in 0..m {
                    let wi = -w * action.gens[c][i];
                    if wi != 0.0 {
                        parts.push((wi, leading[i].clone()));
                    }
                }
            }
            parts.push((1.0, ScalarField::constant(base, shift)?));
            comps.push(ScalarField::weighted_sum(parts)?);
        }
    }
    Section::covector(base, comps)
}

/// Connection data on a configuration chart whose leading `m` coordinates
/// form the base of the bundle and whose remaining coordinates are the
/// bundle fiber; `gamma[i][a]` are the Christoffel components coupling
/// fiber direction `i` to base direction `a`.
#[derive(Debug, Clone)]
pub struct EhresmannConnection {
    chart: Arc<Chart>,
    m: usize,
    gamma: Vec<Vec<ScalarField>>,
}

impl EhresmannConnection {
    pub fn new(
        chart: &Arc<Chart>,
        m: usize,
        gamma: Vec<Vec<ScalarField>>,
    ) -> Result<EhresmannConnection> {
        if chart.fiber_kind() != FiberKind::None {
            return Err(Error::Invalid(
                "connections live on a configuration chart".into(),
            ));
        }
        let total = chart.n();
        if m == 0 || m >= total {
            return Err(Error::Invalid(format!(
                "base dimension {m} must be strictly between 0 and {total}"
            )));
        }
        let nf = total - m;
        if gamma.len() != nf {
            return Err(Error::DimensionMismatch {
                expected: nf,
                got: gamma.len(),
            });
        }
        let mut rows = Vec::with_capacity(nf);
        for row in gamma {
            if row.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: row.len(),
                });
            }
            let mut fixed = Vec::with_capacity(m);
            for f in row {
                fixed.push(f.with_chart(chart)?);
            }
            rows.push(fixed);
        }
        Ok(EhresmannConnection {
            chart: chart.clone(),
            m,
            gamma: rows,
        })
    }

    /// Connection with all Christoffel components parsed from sources,
    /// rows indexed by fiber direction.
    pub fn parse(chart: &Arc<Chart>, m: usize, srcs: &[Vec<&str>]) -> Result<EhresmannConnection> {
        let gamma = srcs
            .iter()
            .map(|row| {
                row.iter()
                    .map(|s| ScalarField::parse(chart, s))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        EhresmannConnection::new(chart, m, gamma)
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn base_dim(&self) -> usize {
        self.m
    }

    pub fn fiber_dim(&self) -> usize {
        self.chart.n() - self.m
    }

    pub fn christoffel(&self, i: usize, a: usize) -> &ScalarField {
        &self.gamma[i][a]
    }

    /// The curvature component field
    /// `R^i_ab = dG^i_a/dq^b - dG^i_b/dq^a + G^j_a dG^i_b/dq^j - G^j_b dG^i_a/dq^j`
    /// (fiber indices `j` summed), antisymmetric in `(a, b)`.
    pub fn curvature_field(&self, i: usize, a: usize, b: usize) -> Result<ScalarField> {
        let m = self.m;
        let nf = self.fiber_dim();
        let g = &self.gamma;
        let mut parts = vec![
            (1.0, g[i][a].partial(b)?),
            (-1.0, g[i][b].partial(a)?),
        ];
        for j in 0..nf {
            parts.push((1.0, g[j][a].mul(&g[i][b].partial(m + j)?)?));
            parts.push((-1.0, g[j][b].mul(&g[i][a].partial(m + j)?)?));
        }
        ScalarField::weighted_sum(parts)
    }

    /// All curvature components at one point: one antisymmetric `m x m`
    /// matrix per fiber direction.
    pub fn curvature_at(&self, q: &[f64]) -> Result<Vec<Matrix>> {
        let m = self.m;
        let nf = self.fiber_dim();
        let mut out = Vec::with_capacity(nf);
        for i in 0..nf {
            let mut mat = Matrix::zeros(m, m);
            for a in 0..m {
                for b in 0..m {
                    if a != b {
                        mat.set(a, b, self.curvature_field(i, a, b)?.value(q)?);
                    }
                }
            }
            out.push(mat);
        }
        Ok(out)
    }

    /// The quotient configuration chart spanned by the leading coordinates.
    pub fn reduced_config(&self) -> Result<Arc<Chart>> {
        Ok(Arc::new(Chart::config(
            self.chart.base_names()[..self.m].to_vec(),
            self.chart.params().to_vec(),
        )?))
    }

    /// Horizontal basis vector `H_a` at a point: `e_a - G^i_a e_{m+i}`.
    pub fn horizontal_vector(&self, a: usize, q: &[f64]) -> Result<Vec<f64>> {
        let total = self.chart.n();
        let mut v = vec![0.0; total];
        v[a] = 1.0;
        for i in 0..self.fiber_dim() {
            v[self.m + i] = -self.gamma[i][a].value(q)?;
        }
        Ok(v)
    }
}

/// Lifts a vector section on the quotient to the horizontal vector section
/// on the full space: base components unchanged, fiber components
/// `-G^i_a Y^a`.
pub fn horizontal_lift(conn: &EhresmannConnection, y: &Section) -> Result<Section> {
    if y.kind() != SectionKind::Vector {
        return Err(Error::Invalid("horizontal lifts start from vector sections".into()));
    }
    let m = conn.base_dim();
    let reduced = conn.reduced_config()?;
    if !reduced.layout_matches(y.base()) {
        return Err(Error::ChartMismatch);
    }
    let chart = conn.chart().clone();
    let inner: Vec<ScalarField> = (0..m)
        .map(|a| ScalarField::coordinate(&chart, a))
        .collect::<Result<Vec<_>>>()?;
    let lifted_base = y
        .components()
        .iter()
        .map(|c| ScalarField::compose(c, &inner))
        .collect::<Result<Vec<_>>>()?;
    let mut comps = lifted_base.clone();
    for i in 0..conn.fiber_dim() {
        let mut parts = Vec::with_capacity(m);
        for (a, ya) in lifted_base.iter().enumerate() {
            parts.push((-1.0, conn.christoffel(i, a).mul(ya)?));
        }
        comps.push(ScalarField::weighted_sum(parts)?);
    }
    Section::vector(&chart, comps)
}

/// A bundle-invariant Lagrangian constrained to the horizontal distribution
/// of a connection.
#[derive(Debug, Clone)]
pub struct CaplyginSystem {
    conn: EhresmannConnection,
    vel_chart: Arc<Chart>,
    l: ScalarField,
}

/// Output of [`CaplyginSystem::reduce`]: the forced Lagrangian on the
/// quotient and its momentum-side image.
#[derive(Debug, Clone)]
pub struct CaplyginReduction {
    pub lagrangian: ForcedLagrangianSystem,
    pub hamiltonian: ForcedHamiltonianSystem,
}

/// Sampled sups of the three constrained generating-section conditions.
#[derive(Debug, Clone)]
pub struct NonholonomicReport {
    /// `X^i + G^i_a X^a` over samples.
    pub horizontal_sup: f64,
    /// Exterior derivative of the fiber-derivative image on horizontal
    /// pairs.
    pub ideal_membership_sup: f64,
    /// Differential of the energy along the candidate on horizontal
    /// directions.
    pub energy_annihilation_sup: f64,
    pub tol: f64,
}

impl NonholonomicReport {
    pub fn horizontal(&self) -> bool {
        self.horizontal_sup <= self.tol
    }

    pub fn ideal_membership(&self) -> bool {
        self.ideal_membership_sup <= self.tol
    }

    pub fn energy_annihilation(&self) -> bool {
        self.energy_annihilation_sup <= self.tol
    }

    pub fn all_pass(&self) -> bool {
        self.horizontal() && self.ideal_membership() && self.energy_annihilation()
    }
}

impl CaplyginSystem {
    pub fn new(conn: EhresmannConnection, l: ScalarField) -> Result<CaplyginSystem> {
        let vel_chart = Arc::new(tangent_chart(conn.chart())?);
        let l = l.with_chart(&vel_chart)?;
        Ok(CaplyginSystem {
            conn,
            vel_chart,
            l,
        })
    }

    pub fn connection(&self) -> &EhresmannConnection {
        &self.conn
    }

    pub fn velocity_chart(&self) -> &Arc<Chart> {
        &self.vel_chart
    }

    pub fn lagrangian(&self) -> &ScalarField {
        &self.l
    }

    /// Constraint values `Phi^i = v^i + G^i_a v^a` at a tangent point.
    pub fn constraint_values(&self, z: &[f64]) -> Result<Vec<f64>> {
        let total = self.conn.chart().n();
        let m = self.conn.base_dim();
        let nf = self.conn.fiber_dim();
        if z.len() != 2 * total {
            return Err(Error::DimensionMismatch {
                expected: 2 * total,
                got: z.len(),
            });
        }
        let q = &z[..total];
        let mut out = Vec::with_capacity(nf);
        for i in 0..nf {
            let mut s = z[total + m + i];
            for a in 0..m {
                s += self.conn.christoffel(i, a).value(q)? * z[total + a];
            }
            out.push(s);
        }
        Ok(out)
    }

    /// Sup of the Lagrangian's variation along pure fiber displacements of
    /// horizontal lifts; zero certifies bundle invariance.
    pub fn invariance_sup(&self, bounds: &SampleBox, samples: usize, seed: u64) -> Result<f64> {
        let total = self.conn.chart().n();
        let m = self.conn.base_dim();
        if bounds.dim() != total {
            return Err(Error::DimensionMismatch {
                expected: total,
                got: bounds.dim(),
            });
        }
        let qs = bounds.sample(samples, seed);
        let shifts = bounds.sample(samples, seed.wrapping_add(101));
        let vels = SampleBox::unit(m).sample(samples, seed.wrapping_add(202));
        let mut sup = 0.0_f64;
        for ((q, shift), v) in qs.iter().zip(&shifts).zip(&vels) {
            let mut q2 = q.clone();
            q2[m..total].copy_from_slice(&shift[m..total]);
            let z1 = self.horizontal_point(q, v)?;
            let z2 = self.horizontal_point(&q2, v)?;
            sup = sup.max((self.l.value(&z1)? - self.l.value(&z2)?).abs());
        }
        Ok(sup)
    }

    fn horizontal_point(&self, q: &[f64], v_base: &[f64]) -> Result<Vec<f64>> {
        let total = self.conn.chart().n();
        let m = self.conn.base_dim();
        let mut z = Vec::with_capacity(2 * total);
        z.extend_from_slice(q);
        z.extend_from_slice(v_base);
        for i in 0..self.conn.fiber_dim() {
            let mut s = 0.0;
            for a in 0..m {
                s -= self.conn.christoffel(i, a).value(q)? * v_base[a];
            }
            z.push(s);
        }
        Ok(z)
    }

    /// Substitution fields realizing the horizontal embedding of the
    /// reduced tangent space with the bundle fiber pinned at zero.
    fn horizontal_substitution(&self, red_vel: &Arc<Chart>) -> Result<Vec<ScalarField>> {
        let total = self.conn.chart().n();
        let m = self.conn.base_dim();
        let nf = self.conn.fiber_dim();
        let mut cfg_inner = Vec::with_capacity(total);
        for a in 0..m {
            cfg_inner.push(ScalarField::coordinate(red_vel, a)?);
        }
        for _ in 0..nf {
            cfg_inner.push(ScalarField::constant(red_vel, 0.0)?);
        }
        let mut inner = cfg_inner.clone();
        for a in 0..m {
            inner.push(ScalarField::coordinate(red_vel, m + a)?);
        }
        for i in 0..nf {
            let mut parts = Vec::with_capacity(m);
            for a in 0..m {
                let gca = ScalarField::compose(self.conn.christoffel(i, a), &cfg_inner)?;
                let va = ScalarField::coordinate(red_vel, m + a)?;
                parts.push((-1.0, gca.mul(&va)?));
            }
            inner.push(ScalarField::weighted_sum(parts)?);
        }
        Ok(inner)
    }

    /// The constrained Lagrangian on the quotient tangent space with its
    /// gyroscopic force `(dL/dv^i v^b R^i_ab) dq^a`, and the momentum-side
    /// image of that pair.
    pub fn reduce(&self) -> Result<CaplyginReduction> {
        let total = self.conn.chart().n();
        let m = self.conn.base_dim();
        let nf = self.conn.fiber_dim();
        let reduced_cfg = self.conn.reduced_config()?;
        let red_vel = Arc::new(tangent_chart(&reduced_cfg)?);
        let inner = self.horizontal_substitution(&red_vel)?;
        let ell = ScalarField::compose(&self.l, &inner)?;

        let cfg_inner = &inner[..total];
        let mut comps = Vec::with_capacity(m);
        for a in 0..m {
            let mut parts = Vec::new();
            for i in 0..nf {
                let p_i = ScalarField::compose(&self.l.partial(total + m + i)?, &inner)?;
                for b in 0..m {
                    if a == b {
                        continue;
                    }
                    let curv =
                        ScalarField::compose(&self.conn.curvature_field(i, a, b)?, cfg_inner)?;
                    let vb = ScalarField::coordinate(&red_vel, m + b)?;
                    parts.push((1.0, ScalarField::product(vec![p_i.clone(), vb, curv])?));
                }
            }
            if parts.is_empty() {
                comps.push(ScalarField::constant(&red_vel, 0.0)?);
            } else {
                comps.push(ScalarField::weighted_sum(parts)?);
            }
        }
        let force = SemibasicForm::new(&red_vel, comps)?;
        let lagrangian = ForcedLagrangianSystem::new(&red_vel, ell, force)?;
        for z in SampleBox::unit(2 * m).sample(16, 7) {
            if !lagrangian.is_regular(&z)? {
                return Err(Error::SingularMatrix {
                    context: "constrained Lagrangian fiber Hessian",
                });
            }
        }
        let hamiltonian = lagrangian.to_hamiltonian()?;
        Ok(CaplyginReduction {
            lagrangian,
            hamiltonian,
        })
    }

    /// Checks a full-space vector section against the three constrained
    /// generating-section conditions over a configuration sample box.
    pub fn nonholonomic_checks(
        &self,
        x: &Section,
        bounds: &SampleBox,
        opts: &VerifyOptions,
    ) -> Result<NonholonomicReport> {
        let total = self.conn.chart().n();
        let m = self.conn.base_dim();
        let nf = self.conn.fiber_dim();
        if x.kind() != SectionKind::Vector {
            return Err(Error::Invalid(
                "constrained candidates are vector sections".into(),
            ));
        }
        if !self.conn.chart().layout_matches(x.base()) {
            return Err(Error::ChartMismatch);
        }
        if bounds.dim() != total {
            return Err(Error::DimensionMismatch {
                expected: total,
                got: bounds.dim(),
            });
        }
        // Fiber-derivative image and energy along the candidate.
        let mut inner = Vec::with_capacity(2 * total);
        for u in 0..total {
            inner.push(ScalarField::coordinate(x.base(), u)?);
        }
        inner.extend(x.components().iter().cloned());
        let kappa = {
            let comps = (0..total)
                .map(|j| ScalarField::compose(&self.l.partial(total + j)?, &inner))
                .collect::<Result<Vec<_>>>()?;
            Section::covector(x.base(), comps)?
        };
        let full_sys = ForcedLagrangianSystem::unforced(&self.vel_chart, self.l.clone())?;
        let energy = ScalarField::compose(&full_sys.energy()?, &inner)?;

        let mut horiz = 0.0_f64;
        let mut ideal = 0.0_f64;
        let mut energy_sup = 0.0_f64;
        for q in bounds.sample(opts.samples, opts.seed) {
            let xv = x.value(&q)?;
            for i in 0..nf {
                let mut s = xv[m + i];
                for a in 0..m {
                    s += self.conn.christoffel(i, a).value(&q)? * xv[a];
                }
                horiz = horiz.max(s.abs());
            }
            let basis = (0..m)
                .map(|a| self.conn.horizontal_vector(a, &q))
                .collect::<Result<Vec<_>>>()?;
            let ext = kappa.exterior_matrix(&q)?;
            for a in 0..m {
                for b in (a + 1)..m {
                    let mut s = 0.0;
                    for (u, hu) in basis[a].iter().enumerate() {
                        for (v, hv) in basis[b].iter().enumerate() {
                            s += ext.get(u, v) * hu * hv;
                        }
                    }
                    ideal = ideal.max(s.abs());
                }
            }
            let de = energy.gradient(&q)?;
            for hb in &basis {
                let s: f64 = de.iter().zip(hb).map(|(g, h)| g * h).sum();
                energy_sup = energy_sup.max(s.abs());
            }
        }
        Ok(NonholonomicReport {
            horizontal_sup: horiz,
            ideal_membership_sup: ideal,
            energy_annihilation_sup: energy_sup,
            tol: opts.tol,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hj::{verify, Verdict};

    fn calogero() -> ForcedHamiltonianSystem {
        let chart = Arc::new(Chart::standard_momenta(2, vec![]).unwrap());
        let h = ScalarField::parse(&chart, "(p1^2 + p2^2 + 1/(q1-q2)^2)/2").unwrap();
        let beta = SemibasicForm::parse(&chart, &["p1 + p2", "-(p1 + p2)"]).unwrap();
        ForcedHamiltonianSystem::new(&chart, h, beta).unwrap()
    }

    fn pair_action() -> TranslationAction {
        TranslationAction::new(&[vec![1.0, 1.0]], &[vec![1.0, -1.0]]).unwrap()
    }

    #[test]
    fn momentum_functions_are_linear_in_the_generator() {
        let chart = Arc::new(Chart::standard_momenta(2, vec![]).unwrap());
        let j = momentum_function(&chart, &[1.0, 1.0]).unwrap();
        assert_eq!(j.value(&[0.3, -0.2, 0.7, 1.1]).unwrap(), 1.8);
        let j2 = momentum_function(&chart, &[2.0, 0.0]).unwrap();
        assert_eq!(j2.value(&[0.3, -0.2, 0.7, 1.1]).unwrap(), 1.4);
        let j0 = momentum_function(&chart, &[0.0, 0.0]).unwrap();
        assert_eq!(j0.value(&[0.3, -0.2, 0.7, 1.1]).unwrap(), 0.0);
    }

    #[test]
    fn complete_lift_matches_hand_formulas() {
        let chart = Arc::new(Chart::standard_momenta(2, vec![]).unwrap());
        let base = base_chart(&chart).unwrap();
        // X = q1 d/dq1 lifts to q1 d/dq1 - p1 d/dp1.
        let x = Section::parse(SectionKind::Vector, &base, &["q1", "0"]).unwrap();
        let v = complete_lift(&chart, &x).unwrap().eval(&[0.5, 0.2, 1.3, -0.4]).unwrap();
        assert_eq!(v, vec![0.5, 0.0, -1.3, 0.0]);
        // Lift property against the contraction of a Lie bracket:
        // X = q2 d/dq1, Z = d/dq2, [X, Z] = -d/dq1.
        let x = Section::parse(SectionKind::Vector, &base, &["q2", "0"]).unwrap();
        let lift = complete_lift(&chart, &x).unwrap();
        let iota_z = ScalarField::parse(&chart, "p2").unwrap();
        for z in SampleBox::unit(4).sample(20, 3) {
            let g = iota_z.gradient(&z).unwrap();
            let xv = lift.eval(&z).unwrap();
            let rate: f64 = g.iter().zip(&xv).map(|(a, b)| a * b).sum();
            assert!((rate - (-z[2])).abs() < 1e-13);
        }
    }

    #[test]
    fn invariance_distinguishes_symmetric_and_dragged_systems() {
        let sys = calogero();
        let opts = VerifyOptions::default();
        let rep =
            invariance_report(&sys, &[1.0, 1.0], &SampleBox::unit(4), &opts).unwrap();
        assert!(rep.lifted_h_sup < 1e-10, "{}", rep.lifted_h_sup);
        assert!(rep.force_pairing_sup < 1e-10);
        assert!(rep.force_exterior_sup < 1e-10);
        assert!(rep.invariant(1e-9));

        let chart = Arc::new(Chart::standard_momenta(2, vec![("k".into(), 0.9)]).unwrap());
        let h = ScalarField::parse(&chart, "(p1^2 + p2^2)/2").unwrap();
        let beta = SemibasicForm::parse(&chart, &["k*p1^2", "k*p2^2"]).unwrap();
        let dragged = ForcedHamiltonianSystem::new(&chart, h, beta).unwrap();
        let rep =
            invariance_report(&dragged, &[1.0, 0.0], &SampleBox::unit(4), &opts).unwrap();
        assert!(rep.lifted_h_sup < 1e-12);
        assert!(rep.force_pairing_sup > 0.1, "{}", rep.force_pairing_sup);
        assert!(!rep.conserves_momentum(1e-9));
    }

    #[test]
    fn translation_action_validation() {
        assert!(TranslationAction::new(&[vec![1.0, 1.0]], &[vec![1.0, -1.0]]).is_ok());
        // Complement must annihilate the generator.
        assert!(TranslationAction::new(&[vec![1.0, 1.0]], &[vec![1.0, 0.0]]).is_err());
        // Degenerate stack.
        assert!(TranslationAction::new(
            &[vec![1.0, 1.0]],
            &[vec![2.0, 2.0]]
        )
        .is_err());
        // No generators: any invertible leading block works.
        let id = TranslationAction::new(&[], &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(id.k(), 0);
        assert_eq!(id.project(&[0.4, -0.7]).unwrap(), vec![0.4, -0.7]);
    }

    #[test]
    fn pair_interaction_reduces_to_the_relative_coordinate() {
        let sys = calogero();
        let red = reduce_translation(&sys, &pair_action(), &[1.0]).unwrap();
        assert_eq!(red.n(), 1);
        // h = ((mu - p)^2 + p^2 + 1/q^2) / 2 and r = mu dq at mu = 1.
        for z in SampleBox::new(vec![0.4, -1.5], vec![2.0, 1.5]).unwrap().sample(25, 9) {
            let (q, p) = (z[0], z[1]);
            let expect = 0.5 * ((1.0 - p) * (1.0 - p) + p * p + 1.0 / (q * q));
            assert!((red.hamiltonian().value(&z).unwrap() - expect).abs() < 1e-12);
            let r = red.force().value(&z).unwrap();
            assert!((r[0] - 1.0).abs() < 1e-14);
        }
        // Without the interaction potential the kinetic part survives.
        let chart = Arc::new(Chart::standard_momenta(2, vec![]).unwrap());
        let h = ScalarField::parse(&chart, "(p1^2 + p2^2)/2").unwrap();
        let free = ForcedHamiltonianSystem::unforced(&chart, h).unwrap();
        let red = reduce_translation(&free, &pair_action(), &[0.7]).unwrap();
        let v = red.hamiltonian().value(&[0.3, 0.2]).unwrap();
        assert!((v - 0.5 * ((0.7 - 0.2_f64).powi(2) + 0.04)).abs() < 1e-14);
        assert!(red.force().value(&[0.3, 0.2]).unwrap()[0].abs() < 1e-15);
    }

    #[test]
    fn no_generator_reduction_is_the_identity() {
        let chart = Arc::new(Chart::standard_momenta(2, vec![("k".into(), 0.4)]).unwrap());
        let h = ScalarField::parse(&chart, "(p1^2 + p2^2)/2 + k*q1^2").unwrap();
        let beta = SemibasicForm::parse(&chart, &["k*p1^2", "0"]).unwrap();
        let sys = ForcedHamiltonianSystem::new(&chart, h, beta).unwrap();
        let action = TranslationAction::new(&[], &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let red = reduce_translation(&sys, &action, &[]).unwrap();
        for z in SampleBox::unit(4).sample(20, 5) {
            assert!(
                (red.hamiltonian().value(&z).unwrap() - sys.hamiltonian().value(&z).unwrap())
                    .abs()
                    < 1e-14
            );
            let a = red.force().value(&z).unwrap();
            let b = sys.force().value(&z).unwrap();
            assert!((a[0] - b[0]).abs() < 1e-14 && (a[1] - b[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn non_invariant_systems_are_rejected() {
        let chart = Arc::new(Chart::standard_momenta(2, vec![("k".into(), 0.9)]).unwrap());
        let h = ScalarField::parse(&chart, "(p1^2 + p2^2)/2").unwrap();
        let beta = SemibasicForm::parse(&chart, &["k*p1^2", "k*p2^2"]).unwrap();
        let dragged = ForcedHamiltonianSystem::new(&chart, h, beta).unwrap();
        let err = reduce_translation(&dragged, &pair_action(), &[1.0]).unwrap_err();
        assert!(matches!(err, Error::Invalid(_)));
    }

    #[test]
    fn reconstruction_splits_the_momentum_between_the_pair() {
        let sys = calogero();
        let base = base_chart(sys.chart()).unwrap();
        let red = reduce_translation(&sys, &pair_action(), &[1.0]).unwrap();
        let red_base = base_chart(red.chart()).unwrap();
        // Candidate on the quotient referencing the mu parameter.
        let gt = Section::parse(
            SectionKind::Covector,
            &red_base,
            &["q1 + 1/(2*mu1*q1^2) + 3/10"],
        )
        .unwrap();
        // The full chart must carry the same parameter for reconstruction.
        let full = Arc::new(
            Chart::config(vec!["q1".into(), "q2".into()], vec![("mu1".into(), 1.0)]).unwrap(),
        );
        let gamma = reconstruct_solution(&pair_action(), &[1.0], &gt, &full).unwrap();
        for q in SampleBox::new(vec![0.3, -1.0], vec![1.3, 0.0]).unwrap().sample(15, 4) {
            let rel = q[0] - q[1];
            let g = rel + 1.0 / (2.0 * rel * rel) + 0.3;
            let v = gamma.value(&q).unwrap();
            assert!((v[0] - g).abs() < 1e-12);
            assert!((v[1] - (1.0 - g)).abs() < 1e-12);
        }
        let _ = (base, sys);
    }

    #[test]
    fn trivial_reconstruction_solves_the_free_problem() {
        let chart = Arc::new(Chart::standard_momenta(2, vec![]).unwrap());
        let h = ScalarField::parse(&chart, "(p1^2 + p2^2)/2").unwrap();
        let free = ForcedHamiltonianSystem::unforced(&chart, h).unwrap();
        let base = base_chart(&chart).unwrap();
        let red_base = Arc::new(Chart::config(vec!["q1".into()], vec![]).unwrap());
        let gt = Section::parse(SectionKind::Covector, &red_base, &["0"]).unwrap();
        let gamma = reconstruct_solution(&pair_action(), &[0.0], &gt, &base).unwrap();
        let rep = verify(
            &free,
            &gamma,
            &SampleBox::unit(2),
            &VerifyOptions::default(),
        )
        .unwrap();
        assert_eq!(rep.verdict, Verdict::Strict);
    }

    fn robot_connection() -> EhresmannConnection {
        let chart = Arc::new(
            Chart::config(
                vec!["theta".into(), "psi".into(), "x".into(), "y".into()],
                vec![
                    ("R".into(), 0.8),
                    ("m".into(), 1.5),
                    ("J".into(), 2.0),
                    ("Jw".into(), 0.7),
                ],
            )
            .unwrap(),
        );
        EhresmannConnection::parse(
            &chart,
            2,
            &[
                vec!["0", "-R*cos(theta)"],
                vec!["0", "-R*sin(theta)"],
            ],
        )
        .unwrap()
    }

    fn robot_system() -> CaplyginSystem {
        let conn = robot_connection();
        let vel = Arc::new(tangent_chart(conn.chart()).unwrap());
        let l = ScalarField::parse(
            &vel,
            "m*(v_x^2 + v_y^2)/2 + J*v_theta^2/2 + 3*Jw*v_psi^2/2",
        )
        .unwrap();
        CaplyginSystem::new(conn, l).unwrap()
    }

    #[test]
    fn curvature_of_the_rolling_platform_connection() {
        let conn = robot_connection();
        for q in SampleBox::unit(4).sample(12, 11) {
            let r = conn.curvature_at(&q).unwrap();
            let (s, c) = (libm::sin(q[0]), libm::cos(q[0]));
            assert!((r[0].get(0, 1) - (-0.8 * s)).abs() < 1e-13);
            assert!((r[1].get(0, 1) - 0.8 * c).abs() < 1e-13);
            for mat in &r {
                for a in 0..2 {
                    for b in 0..2 {
                        assert!((mat.get(a, b) + mat.get(b, a)).abs() < 1e-14);
                    }
                }
            }
        }
        // Flat connections have no curvature.
        let chart = Arc::new(
            Chart::config(vec!["qa".into(), "qb".into(), "qi".into()], vec![]).unwrap(),
        );
        let flat = EhresmannConnection::parse(&chart, 2, &[vec!["3", "-2"]]).unwrap();
        let r = flat.curvature_at(&[0.4, -0.9, 0.3]).unwrap();
        assert_eq!(r[0].max_abs(), 0.0);
    }

    #[test]
    fn horizontal_lift_solves_the_constraints() {
        let conn = robot_connection();
        let red = conn.reduced_config().unwrap();
        let y = Section::parse(SectionKind::Vector, &red, &["2/10", "-7/10"]).unwrap();
        let lifted = horizontal_lift(&conn, &y).unwrap();
        let q = [0.5, -0.3, 1.0, 2.0];
        let v = lifted.value(&q).unwrap();
        assert_eq!(v[0], 0.2);
        assert_eq!(v[1], -0.7);
        assert!((v[2] - (-0.7) * 0.8 * libm::cos(0.5)).abs() < 1e-15);
        assert!((v[3] - (-0.7) * 0.8 * libm::sin(0.5)).abs() < 1e-15);
        let sys = robot_system();
        let z = lifted.graph_point(&q).unwrap();
        let phi = sys.constraint_values(&z).unwrap();
        assert!(phi.iter().all(|c| c.abs() < 1e-14));
    }

    #[test]
    fn rolling_platform_reduces_with_zero_gyroscopic_force() {
        let sys = robot_system();
        assert!(sys.invariance_sup(&SampleBox::unit(4), 40, 17).unwrap() < 1e-12);
        let red = sys.reduce().unwrap();
        // l = J vtheta^2 / 2 + (m R^2 + 3 Jw) vpsi^2 / 2.
        let coeff = 1.5 * 0.8 * 0.8 + 3.0 * 0.7;
        for z in SampleBox::unit(4).sample(20, 13) {
            let expect = 0.5 * 2.0 * z[2] * z[2] + 0.5 * coeff * z[3] * z[3];
            assert!((red.lagrangian.lagrangian().value(&z).unwrap() - expect).abs() < 1e-13);
            let f = red.lagrangian.force().value(&z).unwrap();
            assert!(f[0].abs() < 1e-13 && f[1].abs() < 1e-13);
        }
        // Momentum-side image is kinetic in the inverse coefficients.
        for z in SampleBox::unit(4).sample(10, 19) {
            let expect = z[2] * z[2] / (2.0 * 2.0) + z[3] * z[3] / (2.0 * coeff);
            assert!((red.hamiltonian.hamiltonian().value(&z).unwrap() - expect).abs() < 1e-12);
            let f = red.hamiltonian.force().value(&z).unwrap();
            assert!(f[0].abs() < 1e-12 && f[1].abs() < 1e-12);
        }
    }

    #[test]
    fn shear_coupled_connection_produces_the_gyroscopic_force() {
        let chart = Arc::new(
            Chart::config(vec!["qa".into(), "qb".into(), "qi".into()], vec![]).unwrap(),
        );
        let conn = EhresmannConnection::parse(&chart, 2, &[vec!["qb", "0"]]).unwrap();
        let vel = Arc::new(tangent_chart(&chart).unwrap());
        let l = ScalarField::parse(&vel, "(va^2 + vb^2 + vi^2)/2").unwrap();
        let sys = CaplyginSystem::new(conn, l).unwrap();
        // Curvature is the constant 1.
        let r = sys.connection().curvature_at(&[0.2, 0.5, -0.4]).unwrap();
        assert!((r[0].get(0, 1) - 1.0).abs() < 1e-15);
        let red = sys.reduce().unwrap();
        for z in SampleBox::unit(4).sample(20, 23) {
            let (qb, va, vb) = (z[1], z[2], z[3]);
            let f = red.lagrangian.force().value(&z).unwrap();
            assert!((f[0] - (-qb * va * vb)).abs() < 1e-13, "{} vs {}", f[0], -qb * va * vb);
            assert!((f[1] - qb * va * va).abs() < 1e-13);
        }
    }

    #[test]
    fn constrained_candidate_checks_accept_horizontal_lifts_only() {
        let sys = robot_system();
        let conn = sys.connection();
        let red = conn.reduced_config().unwrap();
        let y = Section::parse(SectionKind::Vector, &red, &["1/2", "9/10"]).unwrap();
        let lifted = horizontal_lift(conn, &y).unwrap();
        let opts = VerifyOptions {
            samples: 60,
            ..VerifyOptions::default()
        };
        let rep = sys
            .nonholonomic_checks(&lifted, &SampleBox::unit(4), &opts)
            .unwrap();
        assert!(rep.all_pass(), "{rep:?}");

        let bad = Section::parse(
            SectionKind::Vector,
            conn.chart(),
            &["0", "0", "1", "0"],
        )
        .unwrap();
        let rep = sys
            .nonholonomic_checks(&bad, &SampleBox::unit(4), &opts)
            .unwrap();
        assert!(!rep.horizontal());
    }
}
