//! Sections, semibasic forms, fibred maps, and vector fields — the small
//! amount of bundle geometry the rest of the crate is phrased in.
//!
//! Everything is coordinate-first: a "bundle" here is just a chart with a
//! fiber (`q, p` or `q, v`), its base is the chart of the `q`'s alone, and
//! the objects below are tuples of scalar fields over one or the other.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::chart::{Chart, FiberKind};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::linalg::Matrix;

/// The configuration chart underneath a phase chart: same base names and
/// parameters, no fiber.
pub fn base_chart(phase: &Chart) -> Result<Arc<Chart>> {
    Ok(Arc::new(Chart::config(
        phase.base_names().to_vec(),
        phase.params().to_vec(),
    )?))
}

/// Whether a section's components transform like momenta or velocities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SectionKind {
    /// Assigns a covector `gamma_i(q) dq^i` to each base point.
    Covector,
    /// Assigns a tangent vector `X^i(q) d/dq^i` to each base point.
    Vector,
}

/// A fiber-valued function of the base alone: `q -> (q, s(q))`.
///
/// Components live on a configuration chart, so they cannot accidentally
/// depend on fiber coordinates.
#[derive(Debug, Clone)]
pub struct Section {
    kind: SectionKind,
    base: Arc<Chart>,
    comps: Vec<ScalarField>,
}

impl Section {
    pub fn new(kind: SectionKind, base: &Arc<Chart>, comps: Vec<ScalarField>) -> Result<Section> {
        if base.fiber_kind() != FiberKind::None {
            return Err(Error::Invalid(
                "section components must live on a configuration chart".into(),
            ));
        }
        if comps.len() != base.n() {
            return Err(Error::DimensionMismatch {
                expected: base.n(),
                got: comps.len(),
            });
        }
        for c in &comps {
            if !c.chart().layout_matches(base) {
                return Err(Error::ChartMismatch);
            }
        }
        Ok(Section {
            kind,
            base: base.clone(),
            comps,
        })
    }

    pub fn covector(base: &Arc<Chart>, comps: Vec<ScalarField>) -> Result<Section> {
        Section::new(SectionKind::Covector, base, comps)
    }

    pub fn vector(base: &Arc<Chart>, comps: Vec<ScalarField>) -> Result<Section> {
        Section::new(SectionKind::Vector, base, comps)
    }

    /// Parses each component source on the base chart.
    pub fn parse(kind: SectionKind, base: &Arc<Chart>, srcs: &[&str]) -> Result<Section> {
        let comps = srcs
            .iter()
            .map(|s| ScalarField::parse(base, s))
            .collect::<Result<Vec<_>>>()?;
        Section::new(kind, base, comps)
    }

    pub fn kind(&self) -> SectionKind {
        self.kind
    }

    pub fn base(&self) -> &Arc<Chart> {
        &self.base
    }

    pub fn n(&self) -> usize {
        self.comps.len()
    }

    pub fn component(&self, i: usize) -> &ScalarField {
        &self.comps[i]
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.comps
    }

    pub fn value(&self, q: &[f64]) -> Result<Vec<f64>> {
        self.comps.iter().map(|c| c.value(q)).collect()
    }

    /// The full phase point `(q, s(q))`.
    pub fn graph_point(&self, q: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(2 * self.n());
        out.extend_from_slice(q);
        out.extend(self.value(q)?);
        Ok(out)
    }

    /// `J[i][j] = d s_i / d q^j`.
    pub fn jacobian(&self, q: &[f64]) -> Result<Matrix> {
        let n = self.n();
        let mut m = Matrix::zeros(n, n);
        for (i, c) in self.comps.iter().enumerate() {
            for (j, g) in c.gradient(q)?.into_iter().enumerate() {
                m.set(i, j, g);
            }
        }
        Ok(m)
    }

    /// For a covector section, the coefficient matrix of its exterior
    /// derivative: `M[a][b] = d s_b / d q^a - d s_a / d q^b`, so that the
    /// two-form is `(1/2) M[a][b] dq^a ^ dq^b`.
    pub fn exterior_matrix(&self, q: &[f64]) -> Result<Matrix> {
        let j = self.jacobian(q)?;
        let n = self.n();
        let mut m = Matrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                m.set(a, b, j.get(b, a) - j.get(a, b));
            }
        }
        Ok(m)
    }

    /// Sup-norm of the exterior derivative coefficients at `q`; zero iff
    /// the covector section is closed there.
    pub fn closedness_defect(&self, q: &[f64]) -> Result<f64> {
        Ok(self.exterior_matrix(q)?.max_abs())
    }
}

/// A semibasic one-form on a phase chart: `n` components `b_i(q, fiber)`
/// pairing only with base directions.
#[derive(Debug, Clone)]
pub struct SemibasicForm {
    chart: Arc<Chart>,
    comps: Vec<ScalarField>,
}

impl SemibasicForm {
    pub fn new(chart: &Arc<Chart>, comps: Vec<ScalarField>) -> Result<SemibasicForm> {
        if !chart.has_fiber() {
            return Err(Error::Invalid(
                "semibasic forms live on a phase chart with a fiber".into(),
            ));
        }
        if comps.len() != chart.n() {
            return Err(Error::DimensionMismatch {
                expected: chart.n(),
                got: comps.len(),
            });
        }
        for c in &comps {
            if !c.chart().layout_matches(chart) {
                return Err(Error::ChartMismatch);
            }
        }
        Ok(SemibasicForm {
            chart: chart.clone(),
            comps,
        })
    }

    pub fn zero(chart: &Arc<Chart>) -> Result<SemibasicForm> {
        let comps = (0..chart.n())
            .map(|_| ScalarField::constant(chart, 0.0))
            .collect::<Result<Vec<_>>>()?;
        SemibasicForm::new(chart, comps)
    }

    pub fn parse(chart: &Arc<Chart>, srcs: &[&str]) -> Result<SemibasicForm> {
        let comps = srcs
            .iter()
            .map(|s| ScalarField::parse(chart, s))
            .collect::<Result<Vec<_>>>()?;
        SemibasicForm::new(chart, comps)
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn n(&self) -> usize {
        self.comps.len()
    }

    pub fn component(&self, i: usize) -> &ScalarField {
        &self.comps[i]
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.comps
    }

    pub fn value(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.comps.iter().map(|c| c.value(z)).collect()
    }

    /// Restricts the form along a section of the same bundle, producing
    /// base fields `q -> b_i(q, s(q))`.
    pub fn pull_back(&self, s: &Section) -> Result<Vec<ScalarField>> {
        let base = base_chart(&self.chart)?;
        if s.n() != self.n() || !s.base().layout_matches(&base) {
            return Err(Error::ChartMismatch);
        }
        let mut inner = Vec::with_capacity(2 * s.n());
        for i in 0..s.n() {
            inner.push(ScalarField::coordinate(s.base(), i)?);
        }
        inner.extend_from_slice(s.components());
        self.comps
            .iter()
            .map(|c| ScalarField::compose(c, &inner))
            .collect()
    }

    /// Reinterprets the form on a layout-matching chart.
    pub fn with_chart(&self, chart: &Arc<Chart>) -> Result<SemibasicForm> {
        let comps = self
            .comps
            .iter()
            .map(|c| c.with_chart(chart))
            .collect::<Result<Vec<_>>>()?;
        SemibasicForm::new(chart, comps)
    }
}

/// A fiber-preserving map over the identity on the base:
/// `(q, fiber) -> (q, comps(q, fiber))`, e.g. a fiber derivative.
#[derive(Debug, Clone)]
pub struct FibredMap {
    from: Arc<Chart>,
    to: Arc<Chart>,
    comps: Vec<ScalarField>,
}

impl FibredMap {
    /// `comps` are the target fiber coordinates as fields on `from`.
    pub fn new(from: &Arc<Chart>, to: &Arc<Chart>, comps: Vec<ScalarField>) -> Result<FibredMap> {
        if !from.has_fiber() || !to.has_fiber() || from.n() != to.n() {
            return Err(Error::ChartMismatch);
        }
        if comps.len() != from.n() {
            return Err(Error::DimensionMismatch {
                expected: from.n(),
                got: comps.len(),
            });
        }
        for c in &comps {
            if !c.chart().layout_matches(from) {
                return Err(Error::ChartMismatch);
            }
        }
        Ok(FibredMap {
            from: from.clone(),
            to: to.clone(),
            comps,
        })
    }

    /// Reads a semibasic form on a tangent chart as a fibred map into the
    /// cotangent companion chart: `(q, v) -> (q, b_1(q,v), ..., b_n(q,v))`.
    pub fn from_semibasic(form: &SemibasicForm) -> Result<FibredMap> {
        let to = Arc::new(form.chart().momentum_partner()?);
        FibredMap::new(form.chart(), &to, form.components().to_vec())
    }

    /// The fiber components as a semibasic form on the source chart;
    /// undoes [`FibredMap::from_semibasic`].
    pub fn to_semibasic(&self) -> Result<SemibasicForm> {
        SemibasicForm::new(&self.from, self.comps.clone())
    }

    pub fn from_chart(&self) -> &Arc<Chart> {
        &self.from
    }

    pub fn to_chart(&self) -> &Arc<Chart> {
        &self.to
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.comps
    }

    pub fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        let n = self.from.n();
        if z.len() != self.from.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.from.dim(),
                got: z.len(),
            });
        }
        let mut out = Vec::with_capacity(z.len());
        out.extend_from_slice(&z[..n]);
        for c in &self.comps {
            out.push(c.value(z)?);
        }
        Ok(out)
    }

    /// Pulls a scalar on the target chart back to the source chart:
    /// `(transport f)(z) = f(apply(z))`.
    pub fn transport(&self, f: &ScalarField) -> Result<ScalarField> {
        if !f.chart().layout_matches(&self.to) {
            return Err(Error::ChartMismatch);
        }
        let inner = self.identity_and_comps()?;
        ScalarField::compose(f, &inner)
    }

    /// Pulls each component of a semibasic form back to the source chart.
    pub fn transport_form(&self, form: &SemibasicForm) -> Result<SemibasicForm> {
        if !form.chart().layout_matches(&self.to) {
            return Err(Error::ChartMismatch);
        }
        let inner = self.identity_and_comps()?;
        let comps = form
            .components()
            .iter()
            .map(|c| ScalarField::compose(c, &inner))
            .collect::<Result<Vec<_>>>()?;
        SemibasicForm::new(&self.from, comps)
    }

    /// Follows a section of the source bundle with this map, producing a
    /// section of the target bundle: `q -> comps(q, s(q))`.
    pub fn along_section(&self, s: &Section) -> Result<Section> {
        let base = base_chart(&self.from)?;
        if !s.base().layout_matches(&base) {
            return Err(Error::ChartMismatch);
        }
        let mut inner = Vec::with_capacity(2 * s.n());
        for i in 0..s.n() {
            inner.push(ScalarField::coordinate(s.base(), i)?);
        }
        inner.extend_from_slice(s.components());
        let comps = self
            .comps
            .iter()
            .map(|c| ScalarField::compose(c, &inner))
            .collect::<Result<Vec<_>>>()?;
        let kind = match self.to.fiber_kind() {
            FiberKind::Momenta => SectionKind::Covector,
            FiberKind::Velocities => SectionKind::Vector,
            FiberKind::None => unreachable!("target chart has a fiber"),
        };
        Section::new(kind, s.base(), comps)
    }

    fn identity_and_comps(&self) -> Result<Vec<ScalarField>> {
        let n = self.from.n();
        let mut inner = Vec::with_capacity(2 * n);
        for i in 0..n {
            inner.push(ScalarField::coordinate(&self.from, i)?);
        }
        inner.extend_from_slice(&self.comps);
        Ok(inner)
    }
}

type RhsFn = dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync;

/// A first-order right-hand side `z' = f(z)` on a chart.
#[derive(Clone)]
pub struct VectorField {
    chart: Arc<Chart>,
    f: Arc<RhsFn>,
}

impl core::fmt::Debug for VectorField {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "VectorField<dim {}>", self.chart.dim())
    }
}

impl VectorField {
    pub fn new(
        chart: &Arc<Chart>,
        f: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    ) -> VectorField {
        VectorField {
            chart: chart.clone(),
            f: Arc::new(f),
        }
    }

    /// One scalar field per chart coordinate.
    pub fn from_components(chart: &Arc<Chart>, comps: Vec<ScalarField>) -> Result<VectorField> {
        if comps.len() != chart.dim() {
            return Err(Error::DimensionMismatch {
                expected: chart.dim(),
                got: comps.len(),
            });
        }
        for c in &comps {
            if !c.chart().layout_matches(chart) {
                return Err(Error::ChartMismatch);
            }
        }
        Ok(VectorField::new(chart, move |z| {
            comps.iter().map(|c| c.value(z)).collect()
        }))
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn eval(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.chart.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.chart.dim(),
                got: z.len(),
            });
        }
        let out = (self.f)(z)?;
        if out.len() != z.len() {
            return Err(Error::DimensionMismatch {
                expected: z.len(),
                got: out.len(),
            });
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "vector field",
            });
        }
        Ok(out)
    }

    /// The field scaled by a constant (useful with `-1` to reverse time).
    pub fn scaled(&self, c: f64) -> VectorField {
        let inner = self.f.clone();
        VectorField {
            chart: self.chart.clone(),
            f: Arc::new(move |z| {
                let mut out = inner(z)?;
                for v in &mut out {
                    *v *= c;
                }
                Ok(out)
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn mom2() -> Arc<Chart> {
        Arc::new(Chart::standard_momenta(2, vec![("k".into(), 0.5)]).unwrap())
    }

    #[test]
    fn section_graph_and_exterior() {
        let phase = mom2();
        let base = base_chart(&phase).unwrap();
        // gamma = (q2^2) dq1 + (q1) dq2 : d(gamma) coefficient 1 - 2 q2.
        let s = Section::parse(SectionKind::Covector, &base, &["q2^2", "q1"]).unwrap();
        let q = [2.0, 3.0];
        assert_eq!(s.graph_point(&q).unwrap(), vec![2.0, 3.0, 9.0, 2.0]);
        let m = s.exterior_matrix(&q).unwrap();
        // M[0][1] = d(gamma_2)/dq1 - d(gamma_1)/dq2 = 1 - 6.
        assert_eq!(m.get(0, 1), -5.0);
        assert_eq!(m.get(1, 0), 5.0);
        assert_eq!(s.closedness_defect(&q).unwrap(), 5.0);

        // An exact section d(q1 q2) = q2 dq1 + q1 dq2 is closed.
        let e = Section::parse(SectionKind::Covector, &base, &["q2", "q1"]).unwrap();
        assert_eq!(e.closedness_defect(&q).unwrap(), 0.0);
    }

    #[test]
    fn section_rejects_fiber_dependence() {
        let phase = mom2();
        let base = base_chart(&phase).unwrap();
        assert!(Section::parse(SectionKind::Covector, &base, &["p1", "0"]).is_err());
    }

    #[test]
    fn semibasic_pull_back_composes() {
        let phase = mom2();
        let base = base_chart(&phase).unwrap();
        let beta = SemibasicForm::parse(&phase, &["k*p1", "q1*p2"]).unwrap();
        let s = Section::parse(SectionKind::Covector, &base, &["q1^2", "q2"]).unwrap();
        let pulled = beta.pull_back(&s).unwrap();
        let q = [2.0, -1.0];
        // beta_1(q, gamma(q)) = k q1^2 = 0.5 * 4.
        assert_eq!(pulled[0].value(&q).unwrap(), 2.0);
        // beta_2 = q1 * gamma_2 = 2 * -1.
        assert_eq!(pulled[1].value(&q).unwrap(), -2.0);
        assert!(pulled[0].pretty().is_some());
    }

    #[test]
    fn fibred_map_transports_scalars() {
        let vel = Arc::new(Chart::standard_velocities(1, vec![("m".into(), 2.0)]).unwrap());
        let mom = Arc::new(Chart::standard_momenta(1, vec![("m".into(), 2.0)]).unwrap());
        // (q, v) -> (q, m v), the fiber derivative of (m/2) v^2.
        let leg = FibredMap::new(
            &vel,
            &mom,
            vec![ScalarField::parse(&vel, "m*v1").unwrap()],
        )
        .unwrap();
        assert_eq!(leg.apply(&[3.0, 5.0]).unwrap(), vec![3.0, 10.0]);
        let h = ScalarField::parse(&mom, "p1^2/(2*m) + q1").unwrap();
        let pulled = leg.transport(&h).unwrap();
        // h(leg(q, v)) = m v^2 / 2 + q.
        assert!((pulled.value(&[3.0, 5.0]).unwrap() - (25.0 + 3.0)).abs() < 1e-14);
        assert!(pulled.pretty().is_some());
    }

    #[test]
    fn along_section_produces_target_section() {
        let vel = Arc::new(Chart::standard_velocities(1, vec![]).unwrap());
        let mom = Arc::new(Chart::standard_momenta(1, vec![]).unwrap());
        let leg = FibredMap::new(&vel, &mom, vec![ScalarField::parse(&vel, "2*v1").unwrap()])
            .unwrap();
        let base = base_chart(&vel).unwrap();
        let x = Section::parse(SectionKind::Vector, &base, &["q1^2"]).unwrap();
        let gamma = leg.along_section(&x).unwrap();
        assert_eq!(gamma.kind(), SectionKind::Covector);
        assert_eq!(gamma.value(&[3.0]).unwrap(), vec![18.0]);
    }

    #[test]
    fn semibasic_morphism_round_trip() {
        let vel = Arc::new(Chart::standard_velocities(2, vec![("k".into(), 3.0)]).unwrap());
        let form = SemibasicForm::parse(&vel, &["k*v1^2", "v1*v2"]).unwrap();
        let map = FibredMap::from_semibasic(&form).unwrap();
        assert_eq!(map.to_chart().fiber_kind(), FiberKind::Momenta);
        assert_eq!(
            map.apply(&[1.0, 2.0, 0.5, -1.0]).unwrap(),
            vec![1.0, 2.0, 0.75, -0.5]
        );
        let back = map.to_semibasic().unwrap();
        let z = [0.3, -0.7, 1.1, 0.9];
        assert_eq!(back.value(&z).unwrap(), form.value(&z).unwrap());
    }

    #[test]
    fn vector_field_checks_output() {
        let phase = mom2();
        let f = VectorField::new(&phase, |z| Ok(vec![z[2], z[3], 0.0, 0.0]));
        assert_eq!(
            f.eval(&[0.0, 0.0, 1.0, 2.0]).unwrap(),
            vec![1.0, 2.0, 0.0, 0.0]
        );
        let r = f.scaled(-1.0);
        assert_eq!(
            r.eval(&[0.0, 0.0, 1.0, 2.0]).unwrap(),
            vec![-1.0, -2.0, 0.0, 0.0]
        );
        let bad = VectorField::new(&phase, |_| Ok(vec![f64::NAN; 4]));
        assert!(bad.eval(&[0.0; 4]).is_err());
    }
}
