//! Report serialization: JSON run summaries and CSV trajectories.
//!
//! Reports must be byte-identical across runs with the same document and
//! seed, so every collection is emitted in a fixed order and floats go
//! through either serde_json's shortest-roundtrip encoding or the
//! C-style `%.17g` used in CSV files. Wall-clock timing is the one field
//! that varies; setting `MECHFORCE_FIXED_TIMING` pins it to zero for
//! byte-for-byte comparisons.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use mechforce_core::flows::Trajectory;
use serde::Serialize;

use crate::Failure;

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub system: String,
    pub config_hash: String,
    pub seed: u64,
    pub tol: f64,
    pub candidates: Vec<CandidateReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reduced: Option<ReducedBlock>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trajectories: Vec<TrajectoryFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub timing_ms: u64,
}

#[derive(Debug, Serialize)]
pub struct CandidateReport {
    pub name: String,
    /// `full` for sections over the configuration space, `reduced` for
    /// quotient-side sections.
    pub stage: &'static str,
    pub verdict: String,
    pub closedness_sup: f64,
    pub residual_sup: f64,
    pub weak_residual_sup: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expect: Option<&'static str>,
    pub matched: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deviation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checks: Option<ConstraintChecks>,
}

/// Sampled sups for the three constrained-candidate conditions.
#[derive(Debug, Serialize)]
pub struct ConstraintChecks {
    pub horizontal_sup: f64,
    pub ideal_membership_sup: f64,
    pub energy_annihilation_sup: f64,
}

#[derive(Debug, Default, Serialize)]
pub struct ReducedBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub force: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lagrangian: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gyroscopic_force: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gyroscopic_sup: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curvature: Option<Vec<CurvatureSample>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub invariance: Option<Vec<GeneratorCheck>>,
}

/// Curvature components at one sampled base point, entries `(fiber i,
/// base a, base b, value)` for a < b.
#[derive(Debug, Serialize)]
pub struct CurvatureSample {
    pub point: Vec<f64>,
    pub entries: Vec<(usize, usize, usize, f64)>,
}

#[derive(Debug, Serialize)]
pub struct GeneratorCheck {
    pub generator: usize,
    pub lifted_h_sup: f64,
    pub force_pairing_sup: f64,
    pub force_exterior_sup: f64,
    pub invariant: bool,
}

#[derive(Debug, Serialize)]
pub struct TrajectoryFile {
    pub candidate: String,
    pub role: &'static str,
    pub file: String,
    pub rows: usize,
    pub columns: usize,
}

/// Listing entry for `mechforce list`.
#[derive(Debug, Serialize)]
pub struct ListReport {
    pub command: String,
    pub source: String,
    pub systems: Vec<SystemSummary>,
    pub seed: u64,
    pub timing_ms: u64,
}

#[derive(Debug, Serialize)]
pub struct SystemSummary {
    pub name: String,
    pub kind: &'static str,
    pub coords: Vec<String>,
    pub candidates: Vec<CandidateSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub reduced_candidates: Vec<CandidateSummary>,
}

#[derive(Debug, Serialize)]
pub struct CandidateSummary {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expect: Option<&'static str>,
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Failure::run(format!("report serialization failed: {e}")))
}

/// 64-bit FNV-1a over the exact document bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325_u64;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn config_hash(text: &str) -> String {
    format!("fnv1a64:{:016x}", fnv1a64(text.as_bytes()))
}

/// C `printf` `%.17g`: 17 significant digits, fixed or exponential
/// notation by magnitude, trailing zeros trimmed.
pub fn g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.16e}");
    let (mant, exp) = sci.split_once('e').expect("exponential form");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= 17 {
        let mant = mant.trim_end_matches('0').trim_end_matches('.');
        format!("{mant}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let prec = (16 - exp).max(0) as usize;
        let fixed = format!("{x:.prec$}");
        if fixed.contains('.') {
            fixed.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            fixed
        }
    }
}

/// Writes a trajectory as `t,<coordinate names>` rows.
pub fn write_csv(path: &Path, names: &[String], traj: &Trajectory) -> Result<(), Failure> {
    let mut out = String::new();
    out.push('t');
    for n in names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for (t, state) in traj.times().iter().zip(traj.states()) {
        out.push_str(&g17(*t));
        for v in state {
            out.push(',');
            out.push_str(&g17(*v));
        }
        out.push('\n');
    }
    let mut f = fs::File::create(path)
        .map_err(|e| Failure::run(format!("cannot create {}: {e}", path.display())))?;
    f.write_all(out.as_bytes())
        .map_err(|e| Failure::run(format!("cannot write {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_matches_printf_conventions() {
        assert_eq!(g17(0.0), "0");
        assert_eq!(g17(1.0), "1");
        assert_eq!(g17(-0.5), "-0.5");
        assert_eq!(g17(0.1), "0.10000000000000001");
        assert_eq!(g17(123456.0), "123456");
        assert_eq!(g17(1e-5), "1.0000000000000001e-05");
        assert_eq!(g17(1.5e-5), "1.5e-05");
        assert_eq!(g17(1e17), "1e+17");
        assert_eq!(g17(2.0_f64.powi(-30)), "9.3132257461547852e-10");
    }

    #[test]
    fn g17_round_trips_random_doubles() {
        let mut state = 0x9e3779b97f4a7c15_u64;
        for _ in 0..2000 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let bits = state >> 11;
            let x = (bits as f64 / (1u64 << 53) as f64 - 0.5) * 1e6;
            let back: f64 = g17(x).parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x}");
        }
    }

    #[test]
    fn fnv_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(config_hash("a"), "fnv1a64:af63dc4c8601ec8c");
    }
}
