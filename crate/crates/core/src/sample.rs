//! Axis-aligned sample boxes and deterministic low-discrepancy sampling.
//!
//! Verification sweeps evaluate residuals at a cloud of points inside a box.
//! The cloud comes from an additive-recurrence (Kronecker) sequence built on
//! the generalized golden ratio, offset per-axis by a SplitMix64 hash of the
//! seed, so runs are reproducible: same box, count, and seed give bitwise
//! identical points.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Closed box `[lo_1, hi_1] x ... x [lo_d, hi_d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl SampleBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.is_empty() {
            return Err(Error::Invalid("sample box needs at least one axis".into()));
        }
        for (a, b) in lo.iter().zip(&hi) {
            if !(a.is_finite() && b.is_finite() && a <= b) {
                return Err(Error::Invalid("sample box bounds must be finite with lo <= hi".into()));
            }
        }
        Ok(SampleBox { lo, hi })
    }

    /// The box `[-1, 1]^d` used as the default verification domain.
    pub fn unit(dim: usize) -> Self {
        SampleBox::new(alloc::vec![-1.0; dim], alloc::vec![1.0; dim]).expect("unit box")
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| v >= a && v <= b)
    }

    /// `count` quasi-random points for the given seed.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut seq = Kronecker::new(self.dim(), seed);
        (0..count).map(|_| self.map_unit(&seq.next_point())).collect()
    }

    /// Like [`sample`](Self::sample) but keeps only points passing `keep`.
    /// Gives up once 1000 * `count` candidates were drawn without filling
    /// the request, which signals a predicate that rejects nearly all of
    /// the box.
    pub fn sample_where<F>(&self, count: usize, seed: u64, keep: F) -> Result<Vec<Vec<f64>>>
    where
        F: Fn(&[f64]) -> bool,
    {
        let mut seq = Kronecker::new(self.dim(), seed);
        let mut out = Vec::with_capacity(count);
        let mut attempts: usize = 0;
        while out.len() < count {
            attempts += 1;
            if attempts > count.saturating_mul(1000) {
                return Err(Error::Invalid(
                    "sample predicate rejects almost the whole box".into(),
                ));
            }
            let p = self.map_unit(&seq.next_point());
            if keep(&p) {
                out.push(p);
            }
        }
        Ok(out)
    }

    fn map_unit(&self, u: &[f64]) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .zip(u)
            .map(|((a, b), t)| a + t * (b - a))
            .collect()
    }
}

/// Additive-recurrence sequence `frac(off_j + t * alpha_j)` where the
/// `alpha_j` are powers of the inverse generalized golden ratio for the
/// dimension. Low discrepancy in every axis count we care about.
struct Kronecker {
    state: Vec<f64>,
    alpha: Vec<f64>,
}

impl Kronecker {
    fn new(dim: usize, seed: u64) -> Self {
        // Root of x^(d+1) = x + 1, via a few Newton steps from 1.5.
        let d = dim as f64;
        let mut phi = 1.5_f64;
        for _ in 0..64 {
            let f = libm::pow(phi, d + 1.0) - phi - 1.0;
            let fp = (d + 1.0) * libm::pow(phi, d) - 1.0;
            let next = phi - f / fp;
            if (next - phi).abs() < 1e-15 {
                phi = next;
                break;
            }
            phi = next;
        }
        let mut hash = seed;
        let mut state = Vec::with_capacity(dim);
        let mut alpha = Vec::with_capacity(dim);
        for j in 0..dim {
            state.push(splitmix64(&mut hash) as f64 / (u64::MAX as f64 + 1.0));
            alpha.push(fract(libm::pow(1.0 / phi, (j + 1) as f64)));
        }
        Kronecker { state, alpha }
    }

    fn next_point(&mut self) -> Vec<f64> {
        for (s, a) in self.state.iter_mut().zip(&self.alpha) {
            *s = fract(*s + *a);
        }
        self.state.clone()
    }
}

#[inline]
fn fract(x: f64) -> f64 {
    x - libm::floor(x)
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
