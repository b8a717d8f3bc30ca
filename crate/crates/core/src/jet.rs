//! Second-order forward-mode jets: value, gradient, and Hessian propagated
//! together through arithmetic.
//!
//! A [`Jet`] represents the degree-2 Taylor data of a scalar quantity with
//! respect to `dim` ambient variables. The Hessian is stored as a packed
//! lower triangle, so symmetry holds by construction rather than by
//! bookkeeping: `hess(i, j)` and `hess(j, i)` read the same slot.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Packed index of the lower-triangular entry `(i, j)` with `i >= j`.
#[inline]
fn pidx(i: usize, j: usize) -> usize {
    debug_assert!(i >= j);
    i * (i + 1) / 2 + j
}

#[inline]
fn packed_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Value, gradient, and symmetric Hessian with respect to `dim` variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    dim: usize,
    pub val: f64,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

impl Jet {
    /// A constant: zero gradient and Hessian.
    pub fn constant(dim: usize, val: f64) -> Self {
        Jet {
            dim,
            val,
            grad: vec![0.0; dim],
            hess: vec![0.0; packed_len(dim)],
        }
    }

    /// The `idx`-th ambient variable seeded at `val`.
    pub fn variable(dim: usize, idx: usize, val: f64) -> Self {
        let mut j = Jet::constant(dim, val);
        j.grad[idx] = 1.0;
        j
    }

    /// Identity seeds for a full point: one variable jet per component.
    pub fn seed_point(x: &[f64]) -> Vec<Jet> {
        let d = x.len();
        x.iter()
            .enumerate()
            .map(|(i, &v)| Jet::variable(d, i, v))
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    #[inline]
    pub fn hess(&self, i: usize, j: usize) -> f64 {
        if i >= j {
            self.hess[pidx(i, j)]
        } else {
            self.hess[pidx(j, i)]
        }
    }

    /// Hessian expanded to full nested rows.
    pub fn hess_full(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.hess(i, j)).collect())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.val.is_finite()
            && self.grad.iter().all(|v| v.is_finite())
            && self.hess.iter().all(|v| v.is_finite())
    }

    pub fn add(&self, o: &Jet) -> Jet {
        let mut r = self.clone();
        r.val += o.val;
        for (a, b) in r.grad.iter_mut().zip(&o.grad) {
            *a += b;
        }
        for (a, b) in r.hess.iter_mut().zip(&o.hess) {
            *a += b;
        }
        r
    }

    pub fn sub(&self, o: &Jet) -> Jet {
        let mut r = self.clone();
        r.val -= o.val;
        for (a, b) in r.grad.iter_mut().zip(&o.grad) {
            *a -= b;
        }
        for (a, b) in r.hess.iter_mut().zip(&o.hess) {
            *a -= b;
        }
        r
    }

    pub fn neg(&self) -> Jet {
        self.scale(-1.0)
    }

    pub fn scale(&self, c: f64) -> Jet {
        let mut r = self.clone();
        r.val *= c;
        for a in &mut r.grad {
            *a *= c;
        }
        for a in &mut r.hess {
            *a *= c;
        }
        r
    }

    pub fn add_scalar(&self, c: f64) -> Jet {
        let mut r = self.clone();
        r.val += c;
        r
    }

    pub fn mul(&self, o: &Jet) -> Jet {
        let d = self.dim;
        let mut r = Jet::constant(d, self.val * o.val);
        for k in 0..d {
            r.grad[k] = self.grad[k] * o.val + o.grad[k] * self.val;
        }
        for i in 0..d {
            for j in 0..=i {
                r.hess[pidx(i, j)] = self.val * o.hess[pidx(i, j)]
                    + o.val * self.hess[pidx(i, j)]
                    + self.grad[i] * o.grad[j]
                    + self.grad[j] * o.grad[i];
            }
        }
        r
    }

    /// Quotient `self / o`, derived from `self = r * o`.
    pub fn div(&self, o: &Jet) -> Jet {
        let d = self.dim;
        let w = self.val / o.val;
        let mut r = Jet::constant(d, w);
        for k in 0..d {
            r.grad[k] = (self.grad[k] - w * o.grad[k]) / o.val;
        }
        for i in 0..d {
            for j in 0..=i {
                r.hess[pidx(i, j)] = (self.hess[pidx(i, j)]
                    - w * o.hess[pidx(i, j)]
                    - r.grad[i] * o.grad[j]
                    - r.grad[j] * o.grad[i])
                    / o.val;
            }
        }
        r
    }

    /// Composition with a scalar function given its value and first two
    /// derivatives at `self.val`.
    pub fn map_unary(&self, f0: f64, f1: f64, f2: f64) -> Jet {
        let d = self.dim;
        let mut r = Jet::constant(d, f0);
        for k in 0..d {
            r.grad[k] = f1 * self.grad[k];
        }
        for i in 0..d {
            for j in 0..=i {
                r.hess[pidx(i, j)] =
                    f1 * self.hess[pidx(i, j)] + f2 * self.grad[i] * self.grad[j];
            }
        }
        r
    }

    /// Integer power by the power rule; negative bases are fine.
    pub fn powi(&self, k: i64) -> Jet {
        let u = self.val;
        let f0 = powi_f64(u, k);
        let f1 = k as f64 * powi_f64(u, k - 1);
        let f2 = (k * (k - 1)) as f64 * powi_f64(u, k - 2);
        self.map_unary(f0, f1, f2)
    }

    /// Chain rule: composes outer Taylor data (over `args.len()` inner
    /// variables) with the inner jets, which all live in the ambient space.
    ///
    /// `outer_grad` has one entry per inner variable and `outer_hess` is the
    /// packed lower triangle over inner variables.
    pub fn chain(outer_val: f64, outer_grad: &[f64], outer_hess: &[f64], args: &[Jet]) -> Result<Jet> {
        let m = outer_grad.len();
        if args.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: args.len(),
            });
        }
        if outer_hess.len() != packed_len(m) {
            return Err(Error::DimensionMismatch {
                expected: packed_len(m),
                got: outer_hess.len(),
            });
        }
        let d = args.first().map_or(0, Jet::dim);
        let mut r = Jet::constant(d, outer_val);
        for (a, arg) in args.iter().enumerate() {
            let fa = outer_grad[a];
            if fa != 0.0 {
                for k in 0..d {
                    r.grad[k] += fa * arg.grad[k];
                }
                for i in 0..d {
                    for j in 0..=i {
                        r.hess[pidx(i, j)] += fa * arg.hess[pidx(i, j)];
                    }
                }
            }
        }
        for a in 0..m {
            for b in 0..m {
                let fab = if a >= b {
                    outer_hess[pidx(a, b)]
                } else {
                    outer_hess[pidx(b, a)]
                };
                if fab == 0.0 {
                    continue;
                }
                let ga = &args[a].grad;
                let gb = &args[b].grad;
                for i in 0..d {
                    for j in 0..=i {
                        r.hess[pidx(i, j)] += fab * ga[i] * gb[j];
                    }
                }
            }
        }
        Ok(r)
    }
}

/// First-order dual numbers: value and gradient only.
///
/// Gradient queries do not need the Hessian half of a [`Jet`], which costs
/// `O(dim^2)` per arithmetic node; expression evaluation for gradients runs
/// on these instead. The arithmetic mirrors [`Jet`] operation for
/// operation, so switching a caller between the two never changes a value
/// or a first derivative, not even in the last bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual {
    dim: usize,
    pub val: f64,
    grad: Vec<f64>,
}

impl Dual {
    /// A constant: zero gradient.
    pub fn constant(dim: usize, val: f64) -> Self {
        Dual {
            dim,
            val,
            grad: vec![0.0; dim],
        }
    }

    /// The `idx`-th ambient variable seeded at `val`.
    pub fn variable(dim: usize, idx: usize, val: f64) -> Self {
        let mut d = Dual::constant(dim, val);
        d.grad[idx] = 1.0;
        d
    }

    /// Identity seeds for a full point.
    pub fn seed_point(x: &[f64]) -> Vec<Dual> {
        let d = x.len();
        x.iter()
            .enumerate()
            .map(|(i, &v)| Dual::variable(d, i, v))
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn into_grad(self) -> Vec<f64> {
        self.grad
    }

    pub fn is_finite(&self) -> bool {
        self.val.is_finite() && self.grad.iter().all(|v| v.is_finite())
    }

    // The binary operations consume `self` so that interior nodes of an
    // expression walk reuse one gradient buffer instead of cloning.

    pub fn add(mut self, o: &Dual) -> Dual {
        self.val += o.val;
        for (a, b) in self.grad.iter_mut().zip(&o.grad) {
            *a += b;
        }
        self
    }

    pub fn sub(mut self, o: &Dual) -> Dual {
        self.val -= o.val;
        for (a, b) in self.grad.iter_mut().zip(&o.grad) {
            *a -= b;
        }
        self
    }

    pub fn neg(self) -> Dual {
        self.scale(-1.0)
    }

    pub fn scale(mut self, c: f64) -> Dual {
        self.val *= c;
        for a in &mut self.grad {
            *a *= c;
        }
        self
    }

    pub fn add_scalar(mut self, c: f64) -> Dual {
        self.val += c;
        self
    }

    pub fn mul(mut self, o: &Dual) -> Dual {
        for (a, b) in self.grad.iter_mut().zip(&o.grad) {
            *a = *a * o.val + b * self.val;
        }
        self.val *= o.val;
        self
    }

    /// Quotient `self / o`, derived from `self = r * o`.
    pub fn div(mut self, o: &Dual) -> Dual {
        let w = self.val / o.val;
        for (a, b) in self.grad.iter_mut().zip(&o.grad) {
            *a = (*a - w * b) / o.val;
        }
        self.val = w;
        self
    }

    /// Composition with a scalar function given its value and derivative at
    /// `self.val`.
    pub fn map_unary(mut self, f0: f64, f1: f64) -> Dual {
        self.val = f0;
        for a in &mut self.grad {
            *a *= f1;
        }
        self
    }

    /// Integer power by the power rule; negative bases are fine.
    pub fn powi(self, k: i64) -> Dual {
        let u = self.val;
        self.map_unary(powi_f64(u, k), k as f64 * powi_f64(u, k - 1))
    }
}

/// `x^k` for integer `k` by repeated squaring; exact sign handling for
/// negative bases.
pub fn powi_f64(x: f64, k: i64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let mut base = if k < 0 { 1.0 / x } else { x };
    let mut e = k.unsigned_abs();
    let mut acc = 1.0;
    while e > 0 {
        if e & 1 == 1 {
            acc *= base;
        }
        base *= base;
        e >>= 1;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn product_rule() {
        // f = x * y at (2, 3): grad (3, 2), hess off-diagonal 1.
        let x = Jet::variable(2, 0, 2.0);
        let y = Jet::variable(2, 1, 3.0);
        let f = x.mul(&y);
        assert_eq!(f.val, 6.0);
        assert_eq!(f.grad(), &[3.0, 2.0]);
        assert_eq!(f.hess(0, 1), 1.0);
        assert_eq!(f.hess(0, 0), 0.0);
    }

    #[test]
    fn quotient_rule() {
        // f = x / y at (1, 2).
        let x = Jet::variable(2, 0, 1.0);
        let y = Jet::variable(2, 1, 2.0);
        let f = x.div(&y);
        assert!(close(f.val, 0.5, 1e-15));
        assert!(close(f.grad()[0], 0.5, 1e-15));
        assert!(close(f.grad()[1], -0.25, 1e-15));
        // d2f/dy2 = 2x/y^3 = 0.25, d2f/dxdy = -1/y^2 = -0.25.
        assert!(close(f.hess(1, 1), 0.25, 1e-15));
        assert!(close(f.hess(0, 1), -0.25, 1e-15));
    }

    #[test]
    fn integer_power_negative_base() {
        let x = Jet::variable(1, 0, -2.0);
        let f = x.powi(3);
        assert_eq!(f.val, -8.0);
        assert_eq!(f.grad()[0], 12.0);
        assert_eq!(f.hess(0, 0), -12.0);
    }

    #[test]
    fn unary_chain() {
        // f = sin(x^2) at x = 0.7.
        let x = Jet::variable(1, 0, 0.7);
        let u = x.mul(&x);
        let f = u.map_unary(libm::sin(u.val), libm::cos(u.val), -libm::sin(u.val));
        let (s, c) = (libm::sin(0.49), libm::cos(0.49));
        assert!(close(f.val, s, 1e-15));
        assert!(close(f.grad()[0], 2.0 * 0.7 * c, 1e-15));
        assert!(close(f.hess(0, 0), 2.0 * c - 4.0 * 0.49 * s, 1e-14));
    }

    #[test]
    fn chain_against_direct() {
        // F(u, v) = u^2 v with u = x + y, v = x * y; compare the chained
        // jet against direct evaluation at (1.3, -0.4).
        let (xv, yv) = (1.3, -0.4);
        let x = Jet::variable(2, 0, xv);
        let y = Jet::variable(2, 1, yv);
        let u = x.add(&y);
        let v = x.mul(&y);
        let direct = u.mul(&u).mul(&v);

        let (uv, vv) = (u.val, v.val);
        let outer_val = uv * uv * vv;
        let outer_grad = [2.0 * uv * vv, uv * uv];
        // Packed lower triangle over (u, v): [f_uu, f_vu, f_vv].
        let outer_hess = [2.0 * vv, 2.0 * uv, 0.0];
        let chained = Jet::chain(outer_val, &outer_grad, &outer_hess, &[u, v]).unwrap();

        assert!(close(chained.val, direct.val, 1e-13));
        for k in 0..2 {
            assert!(close(chained.grad()[k], direct.grad()[k], 1e-13));
        }
        for i in 0..2 {
            for j in 0..2 {
                assert!(close(chained.hess(i, j), direct.hess(i, j), 1e-13));
            }
        }
    }

    #[test]
    fn dual_agrees_with_jet_bit_for_bit() {
        // Same composite worked through both towers: values and gradients
        // must coincide exactly, not just to rounding.
        let (xv, yv) = (1.3, -0.4);
        let jx = Jet::variable(2, 0, xv);
        let jy = Jet::variable(2, 1, yv);
        let jr = jx.add(&jy).mul(&jx.mul(&jy)).div(&jx.sub(&jy)).powi(3);

        let dx = Dual::variable(2, 0, xv);
        let dy = Dual::variable(2, 1, yv);
        let dr = dx
            .clone()
            .add(&dy)
            .mul(&dx.clone().mul(&dy))
            .div(&dx.sub(&dy))
            .powi(3);

        assert_eq!(jr.val, dr.val);
        assert_eq!(jr.grad(), dr.grad());
    }

    #[test]
    fn powi_f64_matches_libm_pow() {
        for (x, k) in [(2.0, 10), (-3.0, 3), (1.7, -4), (-2.5, -3)] {
            let want = libm::pow(x as f64, k as f64);
            let got = powi_f64(x, k);
            assert!(close(got, want, want.abs() * 1e-14 + 1e-300), "{x} {k}");
        }
    }
}
