//! Scalar abstraction used by the element routines.
//!
//! Element residuals are written generically over [`Real`] so that the same
//! code is evaluated either with plain `f64` (residual assembly) or with
//! forward-mode dual numbers [`Dual`] carrying several derivative directions
//! (consistent tangent assembly). Derivatives obtained this way are exact to
//! rounding, which is what the finite-difference consistency suite checks
//! against.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

/// Scalar type for element-level math: `f64` or a forward-mode dual number.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + PartialOrd<Self>
{
    fn from_f64(v: f64) -> Self;
    fn value(self) -> f64;
    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn one() -> Self {
        Self::from_f64(1.0)
    }
    fn sqrt(self) -> Self;
    fn ln(self) -> Self;
    fn exp(self) -> Self;
    fn tanh(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn abs(self) -> Self;
    fn powi(self, n: i32) -> Self;
    /// Scale by a plain constant (cheaper than promoting the constant).
    fn scale(self, c: f64) -> Self;
}

impl Real for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    #[inline]
    fn scale(self, c: f64) -> Self {
        self * c
    }
}

/// Forward-mode dual number with `N` simultaneous derivative directions.
#[derive(Clone, Copy, Debug)]
pub struct Dual<const N: usize> {
    pub v: f64,
    pub d: [f64; N],
}

impl<const N: usize> Dual<N> {
    #[inline]
    pub fn constant(v: f64) -> Self {
        Dual { v, d: [0.0; N] }
    }

    /// Value `v` seeded as the `lane`-th independent variable.
    #[inline]
    pub fn variable(v: f64, lane: usize) -> Self {
        let mut d = [0.0; N];
        d[lane] = 1.0;
        Dual { v, d }
    }

    #[inline]
    fn map(self, v: f64, dv: f64) -> Self {
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = dv * self.d[i];
        }
        Dual { v, d }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let mut d = self.d;
        for i in 0..N {
            d[i] += rhs.d[i];
        }
        Dual { v: self.v + rhs.v, d }
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        let mut d = self.d;
        for i in 0..N {
            d[i] -= rhs.d[i];
        }
        Dual { v: self.v - rhs.v, d }
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = self.d[i] * rhs.v + self.v * rhs.d[i];
        }
        Dual { v: self.v * rhs.v, d }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.v;
        let v = self.v * inv;
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = (self.d[i] - v * rhs.d[i]) * inv;
        }
        Dual { v, d }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        let mut d = self.d;
        for x in d.iter_mut() {
            *x = -*x;
        }
        Dual { v: -self.v, d }
    }
}

impl<const N: usize> AddAssign for Dual<N> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        self.v += rhs.v;
        for i in 0..N {
            self.d[i] += rhs.d[i];
        }
    }
}

impl<const N: usize> SubAssign for Dual<N> {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        self.v -= rhs.v;
        for i in 0..N {
            self.d[i] -= rhs.d[i];
        }
    }
}

impl<const N: usize> PartialEq for Dual<N> {
    fn eq(&self, other: &Self) -> bool {
        self.v == other.v
    }
}

impl<const N: usize> PartialOrd for Dual<N> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.v.partial_cmp(&other.v)
    }
}

impl<const N: usize> Real for Dual<N> {
    #[inline]
    fn from_f64(v: f64) -> Self {
        Dual::constant(v)
    }
    #[inline]
    fn value(self) -> f64 {
        self.v
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.map(s, 0.5 / s)
    }
    #[inline]
    fn ln(self) -> Self {
        self.map(self.v.ln(), 1.0 / self.v)
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.map(e, e)
    }
    #[inline]
    fn tanh(self) -> Self {
        let t = self.v.tanh();
        self.map(t, 1.0 - t * t)
    }
    #[inline]
    fn sin(self) -> Self {
        self.map(self.v.sin(), self.v.cos())
    }
    #[inline]
    fn cos(self) -> Self {
        self.map(self.v.cos(), -self.v.sin())
    }
    #[inline]
    fn abs(self) -> Self {
        if self.v < 0.0 {
            -self
        } else {
            self
        }
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        self.map(self.v.powi(n), n as f64 * self.v.powi(n - 1))
    }
    #[inline]
    fn scale(self, c: f64) -> Self {
        let mut d = self.d;
        for x in d.iter_mut() {
            *x *= c;
        }
        Dual { v: self.v * c, d }
    }
}

/// 3-vector over a generic scalar.
#[derive(Clone, Copy, Debug)]
pub struct V3<R: Real>(pub [R; 3]);

impl<R: Real> V3<R> {
    #[inline]
    pub fn zero() -> Self {
        V3([R::zero(); 3])
    }
    #[inline]
    pub fn new(x: R, y: R, z: R) -> Self {
        V3([x, y, z])
    }
    #[inline]
    pub fn from_f64(v: [f64; 3]) -> Self {
        V3([R::from_f64(v[0]), R::from_f64(v[1]), R::from_f64(v[2])])
    }
    #[inline]
    pub fn value(self) -> [f64; 3] {
        [self.0[0].value(), self.0[1].value(), self.0[2].value()]
    }
    #[inline]
    pub fn dot(self, o: Self) -> R {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }
    #[inline]
    pub fn cross(self, o: Self) -> Self {
        V3([
            self.0[1] * o.0[2] - self.0[2] * o.0[1],
            self.0[2] * o.0[0] - self.0[0] * o.0[2],
            self.0[0] * o.0[1] - self.0[1] * o.0[0],
        ])
    }
    #[inline]
    pub fn norm(self) -> R {
        self.dot(self).sqrt()
    }
    #[inline]
    pub fn scale(self, c: R) -> Self {
        V3([self.0[0] * c, self.0[1] * c, self.0[2] * c])
    }
    /// Scale by a plain constant.
    #[inline]
    pub fn scale_f64(self, c: f64) -> Self {
        V3([self.0[0].scale(c), self.0[1].scale(c), self.0[2].scale(c)])
    }
    #[inline]
    pub fn normalized(self) -> Self {
        let n = self.norm();
        V3([self.0[0] / n, self.0[1] / n, self.0[2] / n])
    }
}

impl<R: Real> Add for V3<R> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        V3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl<R: Real> Sub for V3<R> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        V3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl<R: Real> Neg for V3<R> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        V3([-self.0[0], -self.0[1], -self.0[2]])
    }
}

impl<R: Real> AddAssign for V3<R> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

/// Symmetric 2x2 tensor in covariant or contravariant components.
#[derive(Clone, Copy, Debug)]
pub struct Sym2<R: Real> {
    pub m11: R,
    pub m22: R,
    pub m12: R,
}

impl<R: Real> Sym2<R> {
    #[inline]
    pub fn zero() -> Self {
        Sym2 { m11: R::zero(), m22: R::zero(), m12: R::zero() }
    }
    #[inline]
    pub fn det(self) -> R {
        self.m11 * self.m22 - self.m12 * self.m12
    }
    /// Inverse of a symmetric 2x2 matrix.
    #[inline]
    pub fn inverse(self) -> Self {
        let inv_det = R::one() / self.det();
        Sym2 {
            m11: self.m22 * inv_det,
            m22: self.m11 * inv_det,
            m12: -self.m12 * inv_det,
        }
    }
    #[inline]
    pub fn get(self, a: usize, b: usize) -> R {
        match (a, b) {
            (0, 0) => self.m11,
            (1, 1) => self.m22,
            _ => self.m12,
        }
    }
    /// Double contraction `A : B`.
    #[inline]
    pub fn ddot(self, o: Self) -> R {
        self.m11 * o.m11 + self.m22 * o.m22 + (self.m12 * o.m12).scale(2.0)
    }
    #[inline]
    pub fn add(self, o: Self) -> Self {
        Sym2 { m11: self.m11 + o.m11, m22: self.m22 + o.m22, m12: self.m12 + o.m12 }
    }
    #[inline]
    pub fn scale(self, c: R) -> Self {
        Sym2 { m11: self.m11 * c, m22: self.m22 * c, m12: self.m12 * c }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_chain_rules_match_finite_differences() {
        let f = |x: f64| (x.sqrt() * x.tanh() + (1.0 + x).ln()).exp() / (1.0 + x * x);
        let fd = |x: f64, h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
        let g = |x: Dual<1>| {
            let one = Dual::constant(1.0);
            (x.sqrt() * x.tanh() + (one + x).ln()).exp() / (one + x * x)
        };
        for &x in &[0.3, 1.7, 4.2] {
            let d = g(Dual::variable(x, 0));
            let expect = fd(x, 1e-6);
            assert!((d.d[0] - expect).abs() < 1e-7 * expect.abs().max(1.0));
            assert!((d.v - f(x)).abs() < 1e-14);
        }
    }

    #[test]
    fn v3_cross_is_orthogonal() {
        let a = V3::<f64>::new(1.0, 2.0, 3.0);
        let b = V3::<f64>::new(-0.3, 0.5, 0.9);
        let c = a.cross(b);
        assert!(c.dot(a).abs() < 1e-14);
        assert!(c.dot(b).abs() < 1e-14);
    }

    #[test]
    fn sym2_inverse() {
        let m = Sym2 { m11: 2.0, m22: 3.0, m12: 0.4 };
        let inv = m.inverse();
        let prod11 = m.m11 * inv.m11 + m.m12 * inv.m12;
        let prod12 = m.m11 * inv.m12 + m.m12 * inv.m22;
        assert!((prod11 - 1.0).abs() < 1e-14);
        assert!(prod12.abs() < 1e-14);
    }
}
