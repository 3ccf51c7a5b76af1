//! Bivariate truncated Taylor polynomials.
//!
//! A [`Jet`] of order `p` at a base point `(x0, y0)` stores the Taylor
//! coefficients `c[a,b]` of `f(x0 + dx, y0 + dy) = sum c[a,b] dx^a dy^b` for
//! `a + b <= p`. Arithmetic on jets is forward-mode differentiation: every
//! field in this crate is evaluated as a jet, so gradients, Hessians and the
//! third derivatives needed by symmetrized covariant derivatives come out of
//! the same code path as the values.

use std::ops::{Add, Mul, Neg, Sub};

/// Highest supported total order.
pub const MAX_ORDER: usize = 6;
const N_COEF: usize = (MAX_ORDER + 1) * (MAX_ORDER + 2) / 2;

#[inline]
const fn n_coef(order: usize) -> usize {
    (order + 1) * (order + 2) / 2
}

/// Storage index of the monomial `dx^a dy^b`.
#[inline]
pub const fn index(a: usize, b: usize) -> usize {
    let d = a + b;
    d * (d + 1) / 2 + b
}

const EXPONENTS: [(usize, usize); N_COEF] = {
    let mut out = [(0, 0); N_COEF];
    let mut d = 0;
    while d <= MAX_ORDER {
        let mut b = 0;
        while b <= d {
            out[index(d - b, b)] = (d - b, b);
            b += 1;
        }
        d += 1;
    }
    out
};

const FACTORIAL: [f64; MAX_ORDER + 2] = [1.0, 1.0, 2.0, 6.0, 24.0, 120.0, 720.0, 5040.0];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    order: usize,
    c: [f64; N_COEF],
}

impl Jet {
    #[inline]
    pub fn constant(value: f64, order: usize) -> Self {
        assert!(order <= MAX_ORDER, "jet order {order} exceeds {MAX_ORDER}");
        let mut c = [0.0; N_COEF];
        c[0] = value;
        Jet { order, c }
    }

    #[inline]
    pub fn zero(order: usize) -> Self {
        Self::constant(0.0, order)
    }

    /// The coordinate function `x` (axis 0) or `y` (axis 1) expanded at `value`.
    pub fn variable(value: f64, axis: usize, order: usize) -> Self {
        let mut j = Self::constant(value, order);
        if order >= 1 {
            j.c[if axis == 0 { index(1, 0) } else { index(0, 1) }] = 1.0;
        }
        j
    }

    /// Jets of the two coordinate functions at `p`.
    pub fn coordinates(p: [f64; 2], order: usize) -> (Self, Self) {
        (Self::variable(p[0], 0, order), Self::variable(p[1], 1, order))
    }

    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.c[0]
    }

    pub fn coefficient(&self, a: usize, b: usize) -> f64 {
        if a + b > self.order {
            0.0
        } else {
            self.c[index(a, b)]
        }
    }

    /// Partial derivative `d^(a+b) f / dx^a dy^b` at the base point.
    pub fn derivative(&self, a: usize, b: usize) -> f64 {
        assert!(a + b <= self.order, "derivative ({a},{b}) beyond jet order {}", self.order);
        self.c[index(a, b)] * FACTORIAL[a] * FACTORIAL[b]
    }

    pub fn gradient(&self) -> [f64; 2] {
        [self.derivative(1, 0), self.derivative(0, 1)]
    }

    pub fn hessian(&self) -> [[f64; 2]; 2] {
        let xy = self.derivative(1, 1);
        [[self.derivative(2, 0), xy], [xy, self.derivative(0, 2)]]
    }

    pub fn laplacian(&self) -> f64 {
        self.derivative(2, 0) + self.derivative(0, 2)
    }

    /// Drops coefficients above `order`.
    pub fn truncate(&self, order: usize) -> Self {
        let order = order.min(self.order);
        let mut c = [0.0; N_COEF];
        c[..n_coef(order)].copy_from_slice(&self.c[..n_coef(order)]);
        Jet { order, c }
    }

    /// Jet of the partial derivative along `axis`; loses one order.
    pub fn partial(&self, axis: usize) -> Self {
        assert!(self.order >= 1, "cannot differentiate an order-0 jet");
        let order = self.order - 1;
        let mut c = [0.0; N_COEF];
        for (i, slot) in c.iter_mut().enumerate().take(n_coef(order)) {
            let (a, b) = EXPONENTS[i];
            *slot = if axis == 0 {
                (a + 1) as f64 * self.c[index(a + 1, b)]
            } else {
                (b + 1) as f64 * self.c[index(a, b + 1)]
            };
        }
        Jet { order, c }
    }

    #[inline]
    pub fn scale(&self, s: f64) -> Self {
        let mut out = *self;
        for v in out.c[..n_coef(self.order)].iter_mut() {
            *v *= s;
        }
        out
    }

    #[inline]
    pub fn add_scalar(&self, s: f64) -> Self {
        let mut out = *self;
        out.c[0] += s;
        out
    }

    /// Composition `g(self)` given `derivs[k] = g^(k)(self.value())`.
    ///
    /// `derivs` must hold at least `order + 1` entries.
    pub fn compose(&self, derivs: &[f64]) -> Self {
        let order = self.order;
        debug_assert!(derivs.len() > order);
        let mut out = Self::constant(derivs[0], order);
        if order == 0 {
            return out;
        }
        let mut delta = *self;
        delta.c[0] = 0.0;
        let mut power = delta;
        for (k, dk) in derivs.iter().enumerate().take(order + 1).skip(1) {
            let coef = dk / FACTORIAL[k];
            for i in 1..n_coef(order) {
                out.c[i] += coef * power.c[i];
            }
            if k < order {
                power = power * delta;
            }
        }
        out
    }

    pub fn exp(&self) -> Self {
        let e = self.value().exp();
        self.compose(&[e; MAX_ORDER + 1])
    }

    pub fn sin(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        let d = [s, c, -s, -c, s, c, -s];
        self.compose(&d)
    }

    pub fn cos(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        let d = [c, -s, -c, s, c, -s, -c];
        self.compose(&d)
    }

    pub fn sqrt(&self) -> Self {
        let v = self.value();
        let mut d = [0.0; MAX_ORDER + 1];
        d[0] = v.sqrt();
        // d^k sqrt(v) = (1/2)(1/2 - 1)...(1/2 - k + 1) v^(1/2 - k)
        let mut coef = 1.0;
        let mut pow = d[0];
        for (k, slot) in d.iter_mut().enumerate().take(self.order + 1).skip(1) {
            coef *= 0.5 - (k - 1) as f64;
            pow /= v;
            *slot = coef * pow;
        }
        self.compose(&d)
    }

    pub fn recip(&self) -> Self {
        let v = self.value();
        let mut d = [0.0; MAX_ORDER + 1];
        let inv = 1.0 / v;
        let mut coef = inv;
        for (k, slot) in d.iter_mut().enumerate().take(self.order + 1) {
            *slot = coef;
            coef *= -((k + 1) as f64) * inv;
        }
        self.compose(&d)
    }

    /// Adds the expansion of `coef * x^a * y^b` about the base point `p`.
    pub fn add_monomial(&mut self, p: [f64; 2], coef: f64, a: u32, b: u32) {
        let (a, b) = (a as usize, b as usize);
        let mut bx = 1.0;
        for i in 0..=a.min(self.order) {
            let cx = coef * bx * p[0].powi((a - i) as i32);
            let mut by = 1.0;
            for j in 0..=b.min(self.order - i) {
                self.c[index(i, j)] += cx * by * p[1].powi((b - j) as i32);
                by = by * (b - j) as f64 / (j + 1) as f64;
            }
            bx = bx * (a - i) as f64 / (i + 1) as f64;
        }
    }

    pub fn powi(&self, n: u32) -> Self {
        let mut out = Self::constant(1.0, self.order);
        for _ in 0..n {
            out = out * *self;
        }
        out
    }
}

impl Add for Jet {
    type Output = Jet;
    #[inline]
    fn add(self, rhs: Jet) -> Jet {
        let order = self.order.min(rhs.order);
        let mut out = if self.order == order { self } else { self.truncate(order) };
        for i in 0..n_coef(order) {
            out.c[i] += rhs.c[i];
        }
        out
    }
}

impl Sub for Jet {
    type Output = Jet;
    #[inline]
    fn sub(self, rhs: Jet) -> Jet {
        let order = self.order.min(rhs.order);
        let mut out = if self.order == order { self } else { self.truncate(order) };
        for i in 0..n_coef(order) {
            out.c[i] -= rhs.c[i];
        }
        out
    }
}

impl Neg for Jet {
    type Output = Jet;
    #[inline]
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    #[inline]
    fn mul(self, rhs: Jet) -> Jet {
        let order = self.order.min(rhs.order);
        let mut c = [0.0; N_COEF];
        match order {
            0 => c[0] = self.c[0] * rhs.c[0],
            1 => {
                c[0] = self.c[0] * rhs.c[0];
                c[1] = self.c[0] * rhs.c[1] + self.c[1] * rhs.c[0];
                c[2] = self.c[0] * rhs.c[2] + self.c[2] * rhs.c[0];
            }
            _ => {
                let n = n_coef(order);
                for i in 0..n {
                    let li = self.c[i];
                    if li == 0.0 {
                        continue;
                    }
                    let (a1, b1) = EXPONENTS[i];
                    let budget = order - a1 - b1;
                    for j in 0..n_coef(budget) {
                        let (a2, b2) = EXPONENTS[j];
                        c[index(a1 + a2, b1 + b2)] += li * rhs.c[j];
                    }
                }
            }
        }
        Jet { order, c }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn product_rule_matches_closed_form() {
        // f = x^2 y^3 at (1.5, -0.5)
        let (x, y) = Jet::coordinates([1.5, -0.5], 4);
        let f = x.powi(2) * y.powi(3);
        assert_relative_eq!(f.value(), 2.25 * -0.125);
        assert_relative_eq!(f.derivative(1, 0), 2.0 * 1.5 * -0.125);
        assert_relative_eq!(f.derivative(0, 1), 2.25 * 3.0 * 0.25);
        assert_relative_eq!(f.derivative(1, 1), 2.0 * 1.5 * 3.0 * 0.25);
        assert_relative_eq!(f.derivative(2, 2), 2.0 * 6.0 * -0.5);
    }

    #[test]
    fn exp_sin_sqrt_derivatives() {
        let (x, y) = Jet::coordinates([0.3, 0.7], 3);
        let g = (x * y).exp();
        let v = (0.21f64).exp();
        assert_relative_eq!(g.derivative(1, 0), 0.7 * v, epsilon = 1e-14);
        assert_relative_eq!(g.derivative(2, 0), 0.49 * v, epsilon = 1e-14);
        assert_relative_eq!(g.derivative(1, 1), (1.0 + 0.21) * v, epsilon = 1e-14);

        let s = (x + y.scale(2.0)).sin();
        assert_relative_eq!(s.derivative(0, 3), -8.0 * (1.7f64).cos(), epsilon = 1e-13);

        let r = (x.powi(2) + y.powi(2)).sqrt();
        let rho = (0.58f64).sqrt();
        assert_relative_eq!(r.derivative(1, 0), 0.3 / rho, epsilon = 1e-14);
        assert_relative_eq!(r.derivative(0, 2), 0.09 / rho.powi(3), epsilon = 1e-13);
    }

    #[test]
    fn recip_and_partial() {
        let (x, _) = Jet::coordinates([2.0, 0.0], 5);
        let r = x.recip();
        // d^k (1/x) = (-1)^k k! / x^(k+1)
        assert_relative_eq!(r.derivative(4, 0), 24.0 / 32.0, epsilon = 1e-14);
        let dr = r.partial(0);
        assert_eq!(dr.order(), 4);
        assert_relative_eq!(dr.value(), -0.25);
        assert_relative_eq!(dr.derivative(1, 0), 2.0 / 8.0);
    }

    #[test]
    fn mixed_orders_truncate_to_minimum() {
        let (x, _) = Jet::coordinates([1.0, 1.0], 4);
        let (_, y) = Jet::coordinates([1.0, 1.0], 2);
        let p = x * y;
        assert_eq!(p.order(), 2);
        assert_relative_eq!(p.derivative(1, 1), 1.0);
    }

    #[test]
    fn monomial_expansion_matches_products() {
        let p = [0.7, -1.3];
        for order in 0..=MAX_ORDER {
            let (x, y) = Jet::coordinates(p, order);
            for a in 0..5 {
                for b in 0..5 {
                    let mut direct = Jet::zero(order);
                    direct.add_monomial(p, 1.5, a, b);
                    let product = (x.powi(a) * y.powi(b)).scale(1.5);
                    for i in 0..n_coef(order) {
                        assert_relative_eq!(direct.c[i], product.c[i], epsilon = 1e-12, max_relative = 1e-12);
                    }
                }
            }
        }
    }
}
