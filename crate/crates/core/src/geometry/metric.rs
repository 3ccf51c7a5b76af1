use serde::{Deserialize, Serialize};

use crate::expr::{Expr, ScalarField};
use crate::jet::Jet;

/// `phi = xx x^2 + xy x y + yy y^2 + x x + y y + c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct QuadraticPhi {
    #[serde(default)]
    pub xx: f64,
    #[serde(default)]
    pub xy: f64,
    #[serde(default)]
    pub yy: f64,
    #[serde(default)]
    pub x: f64,
    #[serde(default)]
    pub y: f64,
    #[serde(default)]
    pub c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PhiSpec {
    Zero,
    GaussianBump(crate::expr::Gaussian),
    Quadratic(QuadraticPhi),
    Expr(Expr),
}

impl PhiSpec {
    pub fn to_expr(&self) -> Expr {
        match self {
            PhiSpec::Zero => Expr::zero(),
            PhiSpec::GaussianBump(g) => Expr::Gaussian(g.clone()),
            PhiSpec::Quadratic(q) => Expr::poly(&[
                (q.xx, 2, 0),
                (q.xy, 1, 1),
                (q.yy, 0, 2),
                (q.x, 1, 0),
                (q.y, 0, 1),
                (q.c, 0, 0),
            ]),
            PhiSpec::Expr(e) => e.clone(),
        }
    }
}

/// The metric `g = e^{2 phi} (dx^2 + dy^2)`.
#[derive(Clone, Debug)]
pub struct ConformalMetric {
    phi: Expr,
    flat: bool,
}

/// Values of `phi` and its first derivatives at a point.
#[derive(Clone, Copy, Debug)]
pub struct ConformalFactor {
    pub phi: f64,
    pub phi_x: f64,
    pub phi_y: f64,
    /// `e^{-phi}`, the Euclidean length of a `g`-unit vector.
    pub inv_scale: f64,
}

impl ConformalMetric {
    pub fn euclidean() -> Self {
        Self { phi: Expr::zero(), flat: true }
    }

    pub fn new(phi: Expr) -> Self {
        let flat = phi.is_zero();
        Self { phi, flat }
    }

    pub fn from_spec(spec: &PhiSpec) -> Self {
        Self::new(spec.to_expr())
    }

    pub fn is_flat(&self) -> bool {
        self.flat
    }

    pub fn phi(&self) -> &Expr {
        &self.phi
    }

    pub fn phi_jet(&self, p: [f64; 2], order: usize) -> Jet {
        if self.flat {
            Jet::zero(order)
        } else {
            self.phi.eval_jet(p, order)
        }
    }

    pub fn factor(&self, p: [f64; 2]) -> ConformalFactor {
        if self.flat {
            return ConformalFactor { phi: 0.0, phi_x: 0.0, phi_y: 0.0, inv_scale: 1.0 };
        }
        let j = self.phi.eval_jet(p, 1);
        let [phi_x, phi_y] = j.gradient();
        ConformalFactor { phi: j.value(), phi_x, phi_y, inv_scale: (-j.value()).exp() }
    }

    /// Gaussian curvature `K = -e^{-2 phi} (phi_xx + phi_yy)`.
    pub fn curvature(&self, p: [f64; 2]) -> f64 {
        if self.flat {
            return 0.0;
        }
        let j = self.phi.eval_jet(p, 2);
        -(-2.0 * j.value()).exp() * j.laplacian()
    }

    /// `gamma[k][i][j]` = Christoffel symbol of the second kind.
    pub fn christoffel(&self, p: [f64; 2]) -> [[[f64; 2]; 2]; 2] {
        let f = self.factor(p);
        christoffel_from_gradient([f.phi_x, f.phi_y])
    }

    pub fn inner(&self, p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
        let s = if self.flat { 1.0 } else { (2.0 * self.phi.eval(p)).exp() };
        s * (a[0] * b[0] + a[1] * b[1])
    }

    pub fn norm(&self, p: [f64; 2], a: [f64; 2]) -> f64 {
        self.inner(p, a, a).sqrt()
    }

    /// The `g`-unit vector at Euclidean angle `theta`.
    pub fn unit_vector(&self, p: [f64; 2], theta: f64) -> [f64; 2] {
        let e = if self.flat { 1.0 } else { (-self.phi.eval(p)).exp() };
        let (s, c) = theta.sin_cos();
        [e * c, e * s]
    }

    /// Right-hand side of the geodesic flow in `(x, y, theta)` coordinates.
    #[inline]
    pub fn geodesic_rhs(&self, state: [f64; 3]) -> [f64; 3] {
        let (s, c) = state[2].sin_cos();
        if self.flat {
            return [c, s, 0.0];
        }
        let f = self.factor([state[0], state[1]]);
        let e = f.inv_scale;
        [e * c, e * s, e * (-s * f.phi_x + c * f.phi_y)]
    }
}

impl Default for ConformalMetric {
    fn default() -> Self {
        Self::euclidean()
    }
}

impl ScalarField for ConformalMetric {
    fn jet(&self, p: [f64; 2], order: usize) -> Jet {
        self.phi_jet(p, order)
    }
}

/// `Gamma^k_ij = delta_ik phi_j + delta_jk phi_i - delta_ij phi_k`.
pub fn christoffel_from_gradient(grad: [f64; 2]) -> [[[f64; 2]; 2]; 2] {
    let mut g = [[[0.0; 2]; 2]; 2];
    for (k, gk) in g.iter_mut().enumerate() {
        for (i, gki) in gk.iter_mut().enumerate() {
            for (j, slot) in gki.iter_mut().enumerate() {
                let dik = if i == k { grad[j] } else { 0.0 };
                let djk = if j == k { grad[i] } else { 0.0 };
                let dij = if i == j { grad[k] } else { 0.0 };
                *slot = dik + djk - dij;
            }
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn flat_metric_has_no_connection_or_curvature() {
        let m = ConformalMetric::euclidean();
        for p in [[0.0, 0.0], [1.3, -0.7], [-1.9, 0.2]] {
            assert_eq!(m.curvature(p), 0.0);
            assert_eq!(m.christoffel(p), [[[0.0; 2]; 2]; 2]);
        }
    }

    #[test]
    fn quadratic_conformal_factor_curvature() {
        // phi = (x^2 + y^2)/4  =>  K = -exp(-(x^2+y^2)/2)
        let m = ConformalMetric::from_spec(&PhiSpec::Quadratic(QuadraticPhi { xx: 0.25, yy: 0.25, ..Default::default() }));
        for p in [[0.0, 0.0], [1.0, 0.5], [-0.3, 1.7]] {
            let r2 = p[0] * p[0] + p[1] * p[1];
            assert_relative_eq!(m.curvature(p), -(-r2 / 2.0).exp(), epsilon = 1e-14);
        }
    }

    #[test]
    fn saddle_factor_has_positive_curvature() {
        let m = ConformalMetric::from_spec(&PhiSpec::Quadratic(QuadraticPhi { xx: -0.5, ..Default::default() }));
        assert_relative_eq!(m.curvature([0.0, 0.0]), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn christoffel_matches_metric_derivative_formula() {
        // Gamma^k_ij = 1/2 g^{kl}(d_i g_jl + d_j g_il - d_l g_ij) with g = e^{2phi} I.
        let m = ConformalMetric::new(Expr::gaussian(0.4, [0.3, 0.1], 0.8));
        let p = [0.5, -0.2];
        let j = m.phi_jet(p, 1);
        let grad = j.gradient();
        let gam = m.christoffel(p);
        for k in 0..2 {
            for i in 0..2 {
                for jj in 0..2 {
                    // d_a g_bc = 2 phi_a e^{2phi} delta_bc ; g^{kl} = e^{-2phi} delta_kl
                    let d = |a: usize, b: usize, c: usize| if b == c { 2.0 * grad[a] } else { 0.0 };
                    let expected = 0.5 * (d(i, jj, k) + d(jj, i, k) - d(k, i, jj));
                    assert_relative_eq!(gam[k][i][jj], expected, epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn unit_vectors_have_unit_length() {
        let m = ConformalMetric::new(Expr::gaussian(0.7, [0.0, 0.0], 0.5));
        let p = [0.2, 0.3];
        for k in 0..16 {
            let v = m.unit_vector(p, k as f64 * 0.4);
            assert_relative_eq!(m.norm(p, v), 1.0, epsilon = 1e-15);
        }
    }
}
