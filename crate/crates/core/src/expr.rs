//! Closed expression vocabulary for scalar fields on the plane.
//!
//! Expressions are what configuration files use to describe the conformal
//! factor and tensor components:
//!
//! ```json
//! {"sum": [{"polynomial": [[1.0, 2, 0], [-0.5, 0, 1]]},
//!          {"gaussian": {"amplitude": 0.3, "center": [1.5, 0.0], "width": 0.25}}]}
//! ```

use serde::{Deserialize, Serialize};
use std::fmt::Debug;

use crate::jet::Jet;

/// Anything that can be expanded as a [`Jet`] at a point of the plane.
pub trait ScalarField: Send + Sync + Debug {
    fn jet(&self, p: [f64; 2], order: usize) -> Jet;

    fn value(&self, p: [f64; 2]) -> f64 {
        self.jet(p, 0).value()
    }
}

/// `coefficient * x^px * y^py`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial(pub f64, pub u32, pub u32);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gaussian {
    pub amplitude: f64,
    pub center: [f64; 2],
    pub width: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TrigKind {
    #[default]
    Sin,
    Cos,
}

/// `amplitude * sin(kx x + ky y + phase)` (or cos).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trig {
    pub amplitude: f64,
    #[serde(default)]
    pub kx: f64,
    #[serde(default)]
    pub ky: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub kind: TrigKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Expr {
    Const(f64),
    Polynomial(Vec<Monomial>),
    Gaussian(Gaussian),
    Trig(Trig),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
}

impl Expr {
    pub fn zero() -> Self {
        Expr::Const(0.0)
    }

    pub fn poly(terms: &[(f64, u32, u32)]) -> Self {
        Expr::Polynomial(terms.iter().map(|&(c, a, b)| Monomial(c, a, b)).collect())
    }

    pub fn gaussian(amplitude: f64, center: [f64; 2], width: f64) -> Self {
        Expr::Gaussian(Gaussian { amplitude, center, width })
    }

    /// True when the expression is identically zero by construction.
    pub fn is_zero(&self) -> bool {
        match self {
            Expr::Const(c) => *c == 0.0,
            Expr::Polynomial(terms) => terms.iter().all(|m| m.0 == 0.0),
            Expr::Gaussian(g) => g.amplitude == 0.0,
            Expr::Trig(t) => t.amplitude == 0.0,
            Expr::Sum(items) => items.iter().all(Expr::is_zero),
            Expr::Product(items) => items.iter().any(Expr::is_zero),
        }
    }

    pub fn eval(&self, p: [f64; 2]) -> f64 {
        let [x, y] = p;
        match self {
            Expr::Const(c) => *c,
            Expr::Polynomial(terms) => terms
                .iter()
                .map(|m| m.0 * x.powi(m.1 as i32) * y.powi(m.2 as i32))
                .sum(),
            Expr::Gaussian(g) => {
                let dx = x - g.center[0];
                let dy = y - g.center[1];
                g.amplitude * (-(dx * dx + dy * dy) / (2.0 * g.width * g.width)).exp()
            }
            Expr::Trig(t) => {
                let arg = t.kx * x + t.ky * y + t.phase;
                t.amplitude
                    * match t.kind {
                        TrigKind::Sin => arg.sin(),
                        TrigKind::Cos => arg.cos(),
                    }
            }
            Expr::Sum(items) => items.iter().map(|e| e.eval(p)).sum(),
            Expr::Product(items) => items.iter().map(|e| e.eval(p)).product(),
        }
    }

    pub fn eval_jet(&self, p: [f64; 2], order: usize) -> Jet {
        match self {
            Expr::Const(c) => Jet::constant(*c, order),
            Expr::Polynomial(terms) => {
                let mut acc = Jet::zero(order);
                for m in terms {
                    acc.add_monomial(p, m.0, m.1, m.2);
                }
                acc
            }
            Expr::Gaussian(g) => {
                let (x, y) = Jet::coordinates(p, order);
                let dx = x.add_scalar(-g.center[0]);
                let dy = y.add_scalar(-g.center[1]);
                let q = (dx * dx + dy * dy).scale(-1.0 / (2.0 * g.width * g.width));
                q.exp().scale(g.amplitude)
            }
            Expr::Trig(t) => {
                let (x, y) = Jet::coordinates(p, order);
                let arg = (x.scale(t.kx) + y.scale(t.ky)).add_scalar(t.phase);
                let s = match t.kind {
                    TrigKind::Sin => arg.sin(),
                    TrigKind::Cos => arg.cos(),
                };
                s.scale(t.amplitude)
            }
            Expr::Sum(items) => items
                .iter()
                .fold(Jet::zero(order), |acc, e| acc + e.eval_jet(p, order)),
            Expr::Product(items) => items
                .iter()
                .fold(Jet::constant(1.0, order), |acc, e| acc * e.eval_jet(p, order)),
        }
    }
}

impl ScalarField for Expr {
    fn jet(&self, p: [f64; 2], order: usize) -> Jet {
        self.eval_jet(p, order)
    }

    fn value(&self, p: [f64; 2]) -> f64 {
        self.eval(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn parses_documented_vocabulary() {
        let src = r#"{"sum": [{"polynomial": [[1.0, 2, 0], [-0.5, 0, 1]]},
                             {"gaussian": {"amplitude": 0.3, "center": [1.5, 0.0], "width": 0.25}},
                             {"trig": {"amplitude": 2.0, "kx": 1.0, "kind": "cos"}},
                             {"const": 4.0}]}"#;
        let e: Expr = serde_json::from_str(src).unwrap();
        let p = [1.2, -0.4];
        let expected = 1.44 + 0.2 + 0.3 * (-(0.09 + 0.16) / 0.125f64).exp() + 2.0 * 1.2f64.cos() + 4.0;
        assert_relative_eq!(e.eval(p), expected, epsilon = 1e-14);
        assert_relative_eq!(e.eval_jet(p, 3).value(), expected, epsilon = 1e-14);
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = r#"{"gaussian": {"amplitude": 1.0, "center": [0, 0], "width": 1.0, "sigma": 2}}"#;
        assert!(serde_json::from_str::<Expr>(bad).is_err());
        assert!(serde_json::from_str::<Expr>(r#"{"bessel": 1}"#).is_err());
    }

    #[test]
    fn jet_matches_finite_differences() {
        let e = Expr::Product(vec![
            Expr::gaussian(1.3, [0.2, -0.1], 0.7),
            Expr::Trig(Trig { amplitude: 1.0, kx: 0.8, ky: -1.1, phase: 0.3, kind: TrigKind::Sin }),
        ]);
        let p = [0.4, 0.5];
        let j = e.eval_jet(p, 2);
        let h = 1e-5;
        let fx = (e.eval([p[0] + h, p[1]]) - e.eval([p[0] - h, p[1]])) / (2.0 * h);
        let fyy = (e.eval([p[0], p[1] + h]) - 2.0 * e.eval(p) + e.eval([p[0], p[1] - h])) / (h * h);
        assert_relative_eq!(j.derivative(1, 0), fx, epsilon = 1e-8);
        assert_relative_eq!(j.derivative(0, 2), fyy, epsilon = 1e-4);
    }
}
