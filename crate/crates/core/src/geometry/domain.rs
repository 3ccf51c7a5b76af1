use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::metric::ConformalMetric;
use super::GeometryError;
use crate::jet::Jet;

/// Tolerance on `|F(x)|` for a point to count as lying on the boundary.
pub const BOUNDARY_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Axis-aligned ellipse.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ellipse {
    pub center: [f64; 2],
    pub semi_axes: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum OuterCurve {
    Circle(Circle),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Obstacle {
    Circle(Circle),
    Ellipse(Ellipse),
}

/// Which part of the boundary a point lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    /// The accessible outer boundary, where rays enter and exit.
    Exit,
    /// The obstacle boundary, where rays reflect.
    Reflecting,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryPoint {
    pub x: [f64; 2],
    /// Outward `g`-unit normal of `M` in coordinates; points into the obstacle on the reflecting part.
    pub nu: [f64; 2],
    /// Euclidean unit vector along `nu`.
    pub normal: [f64; 2],
    /// Second fundamental form of the boundary on `g`-unit tangents.
    pub pi: f64,
    pub kind: BoundaryKind,
}

/// A point of the unit sphere bundle: position and the Euclidean angle of the unit tangent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: [f64; 2],
    pub theta: f64,
}

impl PhasePoint {
    pub fn new(x: [f64; 2], theta: f64) -> Self {
        Self { x, theta: wrap_angle(theta) }
    }

    pub fn velocity(&self, metric: &ConformalMetric) -> [f64; 2] {
        metric.unit_vector(self.x, self.theta)
    }

    pub fn reverse(&self) -> Self {
        Self::new(self.x, self.theta + PI)
    }
}

/// Maps an angle into `[0, 2 pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(2.0 * PI);
    if t >= 2.0 * PI {
        0.0
    } else {
        t
    }
}

impl Obstacle {
    pub fn center(&self) -> [f64; 2] {
        match self {
            Obstacle::Circle(c) => c.center,
            Obstacle::Ellipse(e) => e.center,
        }
    }

    /// Radius of the smallest circle about the center that contains the obstacle.
    pub fn outer_radius(&self) -> f64 {
        match self {
            Obstacle::Circle(c) => c.radius,
            Obstacle::Ellipse(e) => e.semi_axes[0].max(e.semi_axes[1]),
        }
    }

    /// Point of the obstacle curve at parameter angle `t`.
    pub fn point(&self, t: f64) -> [f64; 2] {
        let (s, c) = t.sin_cos();
        match self {
            Obstacle::Circle(k) => [k.center[0] + k.radius * c, k.center[1] + k.radius * s],
            Obstacle::Ellipse(e) => [e.center[0] + e.semi_axes[0] * c, e.center[1] + e.semi_axes[1] * s],
        }
    }

    /// Defining function: negative outside the obstacle, zero on its boundary.
    pub fn level(&self, p: [f64; 2]) -> f64 {
        match self {
            Obstacle::Circle(k) => k.radius - dist(p, k.center),
            Obstacle::Ellipse(e) => {
                let q = ellipse_q(e, p);
                (1.0 - q.sqrt()) * e.semi_axes[0].min(e.semi_axes[1])
            }
        }
    }

    pub fn level_jet(&self, p: [f64; 2], order: usize) -> Jet {
        let (x, y) = Jet::coordinates(p, order);
        match self {
            Obstacle::Circle(k) => {
                let dx = x.add_scalar(-k.center[0]);
                let dy = y.add_scalar(-k.center[1]);
                (dx * dx + dy * dy).sqrt().scale(-1.0).add_scalar(k.radius)
            }
            Obstacle::Ellipse(e) => {
                let dx = x.add_scalar(-e.center[0]).scale(1.0 / e.semi_axes[0]);
                let dy = y.add_scalar(-e.center[1]).scale(1.0 / e.semi_axes[1]);
                let m = e.semi_axes[0].min(e.semi_axes[1]);
                (dx * dx + dy * dy).sqrt().scale(-m).add_scalar(m)
            }
        }
    }

    /// Polynomial defining function, positive outside the obstacle and growing
    /// like the distance near it.
    pub fn smooth_distance_jet(&self, p: [f64; 2], order: usize) -> Jet {
        let (x, y) = Jet::coordinates(p, order);
        match self {
            Obstacle::Circle(k) => {
                let dx = x.add_scalar(-k.center[0]);
                let dy = y.add_scalar(-k.center[1]);
                (dx * dx + dy * dy).add_scalar(-k.radius * k.radius).scale(0.5 / k.radius)
            }
            Obstacle::Ellipse(e) => {
                let dx = x.add_scalar(-e.center[0]).scale(1.0 / e.semi_axes[0]);
                let dy = y.add_scalar(-e.center[1]).scale(1.0 / e.semi_axes[1]);
                let m = e.semi_axes[0].min(e.semi_axes[1]);
                (dx * dx + dy * dy).add_scalar(-1.0).scale(0.5 * m)
            }
        }
    }

    /// Exact line intersection: smallest `s > s_min` with `p + s d` on the curve.
    pub fn line_hit(&self, p: [f64; 2], d: [f64; 2], s_min: f64) -> Option<f64> {
        let (c, a, b) = match self {
            Obstacle::Circle(k) => (k.center, k.radius, k.radius),
            Obstacle::Ellipse(e) => (e.center, e.semi_axes[0], e.semi_axes[1]),
        };
        let px = (p[0] - c[0]) / a;
        let py = (p[1] - c[1]) / b;
        let dx = d[0] / a;
        let dy = d[1] / b;
        let qa = dx * dx + dy * dy;
        let qb = 2.0 * (px * dx + py * dy);
        let qc = px * px + py * py - 1.0;
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        [(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)].into_iter().find(|&s| s > s_min)
    }
}

fn ellipse_q(e: &Ellipse, p: [f64; 2]) -> f64 {
    let dx = (p[0] - e.center[0]) / e.semi_axes[0];
    let dy = (p[1] - e.center[1]) / e.semi_axes[1];
    dx * dx + dy * dy
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// The domain `M`: inside the outer circle and outside the optional obstacle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub outer: OuterCurve,
    #[serde(default)]
    pub obstacle: Option<Obstacle>,
}

impl Domain {
    pub fn new(outer: Circle, obstacle: Option<Obstacle>) -> Result<Self, GeometryError> {
        let d = Domain { outer: OuterCurve::Circle(outer), obstacle };
        d.validate()?;
        Ok(d)
    }

    pub fn disk(radius: f64) -> Self {
        Domain { outer: OuterCurve::Circle(Circle { center: [0.0, 0.0], radius }), obstacle: None }
    }

    /// Concentric circular annulus.
    pub fn annulus(r_out: f64, r_in: f64) -> Self {
        Domain {
            outer: OuterCurve::Circle(Circle { center: [0.0, 0.0], radius: r_out }),
            obstacle: Some(Obstacle::Circle(Circle { center: [0.0, 0.0], radius: r_in })),
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let c = self.outer_circle();
        if !(c.radius.is_finite() && c.radius > 0.0) || !c.center.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidDomain(format!("outer radius must be positive, got {}", c.radius)));
        }
        if let Some(o) = &self.obstacle {
            let ok = match o {
                Obstacle::Circle(k) => k.radius.is_finite() && k.radius > 0.0,
                Obstacle::Ellipse(e) => e.semi_axes.iter().all(|a| a.is_finite() && *a > 0.0),
            };
            if !ok {
                return Err(GeometryError::InvalidDomain("obstacle size must be positive".into()));
            }
            if self.gap() <= 0.0 {
                return Err(GeometryError::InvalidDomain(
                    "obstacle must lie strictly inside the outer curve".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn outer_circle(&self) -> Circle {
        match self.outer {
            OuterCurve::Circle(c) => c,
        }
    }

    /// Lower bound on the Euclidean distance between the two boundary components.
    pub fn gap(&self) -> f64 {
        let c = self.outer_circle();
        match &self.obstacle {
            None => f64::INFINITY,
            Some(o) => c.radius - dist(o.center(), c.center) - o.outer_radius(),
        }
    }

    /// Defining function of the outer curve: negative inside.
    pub fn outer_level(&self, p: [f64; 2]) -> f64 {
        let c = self.outer_circle();
        dist(p, c.center) - c.radius
    }

    pub fn outer_level_jet(&self, p: [f64; 2], order: usize) -> Jet {
        let c = self.outer_circle();
        let (x, y) = Jet::coordinates(p, order);
        let dx = x.add_scalar(-c.center[0]);
        let dy = y.add_scalar(-c.center[1]);
        (dx * dx + dy * dy).sqrt().add_scalar(-c.radius)
    }

    /// Polynomial defining function of the outer curve, positive inside and
    /// growing like the distance near it.
    pub fn outer_smooth_distance_jet(&self, p: [f64; 2], order: usize) -> Jet {
        let c = self.outer_circle();
        let (x, y) = Jet::coordinates(p, order);
        let dx = x.add_scalar(-c.center[0]);
        let dy = y.add_scalar(-c.center[1]);
        (dx * dx + dy * dy).scale(-1.0).add_scalar(c.radius * c.radius).scale(0.5 / c.radius)
    }

    pub fn obstacle_level(&self, p: [f64; 2]) -> Option<f64> {
        self.obstacle.as_ref().map(|o| o.level(p))
    }

    /// Defining function of `M`: negative inside, zero on the boundary.
    pub fn level(&self, p: [f64; 2]) -> f64 {
        let f = self.outer_level(p);
        match self.obstacle_level(p) {
            Some(g) => f.max(g),
            None => f,
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.level(p) <= 0.0
    }

    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        let c = self.outer_circle();
        ([c.center[0] - c.radius, c.center[1] - c.radius], [c.center[0] + c.radius, c.center[1] + c.radius])
    }

    /// Point and inward Euclidean unit normal on the outer circle at arc length `s`.
    pub fn outer_point(&self, s: f64) -> ([f64; 2], [f64; 2]) {
        let c = self.outer_circle();
        let t = s / c.radius;
        let (sn, cs) = t.sin_cos();
        ([c.center[0] + c.radius * cs, c.center[1] + c.radius * sn], [-cs, -sn])
    }

    pub fn outer_perimeter(&self) -> f64 {
        2.0 * PI * self.outer_circle().radius
    }

    /// Classifies a boundary point and computes its normal and second fundamental form.
    pub fn boundary_data(&self, metric: &ConformalMetric, x: [f64; 2]) -> Result<BoundaryPoint, GeometryError> {
        let fo = self.outer_level(x);
        let fr = self.obstacle_level(x);
        let (kind, jet) = if fo.abs() <= BOUNDARY_TOL && fr.is_none_or(|g| g < -BOUNDARY_TOL) {
            (BoundaryKind::Exit, self.outer_level_jet(x, 2))
        } else if let (Some(g), Some(o)) = (fr, &self.obstacle) {
            if g.abs() <= BOUNDARY_TOL && fo < -BOUNDARY_TOL {
                (BoundaryKind::Reflecting, o.level_jet(x, 2))
            } else {
                return Err(GeometryError::NotOnBoundary { x, level: self.level(x) });
            }
        } else {
            return Err(GeometryError::NotOnBoundary { x, level: fo });
        };
        let [fx, fy] = jet.gradient();
        let [[fxx, fxy], [_, fyy]] = jet.hessian();
        let g2 = fx * fx + fy * fy;
        let gn = g2.sqrt();
        let normal = [fx / gn, fy / gn];
        let kappa = (fxx * fy * fy - 2.0 * fxy * fx * fy + fyy * fx * fx) / (g2 * gn);
        let f = metric.factor(x);
        let dn_phi = f.phi_x * normal[0] + f.phi_y * normal[1];
        Ok(BoundaryPoint {
            x,
            nu: [f.inv_scale * normal[0], f.inv_scale * normal[1]],
            normal,
            pi: f.inv_scale * (kappa + dn_phi),
            kind,
        })
    }
}

impl Default for Domain {
    fn default() -> Self {
        Domain::annulus(2.0, 1.0)
    }
}

/// Billiard reflection `v - 2 <v, nu>_g nu`.
pub fn reflect(metric: &ConformalMetric, bp: &BoundaryPoint, v: [f64; 2]) -> [f64; 2] {
    let c = metric.inner(bp.x, v, bp.nu);
    [v[0] - 2.0 * c * bp.nu[0], v[1] - 2.0 * c * bp.nu[1]]
}

/// Reflection acting on the fiber angle.
pub fn reflect_angle(bp: &BoundaryPoint, theta: f64) -> f64 {
    let alpha = bp.normal[1].atan2(bp.normal[0]);
    wrap_angle(PI + 2.0 * alpha - theta)
}

/// `<v, nu>_g` for the unit tangent at angle `theta`.
pub fn normal_cosine(bp: &BoundaryPoint, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    c * bp.normal[0] + s * bp.normal[1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn outer_circle_boundary_data() {
        let d = Domain::disk(2.0);
        let bp = d.boundary_data(&ConformalMetric::euclidean(), [2.0, 0.0]).unwrap();
        assert_eq!(bp.kind, BoundaryKind::Exit);
        assert_relative_eq!(bp.nu[0], 1.0);
        assert_relative_eq!(bp.nu[1], 0.0);
        assert_relative_eq!(bp.pi, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn obstacle_boundary_data() {
        let d = Domain::annulus(2.0, 1.0);
        let bp = d.boundary_data(&ConformalMetric::euclidean(), [1.0, 0.0]).unwrap();
        assert_eq!(bp.kind, BoundaryKind::Reflecting);
        assert_relative_eq!(bp.nu[0], -1.0);
        assert_relative_eq!(bp.nu[1], 0.0);
        assert_relative_eq!(bp.pi, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn interior_point_is_not_on_boundary() {
        let d = Domain::annulus(2.0, 1.0);
        let e = d.boundary_data(&ConformalMetric::euclidean(), [1.5, 0.0]);
        assert!(matches!(e, Err(GeometryError::NotOnBoundary { .. })));
        let d = Domain::disk(2.0);
        assert!(d.boundary_data(&ConformalMetric::euclidean(), [0.0, 0.0]).is_err());
    }

    #[test]
    fn ellipse_curvature_at_vertices() {
        // Curvature of an ellipse at the end of the a-axis is a/b^2.
        let o = Obstacle::Ellipse(Ellipse { center: [0.2, -0.1], semi_axes: [0.8, 0.5] });
        let d = Domain::new(Circle { center: [0.0, 0.0], radius: 2.0 }, Some(o)).unwrap();
        let bp = d.boundary_data(&ConformalMetric::euclidean(), [1.0, -0.1]).unwrap();
        assert_relative_eq!(bp.pi, -0.8 / 0.25, epsilon = 1e-12);
        let bp = d.boundary_data(&ConformalMetric::euclidean(), [0.2, 0.4]).unwrap();
        assert_relative_eq!(bp.pi, -0.5 / 0.64, epsilon = 1e-12);
        assert_relative_eq!(bp.nu[1], -1.0, epsilon = 1e-15);
    }

    #[test]
    fn circles_are_geodesics_of_the_cylinder_metric() {
        // phi = -log r has grad phi = (-1/2, 0) at (2, 0); the normal derivative
        // cancels the Euclidean curvature 1/2, as circles about the origin are
        // geodesics of dr^2/r^2 + dtheta^2.
        let m = ConformalMetric::new(Expr::poly(&[(-0.5, 1, 0)]));
        let bp = Domain::disk(2.0).boundary_data(&m, [2.0, 0.0]).unwrap();
        assert!(bp.pi.abs() < 1e-15);
    }

    #[test]
    fn rejects_obstacle_touching_outer_curve() {
        let outer = Circle { center: [0.0, 0.0], radius: 2.0 };
        let bad = Obstacle::Circle(Circle { center: [1.2, 0.0], radius: 0.9 });
        assert!(Domain::new(outer, Some(bad)).is_err());
        let neg = Obstacle::Ellipse(Ellipse { center: [0.0, 0.0], semi_axes: [0.5, -0.1] });
        assert!(Domain::new(outer, Some(neg)).is_err());
    }

    #[test]
    fn reflection_examples() {
        let m = ConformalMetric::euclidean();
        let bp = |n: [f64; 2]| BoundaryPoint { x: [0.0, 0.0], nu: n, normal: n, pi: -1.0, kind: BoundaryKind::Reflecting };
        assert_eq!(reflect(&m, &bp([-1.0, 0.0]), [-1.0, 0.0]), [1.0, 0.0]);
        assert_eq!(reflect(&m, &bp([-1.0, 0.0]), [0.0, 1.0]), [0.0, 1.0]);
        let h = 0.5f64.sqrt();
        let out = reflect(&m, &bp([0.0, 1.0]), [h, h]);
        assert_relative_eq!(out[0], h);
        assert_relative_eq!(out[1], -h);
    }

    #[test]
    fn reverse_examples() {
        let p = PhasePoint::new([0.3, 0.2], 0.0);
        assert_relative_eq!(p.reverse().theta, PI);
        let q = PhasePoint::new([0.3, 0.2], 5.0);
        assert_relative_eq!(q.reverse().reverse().theta, q.theta, epsilon = 1e-15);
    }

    fn curved() -> ConformalMetric {
        ConformalMetric::new(Expr::gaussian(0.3, [0.4, -0.2], 0.9))
    }

    proptest! {
        #[test]
        fn reflection_is_isometric_involution(t in 0.0..(2.0 * PI), theta in 0.0..(2.0 * PI), on_outer in any::<bool>()) {
            let m = curved();
            let o = Obstacle::Ellipse(Ellipse { center: [0.1, 0.0], semi_axes: [0.9, 0.6] });
            let d = Domain::new(Circle { center: [0.0, 0.0], radius: 2.0 }, Some(o)).unwrap();
            let x = if on_outer { d.outer_point(2.0 * t).0 } else { o.point(t) };
            let bp = d.boundary_data(&m, x).unwrap();
            prop_assert!((m.norm(x, bp.nu) - 1.0).abs() < 1e-14);
            let v = m.unit_vector(x, theta);
            let w = reflect(&m, &bp, v);
            prop_assert!((m.norm(x, w) - 1.0).abs() < 1e-12);
            let back = reflect(&m, &bp, w);
            prop_assert!((back[0] - v[0]).abs() < 1e-12 && (back[1] - v[1]).abs() < 1e-12);
            let wa = m.unit_vector(x, reflect_angle(&bp, theta));
            prop_assert!((wa[0] - w[0]).abs() < 1e-12 && (wa[1] - w[1]).abs() < 1e-12);
        }

        #[test]
        fn reversal_commutes_with_reflection(t in 0.0..(2.0 * PI), theta in 0.0..(2.0 * PI)) {
            let m = curved();
            let d = Domain::annulus(2.0, 1.0);
            let x = [t.cos(), t.sin()];
            let bp = d.boundary_data(&m, x).unwrap();
            let a = reflect_angle(&bp, PhasePoint::new(x, theta).reverse().theta);
            let b = PhasePoint::new(x, reflect_angle(&bp, theta)).reverse().theta;
            let diff = (a - b).rem_euclid(2.0 * PI);
            prop_assert!(diff.min(2.0 * PI - diff) < 1e-12);
        }

        #[test]
        fn second_fundamental_form_signs(t in 0.0..(2.0 * PI)) {
            let m = curved();
            let o = Obstacle::Ellipse(Ellipse { center: [0.0, 0.1], semi_axes: [0.7, 1.0] });
            let d = Domain::new(Circle { center: [0.0, 0.0], radius: 2.0 }, Some(o)).unwrap();
            prop_assert!(d.boundary_data(&m, d.outer_point(2.0 * t).0).unwrap().pi > 0.0);
            prop_assert!(d.boundary_data(&m, o.point(t)).unwrap().pi < 0.0);
        }
    }
}
