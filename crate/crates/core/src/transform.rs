//! The broken ray transform: Simpson quadrature of a tensor field along
//! traced broken rays, datasets over fans, and the integral function `u` on
//! a sphere bundle grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{normal_cosine, Domain, PhasePoint};
use crate::raytracer::{trace_with, BrokenRay, RayFan, TraceError, TraceParams};
use crate::smcalculus::{SMGrid, SMGridFunction};
use crate::tensorfield::SymTensorField;

/// Composite Simpson rule over the dense output of every segment.
pub fn integrate_along(ray: &BrokenRay, f: &SymTensorField) -> f64 {
    let mut total = 0.0;
    for seg in &ray.segments {
        let vals: Vec<f64> = seg.states.iter().map(|p| f.eval(*p)).collect();
        let mut i = 0;
        while i + 2 < seg.times.len() {
            let dt = seg.times[i + 2] - seg.times[i];
            total += dt / 6.0 * (vals[i] + 4.0 * vals[i + 1] + vals[i + 2]);
            i += 2;
        }
    }
    total
}

/// Traces from `p0` and integrates `f` on the fly, without storing the ray.
/// The returned ray carries events but no segments.
pub fn integrate_from(
    domain: &Domain,
    f: &SymTensorField,
    p0: PhasePoint,
    params: &TraceParams,
) -> Result<(BrokenRay, f64), TraceError> {
    let mut total = 0.0;
    let mut last: Option<(PhasePoint, f64)> = None;
    let ray = trace_with(domain, f.metric(), p0, params, |panel| {
        let [a, m, b] = panel.states;
        let fa = match last {
            Some((p, v)) if p == a => v,
            _ => f.eval(a),
        };
        let fb = f.eval(b);
        total += panel.dt / 6.0 * (fa + 4.0 * f.eval(m) + fb);
        last = Some((b, fb));
    })?;
    Ok((ray, total))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub ray_id: usize,
    pub x0: [f64; 2],
    pub theta0: f64,
    pub n_reflections: usize,
    pub tau: f64,
    /// `NaN` when tracing failed.
    pub value: f64,
    /// `ok` or the tracer error tag.
    pub status: String,
}

impl DatasetRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformDataset {
    pub rows: Vec<DatasetRow>,
    pub step: f64,
    pub quadrature: String,
}

pub const QUADRATURE_RULE: &str = "composite Simpson on integrator steps";

impl TransformDataset {
    pub fn max_abs_value(&self) -> f64 {
        self.rows.iter().filter(|r| r.is_ok()).map(|r| r.value.abs()).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_ok()).count()
    }
}

/// One row per ray of the fan; tracer failures become rows with an error status.
pub fn forward(domain: &Domain, f: &SymTensorField, fan: &RayFan, params: &TraceParams) -> TransformDataset {
    let rows = fan
        .states
        .par_iter()
        .enumerate()
        .map(|(id, p)| match integrate_from(domain, f, *p, params) {
            Ok((ray, value)) => DatasetRow {
                ray_id: id,
                x0: p.x,
                theta0: p.theta,
                n_reflections: ray.reflections.len(),
                tau: ray.tau,
                value,
                status: "ok".into(),
            },
            Err(e) => DatasetRow {
                ray_id: id,
                x0: p.x,
                theta0: p.theta,
                n_reflections: 0,
                tau: f64::NAN,
                value: f64::NAN,
                status: e.tag().into(),
            },
        })
        .collect();
    TransformDataset { rows, step: params.step, quadrature: QUADRATURE_RULE.into() }
}

/// `u` on a sphere bundle grid together with per-node flags.
#[derive(Clone, Debug)]
pub struct UField {
    /// Values; nodes outside the domain or with tracer errors are invalid.
    pub u: SMGridFunction,
    /// Rays whose first obstacle hit is near-tangential or grazing; `u` is
    /// only Lipschitz there.
    pub tangential: Vec<bool>,
}

impl UField {
    /// Valid and away from the tangential set.
    pub fn smooth_mask(&self) -> Vec<bool> {
        self.u.valid.iter().zip(&self.tangential).map(|(v, t)| *v && !*t).collect()
    }
}

/// `u(x, v) = int_0^tau f(gamma(t), gamma'(t)) dt` at every grid node.
pub fn integral_function_u(domain: &Domain, f: &SymTensorField, grid: &SMGrid, params: &TraceParams) -> UField {
    let nt = grid.n_theta;
    let per_node: Vec<Vec<(f64, bool, bool)>> = grid
        .nodes
        .par_iter()
        .map(|node| {
            grid.thetas
                .iter()
                .map(|&t| {
                    let p = PhasePoint::new(node.x, t);
                    if domain.level(node.x) > crate::geometry::BOUNDARY_TOL {
                        return (f64::NAN, false, false);
                    }
                    match integrate_from(domain, f, p, params) {
                        Ok((ray, v)) => {
                            let tangential = ray.grazing_count > 0
                                || ray.reflections.first().is_some_and(|r| r.transversality < params.a);
                            (v, true, tangential)
                        }
                        Err(_) => (f64::NAN, false, false),
                    }
                })
                .collect()
        })
        .collect();
    let mut values = Vec::with_capacity(grid.len());
    let mut valid = Vec::with_capacity(grid.len());
    let mut tangential = Vec::with_capacity(grid.len());
    for node in per_node {
        debug_assert_eq!(node.len(), nt);
        for (v, ok, t) in node {
            values.push(v);
            valid.push(ok);
            tangential.push(t);
        }
    }
    UField { u: SMGridFunction { values, valid }, tangential }
}

/// `u` at one phase point.
pub fn u_at(domain: &Domain, f: &SymTensorField, p: PhasePoint, params: &TraceParams) -> Result<f64, TraceError> {
    integrate_from(domain, f, p, params).map(|r| r.1)
}

/// `(u(gamma(s)) - u(gamma(-s))) / 2s`, the centered difference of `u` along
/// the geodesic through `p`; approximates `X u = -f`.
pub fn transport_difference(
    domain: &Domain,
    f: &SymTensorField,
    p: PhasePoint,
    s: f64,
    params: &TraceParams,
) -> Result<f64, TraceError> {
    let metric = f.metric();
    let fwd = crate::raytracer::step_geodesic(metric, p, s);
    let bwd = crate::raytracer::step_geodesic(metric, p, -s);
    Ok((u_at(domain, f, fwd, params)? - u_at(domain, f, bwd, params)?) / (2.0 * s))
}

/// Whether `p` lies on the outer boundary pointing outward or tangentially.
pub fn is_outgoing(domain: &Domain, f: &SymTensorField, p: PhasePoint) -> bool {
    domain.outer_level(p.x).abs() <= crate::geometry::BOUNDARY_TOL
        && domain.boundary_data(f.metric(), p.x).is_ok_and(|bp| normal_cosine(&bp, p.theta) >= 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::geometry::ConformalMetric;
    use crate::raytracer::{sample_fan, trace_broken_ray, FanSpec};
    use crate::smcalculus::BaseGrid;
    use crate::tensorfield::{make_admissible_potential, GaugeSpec};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn one() -> SymTensorField {
        SymTensorField::scalar(ConformalMetric::euclidean(), Expr::Const(1.0))
    }

    #[test]
    fn constant_integrand_gives_exit_time() {
        let d = Domain::annulus(2.0, 1.0);
        let p = TraceParams::for_domain(&d);
        let ray = trace_broken_ray(&d, &ConformalMetric::euclidean(), PhasePoint::new([2.0, 0.0], 0.75 * PI), &p).unwrap();
        assert_relative_eq!(integrate_along(&ray, &one()), 2.0 * 2.0f64.sqrt(), epsilon = 1e-10);
        let (r2, v) = integrate_from(&d, &one(), PhasePoint::new([2.0, 0.0], PI), &p).unwrap();
        assert_relative_eq!(v, 2.0, epsilon = 1e-10);
        assert_relative_eq!(v, r2.tau, epsilon = 1e-12);
    }

    #[test]
    fn dataset_rows_and_determinism() {
        let d = Domain::annulus(2.0, 1.0);
        let p = TraceParams::for_domain(&d);
        let fan = sample_fan(&d, FanSpec::Boundary { n_pos: 4, n_ang: 3 });
        let a = forward(&d, &one(), &fan, &p);
        assert_eq!(a.rows.len(), 12);
        for r in &a.rows {
            assert!(r.is_ok());
            assert!((r.value - r.tau).abs() < 1e-10);
        }
        let b = forward(&d, &one(), &fan, &p);
        assert_eq!(a, b);
    }

    #[test]
    fn errors_become_rows() {
        let d = Domain::annulus(2.0, 1.0);
        let p = TraceParams { l_max: 0.5, ..TraceParams::for_domain(&d) };
        let fan = sample_fan(&d, FanSpec::Boundary { n_pos: 2, n_ang: 2 });
        let ds = forward(&d, &one(), &fan, &p);
        assert_eq!(ds.rows.len(), 4);
        assert_eq!(ds.failures(), 4);
        assert_eq!(ds.rows[0].status, "budget_exceeded");
    }

    #[test]
    fn gauge_field_has_vanishing_transform_and_u_equals_minus_h() {
        let d = Domain::annulus(2.0, 1.0);
        let m = ConformalMetric::euclidean();
        let seed = SymTensorField::from_exprs(
            m.clone(),
            vec![Expr::poly(&[(0.5, 1, 0), (0.3, 0, 2), (1.0, 0, 0)]), Expr::poly(&[(-0.4, 1, 1), (0.7, 0, 0)])],
        );
        let h = make_admissible_potential(&d, &GaugeSpec { seed, cutoff_width: 0.3, blend_width: 0.3 }).unwrap();
        let f = h.sym_derivative();
        let p = TraceParams::for_domain(&d);
        let fan = sample_fan(&d, FanSpec::Random { count: 60, seed: 3 });
        let ds = forward(&d, &f, &fan, &p);
        assert!(ds.max_abs_value() < 1e-6, "{}", ds.max_abs_value());

        let grid = SMGrid::new(
            BaseGrid::Polar { center: [0.0, 0.0], r_min: 1.2, r_max: 1.8, n_r: 4, n_ang: 8 },
            8,
            m.clone(),
        );
        let uf = integral_function_u(&d, &f, &grid, &p);
        assert!(uf.u.all_valid());
        for (n, node) in grid.nodes.iter().enumerate() {
            for (k, t) in grid.thetas.iter().enumerate() {
                let expected = -h.eval(PhasePoint::new(node.x, *t));
                assert!((uf.u.values[n * grid.n_theta + k] - expected).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn transport_difference_is_second_order() {
        let d = Domain::disk(2.0);
        let m = ConformalMetric::euclidean();
        let f = SymTensorField::from_exprs(m, vec![Expr::poly(&[(1.0, 1, 1), (0.5, 0, 0)]), Expr::poly(&[(0.3, 2, 0)])]);
        let p = TraceParams::for_domain(&d);
        let x = PhasePoint::new([0.4, -0.3], 0.9);
        let e1 = (transport_difference(&d, &f, x, 0.04, &p).unwrap() + f.eval(x)).abs();
        let e2 = (transport_difference(&d, &f, x, 0.02, &p).unwrap() + f.eval(x)).abs();
        assert!(e1 > 0.0 && e2 < e1 / 3.0, "{e1} {e2}");
    }
}
