//! Broken geodesic flow: RK4 integration of the geodesic equation, boundary
//! event location by bisection, reflection at the obstacle and exit at the
//! outer boundary.
//!
//! Every integration step of length `dt` is reported as a [`Panel`] holding
//! the states at its start, midpoint and end, which is exactly what composite
//! Simpson quadrature needs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::geometry::{
    normal_cosine, reflect_angle, wrap_angle, BoundaryKind, ConformalMetric, Domain, GeometryError, PhasePoint,
    BOUNDARY_TOL,
};

/// Bisection stops once the defining function is this small.
pub const EVENT_TOL: f64 = 1e-15;
/// Residual accepted when the bracket has shrunk to roundoff before reaching [`EVENT_TOL`].
const EVENT_ACCEPT: f64 = 1e-11;
const MAX_BISECTION: usize = 80;
/// Reflections with `|<nu, v>|` below this are treated as grazing pass-through.
pub const GRAZING_TOL: f64 = 1e-9;
/// A start on the outer boundary with `<v, nu>` above `-START_TOL` exits at once.
const START_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("exit time budget {l_max} exceeded")]
    BudgetExceeded { l_max: f64 },
    #[error("second near-tangential reflection (|<nu,v>| = {transversality:.3e} < {a})")]
    SecondTangentialReflection { transversality: f64, a: f64 },
    #[error("boundary event location did not converge (residual {residual:.3e})")]
    StuckAtBoundary { residual: f64 },
    #[error("start point ({:.6}, {:.6}) lies outside the domain", x[0], x[1])]
    OutsideDomain { x: [f64; 2] },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl TraceError {
    pub fn tag(&self) -> &'static str {
        match self {
            TraceError::BudgetExceeded { .. } => "budget_exceeded",
            TraceError::SecondTangentialReflection { .. } => "second_tangential_reflection",
            TraceError::StuckAtBoundary { .. } => "stuck_at_boundary",
            TraceError::OutsideDomain { .. } => "outside_domain",
            TraceError::Geometry(_) => "geometry",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceParams {
    /// Integrator step.
    pub step: f64,
    /// Exit time budget.
    pub l_max: f64,
    /// Transversality threshold for near-tangential reflections.
    pub a: f64,
}

impl TraceParams {
    pub fn for_domain(domain: &Domain) -> Self {
        TraceParams { step: 1e-3 * domain.outer_circle().radius, l_max: 100.0, a: 0.05 }
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    Launch,
    Reflection,
    Exit,
}

/// One integration step: states at `t0`, `t0 + dt/2` and `t0 + dt`.
#[derive(Clone, Copy, Debug)]
pub struct Panel {
    pub segment: usize,
    pub t0: f64,
    pub dt: f64,
    pub states: [PhasePoint; 3],
}

#[derive(Clone, Debug, Default)]
pub struct GeodesicSegment {
    /// Sample times. Even entries are step boundaries, odd entries step midpoints.
    pub times: Vec<f64>,
    pub states: Vec<PhasePoint>,
    pub start_event: Option<Event>,
    pub end_event: Option<Event>,
}

impl GeodesicSegment {
    pub fn duration(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reflection {
    pub t: f64,
    pub x: [f64; 2],
    pub v_in: [f64; 2],
    pub v_out: [f64; 2],
    pub theta_in: f64,
    pub theta_out: f64,
    /// `|<nu, v_in>|`.
    pub transversality: f64,
}

#[derive(Clone, Debug)]
pub struct BrokenRay {
    pub start: PhasePoint,
    pub segments: Vec<GeodesicSegment>,
    pub reflections: Vec<Reflection>,
    pub tau: f64,
    pub exit: PhasePoint,
    /// Reflections with transversality below the threshold `a`.
    pub tangential_count: usize,
    /// Number of grazing contacts passed through without reflecting.
    pub grazing_count: usize,
}

impl BrokenRay {
    /// Grazing contacts make the ray a point where `u` is not smooth.
    pub fn is_non_smooth(&self) -> bool {
        self.grazing_count > 0
    }

    pub fn min_transversality(&self) -> Option<f64> {
        self.reflections.iter().map(|r| r.transversality).reduce(f64::min)
    }
}

/// One classical RK4 step of the geodesic flow.
pub fn step_geodesic(metric: &ConformalMetric, p: PhasePoint, h: f64) -> PhasePoint {
    let s = rk4([p.x[0], p.x[1], p.theta], h, metric);
    PhasePoint::new([s[0], s[1]], s[2])
}

#[inline]
fn rk4_increment(y: [f64; 3], h: f64, metric: &ConformalMetric) -> [f64; 3] {
    if metric.is_flat() {
        let (s, c) = y[2].sin_cos();
        return [h * c, h * s, 0.0];
    }
    let add = |a: [f64; 3], k: [f64; 3], s: f64| [a[0] + s * k[0], a[1] + s * k[1], a[2] + s * k[2]];
    let k1 = metric.geodesic_rhs(y);
    let k2 = metric.geodesic_rhs(add(y, k1, h / 2.0));
    let k3 = metric.geodesic_rhs(add(y, k2, h / 2.0));
    let k4 = metric.geodesic_rhs(add(y, k3, h));
    std::array::from_fn(|i| h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

#[inline]
fn rk4(y: [f64; 3], h: f64, metric: &ConformalMetric) -> [f64; 3] {
    let d = rk4_increment(y, h, metric);
    [y[0] + d[0], y[1] + d[1], y[2] + d[2]]
}

/// One RK4 step with compensated accumulation: `comp` carries the rounding
/// error of previous updates so that the state does not drift over many steps.
#[inline]
fn rk4_compensated(y: [f64; 3], comp: &mut [f64; 3], h: f64, metric: &ConformalMetric) -> [f64; 3] {
    let d = rk4_increment(y, h, metric);
    std::array::from_fn(|i| {
        let z = d[i] + comp[i];
        let next = y[i] + z;
        comp[i] = z - (next - y[i]);
        next
    })
}

fn to_point(y: [f64; 3]) -> PhasePoint {
    PhasePoint { x: [y[0], y[1]], theta: y[2] }
}

/// Traces the broken ray from `p0`, storing dense output.
pub fn trace_broken_ray(
    domain: &Domain,
    metric: &ConformalMetric,
    p0: PhasePoint,
    params: &TraceParams,
) -> Result<BrokenRay, TraceError> {
    let mut segments: Vec<GeodesicSegment> = Vec::new();
    let mut ray = trace_with(domain, metric, p0, params, |panel| {
        while segments.len() <= panel.segment {
            segments.push(GeodesicSegment::default());
        }
        let seg = &mut segments[panel.segment];
        if seg.times.is_empty() {
            seg.times.push(panel.t0);
            seg.states.push(panel.states[0]);
        }
        seg.times.push(panel.t0 + 0.5 * panel.dt);
        seg.times.push(panel.t0 + panel.dt);
        seg.states.push(panel.states[1]);
        seg.states.push(panel.states[2]);
    })?;
    let n = ray.reflections.len() + 1;
    segments.resize_with(n, GeodesicSegment::default);
    for (i, seg) in segments.iter_mut().enumerate() {
        seg.start_event = Some(if i == 0 { Event::Launch } else { Event::Reflection });
        seg.end_event = Some(if i + 1 == n { Event::Exit } else { Event::Reflection });
        for s in seg.states.iter_mut() {
            s.theta = wrap_angle(s.theta);
        }
    }
    ray.segments = segments;
    Ok(ray)
}

/// Traces the broken ray from `p0`, handing every integration step to `visit`
/// instead of storing it. The returned ray has no segments.
pub fn trace_with<F: FnMut(&Panel)>(
    domain: &Domain,
    metric: &ConformalMetric,
    p0: PhasePoint,
    params: &TraceParams,
    mut visit: F,
) -> Result<BrokenRay, TraceError> {
    let h = params.step;
    let mut ray = BrokenRay {
        start: p0,
        segments: Vec::new(),
        reflections: Vec::new(),
        tau: 0.0,
        exit: p0,
        tangential_count: 0,
        grazing_count: 0,
    };
    let lev = domain.level(p0.x);
    if lev > BOUNDARY_TOL {
        return Err(TraceError::OutsideDomain { x: p0.x });
    }
    let mut y = [p0.x[0], p0.x[1], p0.theta];
    let mut t = 0.0;
    let mut segment = 0;
    let mut comp = [0.0; 3];

    if domain.outer_level(p0.x).abs() <= BOUNDARY_TOL {
        let bp = domain.boundary_data(metric, p0.x)?;
        if normal_cosine(&bp, p0.theta) >= -START_TOL {
            return Ok(ray);
        }
    } else if domain.obstacle_level(p0.x).is_some_and(|g| g.abs() <= BOUNDARY_TOL) {
        let bp = domain.boundary_data(metric, p0.x)?;
        let c = normal_cosine(&bp, p0.theta);
        if c > GRAZING_TOL {
            y[2] = apply_reflection(metric, &bp, y, 0.0, c, params, &mut ray)?;
            segment = 1;
        }
    }

    loop {
        if t > params.l_max {
            return Err(TraceError::BudgetExceeded { l_max: params.l_max });
        }
        let near = -domain.level([y[0], y[1]]) < 2.0 * h;
        let dt = if near { 0.25 * h } else { h };
        let mut comp1 = comp;
        let y1 = rk4_compensated(y, &mut comp1, dt, metric);
        let x1 = [y1[0], y1[1]];
        let fo = domain.outer_level(x1);
        let fr = domain.obstacle_level(x1).unwrap_or(f64::NEG_INFINITY);
        if fo <= 0.0 && fr <= 0.0 {
            let ym = rk4(y, 0.5 * dt, metric);
            visit(&Panel { segment, t0: t, dt, states: [to_point(y), to_point(ym), to_point(y1)] });
            y = y1;
            comp = comp1;
            t += dt;
            continue;
        }
        let exit = fo > 0.0;
        let level = |x: [f64; 2]| if exit { domain.outer_level(x) } else { domain.obstacle_level(x).unwrap() };
        let (s, yc) = locate_crossing(metric, y, dt, level)?;
        let ym = rk4(y, 0.5 * s, metric);
        visit(&Panel { segment, t0: t, dt: s, states: [to_point(y), to_point(ym), to_point(yc)] });
        t += s;
        y = yc;
        comp = [0.0; 3];
        let xc = [yc[0], yc[1]];
        if exit {
            ray.tau = t;
            ray.exit = PhasePoint::new(xc, yc[2]);
            return Ok(ray);
        }
        let bp = domain.boundary_data(metric, xc)?;
        debug_assert_eq!(bp.kind, BoundaryKind::Reflecting);
        let c = normal_cosine(&bp, yc[2]);
        if c.abs() < GRAZING_TOL {
            ray.grazing_count += 1;
            continue;
        }
        y[2] = apply_reflection(metric, &bp, y, t, c, params, &mut ray)?;
        segment += 1;
    }
}

fn apply_reflection(
    metric: &ConformalMetric,
    bp: &crate::geometry::BoundaryPoint,
    y: [f64; 3],
    t: f64,
    cosine: f64,
    params: &TraceParams,
    ray: &mut BrokenRay,
) -> Result<f64, TraceError> {
    let theta_in = wrap_angle(y[2]);
    let theta_out = reflect_angle(bp, theta_in);
    let x = [y[0], y[1]];
    let transversality = cosine.abs();
    if transversality < params.a {
        ray.tangential_count += 1;
        if ray.tangential_count >= 2 {
            return Err(TraceError::SecondTangentialReflection { transversality, a: params.a });
        }
    }
    ray.reflections.push(Reflection {
        t,
        x,
        v_in: metric.unit_vector(x, theta_in),
        v_out: metric.unit_vector(x, theta_out),
        theta_in,
        theta_out,
        transversality,
    });
    // Keep theta continuous with the incoming value to avoid wrap jumps in the state.
    Ok(y[2] + (theta_out - theta_in))
}

/// Bisection on the step length for the first sign change of `level` in `(0, dt]`.
fn locate_crossing<L: Fn([f64; 2]) -> f64>(
    metric: &ConformalMetric,
    y: [f64; 3],
    dt: f64,
    level: L,
) -> Result<(f64, [f64; 3]), TraceError> {
    let mut lo = 0.0;
    let mut hi = dt;
    let mut best = (f64::INFINITY, 0.0, y);
    for _ in 0..MAX_BISECTION {
        let mid = 0.5 * (lo + hi);
        let ym = rk4(y, mid, metric);
        let f = level([ym[0], ym[1]]);
        if f.abs() < best.0 {
            best = (f.abs(), mid, ym);
        }
        if f.abs() < EVENT_TOL {
            return Ok((mid, ym));
        }
        if f > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * dt {
            break;
        }
    }
    if best.0 < EVENT_ACCEPT {
        Ok((best.1, best.2))
    } else {
        Err(TraceError::StuckAtBoundary { residual: best.0 })
    }
}

/// How initial states of a fan are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FanSpec {
    /// `n_pos` equally spaced points on the outer curve times `n_ang` inward
    /// angles at the midpoints of a uniform partition of `(-pi/2, pi/2)`.
    Boundary { n_pos: usize, n_ang: usize },
    /// Uniform random inward states on the outer curve.
    Random { count: usize, seed: u64 },
    /// Cell-centered `nx x ny` grid over the bounding box, masked to the
    /// interior, times `n_theta` uniform angles.
    Interior { nx: usize, ny: usize, n_theta: usize },
}

#[derive(Clone, Debug)]
pub struct RayFan {
    pub spec: FanSpec,
    pub states: Vec<PhasePoint>,
}

impl RayFan {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Inward state on the outer curve at arc length `s` making angle `psi` with the inward normal.
pub fn inward_state(domain: &Domain, s: f64, psi: f64) -> PhasePoint {
    let (x, n) = domain.outer_point(s);
    PhasePoint::new(x, n[1].atan2(n[0]) + psi)
}

pub fn sample_fan(domain: &Domain, spec: FanSpec) -> RayFan {
    let perimeter = domain.outer_perimeter();
    let states = match spec {
        FanSpec::Boundary { n_pos, n_ang } => {
            let mut out = Vec::with_capacity(n_pos * n_ang);
            for i in 0..n_pos {
                let s = perimeter * i as f64 / n_pos as f64;
                for j in 0..n_ang {
                    let psi = -0.5 * PI + PI * (j as f64 + 0.5) / n_ang as f64;
                    out.push(inward_state(domain, s, psi));
                }
            }
            out
        }
        FanSpec::Random { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count)
                .map(|_| {
                    let s = rng.gen::<f64>() * perimeter;
                    // Open interval: reject the measure-zero tangential endpoints.
                    let mut u = rng.gen::<f64>();
                    while u == 0.0 {
                        u = rng.gen::<f64>();
                    }
                    inward_state(domain, s, -0.5 * PI + PI * u)
                })
                .collect()
        }
        FanSpec::Interior { nx, ny, n_theta } => {
            let (lo, hi) = domain.bounding_box();
            let mut out = Vec::new();
            for iy in 0..ny {
                for ix in 0..nx {
                    let x = [
                        lo[0] + (hi[0] - lo[0]) * (ix as f64 + 0.5) / nx as f64,
                        lo[1] + (hi[1] - lo[1]) * (iy as f64 + 0.5) / ny as f64,
                    ];
                    if domain.level(x) < 0.0 {
                        for k in 0..n_theta {
                            out.push(PhasePoint::new(x, 2.0 * PI * k as f64 / n_theta as f64));
                        }
                    }
                }
            }
            out
        }
    };
    RayFan { spec, states }
}

/// Traces every state of the fan in parallel; output order follows the fan.
pub fn trace_fan(
    domain: &Domain,
    metric: &ConformalMetric,
    fan: &RayFan,
    params: &TraceParams,
) -> Vec<Result<BrokenRay, TraceError>> {
    fan.states.par_iter().map(|p| trace_broken_ray(domain, metric, *p, params)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::geometry::{Circle, Ellipse, Obstacle};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn annulus() -> Domain {
        Domain::annulus(2.0, 1.0)
    }

    fn params() -> TraceParams {
        TraceParams::for_domain(&annulus())
    }

    #[test]
    fn flat_step_is_straight_line() {
        let p = step_geodesic(&ConformalMetric::euclidean(), PhasePoint::new([0.0, 0.0], 0.0), 0.1);
        assert_eq!(p.x, [0.1, 0.0]);
        assert_eq!(p.theta, 0.0);
    }

    #[test]
    fn step_is_reversible() {
        let m = ConformalMetric::new(Expr::gaussian(0.5, [0.2, 0.1], 0.6));
        let p = PhasePoint::new([0.3, -0.4], 1.1);
        let q = step_geodesic(&m, p, 1e-2);
        let r = step_geodesic(&m, q, -1e-2);
        assert!((r.x[0] - p.x[0]).abs() < 1e-10 && (r.x[1] - p.x[1]).abs() < 1e-10);
        assert!((r.theta - p.theta).abs() < 1e-10);
    }

    #[test]
    fn diametral_ray_reflects_once() {
        let ray = trace_broken_ray(&annulus(), &ConformalMetric::euclidean(), PhasePoint::new([2.0, 0.0], PI), &params())
            .unwrap();
        assert_eq!(ray.reflections.len(), 1);
        let r = ray.reflections[0];
        assert_relative_eq!(r.x[0], 1.0, epsilon = 1e-10);
        assert_relative_eq!(r.v_in[0], -1.0, epsilon = 1e-12);
        assert_relative_eq!(r.v_out[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(ray.tau, 2.0, epsilon = 1e-10);
        assert_relative_eq!(ray.exit.x[0], 2.0, epsilon = 1e-10);
        assert_eq!(ray.segments.len(), 2);
        assert_eq!(ray.segments[1].end_event, Some(Event::Exit));
    }

    #[test]
    fn tangential_start_exits_immediately() {
        let ray = trace_broken_ray(&annulus(), &ConformalMetric::euclidean(), PhasePoint::new([2.0, 0.0], PI / 2.0), &params())
            .unwrap();
        assert_eq!(ray.tau, 0.0);
        assert!(ray.reflections.is_empty());
    }

    #[test]
    fn missing_chord_has_analytic_length() {
        let ray = trace_broken_ray(&annulus(), &ConformalMetric::euclidean(), PhasePoint::new([2.0, 0.0], 0.75 * PI), &params())
            .unwrap();
        assert!(ray.reflections.is_empty());
        assert_relative_eq!(ray.tau, 2.0 * 2.0f64.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn budget_and_outside_errors() {
        let p = TraceParams { l_max: 1.0, ..params() };
        let e = trace_broken_ray(&annulus(), &ConformalMetric::euclidean(), PhasePoint::new([2.0, 0.0], PI), &p);
        assert!(matches!(e, Err(TraceError::BudgetExceeded { .. })));
        let e = trace_broken_ray(&annulus(), &ConformalMetric::euclidean(), PhasePoint::new([0.0, 0.0], 0.0), &params());
        assert!(matches!(e, Err(TraceError::OutsideDomain { .. })));
    }

    #[test]
    fn ellipse_reflection_matches_analytic_hit() {
        let o = Obstacle::Ellipse(Ellipse { center: [0.1, -0.2], semi_axes: [0.9, 0.5] });
        let d = Domain::new(Circle { center: [0.0, 0.0], radius: 2.0 }, Some(o)).unwrap();
        let p0 = inward_state(&d, 1.3, 0.2);
        let ray = trace_broken_ray(&d, &ConformalMetric::euclidean(), p0, &TraceParams::for_domain(&d)).unwrap();
        let dir = [p0.theta.cos(), p0.theta.sin()];
        let s = o.line_hit(p0.x, dir, 0.0).expect("ray chosen to hit the obstacle");
        assert_eq!(ray.reflections.len(), 1);
        assert_relative_eq!(ray.reflections[0].t, s, epsilon = 1e-10);
    }

    #[test]
    fn second_tangential_reflection_is_an_error() {
        let d = annulus();
        let m = ConformalMetric::euclidean();
        let p = TraceParams { a: 1.01, ..params() };
        // Start on the obstacle heading into it: reflect at t = 0 and exit.
        let r = trace_broken_ray(&d, &m, PhasePoint::new([1.0, 0.0], PI), &p).unwrap();
        assert_eq!(r.reflections.len(), 1);
        assert_eq!(r.tangential_count, 1);
        assert_relative_eq!(r.tau, 1.0, epsilon = 1e-10);
        let mut ray = r.clone();
        let bp = d.boundary_data(&m, [0.0, 1.0]).unwrap();
        let e = apply_reflection(&m, &bp, [0.0, 1.0, -1.0], 0.5, 0.5, &p, &mut ray);
        assert!(matches!(e, Err(TraceError::SecondTangentialReflection { .. })));
    }

    #[test]
    fn fans() {
        let d = annulus();
        let f = sample_fan(&d, FanSpec::Boundary { n_pos: 4, n_ang: 3 });
        assert_eq!(f.len(), 12);
        let m = ConformalMetric::euclidean();
        for p in &f.states {
            let bp = d.boundary_data(&m, p.x).unwrap();
            assert!(normal_cosine(&bp, p.theta) < 0.0);
        }
        let g = sample_fan(&d, FanSpec::Interior { nx: 2, ny: 2, n_theta: 4 });
        assert!(g.len() <= 16);
        assert!(g.states.iter().all(|p| d.level(p.x) < 0.0));
        let a = sample_fan(&d, FanSpec::Random { count: 50, seed: 7 });
        let b = sample_fan(&d, FanSpec::Random { count: 50, seed: 7 });
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn curved_speed_from_samples_is_unit() {
        let m = ConformalMetric::new(Expr::gaussian(0.4, [0.0, 1.4], 0.5));
        let d = annulus();
        let ray = trace_broken_ray(&d, &m, inward_state(&d, 0.7, 0.3), &TraceParams { step: 1e-3, ..params() }).unwrap();
        for seg in &ray.segments {
            let st = &seg.states;
            for i in (2..st.len().saturating_sub(2)).step_by(7) {
                let dt = seg.times[i + 1] - seg.times[i - 1];
                if (seg.times[i] - seg.times[i - 1] - 0.5 * dt).abs() > 1e-15 {
                    continue;
                }
                let v = [(st[i + 1].x[0] - st[i - 1].x[0]) / dt, (st[i + 1].x[1] - st[i - 1].x[1]) / dt];
                assert!((m.norm(st[i].x, v) - 1.0).abs() < 1e-6);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn reflection_law_and_single_reflection(s in 0.0..(4.0 * PI), psi in -1.5..1.5f64) {
            let d = annulus();
            let m = ConformalMetric::euclidean();
            let ray = trace_broken_ray(&d, &m, inward_state(&d, s, psi), &params()).unwrap();
            prop_assert!(ray.reflections.len() <= 1);
            for r in &ray.reflections {
                let bp = d.boundary_data(&m, r.x).unwrap();
                let c = m.inner(r.x, r.v_in, bp.nu);
                let res = [r.v_out[0] - r.v_in[0] + 2.0 * c * bp.nu[0], r.v_out[1] - r.v_in[1] + 2.0 * c * bp.nu[1]];
                prop_assert!(res[0].abs() < 1e-10 && res[1].abs() < 1e-10);
                prop_assert!((m.inner(r.x, r.v_out, bp.nu) + c).abs() < 1e-10);
            }
        }

        #[test]
        fn reversed_ray_returns_to_start(s in 0.0..(4.0 * PI), psi in -1.4..1.4f64) {
            let d = Domain::new(
                Circle { center: [0.0, 0.0], radius: 2.0 },
                Some(Obstacle::Ellipse(Ellipse { center: [0.1, 0.0], semi_axes: [0.8, 0.6] })),
            ).unwrap();
            let m = ConformalMetric::new(Expr::poly(&[(0.05, 2, 0), (0.05, 0, 2)]));
            let p = TraceParams { step: 1e-3, ..TraceParams::for_domain(&d) };
            let p0 = inward_state(&d, s, psi);
            let fwd = trace_with(&d, &m, p0, &p, |_| {}).unwrap();
            let back = trace_with(&d, &m, fwd.exit.reverse(), &p, |_| {}).unwrap();
            prop_assert!((back.exit.x[0] - p0.x[0]).abs() < 1e-6);
            prop_assert!((back.exit.x[1] - p0.x[1]).abs() < 1e-6);
            prop_assert_eq!(back.reflections.len(), fwd.reflections.len());
        }
    }
}
