//! Symmetric covariant tensor fields on the plane, their restriction to the
//! unit sphere bundle and the symmetrized covariant derivative.
//!
//! A rank-`m` symmetric tensor in two dimensions has `m + 1` independent
//! components. Component `j` is the value on the multi-index with `m - j`
//! copies of `x` and `j` copies of `y`; it occurs `binom(m, j)` times in the
//! full tensor.

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Debug;
use std::sync::Arc;
use thiserror::Error;

use crate::expr::Expr;
use crate::geometry::{ConformalMetric, Domain, PhasePoint};
use crate::jet::{Jet, MAX_ORDER};

/// Highest rank of a potential the admissible construction supports.
pub const MAX_POTENTIAL_RANK: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("rank {rank} is not supported (at most {max})")]
    RankUnsupported { rank: usize, max: usize },
    #[error("invalid component key {0:?}: expected a string of 1s and 2s of length equal to the rank")]
    BadComponentKey(String),
    #[error("component {0:?} given twice under different index orders")]
    DuplicateComponent(String),
    #[error("invalid width {name} = {value}: must be positive and below the boundary gap {gap}")]
    InvalidWidth { name: &'static str, value: f64, gap: f64 },
}

/// Produces the component jets of a symmetric tensor field.
pub trait ComponentSource: Send + Sync + Debug {
    fn rank(&self) -> usize;
    /// Jets of components `0..=rank` at `p`.
    fn jets(&self, p: [f64; 2], order: usize) -> Vec<Jet>;
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut b = 1.0;
    for i in 0..k {
        b = b * (n - i) as f64 / (i + 1) as f64;
    }
    b
}

#[derive(Clone, Debug)]
pub struct SymTensorField {
    metric: ConformalMetric,
    source: Arc<dyn ComponentSource>,
}

impl SymTensorField {
    pub fn new(metric: ConformalMetric, source: Arc<dyn ComponentSource>) -> Self {
        Self { metric, source }
    }

    /// Field with one expression per independent component.
    pub fn from_exprs(metric: ConformalMetric, components: Vec<Expr>) -> Self {
        assert!(!components.is_empty(), "a tensor field has at least one component");
        Self::new(metric, Arc::new(ExprComponents { components }))
    }

    pub fn scalar(metric: ConformalMetric, e: Expr) -> Self {
        Self::from_exprs(metric, vec![e])
    }

    pub fn zero(metric: ConformalMetric, rank: usize) -> Self {
        Self::from_exprs(metric, vec![Expr::zero(); rank + 1])
    }

    /// The metric tensor `g` itself.
    pub fn metric_tensor(metric: ConformalMetric) -> Self {
        let m = metric.clone();
        Self::new(metric, Arc::new(MetricComponents { metric: m }))
    }

    pub fn rank(&self) -> usize {
        self.source.rank()
    }

    pub fn metric(&self) -> &ConformalMetric {
        &self.metric
    }

    pub fn component_jets(&self, p: [f64; 2], order: usize) -> Vec<Jet> {
        self.source.jets(p, order)
    }

    pub fn components(&self, p: [f64; 2]) -> Vec<f64> {
        self.source.jets(p, 0).iter().map(Jet::value).collect()
    }

    /// `f_x(v, ..., v)` with `v` the unit tangent at `p`.
    pub fn eval(&self, p: PhasePoint) -> f64 {
        let c = self.components(p.x);
        let s = self.metric.factor(p.x).inv_scale;
        contract(&c, s * p.theta.cos(), s * p.theta.sin())
    }

    /// Values on the fiber over `x` at the given angles.
    pub fn eval_fiber(&self, x: [f64; 2], thetas: &[f64]) -> Vec<f64> {
        let c = self.components(x);
        let s = self.metric.factor(x).inv_scale;
        thetas.iter().map(|t| contract(&c, s * t.cos(), s * t.sin())).collect()
    }

    /// The symmetrized covariant derivative `d^s`, a field of rank one higher.
    pub fn sym_derivative(&self) -> SymTensorField {
        Self::new(self.metric.clone(), Arc::new(SymDerivative { inner: self.clone() }))
    }

    /// `sum_i c_i f_i`; all terms must share the rank.
    pub fn linear_combination(terms: Vec<(f64, SymTensorField)>) -> SymTensorField {
        assert!(!terms.is_empty());
        let rank = terms[0].1.rank();
        assert!(terms.iter().all(|t| t.1.rank() == rank), "ranks differ in linear combination");
        let metric = terms[0].1.metric.clone();
        Self::new(metric, Arc::new(LinearCombination { rank, terms }))
    }

    pub fn add(&self, other: &SymTensorField) -> SymTensorField {
        Self::linear_combination(vec![(1.0, self.clone()), (1.0, other.clone())])
    }

    pub fn sub(&self, other: &SymTensorField) -> SymTensorField {
        Self::linear_combination(vec![(1.0, self.clone()), (-1.0, other.clone())])
    }
}

/// `sum_j binom(m, j) c_j vx^(m-j) vy^j`.
pub fn contract(c: &[f64], vx: f64, vy: f64) -> f64 {
    let m = c.len() - 1;
    match m {
        0 => c[0],
        1 => c[0] * vx + c[1] * vy,
        2 => c[0] * vx * vx + 2.0 * c[1] * vx * vy + c[2] * vy * vy,
        3 => {
            c[0] * vx * vx * vx + 3.0 * c[1] * vx * vx * vy + 3.0 * c[2] * vx * vy * vy + c[3] * vy * vy * vy
        }
        _ => c
            .iter()
            .enumerate()
            .map(|(j, cj)| binomial(m, j) * cj * vx.powi((m - j) as i32) * vy.powi(j as i32))
            .sum(),
    }
}

#[derive(Debug)]
struct ExprComponents {
    components: Vec<Expr>,
}

impl ComponentSource for ExprComponents {
    fn rank(&self) -> usize {
        self.components.len() - 1
    }

    fn jets(&self, p: [f64; 2], order: usize) -> Vec<Jet> {
        self.components.iter().map(|e| e.eval_jet(p, order)).collect()
    }
}

#[derive(Debug)]
struct MetricComponents {
    metric: ConformalMetric,
}

impl ComponentSource for MetricComponents {
    fn rank(&self) -> usize {
        2
    }

    fn jets(&self, p: [f64; 2], order: usize) -> Vec<Jet> {
        let e = self.metric.phi_jet(p, order).scale(2.0).exp();
        vec![e, Jet::zero(order), e]
    }
}

#[derive(Debug)]
struct LinearCombination {
    rank: usize,
    terms: Vec<(f64, SymTensorField)>,
}

impl ComponentSource for LinearCombination {
    fn rank(&self) -> usize {
        self.rank
    }

    fn jets(&self, p: [f64; 2], order: usize) -> Vec<Jet> {
        let mut acc = vec![Jet::zero(order); self.rank + 1];
        for (c, f) in &self.terms {
            for (a, j) in acc.iter_mut().zip(f.component_jets(p, order)) {
                *a = *a + j.scale(*c);
            }
        }
        acc
    }
}

#[derive(Debug)]
struct SymDerivative {
    inner: SymTensorField,
}

impl ComponentSource for SymDerivative {
    fn rank(&self) -> usize {
        self.inner.rank() + 1
    }

    fn jets(&self, p: [f64; 2], order: usize) -> Vec<Jet> {
        assert!(order < MAX_ORDER, "symmetrized derivative needs jets of order {}", order + 1);
        let h = self.inner.component_jets(p, order + 1);
        let m = h.len() - 1;
        let dh: Vec<[Jet; 2]> = h.iter().map(|j| [j.partial(0), j.partial(1)]).collect();
        let metric = self.inner.metric();
        // nabla[j][k] = covariant derivative of component j along axis k
        let nabla: Vec<[Jet; 2]> = if metric.is_flat() {
            dh
        } else {
            let phi = metric.phi_jet(p, order + 1);
            let g = [phi.partial(0), phi.partial(1)];
            // Gamma^l_{ki} = delta_lk g_i + delta_li g_k - delta_ki g_l
            let gamma = |l: usize, k: usize, i: usize| -> Jet {
                let mut out = Jet::zero(order);
                if l == k {
                    out = out + g[i];
                }
                if l == i {
                    out = out + g[k];
                }
                if k == i {
                    out = out - g[l];
                }
                out
            };
            let zero = Jet::zero(order);
            let comp = |j: isize| -> Jet {
                if j < 0 || j as usize > m {
                    zero
                } else {
                    h[j as usize].truncate(order)
                }
            };
            (0..=m)
                .map(|j| {
                    let ji = j as isize;
                    let mut out = [dh[j][0], dh[j][1]];
                    for (k, slot) in out.iter_mut().enumerate() {
                        let xs = (m - j) as f64;
                        let ys = j as f64;
                        let corr_x = gamma(0, k, 0) * comp(ji) + gamma(1, k, 0) * comp(ji + 1);
                        let corr_y = gamma(0, k, 1) * comp(ji - 1) + gamma(1, k, 1) * comp(ji);
                        *slot = *slot - corr_x.scale(xs) - corr_y.scale(ys);
                    }
                    out
                })
                .collect()
        };
        let n = m + 1;
        (0..=n)
            .map(|jp| {
                let mut out = Jet::zero(order);
                if jp <= m {
                    out = out + nabla[jp][0].scale((n - jp) as f64);
                }
                if jp >= 1 {
                    out = out + nabla[jp - 1][1].scale(jp as f64);
                }
                out.scale(1.0 / n as f64)
            })
            .collect()
    }
}

/// Degree-9 smoothstep: `0` below `0`, `1` above `1`, with four continuous
/// derivatives at both ends.
pub fn smoothstep(t: f64) -> f64 {
    smoothstep_derivs(t)[0]
}

const SMOOTHSTEP: [f64; 10] = [0.0, 0.0, 0.0, 0.0, 0.0, 126.0, -420.0, 540.0, -315.0, 70.0];

fn smoothstep_derivs(t: f64) -> [f64; MAX_ORDER + 1] {
    let mut d = [0.0; MAX_ORDER + 1];
    if t <= 0.0 {
        return d;
    }
    if t >= 1.0 {
        d[0] = 1.0;
        return d;
    }
    let mut coef = SMOOTHSTEP;
    for slot in d.iter_mut() {
        *slot = coef.iter().rev().fold(0.0, |acc, c| acc * t + c);
        for i in 0..coef.len() - 1 {
            coef[i] = coef[i + 1] * (i + 1) as f64;
        }
        coef[coef.len() - 1] = 0.0;
    }
    d
}

pub fn smoothstep_jet(t: &Jet) -> Jet {
    t.compose(&smoothstep_derivs(t.value()))
}

/// Parameters for building a potential that satisfies the boundary conditions.
#[derive(Clone, Debug)]
pub struct GaugeSpec {
    /// Seed field of rank `m - 1`.
    pub seed: SymTensorField,
    /// Width of the cutoff layer at the outer boundary.
    pub cutoff_width: f64,
    /// Width of the blending layer at the obstacle.
    pub blend_width: f64,
}

/// `h = chi * h~` where `chi` vanishes near the outer boundary and `h~` equals
/// the seed away from the obstacle with its parts odd in the obstacle normal
/// blended to zero on the obstacle.
pub fn make_admissible_potential(domain: &Domain, spec: &GaugeSpec) -> Result<SymTensorField, FieldError> {
    let rank = spec.seed.rank();
    if rank > MAX_POTENTIAL_RANK {
        return Err(FieldError::RankUnsupported { rank, max: MAX_POTENTIAL_RANK });
    }
    let gap = domain.gap();
    let limit = gap.min(domain.outer_circle().radius);
    for (name, value) in [("cutoff_width", spec.cutoff_width), ("blend_width", spec.blend_width)] {
        if !(value > 0.0 && value < limit) {
            return Err(FieldError::InvalidWidth { name, value, gap });
        }
    }
    Ok(SymTensorField::new(
        spec.seed.metric().clone(),
        Arc::new(AdmissiblePotential {
            domain: *domain,
            seed: spec.seed.clone(),
            cutoff_width: spec.cutoff_width,
            blend_width: spec.blend_width,
        }),
    ))
}

#[derive(Debug)]
struct AdmissiblePotential {
    domain: Domain,
    seed: SymTensorField,
    cutoff_width: f64,
    blend_width: f64,
}

impl ComponentSource for AdmissiblePotential {
    fn rank(&self) -> usize {
        self.seed.rank()
    }

    fn jets(&self, p: [f64; 2], order: usize) -> Vec<Jet> {
        let mut s = self.seed.component_jets(p, order);
        let chi = smoothstep_jet(&self.domain.outer_smooth_distance_jet(p, order).scale(1.0 / self.cutoff_width));
        let rank = s.len() - 1;
        if let (Some(o), true) = (&self.domain.obstacle, rank >= 1) {
            let d = o.smooth_distance_jet(p, order + 1);
            if d.value() < self.blend_width {
                let beta = smoothstep_jet(&d.truncate(order).scale(1.0 / self.blend_width));
                let gx = d.partial(0);
                let gy = d.partial(1);
                let norm2 = gx * gx + gy * gy;
                let (nx, ny) = if norm2.value() > 1e-24 {
                    let inv = norm2.sqrt().recip().scale(-1.0);
                    (gx * inv, gy * inv)
                } else {
                    (Jet::constant(1.0, order), Jet::zero(order))
                };
                let (tx, ty) = (-ny, nx);
                let w = Jet::constant(1.0, order) - beta;
                match rank {
                    1 => {
                        let sn = s[0] * nx + s[1] * ny;
                        let k = w * sn;
                        s[0] = s[0] - k * nx;
                        s[1] = s[1] - k * ny;
                    }
                    2 => {
                        let snt = s[0] * nx * tx + s[1] * (nx * ty + ny * tx) + s[2] * ny * ty;
                        let k = w * snt;
                        s[0] = s[0] - (k * nx * tx).scale(2.0);
                        s[1] = s[1] - k * (nx * ty + ny * tx);
                        s[2] = s[2] - (k * ny * ty).scale(2.0);
                    }
                    _ => unreachable!("rank checked at construction"),
                }
            }
        }
        s.into_iter().map(|j| chi * j).collect()
    }
}

/// Fiber degrees with relative Fourier mass above `1e-12` at any of the sample points.
pub fn fiber_degrees(f: &SymTensorField, points: &[[f64; 2]]) -> Vec<usize> {
    let m = f.rank();
    let n = 4 * (m + 2);
    let thetas: Vec<f64> = (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut present = vec![false; n / 2 + 1];
    for &x in points {
        let mut buf: Vec<Complex<f64>> = f.eval_fiber(x, &thetas).into_iter().map(|v| Complex::new(v, 0.0)).collect();
        fft.process(&mut buf);
        let mass: Vec<f64> = (0..=n / 2)
            .map(|k| if k == 0 || k == n / 2 { buf[k].norm_sqr() } else { buf[k].norm_sqr() + buf[n - k].norm_sqr() })
            .collect();
        let total: f64 = mass.iter().sum();
        if total == 0.0 {
            continue;
        }
        for (k, mk) in mass.iter().enumerate() {
            if mk / total > 1e-12 {
                present[k] = true;
            }
        }
    }
    present.iter().enumerate().filter(|(_, p)| **p).map(|(k, _)| k).collect()
}

/// JSON form of a field: `{"rank": m, "components": {"<multi-index>": expr}}`.
///
/// Multi-indices are strings over `1` (x) and `2` (y) of length `m`, in any
/// order; `""` names the single component of a scalar. Missing components are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub rank: usize,
    #[serde(default)]
    pub components: BTreeMap<String, Expr>,
}

impl FieldSpec {
    pub fn build(&self, metric: &ConformalMetric) -> Result<SymTensorField, FieldError> {
        let mut comps: Vec<Option<Expr>> = vec![None; self.rank + 1];
        for (key, e) in &self.components {
            if key.len() != self.rank || !key.chars().all(|c| c == '1' || c == '2') {
                return Err(FieldError::BadComponentKey(key.clone()));
            }
            let j = key.chars().filter(|&c| c == '2').count();
            if comps[j].is_some() {
                return Err(FieldError::DuplicateComponent(key.clone()));
            }
            comps[j] = Some(e.clone());
        }
        Ok(SymTensorField::from_exprs(
            metric.clone(),
            comps.into_iter().map(|c| c.unwrap_or_else(Expr::zero)).collect(),
        ))
    }
}
