use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::geometry::ConformalMetric;

/// Node layout of the base.
///
/// Cartesian grids have `nx + 1` by `ny + 1` nodes including both ends;
/// polar grids have `n_r + 1` radii including both ends and `n_ang`
/// periodic angles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseGrid {
    Cartesian { lo: [f64; 2], hi: [f64; 2], nx: usize, ny: usize },
    Polar { center: [f64; 2], r_min: f64, r_max: f64, n_r: usize, n_ang: usize },
}

impl BaseGrid {
    pub fn square(half: f64, n: usize) -> Self {
        BaseGrid::Cartesian { lo: [-half, -half], hi: [half, half], nx: n, ny: n }
    }

    /// Number of nodes along each index direction.
    pub fn shape(&self) -> (usize, usize) {
        match *self {
            BaseGrid::Cartesian { nx, ny, .. } => (nx + 1, ny + 1),
            BaseGrid::Polar { n_r, n_ang, .. } => (n_r + 1, n_ang),
        }
    }

    pub fn spacing(&self) -> (f64, f64) {
        match *self {
            BaseGrid::Cartesian { lo, hi, nx, ny } => ((hi[0] - lo[0]) / nx as f64, (hi[1] - lo[1]) / ny as f64),
            BaseGrid::Polar { r_min, r_max, n_r, n_ang, .. } => ((r_max - r_min) / n_r as f64, 2.0 * PI / n_ang as f64),
        }
    }

    pub fn position(&self, i: usize, j: usize) -> [f64; 2] {
        let (h0, h1) = self.spacing();
        match *self {
            BaseGrid::Cartesian { lo, .. } => [lo[0] + i as f64 * h0, lo[1] + j as f64 * h1],
            BaseGrid::Polar { center, r_min, .. } => {
                let r = r_min + i as f64 * h0;
                let a = j as f64 * h1;
                [center[0] + r * a.cos(), center[1] + r * a.sin()]
            }
        }
    }
}

/// Cached geometry at the base nodes.
#[derive(Clone, Debug)]
pub struct NodeGeometry {
    pub x: [f64; 2],
    pub phi: f64,
    pub phi_x: f64,
    pub phi_y: f64,
    pub curvature: f64,
    /// Euclidean area weight of the node in the composite rule.
    pub area: f64,
}

/// Sphere bundle grid: a base grid times `n_theta` uniform fiber angles.
#[derive(Clone)]
pub struct SMGrid {
    pub base: BaseGrid,
    pub n_theta: usize,
    pub metric: ConformalMetric,
    pub nodes: Vec<NodeGeometry>,
    pub thetas: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SMGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SMGrid").field("base", &self.base).field("n_theta", &self.n_theta).finish()
    }
}

/// Composite Simpson weights on `n + 1` equispaced nodes when `n` is even,
/// trapezoid weights otherwise.
pub fn composite_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n + 1];
    if n % 2 == 0 && n >= 2 {
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = h / 3.0 * if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        }
    } else {
        w[0] = 0.5 * h;
        w[n] = 0.5 * h;
    }
    w
}

impl SMGrid {
    pub fn new(base: BaseGrid, n_theta: usize, metric: ConformalMetric) -> Self {
        assert!(n_theta >= 4 && n_theta % 2 == 0, "n_theta must be even and at least 4");
        let (n0, n1) = base.shape();
        assert!(n0 >= 5 && n1 >= 5, "base grid needs at least 5 nodes per direction");
        let (h0, h1) = base.spacing();
        let (w0, w1, polar) = match base {
            BaseGrid::Cartesian { nx, ny, .. } => (composite_weights(nx, h0), composite_weights(ny, h1), false),
            BaseGrid::Polar { n_r, n_ang, .. } => (composite_weights(n_r, h0), vec![h1; n_ang], true),
        };
        let mut nodes = Vec::with_capacity(n0 * n1);
        for i in 0..n0 {
            for j in 0..n1 {
                let x = base.position(i, j);
                let f = metric.factor(x);
                let jac = match base {
                    BaseGrid::Polar { r_min, .. } if polar => r_min + i as f64 * h0,
                    _ => 1.0,
                };
                nodes.push(NodeGeometry {
                    x,
                    phi: f.phi,
                    phi_x: f.phi_x,
                    phi_y: f.phi_y,
                    curvature: metric.curvature(x),
                    area: w0[i] * w1[j] * jac,
                });
            }
        }
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n_theta);
        let ifft = planner.plan_fft_inverse(n_theta);
        let thetas = (0..n_theta).map(|k| 2.0 * PI * k as f64 / n_theta as f64).collect();
        SMGrid { base, n_theta, metric, nodes, thetas, fft, ifft }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn len(&self) -> usize {
        self.nodes.len() * self.n_theta
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.base.shape()
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        i * self.base.shape().1 + j
    }

    /// Grid function from a formula in `(x, theta)`.
    pub fn sample<F: Fn([f64; 2], f64) -> f64>(&self, f: F) -> SMGridFunction {
        let mut values = Vec::with_capacity(self.len());
        for n in &self.nodes {
            for &t in &self.thetas {
                values.push(f(n.x, t));
            }
        }
        SMGridFunction::new(values)
    }

    pub fn zeros(&self) -> SMGridFunction {
        SMGridFunction::new(vec![0.0; self.len()])
    }

    /// Forward DFT of every fiber, `c[node * n_theta + k]`.
    pub fn fiber_fft(&self, u: &SMGridFunction) -> Vec<Complex<f64>> {
        let mut buf: Vec<Complex<f64>> = u.values.iter().map(|v| Complex::new(*v, 0.0)).collect();
        self.fft.process(&mut buf);
        buf
    }

    /// Inverse of [`Self::fiber_fft`], keeping the real part.
    pub fn fiber_ifft(&self, mut c: Vec<Complex<f64>>) -> SMGridFunction {
        self.ifft.process(&mut c);
        let s = 1.0 / self.n_theta as f64;
        SMGridFunction::new(c.iter().map(|z| z.re * s).collect())
    }

    /// Signed frequency of DFT bin `k`.
    pub fn frequency(&self, k: usize) -> i64 {
        let n = self.n_theta;
        if k <= n / 2 {
            k as i64
        } else {
            k as i64 - n as i64
        }
    }

    /// Derivative along a base index direction with fourth order stencils,
    /// one-sided at non-periodic ends.
    pub fn index_derivative(&self, u: &SMGridFunction, axis: usize) -> SMGridFunction {
        let (n0, n1) = self.shape();
        let nt = self.n_theta;
        let (h0, h1) = self.base.spacing();
        let periodic = axis == 1 && matches!(self.base, BaseGrid::Polar { .. });
        let (n, h) = if axis == 0 { (n0, h0) } else { (n1, h1) };
        let stride = if axis == 0 { n1 * nt } else { nt };
        let mut out = vec![0.0; u.values.len()];
        let v = &u.values;
        let inv = 1.0 / (12.0 * h);
        for i in 0..n0 {
            for j in 0..n1 {
                let base = (i * n1 + j) * nt;
                let pos = if axis == 0 { i } else { j };
                let at = |off: isize| -> usize {
                    let p = pos as isize + off;
                    let p = if periodic { p.rem_euclid(n as isize) } else { p };
                    let delta = (p - pos as isize) * stride as isize;
                    (base as isize + delta) as usize
                };
                let (offs, coef): ([isize; 5], [f64; 5]) = if periodic || (pos >= 2 && pos + 2 < n) {
                    ([-2, -1, 0, 1, 2], [1.0, -8.0, 0.0, 8.0, -1.0])
                } else if pos == 0 {
                    ([0, 1, 2, 3, 4], [-25.0, 48.0, -36.0, 16.0, -3.0])
                } else if pos == 1 {
                    ([-1, 0, 1, 2, 3], [-3.0, -10.0, 18.0, -6.0, 1.0])
                } else if pos == n - 2 {
                    ([-3, -2, -1, 0, 1], [-1.0, 6.0, -18.0, 10.0, 3.0])
                } else {
                    ([-4, -3, -2, -1, 0], [3.0, -16.0, 36.0, -48.0, 25.0])
                };
                let idx: [usize; 5] = std::array::from_fn(|s| at(offs[s]));
                for k in 0..nt {
                    let mut acc = 0.0;
                    for s in 0..5 {
                        if coef[s] != 0.0 {
                            acc += coef[s] * v[idx[s] + k];
                        }
                    }
                    out[base + k] = acc * inv;
                }
            }
        }
        SMGridFunction::new(out)
    }

    /// Cartesian partial derivatives `(d/dx u, d/dy u)` at fixed fiber angle.
    pub fn base_gradient(&self, u: &SMGridFunction) -> (SMGridFunction, SMGridFunction) {
        let d0 = self.index_derivative(u, 0);
        let d1 = self.index_derivative(u, 1);
        match self.base {
            BaseGrid::Cartesian { .. } => (d0, d1),
            BaseGrid::Polar { r_min, .. } => {
                let (n0, n1) = self.shape();
                let nt = self.n_theta;
                let (hr, ha) = self.base.spacing();
                let mut dx = vec![0.0; u.values.len()];
                let mut dy = vec![0.0; u.values.len()];
                for i in 0..n0 {
                    let r = r_min + i as f64 * hr;
                    for j in 0..n1 {
                        let (s, c) = (j as f64 * ha).sin_cos();
                        let b = (i * n1 + j) * nt;
                        for k in b..b + nt {
                            dx[k] = c * d0.values[k] - s / r * d1.values[k];
                            dy[k] = s * d0.values[k] + c / r * d1.values[k];
                        }
                    }
                }
                (SMGridFunction::new(dx), SMGridFunction::new(dy))
            }
        }
    }

    /// `L^2(SM)` inner product with the Liouville measure `e^{2 phi} dx dtheta`.
    pub fn inner(&self, u: &SMGridFunction, w: &SMGridFunction) -> f64 {
        let nt = self.n_theta;
        let dth = 2.0 * PI / nt as f64;
        let mut acc = 0.0;
        for (n, node) in self.nodes.iter().enumerate() {
            let s: f64 = (0..nt).map(|k| u.values[n * nt + k] * w.values[n * nt + k]).sum();
            acc += s * node.area * (2.0 * node.phi).exp();
        }
        acc * dth
    }

    pub fn norm2(&self, u: &SMGridFunction) -> f64 {
        self.inner(u, u)
    }

    /// Boundary circles of a polar grid: `(radial index, Euclidean outward normal sign)`.
    pub fn polar_edges(&self) -> Option<[(usize, f64); 2]> {
        match self.base {
            BaseGrid::Polar { n_r, .. } => Some([(0, -1.0), (n_r, 1.0)]),
            BaseGrid::Cartesian { .. } => None,
        }
    }
}

/// Values on an [`SMGrid`], fiber-fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct SMGridFunction {
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl SMGridFunction {
    pub fn new(values: Vec<f64>) -> Self {
        let valid = vec![true; values.len()];
        Self { values, valid }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { values: self.values.iter().map(|v| v * s).collect(), valid: self.valid.clone() }
    }

    pub fn axpy(&self, a: f64, other: &SMGridFunction) -> Self {
        Self {
            values: self.values.iter().zip(&other.values).map(|(x, y)| x + a * y).collect(),
            valid: self.valid.iter().zip(&other.valid).map(|(p, q)| *p && *q).collect(),
        }
    }

    pub fn add(&self, other: &SMGridFunction) -> Self {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &SMGridFunction) -> Self {
        self.axpy(-1.0, other)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().zip(&self.valid).filter(|(_, v)| **v).map(|(x, _)| x.abs()).fold(0.0, f64::max)
    }

    pub fn all_valid(&self) -> bool {
        self.valid.iter().all(|v| *v)
    }
}
