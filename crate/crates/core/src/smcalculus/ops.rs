use rustfft::num_complex::Complex;

use super::grid::{SMGrid, SMGridFunction};
use super::CalculusError;

/// Vertical derivative `V = d/dtheta`, spectral in the fiber. The Nyquist mode is dropped.
pub fn apply_v(grid: &SMGrid, u: &SMGridFunction) -> SMGridFunction {
    spectral_multiply(grid, u, |k| if 2 * k.unsigned_abs() as usize == grid.n_theta { Complex::new(0.0, 0.0) } else { Complex::new(0.0, k as f64) })
}

/// Vertical Laplacian `Delta = -V^2`; multiplies degree `k` by `k^2`.
pub fn laplacian_vertical(grid: &SMGrid, u: &SMGridFunction) -> SMGridFunction {
    spectral_multiply(grid, u, |k| {
        if 2 * k.unsigned_abs() as usize == grid.n_theta {
            Complex::new(0.0, 0.0)
        } else {
            Complex::new((k * k) as f64, 0.0)
        }
    })
}

fn spectral_multiply<F: Fn(i64) -> Complex<f64>>(grid: &SMGrid, u: &SMGridFunction, symbol: F) -> SMGridFunction {
    let nt = grid.n_theta;
    let mut c = grid.fiber_fft(u);
    let factors: Vec<Complex<f64>> = (0..nt).map(|k| symbol(grid.frequency(k))).collect();
    for chunk in c.chunks_mut(nt) {
        for (z, f) in chunk.iter_mut().zip(&factors) {
            *z *= f;
        }
    }
    let mut out = grid.fiber_ifft(c);
    out.valid = u.valid.clone();
    out
}

/// Geodesic vector field
/// `X = e^{-phi}(cos t d_x + sin t d_y + (-sin t phi_x + cos t phi_y) d_t)`.
pub fn apply_x(grid: &SMGrid, u: &SMGridFunction) -> SMGridFunction {
    frame_field(grid, u, false)
}

/// `X_perp = [X, V] = e^{-phi}(sin t d_x - cos t d_y + (cos t phi_x + sin t phi_y) d_t)`.
pub fn apply_xperp(grid: &SMGrid, u: &SMGridFunction) -> SMGridFunction {
    frame_field(grid, u, true)
}

fn frame_field(grid: &SMGrid, u: &SMGridFunction, perp: bool) -> SMGridFunction {
    let (dx, dy) = grid.base_gradient(u);
    let vu = apply_v(grid, u);
    let nt = grid.n_theta;
    let trig: Vec<(f64, f64)> = grid.thetas.iter().map(|t| t.sin_cos()).collect();
    let mut out = vec![0.0; u.values.len()];
    for (n, node) in grid.nodes.iter().enumerate() {
        let e = (-node.phi).exp();
        for (k, &(s, c)) in trig.iter().enumerate() {
            let i = n * nt + k;
            out[i] = if perp {
                e * (s * dx.values[i] - c * dy.values[i] + (c * node.phi_x + s * node.phi_y) * vu.values[i])
            } else {
                e * (c * dx.values[i] + s * dy.values[i] + (-s * node.phi_x + c * node.phi_y) * vu.values[i])
            };
        }
    }
    SMGridFunction { values: out, valid: u.valid.clone() }
}

/// Degree-`k` part of `u` as `a(x) cos k t + b(x) sin k t`.
#[derive(Clone, Debug, PartialEq)]
pub struct DegreeProjection {
    pub k: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl DegreeProjection {
    pub fn reconstruct(&self, grid: &SMGrid) -> SMGridFunction {
        let nt = grid.n_theta;
        let k = self.k as f64;
        let mut values = Vec::with_capacity(grid.len());
        for n in 0..grid.n_nodes() {
            for t in &grid.thetas {
                let (s, c) = (k * t).sin_cos();
                values.push(self.a[n] * c + self.b[n] * s);
            }
        }
        debug_assert_eq!(values.len(), grid.n_nodes() * nt);
        SMGridFunction::new(values)
    }
}

pub fn project_degree(grid: &SMGrid, u: &SMGridFunction, k: usize) -> DegreeProjection {
    let nt = grid.n_theta;
    assert!(k <= nt / 2, "degree {k} not resolved by {nt} fiber samples");
    let c = grid.fiber_fft(u);
    let nn = grid.n_nodes();
    let mut a = vec![0.0; nn];
    let mut b = vec![0.0; nn];
    let scale = 1.0 / nt as f64;
    for n in 0..nn {
        let z = c[n * nt + k];
        if k == 0 || 2 * k == nt {
            a[n] = z.re * scale;
        } else {
            a[n] = 2.0 * z.re * scale;
            b[n] = -2.0 * z.im * scale;
        }
    }
    DegreeProjection { k, a, b }
}

/// Degree-`k` part of `u` as a grid function.
pub fn degree_part(grid: &SMGrid, u: &SMGridFunction, k: usize) -> SMGridFunction {
    let mut p = project_degree(grid, u, k).reconstruct(grid);
    p.valid = u.valid.clone();
    p
}

/// `L^2` mass of every degree `0..=n_theta/2`.
pub fn degree_masses(grid: &SMGrid, u: &SMGridFunction) -> Vec<f64> {
    let nt = grid.n_theta;
    let c = grid.fiber_fft(u);
    let mut masses = vec![0.0; nt / 2 + 1];
    let dth = 2.0 * std::f64::consts::PI / nt as f64;
    for (n, node) in grid.nodes.iter().enumerate() {
        let w = node.area * (2.0 * node.phi).exp() * dth / nt as f64;
        for k in 0..nt {
            let deg = grid.frequency(k).unsigned_abs() as usize;
            masses[deg] += w * c[n * nt + k].norm_sqr();
        }
    }
    masses
}

/// Relative leakage threshold used by [`split_x`].
pub const LEAKAGE_TOL: f64 = 1e-8;

/// `(X_+ u_k, X_- u_k)` for `u` of pure degree `k`.
pub fn split_x(grid: &SMGrid, u: &SMGridFunction, k: usize) -> Result<(SMGridFunction, SMGridFunction), CalculusError> {
    let xu = apply_x(grid, u);
    let masses = degree_masses(grid, &xu);
    let total: f64 = masses.iter().sum();
    if total > 0.0 {
        let inside: f64 = masses
            .iter()
            .enumerate()
            .filter(|(d, _)| *d == k + 1 || (k >= 1 && *d == k - 1))
            .map(|(_, m)| m)
            .sum();
        let leak = (total - inside).max(0.0) / total;
        if leak > LEAKAGE_TOL {
            return Err(CalculusError::DegreeLeakage { degree: k, relative: leak });
        }
    }
    let plus = degree_part(grid, &xu, k + 1);
    let minus = if k == 0 { grid.zeros() } else { degree_part(grid, &xu, k - 1) };
    Ok((plus, minus))
}

pub fn xplus(grid: &SMGrid, u: &SMGridFunction, k: usize) -> Result<SMGridFunction, CalculusError> {
    split_x(grid, u, k).map(|p| p.0)
}

pub fn xminus(grid: &SMGrid, u: &SMGridFunction, k: usize) -> Result<SMGridFunction, CalculusError> {
    split_x(grid, u, k).map(|p| p.1)
}

/// `(X_+ u, X_- u)` for a general `u`, degree by degree up to `max_degree`.
pub fn split_x_all(grid: &SMGrid, u: &SMGridFunction, max_degree: usize) -> (SMGridFunction, SMGridFunction) {
    let mut plus = grid.zeros();
    let mut minus = grid.zeros();
    for k in 0..=max_degree {
        let uk = degree_part(grid, u, k);
        let xu = apply_x(grid, &uk);
        plus = plus.add(&degree_part(grid, &xu, k + 1));
        if k > 0 {
            minus = minus.add(&degree_part(grid, &xu, k - 1));
        }
    }
    (plus, minus)
}
