use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::grid::{BaseGrid, SMGrid, SMGridFunction};
use super::ops::{apply_v, apply_x, apply_xperp, degree_part, laplacian_vertical};
use crate::geometry::ConformalMetric;

/// Relative residuals below this are treated as exact: they sit at the
/// level of floating point cancellation, where no convergence order can be
/// read off.
pub const ROUNDOFF_FLOOR: f64 = 1e-11;

/// Residuals of one identity over a sequence of grid sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub identity: String,
    pub grids: Vec<usize>,
    pub residuals: Vec<f64>,
    /// Least-squares slope of `-log(residual)` against `log(grid size)`,
    /// over the residuals above [`ROUNDOFF_FLOOR`].
    pub estimated_order: Option<f64>,
}

impl IdentityReport {
    pub fn new(identity: &str, grids: Vec<usize>, residuals: Vec<f64>) -> Self {
        let estimated_order = estimate_order(&grids, &residuals);
        Self { identity: identity.to_string(), grids, residuals, estimated_order }
    }

    pub fn finest(&self) -> f64 {
        *self.residuals.last().unwrap_or(&f64::NAN)
    }

    /// All residuals are at roundoff level.
    pub fn exact(&self) -> bool {
        self.residuals.iter().all(|r| *r < ROUNDOFF_FLOOR)
    }

    /// Finest residual below `tol` and either exact or converging at `min_order` or better.
    pub fn passes(&self, min_order: f64, tol: f64) -> bool {
        self.finest() < tol && (self.exact() || self.estimated_order.is_some_and(|o| o >= min_order))
    }
}

pub fn estimate_order(grids: &[usize], residuals: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = grids
        .iter()
        .zip(residuals)
        .filter(|(_, r)| **r >= ROUNDOFF_FLOOR && r.is_finite())
        .map(|(n, r)| ((*n as f64).ln(), -r.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some(sxy / sxx)
}

fn norm(grid: &SMGrid, u: &SMGridFunction) -> f64 {
    grid.norm2(u).max(0.0).sqrt()
}

/// `|sum of terms| / max |term|` in the `L^2(SM)` norm.
fn relative(grid: &SMGrid, terms: &[(f64, &SMGridFunction)]) -> f64 {
    let mut sum = grid.zeros();
    let mut scale: f64 = 0.0;
    for (c, t) in terms {
        sum = sum.axpy(*c, t);
        scale = scale.max(c.abs() * norm(grid, t));
    }
    if scale == 0.0 {
        0.0
    } else {
        norm(grid, &sum) / scale
    }
}

pub const STRUCTURE_IDENTITIES: [&str; 4] =
    ["[X,V] - X_perp", "[X_perp,V] + X", "[X,X_perp] + K V", "[X,Delta] + (X_perp V + V X_perp)"];

/// Relative residuals of the frame relations
/// `[X,V] = X_perp`, `[X_perp,V] = -X`, `[X,X_perp] = -K V` and
/// `[X,Delta] = -(X_perp V + V X_perp)` applied to `u`.
pub fn structure_residuals(grid: &SMGrid, u: &SMGridFunction) -> [f64; 4] {
    let vu = apply_v(grid, u);
    let xu = apply_x(grid, u);
    let pu = apply_xperp(grid, u);
    let xvu = apply_x(grid, &vu);
    let vxu = apply_v(grid, &xu);
    let pvu = apply_xperp(grid, &vu);
    let vpu = apply_v(grid, &pu);
    let xpu = apply_x(grid, &pu);
    let pxu = apply_xperp(grid, &xu);
    let kvu = multiply_curvature(grid, &vu);
    let lu = laplacian_vertical(grid, u);
    let xlu = apply_x(grid, &lu);
    let lxu = laplacian_vertical(grid, &xu);
    [
        relative(grid, &[(1.0, &xvu), (-1.0, &vxu), (-1.0, &pu)]),
        relative(grid, &[(1.0, &pvu), (-1.0, &vpu), (1.0, &xu)]),
        relative(grid, &[(1.0, &xpu), (-1.0, &pxu), (1.0, &kvu)]),
        relative(grid, &[(1.0, &xlu), (-1.0, &lxu), (1.0, &pvu), (1.0, &vpu)]),
    ]
}

pub fn multiply_curvature(grid: &SMGrid, u: &SMGridFunction) -> SMGridFunction {
    let nt = grid.n_theta;
    let mut out = u.clone();
    for (n, node) in grid.nodes.iter().enumerate() {
        for v in &mut out.values[n * nt..(n + 1) * nt] {
            *v *= node.curvature;
        }
    }
    out
}

/// Test function `u(x, theta)` on the sphere bundle.
pub type TestFunction<'a> = &'a (dyn Fn([f64; 2], f64) -> f64 + Sync);

/// Structure residuals on square grids `[-half, half]^2` of the given sizes.
pub fn verify_structure(
    metric: &ConformalMetric,
    u: TestFunction,
    half: f64,
    sizes: &[usize],
    n_theta: usize,
) -> Vec<IdentityReport> {
    let rows: Vec<[f64; 4]> = sizes
        .iter()
        .map(|&n| {
            let grid = SMGrid::new(BaseGrid::square(half, n), n_theta, metric.clone());
            structure_residuals(&grid, &grid.sample(u))
        })
        .collect();
    (0..4)
        .map(|i| IdentityReport::new(STRUCTURE_IDENTITIES[i], sizes.to_vec(), rows.iter().map(|r| r[i]).collect()))
        .collect()
}

/// The individual terms of the Pestov identity
/// `||V X u||^2 = ||X V u||^2 - <K V u, V u> + ||X u||^2 + P(u, u)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PestovTerms {
    pub vxu: f64,
    pub xvu: f64,
    pub curvature: f64,
    pub xu: f64,
    /// Boundary term `P(u, u)`; zero for grids without boundary circles.
    pub p: f64,
    /// `H(u, u) = int Pi (V u)^2` over the boundary circles.
    pub h: f64,
}

impl PestovTerms {
    pub fn defect(&self) -> f64 {
        let rhs = self.xvu - self.curvature + self.xu + self.p;
        let scale = [self.vxu, self.xvu, self.curvature, self.xu, self.p]
            .iter()
            .fold(0.0f64, |m, t| m.max(t.abs()));
        if scale == 0.0 {
            0.0
        } else {
            (self.vxu - rhs).abs() / scale
        }
    }

    /// `|P + H| / |H|`.
    pub fn boundary_defect(&self) -> f64 {
        if self.h == 0.0 {
            self.p.abs()
        } else {
            (self.p + self.h).abs() / self.h.abs()
        }
    }
}

pub fn pestov_terms(grid: &SMGrid, u: &SMGridFunction) -> PestovTerms {
    let vu = apply_v(grid, u);
    let xu = apply_x(grid, u);
    let vxu = apply_v(grid, &xu);
    let xvu = apply_x(grid, &vu);
    let kvu = multiply_curvature(grid, &vu);
    let (p, h) = match grid.polar_edges() {
        Some(_) => {
            let pu = apply_xperp(grid, u);
            (boundary_p(grid, &pu, &xu, &vu), boundary_h(grid, &vu))
        }
        None => (0.0, 0.0),
    };
    PestovTerms {
        vxu: grid.norm2(&vxu),
        xvu: grid.norm2(&xvu),
        curvature: grid.inner(&kvu, &vu),
        xu: grid.norm2(&xu),
        p,
        h,
    }
}

/// Iterates over boundary samples of a polar grid as
/// `(node, fiber offset, normal angle, Pi, weight of ds_g dtheta)`.
fn for_each_edge_node<F: FnMut(usize, f64, f64, f64)>(grid: &SMGrid, mut visit: F) {
    let BaseGrid::Polar { r_min, r_max, n_ang, .. } = grid.base else {
        return;
    };
    let dth = 2.0 * PI / grid.n_theta as f64;
    let da = 2.0 * PI / n_ang as f64;
    for (ir, sign) in grid.polar_edges().into_iter().flatten() {
        let r = if ir == 0 { r_min } else { r_max };
        for j in 0..n_ang {
            let n = grid.node_index(ir, j);
            let node = &grid.nodes[n];
            let a = j as f64 * da;
            let alpha_n = if sign > 0.0 { a } else { a + PI };
            let dn_phi = sign * (a.cos() * node.phi_x + a.sin() * node.phi_y);
            let pi = (-node.phi).exp() * (sign / r + dn_phi);
            let w = node.phi.exp() * r * da * dth;
            visit(n, alpha_n, pi, w);
        }
    }
}

/// `P(u, w) = -int (<v,nu> X_perp u + <v_perp,nu> X u) V w` over the boundary
/// of the grid, given `X_perp u`, `X u` and `V w`.
pub fn boundary_p(grid: &SMGrid, pu: &SMGridFunction, xu: &SMGridFunction, vw: &SMGridFunction) -> f64 {
    let nt = grid.n_theta;
    let mut acc = 0.0;
    for_each_edge_node(grid, |n, alpha_n, _pi, w| {
        for (k, t) in grid.thetas.iter().enumerate() {
            let i = n * nt + k;
            let vn = (t - alpha_n).cos();
            let pn = (alpha_n - t).sin();
            acc -= (vn * pu.values[i] + pn * xu.values[i]) * vw.values[i] * w;
        }
    });
    acc
}

/// `H(u, u) = int Pi (V u)^2` over the boundary of the grid.
pub fn boundary_h(grid: &SMGrid, vu: &SMGridFunction) -> f64 {
    let nt = grid.n_theta;
    let mut acc = 0.0;
    for_each_edge_node(grid, |n, _alpha_n, pi, w| {
        for k in 0..nt {
            let v = vu.values[n * nt + k];
            acc += pi * v * v * w;
        }
    });
    acc
}

/// `int <v, nu> u w` over the boundary of the grid.
pub fn boundary_flux(grid: &SMGrid, u: &SMGridFunction, w: &SMGridFunction) -> f64 {
    let nt = grid.n_theta;
    let mut acc = 0.0;
    for_each_edge_node(grid, |n, alpha_n, _pi, wt| {
        for (k, t) in grid.thetas.iter().enumerate() {
            let i = n * nt + k;
            acc += (t - alpha_n).cos() * u.values[i] * w.values[i] * wt;
        }
    });
    acc
}

/// Pestov identity defects on a sequence of grids produced by `make_grid`.
///
/// Returns the report for the full identity and, when the grids have
/// boundary circles, the report for `P(u,u) = -H(u,u)`.
pub fn pestov_check<G: Fn(usize) -> SMGrid>(
    make_grid: G,
    u: TestFunction,
    sizes: &[usize],
) -> (IdentityReport, Option<IdentityReport>, Vec<PestovTerms>) {
    let terms: Vec<PestovTerms> = sizes
        .iter()
        .map(|&n| {
            let grid = make_grid(n);
            pestov_terms(&grid, &grid.sample(u))
        })
        .collect();
    let full = IdentityReport::new(
        "||VXu||^2 = ||XVu||^2 - <KVu,Vu> + ||Xu||^2 + P(u,u)",
        sizes.to_vec(),
        terms.iter().map(PestovTerms::defect).collect(),
    );
    let boundary = terms.iter().any(|t| t.h != 0.0).then(|| {
        IdentityReport::new("P(u,u) = -H(u,u)", sizes.to_vec(), terms.iter().map(PestovTerms::boundary_defect).collect())
    });
    (full, boundary, terms)
}

/// Relative residual of `([X,Delta] u)_m = (2m + 1)(X u)_m`.
pub fn comm_proj_residual(grid: &SMGrid, m: usize, u: &SMGridFunction) -> f64 {
    let xu = apply_x(grid, u);
    let lu = laplacian_vertical(grid, u);
    let comm = apply_x(grid, &lu).sub(&laplacian_vertical(grid, &xu));
    let lhs = degree_part(grid, &comm, m);
    let rhs = degree_part(grid, &xu, m).scale((2 * m + 1) as f64);
    relative(grid, &[(1.0, &lhs), (-1.0, &rhs)])
}

/// Defect of `||XVu||^2 - ||VXu||^2 + ||Xu||^2 = <Xu, [X,Delta]u> + ||X_perp u||^2`
/// relative to the largest term.
pub fn vp_identity_defect(grid: &SMGrid, u: &SMGridFunction) -> f64 {
    let vu = apply_v(grid, u);
    let xu = apply_x(grid, u);
    let pu = apply_xperp(grid, u);
    let comm = apply_x(grid, &laplacian_vertical(grid, u)).sub(&laplacian_vertical(grid, &xu));
    let terms = [
        grid.norm2(&apply_x(grid, &vu)),
        -grid.norm2(&apply_v(grid, &xu)),
        grid.norm2(&xu),
        -grid.inner(&xu, &comm),
        -grid.norm2(&pu),
    ];
    let scale = terms.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    if scale == 0.0 {
        0.0
    } else {
        terms.iter().sum::<f64>().abs() / scale
    }
}

/// `<Xu, w> + <u, Xw> - int <v,nu> u w`, which vanishes in the continuum.
pub fn integration_by_parts_defect(grid: &SMGrid, u: &SMGridFunction, w: &SMGridFunction) -> (f64, f64) {
    let a = grid.inner(&apply_x(grid, u), w);
    let b = grid.inner(u, &apply_x(grid, w));
    let c = boundary_flux(grid, u, w);
    (a + b - c, a.abs().max(b.abs()).max(c.abs()))
}
