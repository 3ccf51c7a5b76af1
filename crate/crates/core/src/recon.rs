//! Discrete broken ray transform on a polar grid, its exact transpose,
//! Tikhonov-regularized CGLS reconstruction and gauge comparison of
//! reconstructed tensor fields.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::geometry::{ConformalMetric, Domain, PhasePoint, BOUNDARY_TOL};
use crate::raytracer::{trace_with, RayFan, TraceParams};
use crate::tensorfield::{binomial, FieldError, SymTensorField};

/// Polar node layout: `n_r` radii from `r_min` to `r_max` inclusive times
/// `n_ang` periodic angles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarGrid {
    pub center: [f64; 2],
    pub r_min: f64,
    pub r_max: f64,
    pub n_r: usize,
    pub n_ang: usize,
}

impl PolarGrid {
    /// Grid spanning an annular domain from the obstacle to the outer circle.
    pub fn annulus(domain: &Domain, n_r: usize, n_ang: usize) -> Self {
        let outer = domain.outer_circle();
        let r_min = match &domain.obstacle {
            Some(o) => o.outer_radius(),
            None => 0.0,
        };
        PolarGrid { center: outer.center, r_min, r_max: outer.radius, n_r, n_ang }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_r * self.n_ang
    }

    pub fn dr(&self) -> f64 {
        (self.r_max - self.r_min) / (self.n_r - 1) as f64
    }

    pub fn da(&self) -> f64 {
        2.0 * PI / self.n_ang as f64
    }

    pub fn radius(&self, i: usize) -> f64 {
        self.r_min + i as f64 * self.dr()
    }

    pub fn angle(&self, j: usize) -> f64 {
        j as f64 * self.da()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_ang + j
    }

    pub fn position(&self, i: usize, j: usize) -> [f64; 2] {
        let (r, a) = (self.radius(i), self.angle(j));
        [self.center[0] + r * a.cos(), self.center[1] + r * a.sin()]
    }

    /// Trapezoid area weights `r dr da`.
    pub fn area_weights(&self) -> Vec<f64> {
        let (dr, da) = (self.dr(), self.da());
        let mut w = Vec::with_capacity(self.n_nodes());
        for i in 0..self.n_r {
            let edge = if i == 0 || i == self.n_r - 1 { 0.5 } else { 1.0 };
            let r = self.radius(i);
            w.extend(std::iter::repeat_n(edge * r * dr * da, self.n_ang));
        }
        w
    }

    /// Bilinear weights of the four surrounding nodes; radii are clamped to the grid.
    pub fn bilinear(&self, x: [f64; 2]) -> [(usize, f64); 4] {
        let dx = x[0] - self.center[0];
        let dy = x[1] - self.center[1];
        let r = dx.hypot(dy).clamp(self.r_min, self.r_max);
        let a = dy.atan2(dx).rem_euclid(2.0 * PI);
        let fr = (r - self.r_min) / self.dr();
        let i0 = (fr.floor() as usize).min(self.n_r - 2);
        let tr = fr - i0 as f64;
        let fa = a / self.da();
        let j0f = fa.floor();
        let ta = fa - j0f;
        let j0 = (j0f as usize) % self.n_ang;
        let j1 = (j0 + 1) % self.n_ang;
        [
            (self.index(i0, j0), (1.0 - tr) * (1.0 - ta)),
            (self.index(i0, j1), (1.0 - tr) * ta),
            (self.index(i0 + 1, j0), tr * (1.0 - ta)),
            (self.index(i0 + 1, j1), tr * ta),
        ]
    }
}

/// Symmetric tensor field of rank `m` stored as `m + 1` independent
/// components per node, component `j` having `j` indices equal to 2.
/// Layout is component-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub rank: usize,
    pub grid: PolarGrid,
    pub values: Vec<f64>,
}

impl FieldGrid {
    pub fn zeros(grid: PolarGrid, rank: usize) -> Self {
        FieldGrid { rank, grid, values: vec![0.0; (rank + 1) * grid.n_nodes()] }
    }

    pub fn sample(grid: PolarGrid, f: &SymTensorField) -> Self {
        let rank = f.rank();
        let nn = grid.n_nodes();
        let mut values = vec![0.0; (rank + 1) * nn];
        for i in 0..grid.n_r {
            for j in 0..grid.n_ang {
                let n = grid.index(i, j);
                for (c, v) in f.components(grid.position(i, j)).into_iter().enumerate() {
                    values[c * nn + n] = v;
                }
            }
        }
        FieldGrid { rank, grid, values }
    }

    pub fn n_components(&self) -> usize {
        self.rank + 1
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let nn = self.grid.n_nodes();
        &self.values[c * nn..(c + 1) * nn]
    }

    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        FieldGrid { rank: self.rank, grid: self.grid, values }
    }

    pub fn sub(&self, other: &FieldGrid) -> Self {
        self.with_values(self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &FieldGrid) -> Self {
        self.with_values(self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect())
    }

    /// Coordinate `L^2` norm: area-weighted, with symmetric multiplicities.
    pub fn norm(&self) -> f64 {
        let w = self.grid.area_weights();
        let nn = self.grid.n_nodes();
        let mut acc = 0.0;
        for c in 0..self.n_components() {
            let mult = binomial(self.rank, c);
            for n in 0..nn {
                acc += mult * w[n] * self.values[c * nn + n].powi(2);
            }
        }
        acc.sqrt()
    }
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from rows of `(column, value)` pairs; duplicates are summed in
    /// column order.
    pub fn from_rows(rows: Vec<Vec<(u32, f64)>>, n_cols: usize) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        let n_rows = rows.len();
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut iter = row.into_iter().peekable();
            while let Some((c, mut v)) = iter.next() {
                assert!((c as usize) < n_cols, "column {c} out of range");
                while let Some((_, w)) = iter.next_if(|e| e.0 == c) {
                    v += w;
                }
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        SparseMatrix { n_rows, n_cols, row_ptr, cols, vals }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        (0..self.n_rows)
            .into_par_iter()
            .map(|r| {
                let (c, v) = self.row(r);
                c.iter().zip(v).map(|(c, v)| v * x[*c as usize]).sum()
            })
            .collect()
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for c in &self.cols {
            counts[*c as usize + 1] += 1;
        }
        for i in 0..self.n_cols {
            counts[i + 1] += counts[i];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut cols = vec![0u32; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for r in 0..self.n_rows {
            let (c, v) = self.row(r);
            for (c, v) in c.iter().zip(v) {
                let slot = next[*c as usize];
                cols[slot] = r as u32;
                vals[slot] = *v;
                next[*c as usize] += 1;
            }
        }
        SparseMatrix { n_rows: self.n_cols, n_cols: self.n_rows, row_ptr, cols, vals }
    }
}

/// The broken ray transform restricted to bilinear fields on a polar grid,
/// precomputed for a fan.
#[derive(Clone, Debug)]
pub struct BrokenRayOperator {
    pub grid: PolarGrid,
    pub rank: usize,
    /// Fan indices of the rows; rays that failed to trace are dropped.
    pub rays: Vec<usize>,
    /// Tracer status per fan ray.
    pub statuses: Vec<String>,
    pub ray_lengths: Vec<f64>,
    matrix: SparseMatrix,
    transpose: SparseMatrix,
}

impl BrokenRayOperator {
    /// Traces every ray of `fan` once and stores the quadrature weights of
    /// composite Simpson on integrator steps against the bilinear basis.
    pub fn build(
        domain: &Domain,
        metric: &ConformalMetric,
        grid: PolarGrid,
        rank: usize,
        fan: &RayFan,
        params: &TraceParams,
    ) -> Self {
        let nn = grid.n_nodes();
        let traced: Vec<Result<(Vec<(u32, f64)>, f64), String>> = fan
            .states
            .par_iter()
            .map(|p0| {
                let mut row: Vec<(u32, f64)> = Vec::new();
                let mut push = |p: PhasePoint, w: f64| {
                    let v = metric.unit_vector(p.x, p.theta);
                    for (node, bw) in grid.bilinear(p.x) {
                        if bw == 0.0 {
                            continue;
                        }
                        for c in 0..=rank {
                            let mult = binomial(rank, c) * v[0].powi((rank - c) as i32) * v[1].powi(c as i32);
                            row.push(((c * nn + node) as u32, w * bw * mult));
                        }
                    }
                };
                let ray = trace_with(domain, metric, *p0, params, |panel| {
                    let [a, m, b] = panel.states;
                    push(a, panel.dt / 6.0);
                    push(m, 4.0 * panel.dt / 6.0);
                    push(b, panel.dt / 6.0);
                });
                match ray {
                    Ok(r) => Ok((row, r.tau)),
                    Err(e) => Err(e.tag().to_string()),
                }
            })
            .collect();
        let mut rays = Vec::new();
        let mut statuses = Vec::with_capacity(traced.len());
        let mut ray_lengths = Vec::new();
        let mut rows = Vec::new();
        for (i, t) in traced.into_iter().enumerate() {
            match t {
                Ok((row, tau)) => {
                    rays.push(i);
                    statuses.push("ok".to_string());
                    ray_lengths.push(tau);
                    rows.push(row);
                }
                Err(tag) => statuses.push(tag),
            }
        }
        let matrix = SparseMatrix::from_rows(rows, (rank + 1) * nn);
        let transpose = matrix.transpose();
        BrokenRayOperator { grid, rank, rays, statuses, ray_lengths, matrix, transpose }
    }

    pub fn n_rows(&self) -> usize {
        self.matrix.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.matrix.n_cols
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn mean_ray_length(&self) -> f64 {
        if self.ray_lengths.is_empty() {
            0.0
        } else {
            self.ray_lengths.iter().sum::<f64>() / self.ray_lengths.len() as f64
        }
    }

    pub fn forward(&self, f: &FieldGrid) -> Vec<f64> {
        assert_eq!((f.rank, f.grid), (self.rank, self.grid), "field does not match the operator grid");
        self.matrix.apply(&f.values)
    }

    pub fn adjoint(&self, d: &[f64]) -> FieldGrid {
        FieldGrid { rank: self.rank, grid: self.grid, values: self.transpose.apply(d) }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CglsOptions {
    /// Tikhonov weight; `None` uses `1e-6` times the mean ray length.
    pub lambda: Option<f64>,
    pub max_iter: usize,
    /// Stop when `||A^T r - lambda x|| <= tol ||A^T d||`.
    pub tol: f64,
}

impl Default for CglsOptions {
    fn default() -> Self {
        CglsOptions { lambda: None, max_iter: 500, tol: 1e-10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CglsIteration {
    pub iter: usize,
    /// `||d - A x||`.
    pub residual: f64,
    /// `||A^T (d - A x) - lambda x||`.
    pub normal_residual: f64,
    /// `||d - A x||^2 + lambda ||x||^2`, nonincreasing in exact arithmetic.
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CglsResult {
    pub x: Vec<f64>,
    pub lambda: f64,
    pub log: Vec<CglsIteration>,
    pub converged: bool,
}

impl CglsResult {
    pub fn objective_monotone(&self) -> bool {
        self.log.windows(2).all(|w| w[1].objective <= w[0].objective * (1.0 + 1e-12) + 1e-300)
    }
}

/// CGLS for `min ||A x - d||^2 + lambda ||x||^2`, starting from zero.
pub fn cgls<F, G>(apply: F, apply_t: G, d: &[f64], n: usize, lambda: f64, max_iter: usize, tol: f64) -> CglsResult
where
    F: Fn(&[f64]) -> Vec<f64>,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let mut x = vec![0.0; n];
    let mut r = d.to_vec();
    let mut s = apply_t(&r);
    let norm0 = dot(&s, &s).sqrt();
    let mut p = s.clone();
    let mut gamma = dot(&s, &s);
    let mut log = vec![CglsIteration { iter: 0, residual: dot(&r, &r).sqrt(), normal_residual: norm0, objective: dot(&r, &r) }];
    let mut converged = norm0 == 0.0;
    let mut iter = 0;
    while !converged && iter < max_iter {
        iter += 1;
        let q = apply(&p);
        let delta = dot(&q, &q) + lambda * dot(&p, &p);
        if delta <= 0.0 {
            break;
        }
        let alpha = gamma / delta;
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += alpha * pi;
        }
        for (ri, qi) in r.iter_mut().zip(&q) {
            *ri -= alpha * qi;
        }
        s = apply_t(&r);
        for (si, xi) in s.iter_mut().zip(&x) {
            *si -= lambda * xi;
        }
        let gamma_new = dot(&s, &s);
        let beta = gamma_new / gamma;
        gamma = gamma_new;
        for (pi, si) in p.iter_mut().zip(&s) {
            *pi = si + beta * *pi;
        }
        let rr = dot(&r, &r);
        log.push(CglsIteration {
            iter,
            residual: rr.sqrt(),
            normal_residual: gamma.sqrt(),
            objective: rr + lambda * dot(&x, &x),
        });
        converged = gamma.sqrt() <= tol * norm0;
    }
    CglsResult { x, lambda, log, converged }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub field: FieldGrid,
    pub lambda: f64,
    pub log: Vec<CglsIteration>,
    /// `false` when the iteration cap was reached above tolerance.
    pub converged: bool,
}

/// Regularized least-squares reconstruction from data on the operator's rays.
pub fn reconstruct(op: &BrokenRayOperator, data: &[f64], opts: &CglsOptions) -> Reconstruction {
    assert_eq!(data.len(), op.n_rows(), "one datum per traced ray");
    let lambda = opts.lambda.unwrap_or(1e-6 * op.mean_ray_length());
    let res = cgls(
        |x| op.matrix.apply(x),
        |y| op.transpose.apply(y),
        data,
        op.n_cols(),
        lambda,
        opts.max_iter,
        opts.tol,
    );
    Reconstruction {
        field: FieldGrid { rank: op.rank, grid: op.grid, values: res.x },
        lambda,
        log: res.log,
        converged: res.converged,
    }
}

/// Largest potential rank handled by [`gauge_compare`].
pub const MAX_POTENTIAL_RANK: usize = 2;

/// Discrete symmetrized covariant derivative from admissible potentials on
/// the grid to fields of one rank higher.
///
/// Potentials vanish on outer boundary nodes; on obstacle nodes their
/// components odd in the normal are zero.
#[derive(Clone, Debug)]
pub struct PotentialOperator {
    pub grid: PolarGrid,
    /// Rank of the potential.
    pub rank: usize,
    matrix: SparseMatrix,
    transpose: SparseMatrix,
    /// Per node, the columns of the parameterization `h = B z` with their
    /// component vectors.
    basis: Vec<Vec<(u32, Vec<f64>)>>,
    n_params: usize,
}

impl PotentialOperator {
    pub fn new(domain: &Domain, metric: &ConformalMetric, grid: PolarGrid, rank: usize) -> Result<Self, FieldError> {
        if rank > MAX_POTENTIAL_RANK {
            return Err(FieldError::RankUnsupported { rank, max: MAX_POTENTIAL_RANK });
        }
        let nn = grid.n_nodes();
        let mut basis = Vec::with_capacity(nn);
        let mut n_params = 0u32;
        for i in 0..grid.n_r {
            for j in 0..grid.n_ang {
                let x = grid.position(i, j);
                let mut cols = Vec::new();
                if domain.outer_level(x).abs() <= BOUNDARY_TOL.max(1e-9) {
                    // no freedom on the accessible boundary
                } else if domain.obstacle_level(x).is_some_and(|l| l.abs() <= 1e-9) && rank > 0 {
                    let a = grid.angle(j);
                    let (nu, tau) = ([a.cos(), a.sin()], [-a.sin(), a.cos()]);
                    if rank == 1 {
                        cols.push((n_params, tau.to_vec()));
                        n_params += 1;
                    } else {
                        for e in [nu, tau] {
                            cols.push((n_params, vec![e[0] * e[0], e[0] * e[1], e[1] * e[1]]));
                            n_params += 1;
                        }
                    }
                } else {
                    for c in 0..=rank {
                        let mut e = vec![0.0; rank + 1];
                        e[c] = 1.0;
                        cols.push((n_params, e));
                        n_params += 1;
                    }
                }
                basis.push(cols);
            }
        }
        let rows = Self::rows(metric, &grid, rank, &basis);
        let matrix = SparseMatrix::from_rows(rows, n_params as usize);
        let transpose = matrix.transpose();
        Ok(PotentialOperator { grid, rank, matrix, transpose, basis, n_params: n_params as usize })
    }

    fn rows(metric: &ConformalMetric, grid: &PolarGrid, rank: usize, basis: &[Vec<(u32, Vec<f64>)>]) -> Vec<Vec<(u32, f64)>> {
        let nn = grid.n_nodes();
        let m = rank;
        let n = m + 1;
        let (dr, da) = (grid.dr(), grid.da());
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); (n + 1) * nn];
        for i in 0..grid.n_r {
            let r = grid.radius(i);
            // second-order radial stencil, one-sided at the ends
            let radial: Vec<(usize, f64)> = if i == 0 {
                vec![(0, -1.5 / dr), (1, 2.0 / dr), (2, -0.5 / dr)]
            } else if i == grid.n_r - 1 {
                vec![(i, 1.5 / dr), (i - 1, -2.0 / dr), (i - 2, 0.5 / dr)]
            } else {
                vec![(i + 1, 0.5 / dr), (i - 1, -0.5 / dr)]
            };
            for j in 0..grid.n_ang {
                let node = grid.index(i, j);
                let a = grid.angle(j);
                let (sa, ca) = a.sin_cos();
                let jp = (j + 1) % grid.n_ang;
                let jm = (j + grid.n_ang - 1) % grid.n_ang;
                // d/dx = cos a d/dr - sin a / r d/da; d/dy = sin a d/dr + cos a / r d/da
                let mut dx: Vec<(usize, f64)> = radial.iter().map(|(ii, w)| (grid.index(*ii, j), ca * w)).collect();
                let mut dy: Vec<(usize, f64)> = radial.iter().map(|(ii, w)| (grid.index(*ii, j), sa * w)).collect();
                if r > 0.0 {
                    let g = 0.5 / (r * da);
                    dx.push((grid.index(i, jp), -sa * g));
                    dx.push((grid.index(i, jm), sa * g));
                    dy.push((grid.index(i, jp), ca * g));
                    dy.push((grid.index(i, jm), -ca * g));
                }
                let fct = metric.factor(grid.position(i, j));
                let g = [fct.phi_x, fct.phi_y];
                let gamma = |l: usize, k: usize, ii: usize| -> f64 {
                    let mut out = 0.0;
                    if l == k {
                        out += g[ii];
                    }
                    if l == ii {
                        out += g[k];
                    }
                    if k == ii {
                        out -= g[l];
                    }
                    out
                };
                // nabla[jc][k] as a list of (node, component, coefficient)
                let mut nabla: Vec<[Vec<(usize, usize, f64)>; 2]> = Vec::with_capacity(m + 1);
                for jc in 0..=m {
                    let mut entry: [Vec<(usize, usize, f64)>; 2] = [Vec::new(), Vec::new()];
                    for (k, slot) in entry.iter_mut().enumerate() {
                        let stencil = if k == 0 { &dx } else { &dy };
                        for (q, w) in stencil {
                            slot.push((*q, jc, *w));
                        }
                        let xs = (m - jc) as f64;
                        let ys = jc as f64;
                        // corrections from the x indices and the y indices of the component
                        let mut add = |comp: isize, coef: f64| {
                            if comp >= 0 && comp as usize <= m && coef != 0.0 {
                                slot.push((node, comp as usize, -coef));
                            }
                        };
                        let ji = jc as isize;
                        add(ji, xs * gamma(0, k, 0));
                        add(ji + 1, xs * gamma(1, k, 0));
                        add(ji - 1, ys * gamma(0, k, 1));
                        add(ji, ys * gamma(1, k, 1));
                    }
                    nabla.push(entry);
                }
                for jp_out in 0..=n {
                    let row = &mut rows[jp_out * nn + node];
                    let mut push_all = |terms: &[(usize, usize, f64)], scale: f64| {
                        for (q, comp, coef) in terms {
                            for (col, e) in &basis[*q] {
                                let v = coef * scale * e[*comp];
                                if v != 0.0 {
                                    row.push((*col, v));
                                }
                            }
                        }
                    };
                    if jp_out <= m {
                        push_all(&nabla[jp_out][0], (n - jp_out) as f64 / n as f64);
                    }
                    if jp_out >= 1 {
                        push_all(&nabla[jp_out - 1][1], jp_out as f64 / n as f64);
                    }
                }
            }
        }
        rows
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// Nodal potential components from parameters.
    pub fn potential(&self, z: &[f64]) -> FieldGrid {
        let nn = self.grid.n_nodes();
        let mut values = vec![0.0; (self.rank + 1) * nn];
        for (node, cols) in self.basis.iter().enumerate() {
            for (col, e) in cols {
                for (c, ec) in e.iter().enumerate() {
                    values[c * nn + node] += ec * z[*col as usize];
                }
            }
        }
        FieldGrid { rank: self.rank, grid: self.grid, values }
    }

    /// `d^s h` for parameters `z`.
    pub fn apply(&self, z: &[f64]) -> FieldGrid {
        FieldGrid { rank: self.rank + 1, grid: self.grid, values: self.matrix.apply(z) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaugeReport {
    pub rank: usize,
    /// `||f_a - f_b||`.
    pub difference_norm: f64,
    /// `min_h ||(f_a - f_b) - d^s h||` over admissible discrete potentials.
    pub residual_norm: f64,
    pub potential: FieldGrid,
    pub iterations: usize,
    pub converged: bool,
}

impl GaugeReport {
    /// Residual relative to `||f_a - f_b||`.
    pub fn relative_residual(&self) -> f64 {
        if self.difference_norm == 0.0 {
            0.0
        } else {
            self.residual_norm / self.difference_norm
        }
    }
}

/// Tests whether `f_a - f_b` is a potential field `d^s h` with `h` vanishing
/// on the accessible boundary and reflection symmetric on the obstacle.
pub fn gauge_compare(
    domain: &Domain,
    metric: &ConformalMetric,
    f_a: &FieldGrid,
    f_b: &FieldGrid,
    opts: &CglsOptions,
) -> Result<GaugeReport, FieldError> {
    assert_eq!((f_a.rank, f_a.grid), (f_b.rank, f_b.grid), "fields live on different grids");
    if f_a.rank == 0 || f_a.rank - 1 > MAX_POTENTIAL_RANK {
        return Err(FieldError::RankUnsupported { rank: f_a.rank.saturating_sub(1), max: MAX_POTENTIAL_RANK });
    }
    let op = PotentialOperator::new(domain, metric, f_a.grid, f_a.rank - 1)?;
    let diff = f_a.sub(f_b);
    // Weight rows by the field norm so the least-squares problem matches `FieldGrid::norm`.
    let nn = f_a.grid.n_nodes();
    let area = f_a.grid.area_weights();
    let sqrt_w: Vec<f64> =
        (0..diff.values.len()).map(|k| (binomial(f_a.rank, k / nn) * area[k % nn]).sqrt()).collect();
    let d: Vec<f64> = diff.values.iter().zip(&sqrt_w).map(|(v, w)| v * w).collect();
    let res = cgls(
        |z| op.matrix.apply(z).iter().zip(&sqrt_w).map(|(v, w)| v * w).collect(),
        |y| {
            let wy: Vec<f64> = y.iter().zip(&sqrt_w).map(|(v, w)| v * w).collect();
            op.transpose.apply(&wy)
        },
        &d,
        op.n_params(),
        opts.lambda.unwrap_or(0.0),
        opts.max_iter,
        opts.tol,
    );
    let fitted = op.apply(&res.x);
    let residual_norm = diff.sub(&fitted).norm();
    Ok(GaugeReport {
        rank: f_a.rank,
        difference_norm: diff.norm(),
        residual_norm,
        potential: op.potential(&res.x),
        iterations: res.log.len() - 1,
        converged: res.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::raytracer::{sample_fan, FanSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(rank: usize, n: usize, rays: usize) -> (Domain, BrokenRayOperator) {
        let d = Domain::annulus(2.0, 1.0);
        let fan = sample_fan(&d, FanSpec::Random { count: rays, seed: 11 });
        let params = TraceParams::for_domain(&d).with_step(0.02);
        let op = BrokenRayOperator::build(&d, &ConformalMetric::euclidean(), PolarGrid::annulus(&d, n, 2 * n), rank, &fan, &params);
        (d, op)
    }

    #[test]
    fn constant_field_gives_ray_lengths() {
        let (_, op) = setup(0, 8, 50);
        let one = FieldGrid::sample(op.grid, &SymTensorField::scalar(ConformalMetric::euclidean(), Expr::Const(1.0)));
        let data = op.forward(&one);
        for (d, l) in data.iter().zip(&op.ray_lengths) {
            assert!((d - l).abs() < 1e-8);
        }
    }

    #[test]
    fn adjoint_is_exact_transpose() {
        let (_, op) = setup(2, 8, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = FieldGrid { rank: 2, grid: op.grid, values: (0..op.n_cols()).map(|_| rng.gen::<f64>() - 0.5).collect() };
        let d: Vec<f64> = (0..op.n_rows()).map(|_| rng.gen::<f64>() - 0.5).collect();
        let lhs = dot(&op.forward(&f), &d);
        let rhs = dot(&f.values, &op.adjoint(&d).values);
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()));
        assert!(op.adjoint(&vec![0.0; op.n_rows()]).values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sparse_transpose_roundtrip() {
        let m = SparseMatrix::from_rows(vec![vec![(2, 1.0), (0, 2.0), (2, 0.5)], vec![], vec![(1, -1.0)]], 3);
        assert_eq!(m.row(0), (&[0u32, 2][..], &[2.0, 1.5][..]));
        assert_eq!(m.transpose().transpose(), m);
        assert_eq!(m.apply(&[1.0, 2.0, 3.0]), vec![6.5, 0.0, -2.0]);
    }

    #[test]
    fn cgls_solves_small_system_monotonically() {
        let a = SparseMatrix::from_rows(vec![vec![(0, 2.0), (1, 1.0)], vec![(1, 3.0)], vec![(0, 1.0), (1, -1.0)]], 2);
        let at = a.transpose();
        let d = vec![3.0, 3.0, 0.0];
        let res = cgls(|x| a.apply(x), |y| at.apply(y), &d, 2, 0.0, 10, 1e-14);
        assert!(res.converged);
        assert!((res.x[0] - 1.0).abs() < 1e-12 && (res.x[1] - 1.0).abs() < 1e-12);
        assert!(res.objective_monotone());
        let zero = cgls(|x| a.apply(x), |y| at.apply(y), &[0.0; 3], 2, 1e-3, 10, 1e-12);
        assert_eq!(zero.x, vec![0.0, 0.0]);
    }

    #[test]
    fn gauge_compare_detects_discrete_potentials() {
        let d = Domain::annulus(2.0, 1.0);
        let m = ConformalMetric::euclidean();
        let grid = PolarGrid::annulus(&d, 9, 16);
        for rank in 0..=2 {
            let pot = PotentialOperator::new(&d, &m, grid, rank).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(rank as u64);
            let z: Vec<f64> = (0..pot.n_params()).map(|_| rng.gen::<f64>() - 0.5).collect();
            let fa = FieldGrid {
                rank: rank + 1,
                grid,
                values: (0..(rank + 2) * grid.n_nodes()).map(|_| rng.gen::<f64>()).collect(),
            };
            let fb = fa.add(&pot.apply(&z));
            let opts = CglsOptions { lambda: None, max_iter: 5000, tol: 1e-13 };
            let rep = gauge_compare(&d, &m, &fa, &fb, &opts).unwrap();
            assert!(rep.relative_residual() < 1e-6, "rank {rank}: {}", rep.relative_residual());
            let same = gauge_compare(&d, &m, &fa, &fa, &opts).unwrap();
            assert_eq!(same.residual_norm, 0.0);
            // A generic field is far from the potentials.
            let generic = gauge_compare(&d, &m, &fa, &FieldGrid::zeros(grid, rank + 1), &opts).unwrap();
            assert!(generic.relative_residual() > 0.1);
        }
        let f4 = FieldGrid::zeros(grid, 4);
        assert!(matches!(
            gauge_compare(&d, &m, &f4, &f4, &CglsOptions::default()),
            Err(FieldError::RankUnsupported { rank: 3, .. })
        ));
    }

    #[test]
    fn potential_boundary_conditions() {
        let d = Domain::annulus(2.0, 1.0);
        let grid = PolarGrid::annulus(&d, 6, 8);
        let pot = PotentialOperator::new(&d, &ConformalMetric::euclidean(), grid, 1).unwrap();
        let z = vec![1.0; pot.n_params()];
        let h = pot.potential(&z);
        let nn = grid.n_nodes();
        for j in 0..grid.n_ang {
            let outer = grid.index(grid.n_r - 1, j);
            assert_eq!((h.values[outer], h.values[nn + outer]), (0.0, 0.0));
            let inner = grid.index(0, j);
            let a = grid.angle(j);
            let normal = h.values[inner] * a.cos() + h.values[nn + inner] * a.sin();
            assert!(normal.abs() < 1e-15);
        }
    }
}
