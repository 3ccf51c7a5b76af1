use serde::{Deserialize, Serialize};

use super::constants::c_const;
use super::grid::{BaseGrid, SMGrid};
use super::ops::{apply_x, degree_part};
use crate::geometry::Domain;
use crate::raytracer::TraceParams;
use crate::tensorfield::SymTensorField;
use crate::transform::integral_function_u;
use num_traits::ToPrimitive;

/// Sampling of the degree comparison: `u` is computed on a polar grid over
/// an annulus strictly inside the domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeurlingConfig {
    pub r_min: f64,
    pub r_max: f64,
    pub n_r: usize,
    pub n_ang: usize,
    pub n_theta: usize,
    pub step: f64,
    /// Degrees `k` for `||X_+ u_k||^2 = ||X_- u_{k+2}||^2`.
    pub relation_degrees: Vec<usize>,
    /// Degrees `k` for `||X_- u_k||^2 <= C(k,2) ||X_+ u_k||^2`.
    pub inequality_degrees: Vec<usize>,
}

impl Default for BeurlingConfig {
    fn default() -> Self {
        BeurlingConfig {
            r_min: 0.25,
            r_max: 1.75,
            n_r: 64,
            n_ang: 64,
            n_theta: 64,
            step: 0.02,
            relation_degrees: vec![1, 3],
            inequality_degrees: vec![3, 5],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeRelation {
    pub k: usize,
    /// `||X_+ u_k||^2`.
    pub plus: f64,
    /// `||X_- u_{k+2}||^2`.
    pub minus: f64,
    /// `|plus - minus| / max(plus, minus)`.
    pub relative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeInequality {
    pub k: usize,
    /// `||X_- u_k||^2`.
    pub minus: f64,
    /// `||X_+ u_k||^2`.
    pub plus: f64,
    pub c: f64,
    /// `minus / (c * plus)`; at most one when the inequality holds.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeurlingReport {
    pub config: BeurlingConfig,
    pub invalid_nodes: usize,
    /// `(k, ||X_+ u_k||^2, ||X_- u_k||^2)` for every resolved degree.
    pub norms: Vec<(usize, f64, f64)>,
    pub relations: Vec<DegreeRelation>,
    pub inequalities: Vec<DegreeInequality>,
}

impl BeurlingReport {
    pub fn relations_within(&self, tol: f64) -> bool {
        self.relations.iter().all(|r| r.relative <= tol)
    }

    pub fn inequalities_within(&self, slack: f64) -> bool {
        self.inequalities.iter().all(|r| r.ratio <= slack)
    }
}

/// Computes `u` for `f` by ray tracing and compares the raising and lowering
/// parts of `X` on its degree components.
pub fn beurling_experiment(domain: &Domain, f: &SymTensorField, config: &BeurlingConfig) -> BeurlingReport {
    let center = domain.outer_circle().center;
    let grid = SMGrid::new(
        BaseGrid::Polar { center, r_min: config.r_min, r_max: config.r_max, n_r: config.n_r, n_ang: config.n_ang },
        config.n_theta,
        f.metric().clone(),
    );
    let params = TraceParams::for_domain(domain).with_step(config.step);
    let field = integral_function_u(domain, f, &grid, &params);
    let invalid_nodes = field.u.valid.iter().filter(|v| !**v).count();
    let max_k = config
        .relation_degrees
        .iter()
        .map(|k| k + 2)
        .chain(config.inequality_degrees.iter().copied())
        .max()
        .unwrap_or(0);
    let top = (config.n_theta / 2 - 1).min(max_k + 2);
    let norms: Vec<(usize, f64, f64)> = (0..=top)
        .map(|k| {
            let uk = degree_part(&grid, &field.u, k);
            let xu = apply_x(&grid, &uk);
            let plus = grid.norm2(&degree_part(&grid, &xu, k + 1));
            let minus = if k == 0 { 0.0 } else { grid.norm2(&degree_part(&grid, &xu, k - 1)) };
            (k, plus, minus)
        })
        .collect();
    let relations = config
        .relation_degrees
        .iter()
        .filter(|k| *k + 2 <= top)
        .map(|&k| {
            let plus = norms[k].1;
            let minus = norms[k + 2].2;
            let scale = plus.max(minus);
            DegreeRelation { k, plus, minus, relative: if scale > 0.0 { (plus - minus).abs() / scale } else { 0.0 } }
        })
        .collect();
    let inequalities = config
        .inequality_degrees
        .iter()
        .filter(|k| **k <= top)
        .filter_map(|&k| {
            let c = c_const(k as u64, 2).ok()?.to_f64()?;
            let (plus, minus) = (norms[k].1, norms[k].2);
            let ratio = if plus > 0.0 { minus / (c * plus) } else if minus > 0.0 { f64::INFINITY } else { 0.0 };
            Some(DegreeInequality { k, minus, plus, c, ratio })
        })
        .collect();
    BeurlingReport { config: config.clone(), invalid_nodes, norms, relations, inequalities }
}
