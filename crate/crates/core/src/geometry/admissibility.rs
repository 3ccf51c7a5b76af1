use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{ConformalMetric, Domain, PhasePoint};
use crate::raytracer::{inward_state, trace_with, TraceError, TraceParams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmissibilityOptions {
    /// Integrator step; defaults to `1e-3` times the outer radius.
    pub step: Option<f64>,
    pub seed: u64,
    /// Side of the interior grid on which curvature is sampled.
    pub curvature_grid: usize,
    /// Number of samples on each boundary component.
    pub boundary_samples: usize,
}

impl Default for AdmissibilityOptions {
    fn default() -> Self {
        AdmissibilityOptions { step: None, seed: 0, curvature_grid: 64, boundary_samples: 256 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub curvature_ok: bool,
    pub convexity_ok: bool,
    /// Largest exit time over the traced fan; infinite if a ray ran out of budget.
    pub l_estimate: f64,
    pub tangential_count_max: usize,
    pub a: f64,
    pub max_curvature: f64,
    pub min_pi_exit: f64,
    pub max_pi_reflecting: Option<f64>,
    pub curvature_samples: usize,
    pub boundary_samples: usize,
    pub rays_traced: usize,
    pub step: f64,
    /// Tracer failures as `(ray index, error tag, message)`.
    pub errors: Vec<(usize, String, String)>,
}

impl AdmissibilityReport {
    pub fn is_admissible(&self) -> bool {
        self.curvature_ok && self.convexity_ok && self.l_estimate.is_finite() && self.tangential_count_max <= 1
    }
}

pub fn check_admissibility(
    domain: &Domain,
    metric: &ConformalMetric,
    fan_size: usize,
    a: f64,
    l_max: f64,
) -> AdmissibilityReport {
    check_admissibility_with(domain, metric, fan_size, a, l_max, &AdmissibilityOptions::default())
}

/// Samples curvature on a grid, the second fundamental form on both boundary
/// components, and traces `fan_size` rays, alternating between uniformly
/// spread inward states on the outer curve and random interior states.
pub fn check_admissibility_with(
    domain: &Domain,
    metric: &ConformalMetric,
    fan_size: usize,
    a: f64,
    l_max: f64,
    opts: &AdmissibilityOptions,
) -> AdmissibilityReport {
    let fan_size = fan_size.max(1);
    let (lo, hi) = domain.bounding_box();
    let n = opts.curvature_grid.max(1);
    let mut max_k = f64::NEG_INFINITY;
    let mut k_samples = 0;
    for iy in 0..n {
        for ix in 0..n {
            let x = [
                lo[0] + (hi[0] - lo[0]) * (ix as f64 + 0.5) / n as f64,
                lo[1] + (hi[1] - lo[1]) * (iy as f64 + 0.5) / n as f64,
            ];
            if domain.level(x) <= 0.0 {
                max_k = max_k.max(metric.curvature(x));
                k_samples += 1;
            }
        }
    }

    let nb = opts.boundary_samples.max(1);
    let mut min_pi_exit = f64::INFINITY;
    let mut max_pi_refl: Option<f64> = None;
    for i in 0..nb {
        let t = 2.0 * PI * i as f64 / nb as f64;
        let (x, _) = domain.outer_point(t * domain.outer_circle().radius);
        if let Ok(bp) = domain.boundary_data(metric, x) {
            min_pi_exit = min_pi_exit.min(bp.pi);
        }
        if let Some(o) = &domain.obstacle {
            if let Ok(bp) = domain.boundary_data(metric, o.point(t)) {
                max_pi_refl = Some(max_pi_refl.map_or(bp.pi, |m| m.max(bp.pi)));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let perimeter = domain.outer_perimeter();
    let n_boundary = fan_size.div_ceil(2);
    // Golden-ratio sequence in (position, angle) spreads boundary states evenly.
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    let mut states: Vec<PhasePoint> = (0..n_boundary)
        .map(|i| {
            let u = (i as f64 + 0.5) / n_boundary as f64;
            let w = ((i as f64 + 0.5) * golden).fract();
            inward_state(domain, u * perimeter, -0.5 * PI + PI * w)
        })
        .collect();
    while states.len() < fan_size {
        let x = [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])];
        if domain.level(x) < 0.0 {
            states.push(PhasePoint::new(x, rng.gen_range(0.0..2.0 * PI)));
        }
    }

    let step = opts.step.unwrap_or(1e-3 * domain.outer_circle().radius);
    let params = TraceParams { step, l_max, a };
    let results: Vec<Result<(f64, usize), TraceError>> = states
        .par_iter()
        .map(|p| trace_with(domain, metric, *p, &params, |_| {}).map(|r| (r.tau, r.tangential_count)))
        .collect();

    let mut l_estimate: f64 = 0.0;
    let mut tangential_max = 0;
    let mut errors = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((tau, tc)) => {
                l_estimate = l_estimate.max(tau);
                tangential_max = tangential_max.max(tc);
            }
            Err(e) => {
                match e {
                    TraceError::BudgetExceeded { .. } => l_estimate = f64::INFINITY,
                    TraceError::SecondTangentialReflection { .. } => tangential_max = tangential_max.max(2),
                    _ => {}
                }
                errors.push((i, e.tag().to_string(), e.to_string()));
            }
        }
    }

    AdmissibilityReport {
        curvature_ok: max_k <= 0.0,
        convexity_ok: min_pi_exit > 0.0 && max_pi_refl.is_none_or(|p| p < 0.0),
        l_estimate,
        tangential_count_max: tangential_max,
        a,
        max_curvature: max_k,
        min_pi_exit,
        max_pi_reflecting: max_pi_refl,
        curvature_samples: k_samples,
        boundary_samples: nb,
        rays_traced: fan_size,
        step,
        errors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{PhiSpec, QuadraticPhi};

    #[test]
    fn euclidean_disk_is_admissible_within_diameter() {
        let r = check_admissibility(&Domain::disk(2.0), &ConformalMetric::euclidean(), 200, 0.05, 50.0);
        assert!(r.is_admissible(), "{r:?}");
        assert!(r.l_estimate <= 4.0 + 1e-9);
        assert!(r.l_estimate > 3.5);
    }

    #[test]
    fn annulus_has_at_most_one_tangential_reflection() {
        let r = check_admissibility(&Domain::annulus(2.0, 1.0), &ConformalMetric::euclidean(), 400, 0.05, 50.0);
        assert!(r.is_admissible(), "{r:?}");
        assert!(r.tangential_count_max <= 1);
        assert!(r.errors.is_empty());
    }

    #[test]
    fn positive_curvature_is_rejected() {
        let m = ConformalMetric::from_spec(&PhiSpec::Quadratic(QuadraticPhi { xx: -0.5, ..Default::default() }));
        let r = check_admissibility(&Domain::annulus(2.0, 1.0), &m, 16, 0.05, 50.0);
        assert!(!r.curvature_ok);
        assert!(!r.is_admissible());
    }

    #[test]
    fn small_budget_is_reported_not_fatal() {
        let r = check_admissibility(&Domain::disk(2.0), &ConformalMetric::euclidean(), 20, 0.05, 0.5);
        assert!(r.l_estimate.is_infinite());
        assert!(!r.errors.is_empty());
        assert!(!r.is_admissible());
    }
}
