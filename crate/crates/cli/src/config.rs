//! Run configuration: one JSON document with a block per subsystem.
//! Every block rejects unknown keys and falls back to defaults for missing ones.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

use brt_core::expr::Expr;
use brt_core::geometry::{ConformalMetric, Domain, PhiSpec, QuadraticPhi};
use brt_core::raytracer::{FanSpec, TraceParams};
use brt_core::recon::{CglsOptions, PolarGrid};
use brt_core::smcalculus::{BaseGrid, BeurlingConfig};
use brt_core::tensorfield::{FieldSpec, SymTensorField};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricConfig {
    pub phi: PhiSpec,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig { phi: PhiSpec::Zero }
    }
}

/// Fan of initial states; a random fan without its own seed uses the global seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FanConfig {
    Boundary {
        n_pos: usize,
        n_ang: usize,
    },
    Random {
        count: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    Interior {
        nx: usize,
        ny: usize,
        n_theta: usize,
    },
}

impl FanConfig {
    pub fn resolve(&self, global_seed: u64) -> FanSpec {
        match *self {
            FanConfig::Boundary { n_pos, n_ang } => FanSpec::Boundary { n_pos, n_ang },
            FanConfig::Random { count, seed } => FanSpec::Random { count, seed: seed.unwrap_or(global_seed) },
            FanConfig::Interior { nx, ny, n_theta } => FanSpec::Interior { nx, ny, n_theta },
        }
    }

    fn validate(&self, block: &str) -> Result<(), ConfigError> {
        let empty = match *self {
            FanConfig::Boundary { n_pos, n_ang } => n_pos == 0 || n_ang == 0,
            FanConfig::Random { count, .. } => count == 0,
            FanConfig::Interior { nx, ny, n_theta } => nx == 0 || ny == 0 || n_theta == 0,
        };
        if empty {
            return invalid(format!("{block}: fan must contain at least one ray"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceConfig {
    /// Integrator step; defaults to `1e-3` times the outer radius.
    pub step: Option<f64>,
    pub l_max: f64,
    pub a: f64,
    /// Rays drawn in `rays.svg`.
    pub svg_max_rays: usize,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig { step: None, l_max: 100.0, a: 0.05, svg_max_rays: 200 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdmissibilityConfig {
    pub fan_size: usize,
    pub curvature_grid: usize,
    pub boundary_samples: usize,
}

impl Default for AdmissibilityConfig {
    fn default() -> Self {
        AdmissibilityConfig { fan_size: 2000, curvature_grid: 64, boundary_samples: 256 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UFieldConfig {
    pub grid: BaseGrid,
    pub n_theta: usize,
}

impl Default for UFieldConfig {
    fn default() -> Self {
        UFieldConfig {
            grid: BaseGrid::Polar { center: [0.0, 0.0], r_min: 1.1, r_max: 1.9, n_r: 8, n_ang: 32 },
            n_theta: 32,
        }
    }
}

fn default_curved() -> PhiSpec {
    PhiSpec::Quadratic(QuadraticPhi { xx: 0.1, yy: 0.08, x: 0.05, xy: -0.03, ..Default::default() })
}

fn default_metrics() -> Vec<PhiSpec> {
    vec![PhiSpec::Zero, default_curved()]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StructureConfig {
    /// Cells per side of the square base grids `[-1, 1]^2`.
    pub sizes: Vec<usize>,
    pub n_theta: usize,
    pub metrics: Vec<PhiSpec>,
    pub min_order: f64,
    pub tol_flat: f64,
    pub tol_curved: f64,
}

impl Default for StructureConfig {
    fn default() -> Self {
        StructureConfig {
            sizes: vec![32, 64, 128],
            n_theta: 64,
            metrics: default_metrics(),
            min_order: 2.0,
            tol_flat: 1e-6,
            tol_curved: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PestovConfig {
    pub sizes: Vec<usize>,
    pub n_theta: usize,
    pub metrics: Vec<PhiSpec>,
    pub min_order: f64,
    /// Bound on the relative defect of the identity for interior-supported `u`.
    pub tol_interior: f64,
    /// Bound on `|P + H| / |H|` for reflection symmetric `u` on the annulus.
    pub tol_boundary: f64,
    /// Radii of the annular grid carrying the boundary test.
    pub annulus: [f64; 2],
}

impl Default for PestovConfig {
    fn default() -> Self {
        PestovConfig {
            sizes: vec![32, 64, 128],
            n_theta: 64,
            metrics: default_metrics(),
            min_order: 2.0,
            tol_interior: 1e-3,
            tol_boundary: 1e-2,
            annulus: [1.0, 2.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CommProjConfig {
    pub size: usize,
    pub n_theta: usize,
    pub degrees: Vec<usize>,
    pub metrics: Vec<PhiSpec>,
    pub tol: f64,
}

impl Default for CommProjConfig {
    fn default() -> Self {
        CommProjConfig { size: 32, n_theta: 32, degrees: vec![0, 1, 2, 3], metrics: default_metrics(), tol: 1e-6 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstantsConfig {
    pub k: [u64; 2],
    #[serde(rename = "N")]
    pub big_n: [u64; 2],
    pub n: [u64; 2],
    /// Upper ends of `k` and `N` for the exact table written to disk.
    pub table_k_max: u64,
    #[serde(rename = "table_N_max")]
    pub table_big_n_max: u64,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        ConstantsConfig { k: [2, 200], big_n: [0, 200], n: [2, 10], table_k_max: 12, table_big_n_max: 12 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeurlingVerifyConfig {
    pub sampling: BeurlingConfig,
    /// Rank-1 field whose `u` is decomposed.
    pub field: FieldSpec,
    pub relation_tol: f64,
    pub inequality_slack: f64,
}

impl Default for BeurlingVerifyConfig {
    fn default() -> Self {
        BeurlingVerifyConfig {
            sampling: BeurlingConfig::default(),
            field: default_rank1_field(),
            relation_tol: 0.05,
            inequality_slack: 1.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransportConfig {
    pub ranks: Vec<usize>,
    /// Interior states sampled uniformly in the disk of this fraction of the outer radius.
    pub states: usize,
    pub radius_fraction: f64,
    /// Finite difference steps along the geodesic, decreasing.
    pub fd_steps: Vec<f64>,
    pub min_order: f64,
    pub parity_tol: f64,
    pub cutoff_width: f64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            ranks: vec![1, 2, 3],
            states: 40,
            radius_fraction: 0.8,
            fd_steps: vec![0.04, 0.02, 0.01],
            min_order: 1.9,
            parity_tol: 1e-6,
            cutoff_width: 0.3,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub structure: StructureConfig,
    pub pestov: PestovConfig,
    pub commproj: CommProjConfig,
    pub constants: ConstantsConfig,
    pub beurling: BeurlingVerifyConfig,
    pub transport: TransportConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconConfig {
    /// Radii (nodes including both ends) and angles of the polar grid over the annulus.
    pub n_r: usize,
    pub n_ang: usize,
    /// Defaults to the top-level fan.
    pub fan: Option<FanConfig>,
    /// Integrator step; defaults to the trace step.
    pub step: Option<f64>,
    pub cgls: CglsOptions,
    pub gauge_cgls: CglsOptions,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            n_r: 64,
            n_ang: 64,
            fan: None,
            step: None,
            cgls: CglsOptions::default(),
            gauge_cgls: CglsOptions { lambda: None, max_iter: 5000, tol: 1e-12 },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaugeConfig {
    /// Rank `m` of `f = d^s h`.
    pub rank: usize,
    pub rays: usize,
    pub step: f64,
    pub cutoff_width: f64,
    pub blend_width: f64,
    /// Total degree of the random polynomial seed of `h`.
    pub seed_degree: u32,
    pub tolerance: f64,
    /// Required ratio of the maxima at `step` and `step / 2`.
    pub min_reduction: f64,
}

impl Default for GaugeConfig {
    fn default() -> Self {
        GaugeConfig {
            rank: 1,
            rays: 500,
            step: 1e-3,
            cutoff_width: 0.3,
            blend_width: 0.3,
            seed_degree: 2,
            tolerance: 1e-6,
            min_reduction: 8.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Output directory; `--out` takes precedence. Not part of the config hash.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    pub geometry: Domain,
    pub metric: MetricConfig,
    pub field: FieldSpec,
    pub fan: FanConfig,
    pub trace: TraceConfig,
    pub admissibility: AdmissibilityConfig,
    pub u_field: UFieldConfig,
    pub verify: VerifyConfig,
    pub recon: ReconConfig,
    pub gauge: GaugeConfig,
}

fn default_rank1_field() -> FieldSpec {
    FieldSpec {
        rank: 1,
        components: BTreeMap::from([
            ("1".to_string(), Expr::poly(&[(1.0, 0, 0), (0.5, 1, 1)])),
            ("2".to_string(), Expr::poly(&[(0.7, 2, 0), (-0.3, 0, 1)])),
        ]),
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: None,
            geometry: Domain::annulus(2.0, 1.0),
            metric: MetricConfig::default(),
            field: default_rank1_field(),
            fan: FanConfig::Random { count: 500, seed: None },
            trace: TraceConfig::default(),
            admissibility: AdmissibilityConfig::default(),
            u_field: UFieldConfig::default(),
            verify: VerifyConfig::default(),
            recon: ReconConfig::default(),
            gauge: GaugeConfig::default(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        invalid(format!("{name} must be positive and finite, got {v}"))
    }
}

fn check_sizes(name: &str, sizes: &[usize], min: usize) -> Result<(), ConfigError> {
    if sizes.is_empty() || sizes.iter().any(|s| *s < min) {
        return invalid(format!("{name} must be a nonempty list of sizes of at least {min}"));
    }
    if sizes.windows(2).any(|w| w[1] <= w[0]) {
        return invalid(format!("{name} must be increasing"));
    }
    Ok(())
}

fn check_n_theta(name: &str, n: usize) -> Result<(), ConfigError> {
    if n < 4 || n % 2 != 0 {
        return invalid(format!("{name} must be an even number of at least 4, got {n}"));
    }
    Ok(())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn metric(&self) -> ConformalMetric {
        ConformalMetric::from_spec(&self.metric.phi)
    }

    pub fn trace_params(&self) -> TraceParams {
        let base = TraceParams::for_domain(&self.geometry);
        TraceParams { step: self.trace.step.unwrap_or(base.step), l_max: self.trace.l_max, a: self.trace.a }
    }

    pub fn fan_spec(&self) -> FanSpec {
        self.fan.resolve(self.seed)
    }

    pub fn field(&self) -> Result<SymTensorField, ConfigError> {
        self.field.build(&self.metric()).map_err(|e| ConfigError::Invalid(format!("field: {e}")))
    }

    pub fn recon_grid(&self) -> PolarGrid {
        PolarGrid::annulus(&self.geometry, self.recon.n_r, self.recon.n_ang)
    }

    /// Domain checks and value ranges, all before any computation.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.geometry.validate().map_err(|e| ConfigError::Invalid(format!("geometry: {e}")))?;
        self.field()?;
        if let Some(s) = self.trace.step {
            positive("trace.step", s)?;
        }
        positive("trace.l_max", self.trace.l_max)?;
        if !(self.trace.a > 0.0 && self.trace.a < 1.0) {
            return invalid(format!("trace.a must lie in (0, 1), got {}", self.trace.a));
        }
        self.fan.validate("fan")?;
        if self.admissibility.fan_size == 0 || self.admissibility.curvature_grid == 0 {
            return invalid("admissibility: fan_size and curvature_grid must be positive");
        }
        let uf = &self.u_field;
        check_n_theta("u_field.n_theta", uf.n_theta)?;
        let (n0, n1) = uf.grid.shape();
        if n0 < 2 || n1 < 2 {
            return invalid("u_field.grid needs at least two nodes per direction");
        }

        let v = &self.verify;
        check_sizes("verify.structure.sizes", &v.structure.sizes, 8)?;
        check_n_theta("verify.structure.n_theta", v.structure.n_theta)?;
        check_sizes("verify.pestov.sizes", &v.pestov.sizes, 8)?;
        check_n_theta("verify.pestov.n_theta", v.pestov.n_theta)?;
        if !(v.pestov.annulus[0] > 0.0 && v.pestov.annulus[1] > v.pestov.annulus[0]) {
            return invalid("verify.pestov.annulus must satisfy 0 < r_min < r_max");
        }
        check_sizes("verify.commproj.size", &[v.commproj.size], 8)?;
        check_n_theta("verify.commproj.n_theta", v.commproj.n_theta)?;
        if v.commproj.degrees.iter().any(|m| 2 * (m + 2) >= v.commproj.n_theta) {
            return invalid("verify.commproj.degrees must stay below n_theta / 2 - 2");
        }
        let c = &v.constants;
        if c.k[0] > c.k[1] || c.big_n[0] > c.big_n[1] || c.n[0] > c.n[1] {
            return invalid("verify.constants ranges must be [lo, hi] with lo <= hi");
        }
        if 2 * c.k[0] + c.n[0] <= 3 {
            return invalid("verify.constants ranges must satisfy 2k + n > 3");
        }
        let b = &v.beurling;
        check_n_theta("verify.beurling.sampling.n_theta", b.sampling.n_theta)?;
        if b.field.rank != 1 {
            return invalid("verify.beurling.field must have rank 1");
        }
        b.field.build(&self.metric()).map_err(|e| ConfigError::Invalid(format!("verify.beurling.field: {e}")))?;
        let r = self.geometry.outer_circle().radius;
        if !(b.sampling.r_min > 0.0 && b.sampling.r_max > b.sampling.r_min && b.sampling.r_max < r) {
            return invalid("verify.beurling.sampling radii must satisfy 0 < r_min < r_max < outer radius");
        }
        positive("verify.beurling.sampling.step", b.sampling.step)?;
        let t = &v.transport;
        if t.fd_steps.len() < 2 || t.fd_steps.windows(2).any(|w| !(w[1] < w[0] && w[1] > 0.0)) {
            return invalid("verify.transport.fd_steps must be at least two decreasing positive steps");
        }
        if t.ranks.iter().any(|m| *m == 0 || *m > brt_core::tensorfield::MAX_POTENTIAL_RANK + 1) {
            return invalid("verify.transport.ranks must lie in 1..=3");
        }
        if t.states == 0 || !(t.radius_fraction > 0.0 && t.radius_fraction < 1.0) {
            return invalid("verify.transport needs states > 0 and radius_fraction in (0, 1)");
        }

        let rc = &self.recon;
        if rc.n_r < 2 || rc.n_ang < 3 {
            return invalid("recon grid needs n_r >= 2 and n_ang >= 3");
        }
        if let Some(f) = &rc.fan {
            f.validate("recon.fan")?;
        }
        if let Some(s) = rc.step {
            positive("recon.step", s)?;
        }
        for (name, o) in [("recon.cgls", &rc.cgls), ("recon.gauge_cgls", &rc.gauge_cgls)] {
            if o.max_iter == 0 || o.lambda.is_some_and(|l| !(l >= 0.0 && l.is_finite())) || !(o.tol >= 0.0) {
                return invalid(format!("{name}: need max_iter >= 1, lambda >= 0 and tol >= 0"));
            }
        }

        let g = &self.gauge;
        if g.rank == 0 || g.rank > brt_core::tensorfield::MAX_POTENTIAL_RANK + 1 {
            return invalid(format!("gauge.rank must lie in 1..=3, got {}", g.rank));
        }
        if g.rays == 0 {
            return invalid("gauge.rays must be positive");
        }
        positive("gauge.step", g.step)?;
        positive("gauge.cutoff_width", g.cutoff_width)?;
        positive("gauge.blend_width", g.blend_width)?;
        Ok(())
    }
}
