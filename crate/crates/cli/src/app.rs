use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use thiserror::Error;

use brt_core::geometry::check_admissibility_with;
use brt_core::geometry::AdmissibilityOptions;
use brt_core::raytracer::{sample_fan, trace_with, RayFan};
use brt_core::smcalculus::{BaseGrid, SMGrid};
use brt_core::tensorfield::FieldError;
use brt_core::transform::{forward, integral_function_u};

use crate::config::{ConfigError, RunConfig};
use crate::experiments::{self, ReconProblem};
use crate::output::{num, OutputDir};
use crate::svg;

#[derive(Parser, Debug)]
#[command(name = "brt", version, about = "Broken ray transform experiments")]
struct Cli {
    /// JSON run configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 picks the number of cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Overrides the global seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Curvature, boundary convexity and exit-time checks of the geometry.
    CheckGeometry,
    /// Traces the fan and records reflections and exits.
    Trace,
    /// Broken ray transform of the configured field over the fan.
    Transform,
    /// The integral function `u` on a sphere bundle grid.
    UField,
    /// Numerical checks of identities and estimates.
    Verify {
        #[arg(value_enum)]
        target: VerifyTarget,
    },
    /// Tikhonov-regularized reconstruction on the annulus grid.
    Reconstruct {
        /// Dataset CSV from `transform`; without it the data are synthesized from the configured field.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Transform of a random admissible potential field `d^s h`.
    GaugeTest {
        /// Rank of `d^s h`.
        #[arg(long)]
        rank: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VerifyTarget {
    Structure,
    Pestov,
    Commproj,
    Constants,
    Beurling,
    Transport,
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid data file {path}: {message}")]
    Data { path: PathBuf, message: String },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("output error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Data { .. } | CliError::Field(_) => 2,
            CliError::Io(_) | CliError::Runtime(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data { .. } => "data",
            CliError::Field(_) => "field",
            CliError::Io(_) => "io",
            CliError::Runtime(_) => "runtime",
        }
    }
}

/// Result of a subcommand: a one-line summary and the verdict of its checks.
struct Outcome {
    summary: serde_json::Value,
    passed: bool,
}

fn diagnostic(kind: &str, message: &str) {
    eprintln!("{}", json!({ "level": "error", "kind": kind, "message": message }));
}

fn init_logging() {
    let level = match std::env::var("BRT_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Off,
        Ok("debug") => log::LevelFilter::Debug,
        Ok("info") => log::LevelFilter::Info,
        _ => log::LevelFilter::Warn,
    };
    let _ = env_logger::Builder::new().filter_level(level).target(env_logger::Target::Stderr).try_init();
}

/// Runs the command line `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let text = e.to_string();
            diagnostic("usage", text.lines().next().unwrap_or("").trim_start_matches("error: "));
            return 2;
        }
    };
    let prepared = prepare(&cli);
    let (cfg, data) = match prepared {
        Ok(p) => p,
        Err(e) => {
            diagnostic(e.kind(), &e.to_string());
            return e.exit_code();
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            diagnostic("runtime", &e.to_string());
            return 1;
        }
    };
    let out_dir = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let result = pool.install(|| execute(&cli.command, &cfg, data.as_ref(), &out_dir));
    match result {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            if outcome.passed {
                0
            } else {
                diagnostic("assertion", "checks failed; see the report in the output directory");
                3
            }
        }
        Err(e) => {
            diagnostic(e.kind(), &e.to_string());
            e.exit_code()
        }
    }
}

/// Loads and validates everything a command needs before any output exists.
fn prepare(cli: &Cli) -> Result<(RunConfig, Option<MeasuredData>), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Command::GaugeTest { rank: Some(r) } = cli.command {
        cfg.gauge.rank = r;
    }
    cfg.validate()?;
    let data = match &cli.command {
        Command::Reconstruct { data: Some(path) } => Some(read_dataset(path)?),
        _ => None,
    };
    Ok((cfg, data))
}

#[derive(Debug, Deserialize)]
struct DataRecord {
    ray_id: usize,
    x0: f64,
    y0: f64,
    theta0: f64,
    value: f64,
    #[serde(default)]
    status: Option<String>,
}

struct MeasuredData {
    path: PathBuf,
    ray_ids: Vec<usize>,
    fan: RayFan,
    values: Vec<f64>,
    skipped: usize,
}

fn read_dataset(path: &Path) -> Result<MeasuredData, CliError> {
    let err = |message: String| CliError::Data { path: path.into(), message };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(false)
        .from_path(path)
        .map_err(|e| err(e.to_string()))?;
    let mut states = Vec::new();
    let mut values = Vec::new();
    let mut ray_ids = Vec::new();
    let mut skipped = 0;
    for rec in reader.deserialize::<DataRecord>() {
        let r = rec.map_err(|e| err(e.to_string()))?;
        let ok = r.status.as_deref().is_none_or(|s| s == "ok") && r.value.is_finite();
        if !ok {
            skipped += 1;
            continue;
        }
        if ![r.x0, r.y0, r.theta0].iter().all(|v| v.is_finite()) {
            return Err(err(format!("ray {} has a non-finite initial state", r.ray_id)));
        }
        ray_ids.push(r.ray_id);
        states.push(brt_core::geometry::PhasePoint::new([r.x0, r.y0], r.theta0));
        values.push(r.value);
    }
    if states.is_empty() {
        return Err(err("no usable rows".into()));
    }
    let spec = brt_core::raytracer::FanSpec::Random { count: states.len(), seed: 0 };
    Ok(MeasuredData { path: path.into(), ray_ids, fan: RayFan { spec, states }, values, skipped })
}

fn execute(cmd: &Command, cfg: &RunConfig, data: Option<&MeasuredData>, out_dir: &Path) -> Result<Outcome, CliError> {
    let hash = cfg.hash();
    log::info!("config hash {hash}, {} threads", rayon::current_num_threads());
    let mut out = OutputDir::new(out_dir, &hash);
    match cmd {
        Command::CheckGeometry => check_geometry(cfg, &mut out),
        Command::Trace => trace(cfg, &mut out),
        Command::Transform => transform(cfg, &mut out),
        Command::UField => u_field(cfg, &mut out),
        Command::Verify { target } => verify(*target, cfg, &mut out),
        Command::Reconstruct { .. } => reconstruct(cfg, data, &mut out),
        Command::GaugeTest { .. } => gauge_test(cfg, &mut out),
    }
}

fn check_geometry(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let params = cfg.trace_params();
    let opts = AdmissibilityOptions {
        step: Some(params.step),
        seed: cfg.seed,
        curvature_grid: cfg.admissibility.curvature_grid,
        boundary_samples: cfg.admissibility.boundary_samples,
    };
    let report =
        check_admissibility_with(&cfg.geometry, &cfg.metric(), cfg.admissibility.fan_size, params.a, params.l_max, &opts);
    let admissible = report.is_admissible();
    out.write_json("admissibility.json", &json!({ "domain": cfg.geometry, "admissible": admissible, "report": report }))?;
    Ok(Outcome {
        summary: json!({
            "command": "check-geometry",
            "admissible": admissible,
            "max_curvature": report.max_curvature,
            "l_estimate": report.l_estimate,
            "tangential_count_max": report.tangential_count_max,
            "errors": report.errors.len(),
        }),
        passed: admissible,
    })
}

#[derive(Serialize)]
struct RayRecord {
    id: usize,
    x0: [f64; 2],
    theta0: f64,
    status: String,
    n_reflections: usize,
    tau: Option<f64>,
    transversalities: Vec<f64>,
    reflection_points: Vec<[f64; 2]>,
    exit_point: Option<[f64; 2]>,
    exit_theta: Option<f64>,
    error: Option<String>,
}

/// Path points closer than this are merged in the ray plot.
const SVG_MIN_SPACING: f64 = 0.01;

fn trace(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let params = cfg.trace_params();
    let metric = cfg.metric();
    let fan = sample_fan(&cfg.geometry, cfg.fan_spec());
    let max_paths = cfg.trace.svg_max_rays;
    let traced: Vec<(RayRecord, Vec<[f64; 2]>)> = fan
        .states
        .par_iter()
        .enumerate()
        .map(|(id, p0)| {
            let mut path = vec![p0.x];
            let mut pending: Option<[f64; 2]> = None;
            let mut seg = 0;
            let keep = id < max_paths;
            let res = trace_with(&cfg.geometry, &metric, *p0, &params, |panel| {
                if !keep {
                    return;
                }
                if panel.segment != seg {
                    seg = panel.segment;
                    path.extend(pending.take());
                    path.push(panel.states[0].x);
                }
                let x = panel.states[2].x;
                let last = path[path.len() - 1];
                if (x[0] - last[0]).hypot(x[1] - last[1]) >= SVG_MIN_SPACING {
                    path.push(x);
                    pending = None;
                } else {
                    pending = Some(x);
                }
            });
            path.extend(pending);
            let rec = match res {
                Ok(ray) => RayRecord {
                    id,
                    x0: p0.x,
                    theta0: p0.theta,
                    status: "ok".into(),
                    n_reflections: ray.reflections.len(),
                    tau: Some(ray.tau),
                    transversalities: ray.reflections.iter().map(|r| r.transversality).collect(),
                    reflection_points: ray.reflections.iter().map(|r| r.x).collect(),
                    exit_point: Some(ray.exit.x),
                    exit_theta: Some(ray.exit.theta),
                    error: None,
                },
                Err(e) => RayRecord {
                    id,
                    x0: p0.x,
                    theta0: p0.theta,
                    status: e.tag().into(),
                    n_reflections: 0,
                    tau: None,
                    transversalities: Vec::new(),
                    reflection_points: Vec::new(),
                    exit_point: None,
                    exit_theta: None,
                    error: Some(e.to_string()),
                },
            };
            (rec, if keep { path } else { Vec::new() })
        })
        .collect();
    let failures = traced.iter().filter(|(r, _)| r.status != "ok").count();
    let max_reflections = traced.iter().map(|(r, _)| r.n_reflections).max().unwrap_or(0);
    let paths: Vec<Vec<[f64; 2]>> = traced.iter().filter(|(_, p)| p.len() > 1).map(|(_, p)| p.clone()).collect();
    let hits: Vec<[f64; 2]> =
        traced.iter().take(max_paths).flat_map(|(r, _)| r.reflection_points.iter().copied()).collect();
    let records: Vec<&RayRecord> = traced.iter().map(|(r, _)| r).collect();
    out.write_json("rays.json", &json!({ "fan": fan.spec, "trace": params, "rays": records }))?;
    out.write_svg("rays.svg", &svg::rays(&cfg.geometry, &paths, &hits))?;
    Ok(Outcome {
        summary: json!({ "command": "trace", "rays": fan.len(), "failures": failures, "max_reflections": max_reflections }),
        passed: true,
    })
}

const DATASET_HEADER: [&str; 8] = ["ray_id", "x0", "y0", "theta0", "n_reflections", "tau", "value", "status"];

fn transform(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let f = cfg.field()?;
    let fan = sample_fan(&cfg.geometry, cfg.fan_spec());
    let ds = forward(&cfg.geometry, &f, &fan, &cfg.trace_params());
    let rows: Vec<Vec<String>> = ds
        .rows
        .iter()
        .map(|r| {
            vec![
                r.ray_id.to_string(),
                num(r.x0[0]),
                num(r.x0[1]),
                num(r.theta0),
                r.n_reflections.to_string(),
                num(r.tau),
                num(r.value),
                r.status.clone(),
            ]
        })
        .collect();
    out.write_csv("dataset.csv", &DATASET_HEADER, &rows)?;
    let summary = json!({
        "command": "transform",
        "rays": ds.rows.len(),
        "failures": ds.failures(),
        "max_abs_value": ds.max_abs_value(),
        "step": ds.step,
        "quadrature": ds.quadrature,
    });
    out.write_json("transform.json", &summary)?;
    Ok(Outcome { summary, passed: true })
}

fn u_field(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let f = cfg.field()?;
    let grid = SMGrid::new(cfg.u_field.grid, cfg.u_field.n_theta, cfg.metric());
    let uf = integral_function_u(&cfg.geometry, &f, &grid, &cfg.trace_params());
    let (n0, n1) = grid.shape();
    let nt = grid.n_theta;
    let mut rows = Vec::with_capacity(grid.len());
    for i in 0..n0 {
        for j in 0..n1 {
            let node = grid.node_index(i, j);
            for k in 0..nt {
                let idx = node * nt + k;
                rows.push(vec![
                    i.to_string(),
                    j.to_string(),
                    k.to_string(),
                    num(uf.u.values[idx]),
                    uf.u.valid[idx].to_string(),
                    uf.tangential[idx].to_string(),
                ]);
            }
        }
    }
    let header = match cfg.u_field.grid {
        BaseGrid::Polar { .. } => ["r_index", "ang_index", "theta_index", "value", "valid", "tangential"],
        BaseGrid::Cartesian { .. } => ["x_index", "y_index", "theta_index", "value", "valid", "tangential"],
    };
    out.write_csv("u_field.csv", &header, &rows)?;
    let invalid = uf.u.valid.iter().filter(|v| !**v).count();
    let tangential = uf.tangential.iter().filter(|v| **v).count();
    let max_abs = uf.u.values.iter().filter(|v| v.is_finite()).fold(0.0f64, |m, v| m.max(v.abs()));
    let summary = json!({
        "command": "u-field",
        "samples": grid.len(),
        "invalid": invalid,
        "tangential": tangential,
        "max_abs": max_abs,
    });
    out.write_json("u_field.json", &json!({ "grid": cfg.u_field.grid, "n_theta": nt, "summary": summary }))?;
    Ok(Outcome { summary, passed: true })
}

fn residual_series(reports: &[brt_core::smcalculus::IdentityReport], label: &str) -> Vec<(String, Vec<(f64, f64)>)> {
    reports
        .iter()
        .map(|r| {
            (
                format!("{label}: {}", r.identity),
                r.grids.iter().zip(&r.residuals).map(|(n, e)| (*n as f64, *e)).collect(),
            )
        })
        .collect()
}

fn phi_label(flat: bool) -> &'static str {
    if flat {
        "flat"
    } else {
        "curved"
    }
}

fn verify(target: VerifyTarget, cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let v = &cfg.verify;
    match target {
        VerifyTarget::Structure => {
            let r = experiments::structure(&v.structure);
            out.write_json("verify_structure.json", &r)?;
            let series: Vec<_> =
                r.runs.iter().flat_map(|run| residual_series(&run.reports, phi_label(run.flat))).collect();
            out.write_svg("verify_structure.svg", &svg::loglog("structure equation residuals", "grid size", &series))?;
            let finest: Vec<_> = r
                .runs
                .iter()
                .map(|run| json!({ "flat": run.flat, "finest": run.reports.iter().map(|x| x.finest()).collect::<Vec<_>>() }))
                .collect();
            Ok(Outcome { summary: json!({ "command": "verify structure", "passed": r.passed, "runs": finest }), passed: r.passed })
        }
        VerifyTarget::Pestov => {
            let r = experiments::pestov(&v.pestov);
            out.write_json("verify_pestov.json", &r)?;
            let series: Vec<_> = r
                .runs
                .iter()
                .flat_map(|run| {
                    let flat = brt_core::geometry::ConformalMetric::from_spec(&run.phi).is_flat();
                    residual_series(&[run.interior.clone(), run.boundary.clone()], phi_label(flat))
                })
                .collect();
            out.write_svg("verify_pestov.svg", &svg::loglog("Pestov identity defects", "grid size", &series))?;
            let finest: Vec<_> = r
                .runs
                .iter()
                .map(|run| json!({ "interior": run.interior.finest(), "boundary": run.boundary.finest() }))
                .collect();
            Ok(Outcome { summary: json!({ "command": "verify pestov", "passed": r.passed, "runs": finest }), passed: r.passed })
        }
        VerifyTarget::Commproj => {
            let r = experiments::commproj(&v.commproj);
            out.write_json("verify_commproj.json", &r)?;
            let worst = r.entries.iter().map(|e| e.residual).fold(0.0, f64::max);
            Ok(Outcome {
                summary: json!({ "command": "verify commproj", "passed": r.passed, "max_residual": worst }),
                passed: r.passed,
            })
        }
        VerifyTarget::Constants => {
            let (r, table) = experiments::constants_check(&v.constants).map_err(CliError::Runtime)?;
            log::info!("constants checked in {:.2} s", r.seconds);
            let rows: Vec<Vec<String>> = table
                .entries
                .iter()
                .map(|e| {
                    vec![
                        e.k.to_string(),
                        e.big_n.to_string(),
                        e.n.to_string(),
                        e.c.clone(),
                        num(e.c_value),
                        e.b.clone(),
                        num(e.b_value),
                        num(e.bound),
                        e.bound_holds.to_string(),
                    ]
                })
                .collect();
            out.write_csv("constants_table.csv", &["k", "N", "n", "C", "C_value", "B", "B_value", "bound", "bound_holds"], &rows)?;
            out.write_json("verify_constants.json", &r)?;
            Ok(Outcome {
                summary: json!({
                    "command": "verify constants",
                    "passed": r.passed,
                    "entries_checked": r.entries_checked,
                    "violations": r.violations.len(),
                    "C(3,2)": r.c_3_2,
                }),
                passed: r.passed,
            })
        }
        VerifyTarget::Beurling => {
            let r = experiments::beurling(&cfg.geometry, &cfg.metric(), &v.beurling)?;
            log::info!("degree comparison took {:.1} s", r.seconds);
            out.write_json("verify_beurling.json", &r)?;
            Ok(Outcome {
                summary: json!({
                    "command": "verify beurling",
                    "passed": r.passed,
                    "relations": r.experiment.relations.iter().map(|x| json!({"k": x.k, "relative": x.relative})).collect::<Vec<_>>(),
                    "inequalities": r.experiment.inequalities.iter().map(|x| json!({"k": x.k, "ratio": x.ratio})).collect::<Vec<_>>(),
                }),
                passed: r.passed,
            })
        }
        VerifyTarget::Transport => {
            let r = experiments::transport(&cfg.geometry, &cfg.metric(), &v.transport, cfg.seed, &cfg.trace_params())?;
            out.write_json("verify_transport.json", &r)?;
            let series: Vec<_> = r
                .runs
                .iter()
                .map(|run| {
                    (
                        format!("rank {}", run.rank),
                        run.fd_steps.iter().copied().zip(run.transport_errors.iter().copied()).collect(),
                    )
                })
                .collect();
            out.write_svg("verify_transport.svg", &svg::loglog("transport equation error", "difference step", &series))?;
            let runs: Vec<_> = r
                .runs
                .iter()
                .map(|x| json!({ "rank": x.rank, "order": x.transport_order, "parity_defect": x.parity_defect }))
                .collect();
            Ok(Outcome { summary: json!({ "command": "verify transport", "passed": r.passed, "runs": runs }), passed: r.passed })
        }
    }
}

fn reconstruct(cfg: &RunConfig, data: Option<&MeasuredData>, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let metric = cfg.metric();
    let grid = cfg.recon_grid();
    let mut params = cfg.trace_params();
    if let Some(s) = cfg.recon.step {
        params.step = s;
    }
    let fan = match data {
        Some(d) => d.fan.clone(),
        None => sample_fan(&cfg.geometry, cfg.recon.fan.unwrap_or(cfg.fan).resolve(cfg.seed)),
    };
    let problem = ReconProblem {
        domain: &cfg.geometry,
        metric: &metric,
        grid,
        rank: cfg.field.rank,
        fan: &fan,
        params,
        cgls: cfg.recon.cgls,
        gauge_cgls: cfg.recon.gauge_cgls,
    };
    let outcome = match data {
        Some(d) => problem.measured(&d.values)?,
        None => problem.synthetic(&cfg.field()?)?,
    };
    log::info!("reconstruction took {:.1} s", outcome.summary.seconds);
    let field = &outcome.reconstruction.field;
    let nn = grid.n_nodes();
    let mut rows = Vec::with_capacity(field.values.len());
    for c in 0..field.n_components() {
        for i in 0..grid.n_r {
            for j in 0..grid.n_ang {
                let x = grid.position(i, j);
                let mut row =
                    vec![c.to_string(), i.to_string(), j.to_string(), num(x[0]), num(x[1]), num(field.values[c * nn + grid.index(i, j)])];
                if let Some(t) = &outcome.truth {
                    row.push(num(t.values[c * nn + grid.index(i, j)]));
                }
                rows.push(row);
            }
        }
    }
    let mut header = vec!["component", "r_index", "ang_index", "x", "y", "value"];
    if outcome.truth.is_some() {
        header.push("true_value");
    }
    out.write_csv("field.csv", &header, &rows)?;
    let log_rows: Vec<Vec<String>> = outcome
        .reconstruction
        .log
        .iter()
        .map(|l| vec![l.iter.to_string(), num(l.residual), num(l.normal_residual), num(l.objective)])
        .collect();
    out.write_csv("convergence.csv", &["iter", "residual", "normal_residual", "objective"], &log_rows)?;
    let components: Vec<&[f64]> = (0..field.n_components()).map(|c| field.component(c)).collect();
    let titles: Vec<String> = (0..field.n_components()).map(|c| format!("component {c}")).collect();
    out.write_svg("field.svg", &svg::polar_heatmap(&cfg.geometry, &grid, &components, &titles))?;
    let source = match data {
        Some(d) => json!({
            "file": d.path.file_name().map(|n| n.to_string_lossy().into_owned()),
            "rows_used": d.ray_ids.len(),
            "rows_skipped": d.skipped,
        }),
        None => json!("synthetic"),
    };
    out.write_json("reconstruct.json", &json!({ "data": source, "summary": outcome.summary }))?;
    Ok(Outcome {
        summary: json!({
            "command": "reconstruct",
            "rank": outcome.summary.rank,
            "iterations": outcome.summary.iterations,
            "converged": outcome.summary.converged,
            "data_residual": outcome.summary.data_residual,
            "relative_error": outcome.summary.relative_error,
        }),
        passed: true,
    })
}

fn gauge_test(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let r = experiments::gauge_test(&cfg.geometry, &cfg.metric(), &cfg.gauge, cfg.seed, &cfg.trace_params())?;
    log::info!("gauge test took {:.1} s", r.seconds);
    out.write_json("gauge_test.json", &r)?;
    Ok(Outcome {
        summary: json!({
            "command": "gauge-test",
            "rank": r.rank,
            "max_abs": r.max_abs,
            "max_abs_half_step": r.max_abs_half_step,
            "reduction": r.reduction,
            "passed": r.passed,
        }),
        passed: r.passed,
    })
}
