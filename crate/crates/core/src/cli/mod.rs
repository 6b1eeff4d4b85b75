//! Run orchestration behind the `dualflow` binary.

pub mod config;
pub mod output;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvfn::invert;
use crate::diagnostics::{
    compute_record, epsilon_from_initial, grid_tolerance, DiagnosticsRecord,
};
use crate::dualmap::{gauss_dual, inverse_gauss, verify_duality, DeSitterGraph, DualityReport};
use crate::flow::{
    barrier_theta, estimate_tstar, run_dual_flow, run_flow, DualFlowOptions, FlowError, FlowState,
    InitialClass, SphericalSolution,
};
use crate::hgeom::geometry_of;

pub use config::{parse_config, ConfigError, Mode, RunManifest};
pub use output::{write_outputs, OutputError, Snapshot};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVARIANT: i32 = 2;
pub const EXIT_ABORT: i32 = 3;

/// Slack allowed on the spherical barrier `inf u <= Theta <= sup u`.
pub const BARRIER_SLACK: f64 = 1e-4;
/// Largest accepted gap between the flowed dual and the dual of the flow.
pub const DUALITY_TOL: f64 = 1e-4;
/// Static duality residual accepted by `verify` without a refinement check.
pub const VERIFY_TOL: f64 = 1e-6;

/// Machine-readable failure description written to `failure.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub exit_code: i32,
    pub kind: String,
    pub message: String,
    pub error: Option<FlowError>,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub exit_code: i32,
    pub records: Vec<DiagnosticsRecord>,
    pub t_star: Option<f64>,
    pub failure: Option<FailureRecord>,
}

fn flow_kind(e: &FlowError) -> &'static str {
    match e {
        FlowError::Convexity { .. } => "convexity",
        FlowError::Stiffness { .. } => "stiffness",
        FlowError::Causality { .. } => "causality",
        FlowError::Domain(_) => "domain",
        FlowError::Config(_) => "config",
    }
}

fn abort(e: FlowError, records: Vec<DiagnosticsRecord>, t_star: Option<f64>) -> RunReport {
    RunReport {
        exit_code: EXIT_ABORT,
        records,
        t_star,
        failure: Some(FailureRecord {
            exit_code: EXIT_ABORT,
            kind: flow_kind(&e).into(),
            message: e.to_string(),
            error: Some(e),
            violations: Vec::new(),
        }),
    }
}

/// Runs a manifest, writes its artifacts and returns the outcome.
pub fn execute(manifest: &RunManifest) -> Result<RunReport, OutputError> {
    let (report, grid, snapshots) = match manifest.mode {
        Mode::Primal | Mode::Both => run_primal(manifest),
        Mode::Dual => run_dual(manifest),
        Mode::Verify => run_verify(manifest),
    };
    if let Some(grid) = grid {
        write_outputs(&manifest.out, &grid, snapshots, &report.records)?;
    } else {
        fs::create_dir_all(&manifest.out).map_err(|source| OutputError::Io {
            path: manifest.out.clone(),
            source,
        })?;
    }
    let failure_path = manifest.out.join("failure.json");
    match &report.failure {
        Some(f) => output::write_json(&failure_path, f)?,
        None => {
            if failure_path.exists() {
                fs::remove_file(&failure_path).map_err(|source| OutputError::Io {
                    path: failure_path.clone(),
                    source,
                })?;
            }
        }
    }
    Ok(report)
}

type RunParts = (RunReport, Option<crate::sphere_grid::Grid>, Vec<Snapshot>);

fn theta_at(state: &FlowState, t_star: Option<f64>) -> f64 {
    t_star
        .and_then(|ts| barrier_theta(state.t, ts))
        .unwrap_or_else(|| state.u_mean())
}

fn run_primal(manifest: &RunManifest) -> RunParts {
    let config = &manifest.config;
    let traj = match run_flow(config) {
        Ok(t) => t,
        Err(e) => return (abort(e, Vec::new(), None), None, Vec::new()),
    };
    let grid = traj.states[0].u.grid;
    let f = config.curvature_function().expect("validated");
    let t_star = traj.t_star_estimate.map(|e| e.value);

    let mut duals: Vec<Option<DeSitterGraph>> = vec![None; traj.states.len()];
    let mut dual_failure = None;
    if manifest.mode == Mode::Both && traj.initial_class != InitialClass::NotConvex {
        match gauss_dual(&traj.states[0].graph()) {
            Ok(pair) => {
                let times: Vec<f64> = traj.states.iter().map(|s| s.t).collect();
                let opts = DualFlowOptions {
                    cfl: config.cfl,
                    dt_min: config.dt_min,
                    record_every: usize::MAX,
                    t_end: times.last().copied().filter(|&t| t > 0.0),
                    record_times: times,
                    u_stop: 0.0,
                    max_steps: config.max_steps,
                };
                let dtraj = run_dual_flow(&invert(&f), &pair.dual, &opts);
                for (slot, s) in duals.iter_mut().zip(&traj.states) {
                    *slot = dtraj
                        .states
                        .iter()
                        .find(|d| d.t == s.t)
                        .map(|d| d.dual.clone());
                }
                dual_failure = dtraj.failure;
            }
            Err(e) => dual_failure = Some(e.into()),
        }
    }

    let eps = epsilon_from_initial(&traj.states[0].geometry);
    let records: Vec<DiagnosticsRecord> = traj
        .states
        .iter()
        .zip(&duals)
        .map(|(s, d)| compute_record(s, d.as_ref(), theta_at(s, t_star), eps, manifest.sigma))
        .collect();
    let snapshots = traj
        .states
        .iter()
        .zip(&duals)
        .map(|(s, d)| Snapshot {
            t: s.t,
            u: s.u.values.clone(),
            u_star: d.as_ref().map(|d| d.u_star.values.clone()),
        })
        .collect();

    if let Some(e) = traj.failure.clone().or(dual_failure) {
        return (abort(e, records, t_star), Some(grid), snapshots);
    }
    let violations = check_invariants(&records, t_star, traj.initial_class, grid.h());
    (finish(records, t_star, violations), Some(grid), snapshots)
}

fn run_dual(manifest: &RunManifest) -> RunParts {
    let config = &manifest.config;
    let f = config.curvature_function().expect("validated");
    let grid = config.grid().expect("validated");
    let initial = match config.initial.build(grid, config.seed) {
        Ok(g) => g,
        Err(e) => return (abort(e, Vec::new(), None), None, Vec::new()),
    };
    let pair = match gauss_dual(&initial) {
        Ok(p) => p,
        Err(e) => return (abort(e.into(), Vec::new(), None), Some(grid), Vec::new()),
    };
    let opts = DualFlowOptions {
        cfl: config.cfl,
        dt_min: config.dt_min,
        record_every: config.record_every,
        t_end: config.t_end,
        u_stop: config.u_stop,
        max_steps: config.max_steps,
        ..Default::default()
    };
    let dtraj = run_dual_flow(&invert(&f), &pair.dual, &opts);
    let mut states = Vec::new();
    let mut failure = dtraj.failure.clone();
    for d in &dtraj.states {
        let state = inverse_gauss(&d.dual, &grid)
            .map_err(FlowError::from)
            .and_then(|g| FlowState::new(g.u, d.t, &f));
        match state {
            Ok(s) => states.push(s),
            Err(e) => {
                failure.get_or_insert(e);
                break;
            }
        }
    }
    let t_star = (states.len() >= 3).then(|| estimate_tstar(&states).value);
    let eps = states
        .first()
        .map_or(0.0, |s| epsilon_from_initial(&s.geometry));
    let records: Vec<DiagnosticsRecord> = states
        .iter()
        .zip(&dtraj.states)
        .map(|(s, d)| compute_record(s, Some(&d.dual), theta_at(s, t_star), eps, manifest.sigma))
        .collect();
    let snapshots = states
        .iter()
        .zip(&dtraj.states)
        .map(|(s, d)| Snapshot {
            t: s.t,
            u: s.u.values.clone(),
            u_star: Some(d.dual.u_star.values.clone()),
        })
        .collect();
    if let Some(e) = failure {
        return (abort(e, records, t_star), Some(grid), snapshots);
    }
    let class = if geometry_of(&initial, None).horoconvex {
        InitialClass::Horoconvex
    } else {
        InitialClass::StrictlyConvex
    };
    let mut violations = check_invariants(&records, t_star, class, grid.h());
    violations.retain(|v| !v.starts_with("duality"));
    (finish(records, t_star, violations), Some(grid), snapshots)
}

/// Static battery: polar duality residuals with a refinement check,
/// Gauss-map involution, and curvature function identities at the
/// curvatures of the initial datum.
fn run_verify(manifest: &RunManifest) -> RunParts {
    let config = &manifest.config;
    let f = config.curvature_function().expect("validated");
    let grid = config.grid().expect("validated");
    let build = |g| config.initial.build(g, config.seed);
    let initial = match build(grid) {
        Ok(g) => g,
        Err(e) => return (abort(e, Vec::new(), None), None, Vec::new()),
    };
    let report = |g: &crate::hgeom::HyperbolicGraph| -> Result<(DualityReport, DeSitterGraph), FlowError> {
        let pair = gauss_dual(g)?;
        Ok((verify_duality(&pair)?, pair.dual))
    };
    let (coarse, dual) = match report(&initial) {
        Ok(r) => r,
        Err(e) => return (abort(e, Vec::new(), None), Some(grid), Vec::new()),
    };
    let mut violations = Vec::new();
    if coarse.max_error() > VERIFY_TOL {
        let fine = grid
            .with_nodes(2 * grid.m)
            .map_err(FlowError::from)
            .and_then(build)
            .and_then(|g| report(&g).map(|r| r.0));
        match fine {
            Ok(fine) if coarse.max_error() / fine.max_error() >= 12.0 => {}
            Ok(fine) => violations.push(format!(
                "duality residual {:.3e} at m = {} refines only to {:.3e}",
                coarse.max_error(),
                grid.m,
                fine.max_error()
            )),
            Err(e) => violations.push(format!("duality at doubled resolution failed: {e}")),
        }
    }
    match inverse_gauss(&dual, &grid) {
        Ok(back) => {
            let err = back
                .u
                .values
                .iter()
                .zip(&initial.u.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if err > VERIFY_TOL.max(coarse.max_error()) {
                violations.push(format!("Gauss map involution error {err:.3e}"));
            }
        }
        Err(e) => violations.push(format!("inverse Gauss map failed: {e}")),
    }
    let ft = invert(&f);
    let ftt = invert(&ft);
    let geo = geometry_of(&initial, Some(&f));
    for k in &geo.kappa {
        let Ok((fv, grad)) = f.value_and_gradient(k) else {
            violations.push("curvature function undefined on the initial datum".into());
            break;
        };
        let euler: f64 = grad.iter().zip(k).map(|(g, x)| g * x).sum();
        if (euler - fv).abs() > 1e-10 * fv {
            violations.push(format!("Euler relation off by {:.3e}", (euler - fv).abs()));
            break;
        }
        let back = ftt.value(k).unwrap_or(f64::NAN);
        if !((back - fv).abs() <= 1e-10 * fv) {
            violations.push(format!("inverse involution off by {:.3e}", (back - fv).abs()));
            break;
        }
    }
    let state = match FlowState::new(initial.u.clone(), 0.0, &f) {
        Ok(s) => s,
        Err(e) => return (abort(e, Vec::new(), None), Some(grid), Vec::new()),
    };
    let eps = epsilon_from_initial(&state.geometry);
    let t_star = state.u_mean().cosh().ln();
    let mut record = compute_record(&state, Some(&dual), theta_at(&state, Some(t_star)), eps, manifest.sigma);
    record.duality_err = Some(coarse.max_error());
    let snapshots = vec![Snapshot {
        t: 0.0,
        u: initial.u.values.clone(),
        u_star: Some(dual.u_star.values.clone()),
    }];
    let _ = output::write_json(&manifest.out.join("verify.json"), &coarse);
    (finish(vec![record], None, violations), Some(grid), snapshots)
}

fn finish(records: Vec<DiagnosticsRecord>, t_star: Option<f64>, violations: Vec<String>) -> RunReport {
    if violations.is_empty() {
        return RunReport {
            exit_code: EXIT_OK,
            records,
            t_star,
            failure: None,
        };
    }
    RunReport {
        exit_code: EXIT_INVARIANT,
        records,
        t_star,
        failure: Some(FailureRecord {
            exit_code: EXIT_INVARIANT,
            kind: "invariant".into(),
            message: violations.join("; "),
            error: None,
            violations,
        }),
    }
}

/// Preserved-inequality checks over a completed run.
pub fn check_invariants(
    records: &[DiagnosticsRecord],
    t_star: Option<f64>,
    class: InitialClass,
    h: f64,
) -> Vec<String> {
    let mut out = Vec::new();
    let tol = grid_tolerance(h);
    let first_pinching = records.first().map_or(0.0, |r| r.pinching_t);
    for r in records {
        if let Some(theta) = t_star.and_then(|ts| barrier_theta(r.t, ts)) {
            let slack = (theta - r.u_min).min(r.u_max - theta);
            if slack < -BARRIER_SLACK {
                out.push(format!("barrier slack {slack:.3e} at t = {}", r.t));
            }
        }
        if !(r.pinch_ratio > 0.0) {
            out.push(format!("pinch ratio {} at t = {}", r.pinch_ratio, r.t));
        }
        if class == InitialClass::Horoconvex {
            if r.horoconvex_margin < -tol {
                out.push(format!("horoconvexity margin {:.3e} at t = {}", r.horoconvex_margin, r.t));
            }
            if r.pinching_t < first_pinching - tol {
                out.push(format!("pinching quantity {:.3e} at t = {}", r.pinching_t, r.t));
            }
        }
        if let Some(e) = r.duality_err {
            if !(e <= DUALITY_TOL) {
                out.push(format!("duality error {e:.3e} at t = {}", r.t));
            }
        }
    }
    out
}

/// Closed-form spherical solution sampled on `points` times in `[0, T*)`.
pub fn spherical_table(r0: f64, points: usize) -> Result<String, FlowError> {
    let sol = SphericalSolution::new(r0)?;
    let points = points.max(2);
    let mut s = format!(
        "# r0 = {}  T* = ln cosh r0 = {}\n# t theta tau\n",
        output::fmt_num(r0),
        output::fmt_num(sol.t_star)
    );
    for i in 0..points {
        let t = sol.t_star * i as f64 / points as f64;
        let theta = sol.theta(t)?;
        s.push_str(&format!(
            "{} {} {}\n",
            output::fmt_num(t),
            output::fmt_num(theta),
            output::fmt_num(-theta.ln() + 0.0)
        ));
    }
    Ok(s)
}

/// Reads a configuration file; a relative `out` is taken relative to the
/// file's directory.
pub fn load_manifest(path: &Path) -> Result<RunManifest, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut manifest = parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if manifest.out.is_relative() {
        let base = path.parent().unwrap_or(Path::new("."));
        manifest.out = base.join(&manifest.out);
    }
    Ok(manifest)
}

/// Thread count for `sweep`, from `DUALFLOW_THREADS` when set.
pub fn sweep_threads() -> Option<usize> {
    std::env::var("DUALFLOW_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
}

/// Runs every `*.cfg` manifest in `dir` on a worker pool.
///
/// Returns `(path, exit code)` in path order; unreadable manifests count as
/// aborted runs.
pub fn sweep(dir: &Path) -> Result<Vec<(PathBuf, i32)>, String> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| format!("{}: {e}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "cfg"))
        .collect();
    paths.sort();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = sweep_threads() {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| e.to_string())?;
    Ok(pool.install(|| {
        paths
            .par_iter()
            .map(|p| {
                let code = match load_manifest(p) {
                    Ok(m) => match execute(&m) {
                        Ok(r) => r.exit_code,
                        Err(e) => {
                            eprintln!("{e}");
                            EXIT_ABORT
                        }
                    },
                    Err(e) => {
                        eprintln!("{e}");
                        EXIT_ABORT
                    }
                };
                (p.clone(), code)
            })
            .collect()
    }))
}
