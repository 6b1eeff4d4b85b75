//! Contracting curvature flow `x' = -F nu` of radial graphs in `H^{n+1}` and
//! the dual expanding flow of their polar graphs in de Sitter space.
//!
//! Both reduce to scalar parabolic equations over `S^n`:
//! `u_t = -F(kappa) v` for the primal radius and `u*_t = v_tilde / F~(kappa~)`
//! for the dual eigentime graph. They are integrated with classical RK4 under
//! a parabolic step restriction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curvfn::{CurvatureError, CurvatureFunction};
use crate::dualmap::{gauss_dual, pointwise_dual_curvatures, DeSitterGraph, DualError};
use crate::hgeom::{geometry_of, pointwise_curvatures, GeometryError, GraphGeometry, HyperbolicGraph};
use crate::sphere_grid::{differentiate, Grid, GridError, Parity, ScalarField};

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowError {
    #[error("convexity lost at node {node} (t = {t})")]
    Convexity { node: usize, t: f64 },
    #[error("step size {dt:e} fell below dt_min at t = {t} (near extinction)")]
    Stiffness { dt: f64, t: f64 },
    #[error("dual graph stopped being spacelike at node {node} (t = {t})")]
    Causality { node: usize, t: f64 },
    #[error("{0}")]
    Domain(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl From<CurvatureError> for FlowError {
    fn from(e: CurvatureError) -> Self {
        FlowError::Config(e.to_string())
    }
}

impl From<GridError> for FlowError {
    fn from(e: GridError) -> Self {
        FlowError::Config(e.to_string())
    }
}

impl From<GeometryError> for FlowError {
    fn from(e: GeometryError) -> Self {
        FlowError::Domain(e.to_string())
    }
}

impl From<DualError> for FlowError {
    fn from(e: DualError) -> Self {
        match e {
            DualError::Causality { index, .. } => FlowError::Causality { node: index, t: f64::NAN },
            other => FlowError::Domain(other.to_string()),
        }
    }
}

/// `ln cosh x` without overflow.
pub fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Geodesic spheres under the normalized flow: `cosh Theta = cosh r0 e^{-t}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalSolution {
    pub r0: f64,
    pub t_star: f64,
}

impl SphericalSolution {
    pub fn new(r0: f64) -> Result<Self, FlowError> {
        if !(r0 > 0.0) || !r0.is_finite() {
            return Err(FlowError::Domain(format!("initial radius must be positive, got {r0}")));
        }
        Ok(SphericalSolution {
            r0,
            t_star: ln_cosh(r0),
        })
    }

    /// The sphere that becomes extinct at `t_star`.
    pub fn with_extinction_time(t_star: f64) -> Result<Self, FlowError> {
        if !(t_star > 0.0) || !t_star.is_finite() {
            return Err(FlowError::Domain(format!("extinction time must be positive, got {t_star}")));
        }
        Ok(SphericalSolution {
            r0: theta_from_remaining(t_star),
            t_star,
        })
    }

    pub fn theta(&self, t: f64) -> Result<f64, FlowError> {
        if !(t >= 0.0) || t >= self.t_star {
            return Err(FlowError::Domain(format!(
                "t = {t} outside [0, T*) with T* = {}",
                self.t_star
            )));
        }
        Ok(theta_from_remaining(self.t_star - t))
    }
}

/// `Theta` with `cosh Theta = e^s`, accurate as `s -> 0`.
fn theta_from_remaining(s: f64) -> f64 {
    2.0 * (0.5 * s.exp_m1()).sqrt().asinh()
}

pub fn spherical_theta(t: f64, r0: f64) -> Result<f64, FlowError> {
    SphericalSolution::new(r0)?.theta(t)
}

/// `Theta(t)` for the sphere with extinction time `t_star`; `None` past it.
pub fn barrier_theta(t: f64, t_star: f64) -> Option<f64> {
    (t < t_star).then(|| theta_from_remaining(t_star - t))
}

/// Named initial hypersurfaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum InitialDatum {
    Sphere { r0: f64 },
    /// `r0 + a cos(k theta)`
    PerturbedSphere { r0: f64, a: f64, k: u32 },
    /// `r0` plus seeded even modes `cos(2j theta)`, `j = 1..=modes`, with
    /// amplitudes up to `amp / j^2`.
    Random { r0: f64, amp: f64, modes: u32 },
    /// Ellipse with Euclidean semi-axes `a` (equatorial) and `b` (axial)
    /// in the Beltrami ball, pulled back to geodesic radius.
    Ellipsoid { a: f64, b: f64 },
}

impl InitialDatum {
    pub fn from_parts(name: &str, params: &[f64]) -> Result<Self, FlowError> {
        let want = |k: usize| {
            if params.len() == k {
                Ok(())
            } else {
                Err(FlowError::Config(format!(
                    "initial datum '{name}' takes {k} parameters, got {}",
                    params.len()
                )))
            }
        };
        let integer = |x: f64, what: &str| {
            if x >= 0.0 && x.fract() == 0.0 && x < u32::MAX as f64 {
                Ok(x as u32)
            } else {
                Err(FlowError::Config(format!("{what} must be a nonnegative integer, got {x}")))
            }
        };
        let datum = match name {
            "sphere" => {
                want(1)?;
                InitialDatum::Sphere { r0: params[0] }
            }
            "perturbed_sphere" => {
                want(3)?;
                InitialDatum::PerturbedSphere {
                    r0: params[0],
                    a: params[1],
                    k: integer(params[2], "mode number k")?,
                }
            }
            "random" => {
                want(3)?;
                InitialDatum::Random {
                    r0: params[0],
                    amp: params[1],
                    modes: integer(params[2], "mode count")?,
                }
            }
            "ellipsoid" => {
                want(2)?;
                InitialDatum::Ellipsoid {
                    a: params[0],
                    b: params[1],
                }
            }
            other => return Err(FlowError::Config(format!("unknown initial datum '{other}'"))),
        };
        datum.validate()?;
        Ok(datum)
    }

    pub fn name(&self) -> &'static str {
        match self {
            InitialDatum::Sphere { .. } => "sphere",
            InitialDatum::PerturbedSphere { .. } => "perturbed_sphere",
            InitialDatum::Random { .. } => "random",
            InitialDatum::Ellipsoid { .. } => "ellipsoid",
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            InitialDatum::Sphere { r0 } => vec![r0],
            InitialDatum::PerturbedSphere { r0, a, k } => vec![r0, a, k as f64],
            InitialDatum::Random { r0, amp, modes } => vec![r0, amp, modes as f64],
            InitialDatum::Ellipsoid { a, b } => vec![a, b],
        }
    }

    fn validate(&self) -> Result<(), FlowError> {
        let bad = |msg: String| Err(FlowError::Config(msg));
        match *self {
            InitialDatum::Sphere { r0 } if !(r0 > 0.0) => bad(format!("r0 must be positive, got {r0}")),
            InitialDatum::PerturbedSphere { r0, a, .. } if !(r0 - a.abs() > 0.0) => {
                bad(format!("r0 - |a| must be positive, got r0 = {r0}, a = {a}"))
            }
            InitialDatum::Random { r0, amp, .. } if !(r0 > 0.0) || !(amp >= 0.0) => {
                bad(format!("need r0 > 0 and amp >= 0, got r0 = {r0}, amp = {amp}"))
            }
            InitialDatum::Ellipsoid { a, b } if !(a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0) => {
                bad(format!("Beltrami semi-axes must lie in (0, 1), got a = {a}, b = {b}"))
            }
            _ => Ok(()),
        }
    }

    pub fn build(&self, grid: Grid, seed: u64) -> Result<HyperbolicGraph, FlowError> {
        self.validate()?;
        let graph = match *self {
            InitialDatum::Sphere { r0 } => HyperbolicGraph::sphere(grid, r0)?,
            InitialDatum::PerturbedSphere { r0, a, k } => {
                HyperbolicGraph::from_fn(grid, |t| r0 + a * (k as f64 * t).cos())?
            }
            InitialDatum::Random { r0, amp, modes } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let coeffs: Vec<(f64, f64)> = (1..=modes)
                    .map(|j| {
                        let s = amp / (j as f64 * j as f64);
                        (s * rng.gen_range(-1.0..=1.0), s * rng.gen_range(-1.0..=1.0))
                    })
                    .collect();
                let circle = grid.mode == crate::sphere_grid::GridMode::Circle;
                HyperbolicGraph::from_fn(grid, |t| {
                    r0 + coeffs
                        .iter()
                        .enumerate()
                        .map(|(i, &(c, s))| {
                            let w = 2.0 * (i + 1) as f64 * t;
                            c * w.cos() + if circle { s * w.sin() } else { 0.0 }
                        })
                        .sum::<f64>()
                })?
            }
            InitialDatum::Ellipsoid { a, b } => HyperbolicGraph::from_fn(grid, |t| {
                let r = 1.0 / ((t.cos() / b).powi(2) + (t.sin() / a).powi(2)).sqrt();
                r.atanh()
            })?,
        };
        Ok(graph)
    }
}

/// Which hypothesis on the initial hypersurface a run exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialClass {
    /// All principal curvatures at least one.
    Horoconvex,
    /// Strictly convex but not horoconvex.
    StrictlyConvex,
    NotConvex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    /// Curvature function name, e.g. `sigma_k:2`.
    pub function: String,
    pub n: usize,
    pub m: usize,
    pub cfl: f64,
    pub u_stop: f64,
    pub dt_min: f64,
    pub record_every: usize,
    /// Times at which a state is recorded exactly (steps land on them).
    pub record_times: Vec<f64>,
    /// Stop at this time if extinction has not been reached first.
    pub t_end: Option<f64>,
    pub max_steps: usize,
    pub initial: InitialDatum,
    pub seed: u64,
}

pub const DEFAULT_CFL: f64 = 0.2;
pub const DEFAULT_U_STOP: f64 = 0.02;
pub const DEFAULT_DT_MIN: f64 = 1e-14;
pub const DEFAULT_RECORD_EVERY: usize = 200;

impl FlowConfig {
    pub fn new(function: &str, n: usize, m: usize, initial: InitialDatum) -> Self {
        FlowConfig {
            function: function.to_string(),
            n,
            m,
            cfl: DEFAULT_CFL,
            u_stop: DEFAULT_U_STOP,
            dt_min: DEFAULT_DT_MIN,
            record_every: DEFAULT_RECORD_EVERY,
            record_times: Vec::new(),
            t_end: None,
            max_steps: 100_000_000,
            initial,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.cfl > 0.0 && self.cfl <= 0.5) {
            return Err(FlowError::Config(format!("cfl must lie in (0, 0.5], got {}", self.cfl)));
        }
        if !(self.u_stop > 0.0) {
            return Err(FlowError::Config(format!("u_stop must be positive, got {}", self.u_stop)));
        }
        if !(self.dt_min > 0.0) {
            return Err(FlowError::Config(format!("dt_min must be positive, got {}", self.dt_min)));
        }
        if self.record_every == 0 {
            return Err(FlowError::Config("record_every must be at least 1".into()));
        }
        self.curvature_function()?;
        self.grid()?;
        self.initial.validate()
    }

    pub fn curvature_function(&self) -> Result<CurvatureFunction, FlowError> {
        Ok(CurvatureFunction::parse(&self.function, self.n)?)
    }

    pub fn grid(&self) -> Result<Grid, FlowError> {
        Ok(Grid::for_dimension(self.n, self.m)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub t: f64,
    pub u: ScalarField,
    pub geometry: GraphGeometry,
    pub dt_last: f64,
    pub steps: usize,
    /// Polar dual, when requested.
    pub dual: Option<DeSitterGraph>,
}

impl FlowState {
    pub fn new(u: ScalarField, t: f64, f: &CurvatureFunction) -> Result<Self, FlowError> {
        let graph = HyperbolicGraph::new(u)?;
        Ok(FlowState {
            t,
            geometry: geometry_of(&graph, Some(f)),
            u: graph.u,
            dt_last: 0.0,
            steps: 0,
            dual: None,
        })
    }

    pub fn graph(&self) -> HyperbolicGraph {
        HyperbolicGraph {
            grid: self.u.grid,
            u: self.u.clone(),
            n: self.u.grid.n,
        }
    }

    pub fn u_mean(&self) -> f64 {
        self.u.sphere_mean()
    }
}

/// Extinction time extrapolated from the last records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TStarEstimate {
    pub value: f64,
    /// Spread of the raw estimates over the records used.
    pub spread: f64,
    pub warning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrajectory {
    pub config: FlowConfig,
    pub states: Vec<FlowState>,
    pub t_star_estimate: Option<TStarEstimate>,
    pub initial_class: InitialClass,
    /// Set when the run was aborted; `states` then holds the partial run.
    pub failure: Option<FlowError>,
}

/// `-F(kappa) v` per node.
pub fn scalar_rhs(g: &HyperbolicGraph, f: &CurvatureFunction) -> Result<ScalarField, FlowError> {
    let (values, _) = primal_rhs(&g.u, f, false, 0.0)?;
    Ok(ScalarField {
        grid: g.grid,
        values,
        parity: Parity::Even,
    })
}

/// Right-hand side and, if requested, the stable step scale
/// `(h sinh u_min)^2 / max sum_i F_i`.
fn primal_rhs(
    u: &ScalarField,
    f: &CurvatureFunction,
    want_dt: bool,
    t: f64,
) -> Result<(Vec<f64>, f64), FlowError> {
    let grid = u.grid;
    let du = differentiate(u, 1)?;
    let d2u = differentiate(u, 2)?;
    let mut out = Vec::with_capacity(grid.m);
    let mut kappa = vec![0.0; grid.n];
    let mut s_max: f64 = 0.0;
    let mut sinh_min = f64::INFINITY;
    for j in 0..grid.m {
        let uj = u.values[j];
        if !(uj > 0.0) {
            return Err(FlowError::Domain(format!("radius {uj} at node {j} is not positive")));
        }
        let (kp, ka, v) = pointwise_curvatures(uj, du.values[j], d2u.values[j], grid.node(j));
        kappa[0] = kp;
        kappa[1..].fill(ka);
        let fv = if want_dt {
            let (fv, grad) = f
                .value_and_gradient(&kappa)
                .map_err(|_| FlowError::Convexity { node: j, t })?;
            s_max = s_max.max(grad.iter().sum());
            sinh_min = sinh_min.min(uj.sinh());
            fv
        } else {
            f.value(&kappa).map_err(|_| FlowError::Convexity { node: j, t })?
        };
        out.push(-fv * v);
    }
    let h = grid.h();
    Ok((out, (h * sinh_min).powi(2) / s_max))
}

/// `v_tilde / F~(kappa~)` per node and the stable step scale
/// `h^2 min cosh^2 u* / max sum_i F~_i / F~^2`.
fn dual_rhs(
    s: &ScalarField,
    ftilde: &CurvatureFunction,
    want_dt: bool,
    t: f64,
) -> Result<(Vec<f64>, f64), FlowError> {
    let grid = s.grid;
    let d1 = differentiate(s, 1)?;
    let d2 = differentiate(s, 2)?;
    let mut out = Vec::with_capacity(grid.m);
    let mut kappa = vec![0.0; grid.n];
    let mut s_max: f64 = 0.0;
    let mut cosh_min = f64::INFINITY;
    for j in 0..grid.m {
        let sj = s.values[j];
        let (kp, ka, vt) = pointwise_dual_curvatures(sj, d1.values[j], d2.values[j], grid.node(j))
            .ok_or(FlowError::Causality { node: j, t })?;
        kappa[0] = kp;
        kappa[1..].fill(ka);
        let ft = if want_dt {
            let (ft, grad) = ftilde
                .value_and_gradient(&kappa)
                .map_err(|_| FlowError::Convexity { node: j, t })?;
            s_max = s_max.max(grad.iter().sum::<f64>() / (ft * ft));
            cosh_min = cosh_min.min(sj.cosh());
            ft
        } else {
            ftilde
                .value(&kappa)
                .map_err(|_| FlowError::Convexity { node: j, t })?
        };
        out.push(vt / ft);
    }
    let h = grid.h();
    Ok((out, (h * cosh_min).powi(2) / s_max))
}

fn axpy(base: &[f64], a: f64, k: &[f64]) -> Vec<f64> {
    base.iter().zip(k).map(|(b, k)| b + a * k).collect()
}

/// One classical RK4 step from precomputed `k1`.
fn rk4(
    u: &ScalarField,
    k1: &[f64],
    dt: f64,
    rhs: &dyn Fn(&ScalarField) -> Result<Vec<f64>, FlowError>,
) -> Result<ScalarField, FlowError> {
    let with = |values: Vec<f64>| ScalarField {
        grid: u.grid,
        values,
        parity: Parity::Even,
    };
    let k2 = rhs(&with(axpy(&u.values, 0.5 * dt, k1)))?;
    let k3 = rhs(&with(axpy(&u.values, 0.5 * dt, &k2)))?;
    let k4 = rhs(&with(axpy(&u.values, dt, &k3)))?;
    let values = (0..u.values.len())
        .map(|i| u.values[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    Ok(with(values))
}

/// Fixed-size RK4 step of the primal flow.
pub fn step_fixed(u: &ScalarField, f: &CurvatureFunction, dt: f64) -> Result<ScalarField, FlowError> {
    let (k1, _) = primal_rhs(u, f, false, 0.0)?;
    rk4(u, &k1, dt, &|x| primal_rhs(x, f, false, 0.0).map(|r| r.0))
}

/// One adaptive RK4 step with `dt = cfl (h sinh u_min)^2 / max sum F_i`.
pub fn step(state: &FlowState, f: &CurvatureFunction, cfl: f64, dt_min: f64) -> Result<FlowState, FlowError> {
    let (k1, scale) = primal_rhs(&state.u, f, true, state.t)?;
    let dt = cfl * scale;
    if !(dt >= dt_min) {
        return Err(FlowError::Stiffness { dt, t: state.t });
    }
    let t = state.t;
    let u = rk4(&state.u, &k1, dt, &|x| primal_rhs(x, f, false, t).map(|r| r.0))?;
    let mut next = FlowState::new(u, state.t + dt, f)?;
    next.dt_last = dt;
    next.steps = state.steps + 1;
    Ok(next)
}

/// Stepping schedule shared by both flows.
struct Schedule<'a> {
    cfl: f64,
    dt_min: f64,
    record_every: usize,
    record_times: &'a [f64],
    t_end: Option<f64>,
    max_steps: usize,
}

enum Halt {
    Done,
    Failed(FlowError),
}

/// Right-hand side at `(u, want_dt, t)`, returning the step scale when asked.
type Rhs<'a> = &'a dyn Fn(&ScalarField, bool, f64) -> Result<(Vec<f64>, f64), FlowError>;
/// Receives `(u, t, dt_last, steps)`.
type Recorder<'a> = &'a mut dyn FnMut(&ScalarField, f64, f64, usize) -> Result<(), FlowError>;

/// Runs RK4 until `finished` holds, recording through `record`.
fn integrate(
    initial: ScalarField,
    schedule: &Schedule,
    rhs: Rhs<'_>,
    finished: &dyn Fn(&ScalarField) -> bool,
    record: Recorder<'_>,
) -> Halt {
    let mut u = initial;
    let mut t = 0.0;
    let mut dt_last = 0.0;
    let mut steps = 0usize;
    let mut next_time = schedule.record_times.iter().copied().filter(|&x| x > 0.0).peekable();
    let mut last_recorded = 0usize;
    if let Err(e) = record(&u, t, dt_last, steps) {
        return Halt::Failed(e);
    }
    loop {
        if finished(&u) || schedule.t_end.is_some_and(|te| t >= te) || steps >= schedule.max_steps {
            break;
        }
        let (k1, scale) = match rhs(&u, true, t) {
            Ok(r) => r,
            Err(e) => return Halt::Failed(e),
        };
        let mut dt = schedule.cfl * scale;
        if !(dt >= schedule.dt_min) {
            if last_recorded != steps {
                let _ = record(&u, t, dt_last, steps);
            }
            return Halt::Failed(FlowError::Stiffness { dt, t });
        }
        let mut land = false;
        while next_time.peek().is_some_and(|&x| x <= t) {
            next_time.next();
        }
        if let Some(&target) = next_time.peek() {
            if t + dt >= target {
                dt = target - t;
                land = true;
            }
        }
        if let Some(te) = schedule.t_end {
            if t + dt >= te {
                dt = te - t;
                land = true;
            }
        }
        let t0 = t;
        match rk4(&u, &k1, dt, &|x| rhs(x, false, t0).map(|r| r.0)) {
            Ok(next) => u = next,
            Err(e) => {
                if last_recorded != steps {
                    let _ = record(&u, t, dt_last, steps);
                }
                return Halt::Failed(e);
            }
        }
        if land {
            // land exactly on the requested time
            t = next_time
                .peek()
                .copied()
                .filter(|&x| (x - (t0 + dt)).abs() <= 1e-12 * x.max(1.0))
                .or(schedule.t_end.filter(|&te| (te - (t0 + dt)).abs() <= 1e-12 * te.max(1.0)))
                .unwrap_or(t0 + dt);
        } else {
            t = t0 + dt;
        }
        dt_last = dt;
        steps += 1;
        let done = finished(&u) || schedule.t_end.is_some_and(|te| t >= te);
        if land || done || steps.is_multiple_of(schedule.record_every) {
            if let Err(e) = record(&u, t, dt_last, steps) {
                return Halt::Failed(e);
            }
            last_recorded = steps;
        }
    }
    if last_recorded != steps {
        if let Err(e) = record(&u, t, dt_last, steps) {
            return Halt::Failed(e);
        }
    }
    Halt::Done
}

/// Runs the primal flow from the configured initial datum.
pub fn run_flow(config: &FlowConfig) -> Result<FlowTrajectory, FlowError> {
    config.validate()?;
    let grid = config.grid()?;
    let initial = config.initial.build(grid, config.seed)?;
    run_flow_from(config, &initial)
}

/// Runs the primal flow from an explicit initial graph; `config.initial` is
/// kept only as a label.
pub fn run_flow_from(config: &FlowConfig, initial: &HyperbolicGraph) -> Result<FlowTrajectory, FlowError> {
    let f = config.curvature_function()?;
    let geo0 = geometry_of(initial, Some(&f));
    let initial_class = if geo0.horoconvex {
        InitialClass::Horoconvex
    } else if geo0.strictly_convex {
        InitialClass::StrictlyConvex
    } else {
        InitialClass::NotConvex
    };
    let mut traj = FlowTrajectory {
        config: config.clone(),
        states: Vec::new(),
        t_star_estimate: None,
        initial_class,
        failure: None,
    };
    if initial_class == InitialClass::NotConvex {
        let node = geo0
            .kappa
            .iter()
            .position(|k| k.iter().any(|&x| !(x > 0.0)))
            .unwrap_or(0);
        traj.states.push(FlowState {
            t: 0.0,
            u: initial.u.clone(),
            geometry: geo0,
            dt_last: 0.0,
            steps: 0,
            dual: None,
        });
        traj.failure = Some(FlowError::Convexity { node, t: 0.0 });
        return Ok(traj);
    }
    let schedule = Schedule {
        cfl: config.cfl,
        dt_min: config.dt_min,
        record_every: config.record_every,
        record_times: &config.record_times,
        t_end: config.t_end,
        max_steps: config.max_steps,
    };
    let u_stop = config.u_stop;
    let states = &mut traj.states;
    let halt = integrate(
        initial.u.clone(),
        &schedule,
        &|u, want_dt, t| primal_rhs(u, &f, want_dt, t),
        &|u| u.max() < u_stop,
        &mut |u, t, dt_last, steps| {
            let mut s = FlowState::new(u.clone(), t, &f)?;
            s.dt_last = dt_last;
            s.steps = steps;
            states.push(s);
            Ok(())
        },
    );
    if let Halt::Failed(e) = halt {
        traj.failure = Some(e);
    }
    if traj.states.len() >= 3 {
        traj.t_star_estimate = Some(estimate_tstar(&traj.states));
    }
    Ok(traj)
}

/// Computes the polar dual of every recorded state.
pub fn attach_duals(traj: &mut FlowTrajectory) -> Result<(), FlowError> {
    for s in &mut traj.states {
        s.dual = Some(gauss_dual(&s.graph())?.dual);
    }
    Ok(())
}

/// `T(t) = t + ln cosh(mean u)` on the last records, Aitken-accelerated.
///
/// Exact for spheres. The warning is set when the raw estimates spread by
/// more than `1e-3` or the run never got below `u_max = 0.1`.
pub fn estimate_tstar(states: &[FlowState]) -> TStarEstimate {
    let raw: Vec<f64> = states.iter().map(|s| s.t + ln_cosh(s.u_mean())).collect();
    let tail = &raw[raw.len().saturating_sub(3)..];
    let spread = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - tail.iter().copied().fold(f64::INFINITY, f64::min);
    let last = *tail.last().expect("at least one state");
    let mut value = last;
    if let [a, b, c] = *tail {
        let denom = (c - b) - (b - a);
        let accel = c - (c - b).powi(2) / denom;
        if denom != 0.0 && accel.is_finite() && (accel - c).abs() <= (c - b).abs() {
            value = accel;
        }
    }
    let reached = states.last().is_some_and(|s| s.u.max() < 0.1);
    TStarEstimate {
        value,
        spread,
        warning: spread > 1e-3 || !reached,
    }
}

/// One record of the rescaled flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledRecord {
    pub t: f64,
    pub tau: f64,
    pub theta: f64,
    /// `u / Theta`
    pub u_tilde: ScalarField,
    /// `(min, max)` of `kappa_i Theta` over nodes and directions.
    pub kappa_scaled: (f64, f64),
    /// `F Theta`, when `F` is defined on the state.
    pub f_tilde: Option<ScalarField>,
    /// `u* / Theta`, when a dual is attached.
    pub w: Option<ScalarField>,
}

/// Rescales by the spherical solution with extinction time `t_star`.
///
/// Records at or beyond `t_star` are skipped.
pub fn rescale(traj: &FlowTrajectory, t_star: f64) -> Vec<RescaledRecord> {
    traj.states
        .iter()
        .filter_map(|s| {
            let theta = barrier_theta(s.t, t_star)?;
            let scale = |f: &ScalarField| f.map(Parity::Even, |x| x / theta);
            let kmin = s.geometry.min_kappa() * theta;
            let kmax = s.geometry.max_kappa() * theta;
            Some(RescaledRecord {
                t: s.t,
                tau: -theta.ln(),
                theta,
                u_tilde: scale(&s.u),
                kappa_scaled: (kmin, kmax),
                f_tilde: s.geometry.f_value.as_ref().map(|f| f.map(Parity::Even, |x| x * theta)),
                w: s.dual.as_ref().map(|d| scale(&d.u_star)),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualFlowOptions {
    pub cfl: f64,
    pub dt_min: f64,
    pub record_every: usize,
    pub record_times: Vec<f64>,
    pub t_end: Option<f64>,
    /// Halt once `u*_min > -u_stop` (mirror of the primal stop).
    pub u_stop: f64,
    pub max_steps: usize,
}

impl Default for DualFlowOptions {
    fn default() -> Self {
        DualFlowOptions {
            cfl: DEFAULT_CFL,
            dt_min: DEFAULT_DT_MIN,
            record_every: DEFAULT_RECORD_EVERY,
            record_times: Vec::new(),
            t_end: None,
            u_stop: DEFAULT_U_STOP,
            max_steps: 100_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub t: f64,
    pub dual: DeSitterGraph,
    pub dt_last: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualTrajectory {
    pub states: Vec<DualState>,
    pub failure: Option<FlowError>,
}

/// Integrates the expanding flow `u*_t = v_tilde / F~(kappa~)` with speed
/// function `ftilde` (the inverse of the primal `F`).
pub fn run_dual_flow(
    ftilde: &CurvatureFunction,
    initial: &DeSitterGraph,
    opts: &DualFlowOptions,
) -> DualTrajectory {
    let schedule = Schedule {
        cfl: opts.cfl,
        dt_min: opts.dt_min,
        record_every: opts.record_every.max(1),
        record_times: &opts.record_times,
        t_end: opts.t_end,
        max_steps: opts.max_steps,
    };
    let mut states = Vec::new();
    let u_stop = opts.u_stop;
    let halt = integrate(
        initial.u_star.clone(),
        &schedule,
        &|s, want_dt, t| dual_rhs(s, ftilde, want_dt, t),
        &|s| s.min() > -u_stop,
        &mut |s, t, dt_last, steps| {
            states.push(DualState {
                t,
                dual: DeSitterGraph::new(s.clone()),
                dt_last,
                steps,
            });
            Ok(())
        },
    );
    DualTrajectory {
        states,
        failure: match halt {
            Halt::Done => None,
            Halt::Failed(e) => Some(e),
        },
    }
}
