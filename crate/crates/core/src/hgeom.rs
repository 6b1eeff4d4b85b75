//! Radial graphs in hyperbolic space `H^{n+1}` and their geometry.
//!
//! A graph is `u: S^n -> (0, inf)`, the geodesic distance from a fixed center
//! in direction `xi`. In the hyperboloid model it embeds as
//! `X = cosh u e_0 + sinh u omega(xi)` inside Minkowski space `R^{n+1,1}`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curvfn::CurvatureFunction;
use crate::sphere_grid::{differentiate, golden_min, Grid, GridError, GridMode, Parity, ScalarField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("radial function must be positive, got {value} at node {index}")]
    NonPositiveRadius { index: usize, value: f64 },
    #[error("dimension {n} does not match grid dimension {grid_n}")]
    DimensionMismatch { n: usize, grid_n: usize },
    #[error("node index {0} out of range")]
    NodeOutOfRange(usize),
    #[error("point violates <x,x> = {expected}: got {got}")]
    OffShell { expected: f64, got: f64 },
}

/// Minkowski product `-x0 y0 + sum xa ya`.
pub fn minkowski_dot(x: &[f64], y: &[f64]) -> f64 {
    -x[0] * y[0] + x[1..].iter().zip(&y[1..]).map(|(a, b)| a * b).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CausalType {
    /// `<x,x> = -1`
    Hyperbolic,
    /// `<x,x> = +1`
    DeSitter,
}

impl CausalType {
    pub fn norm(self) -> f64 {
        match self {
            CausalType::Hyperbolic => -1.0,
            CausalType::DeSitter => 1.0,
        }
    }
}

/// Point of `R^{n+1,1}`, time component first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinkowskiPoint {
    pub coords: Vec<f64>,
    pub causal_type: CausalType,
}

impl MinkowskiPoint {
    pub fn new(coords: Vec<f64>, causal_type: CausalType) -> Result<Self, GeometryError> {
        let got = minkowski_dot(&coords, &coords);
        let scale = 1.0 + coords[0] * coords[0];
        if (got - causal_type.norm()).abs() > 1e-10 * scale {
            return Err(GeometryError::OffShell {
                expected: causal_type.norm(),
                got,
            });
        }
        Ok(MinkowskiPoint {
            coords,
            causal_type,
        })
    }

    pub fn dot(&self, other: &MinkowskiPoint) -> f64 {
        minkowski_dot(&self.coords, &other.coords)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicGraph {
    pub grid: Grid,
    pub u: ScalarField,
    pub n: usize,
}

impl HyperbolicGraph {
    pub fn new(u: ScalarField) -> Result<Self, GeometryError> {
        if let Some((index, &value)) = u.values.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
            return Err(GeometryError::NonPositiveRadius { index, value });
        }
        let mut u = u;
        u.parity = Parity::Even;
        Ok(HyperbolicGraph {
            grid: u.grid,
            n: u.grid.n,
            u,
        })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self, GeometryError> {
        HyperbolicGraph::new(ScalarField::from_fn(grid, Parity::Even, f)?)
    }

    /// Geodesic sphere of radius `r` about the center.
    pub fn sphere(grid: Grid, r: f64) -> Result<Self, GeometryError> {
        HyperbolicGraph::new(ScalarField::constant(grid, r))
    }
}

/// Unit direction `omega(theta)` in `R^{n+1}` and its theta-derivative.
///
/// Axisymmetric graphs use the last coordinate as the symmetry axis.
pub fn direction(grid: &Grid, theta: f64) -> (Vec<f64>, Vec<f64>) {
    let (s, c) = theta.sin_cos();
    match grid.mode {
        GridMode::Circle => (vec![c, s], vec![-s, c]),
        GridMode::Axisym => {
            let dim = grid.n + 1;
            let mut w = vec![0.0; dim];
            let mut wt = vec![0.0; dim];
            w[0] = s;
            w[dim - 1] = c;
            wt[0] = c;
            wt[dim - 1] = -s;
            (w, wt)
        }
    }
}

/// Pointwise profile and angular curvatures from `u, u', u''` at angle `theta`.
///
/// Returns `(kappa_profile, kappa_angular, v)`; the angular value is unused on
/// the circle.
#[inline]
pub fn pointwise_curvatures(u: f64, du: f64, d2u: f64, theta: f64) -> (f64, f64, f64) {
    let (sh, ch) = (u.sinh(), u.cosh());
    let phi1 = du / sh;
    let v = (1.0 + phi1 * phi1).sqrt();
    // both written as coth u plus a correction so umbilic points agree exactly
    let coth = ch / sh;
    let k_profile = (coth + (2.0 * du * du * coth - d2u) / (sh * sh)) / (v * v * v);
    let k_angular = (coth - phi1 / (theta.tan() * sh)) / v;
    (k_profile, k_angular, v)
}

/// Principal curvature vector of length `n`: the profile value, then the
/// `(n-1)`-fold angular value.
pub fn curvature_vector(n: usize, k_profile: f64, k_angular: f64) -> Vec<f64> {
    let mut k = Vec::with_capacity(n);
    k.push(k_profile);
    k.extend(std::iter::repeat_n(k_angular, n - 1));
    k
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphGeometry {
    pub v: ScalarField,
    /// Principal curvatures per node; may leave the positive cone.
    pub kappa: Vec<Vec<f64>>,
    /// `F(kappa)`; `None` when some node leaves the positive cone.
    pub f_value: Option<ScalarField>,
    pub h: ScalarField,
    pub norm_a2: ScalarField,
    /// `v / sinh u`
    pub chi: ScalarField,
    pub strictly_convex: bool,
    pub horoconvex: bool,
}

impl GraphGeometry {
    pub fn min_kappa(&self) -> f64 {
        self.kappa
            .iter()
            .flat_map(|k| k.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_kappa(&self) -> f64 {
        self.kappa
            .iter()
            .flat_map(|k| k.iter().copied())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub(crate) fn assemble_geometry(
    grid: Grid,
    v: Vec<f64>,
    kappa: Vec<Vec<f64>>,
    chi: Vec<f64>,
    f: Option<&CurvatureFunction>,
) -> GraphGeometry {
    let even = |values: Vec<f64>| ScalarField {
        grid,
        values,
        parity: Parity::Even,
    };
    let h = kappa.iter().map(|k| k.iter().sum()).collect();
    let a2 = kappa
        .iter()
        .map(|k| k.iter().map(|x| x * x).sum())
        .collect();
    let strictly_convex = kappa.iter().all(|k| k.iter().all(|&x| x > 0.0));
    let horoconvex = kappa.iter().all(|k| k.iter().all(|&x| x >= 1.0));
    let f_value = f.and_then(|f| {
        kappa
            .iter()
            .map(|k| f.value(k).ok())
            .collect::<Option<Vec<f64>>>()
            .map(even)
    });
    GraphGeometry {
        v: even(v),
        kappa,
        f_value,
        h: even(h),
        norm_a2: even(a2),
        chi: even(chi),
        strictly_convex,
        horoconvex,
    }
}

/// Metric factor, principal curvatures and curvature scalars of a graph.
///
/// Non-convex graphs are not an error; inspect `strictly_convex`.
pub fn geometry_of(g: &HyperbolicGraph, f: Option<&CurvatureFunction>) -> GraphGeometry {
    let du = differentiate(&g.u, 1).expect("order 1");
    let d2u = differentiate(&g.u, 2).expect("order 2");
    let mut v = Vec::with_capacity(g.grid.m);
    let mut kappa = Vec::with_capacity(g.grid.m);
    let mut chi = Vec::with_capacity(g.grid.m);
    for j in 0..g.grid.m {
        let u = g.u.values[j];
        let (kp, ka, vj) = pointwise_curvatures(u, du.values[j], d2u.values[j], g.grid.node(j));
        v.push(vj);
        chi.push(vj / u.sinh());
        kappa.push(curvature_vector(g.n, kp, ka));
    }
    assemble_geometry(g.grid, v, kappa, chi, f)
}

/// Mismatch between profile and angular curvature extrapolated to the poles.
///
/// Both are even in theta, so the extrapolation is linear in `theta^2`.
pub fn pole_regularity_gap(g: &HyperbolicGraph) -> f64 {
    if g.grid.mode != GridMode::Axisym {
        return 0.0;
    }
    let geo = geometry_of(g, None);
    let m = g.grid.m;
    let diff = |j: usize| {
        let k = &geo.kappa[j];
        k[0] - k[1]
    };
    let extrapolate = |a: usize, b: usize, pole: f64| {
        let (ta, tb) = (
            (g.grid.node(a) - pole).powi(2),
            (g.grid.node(b) - pole).powi(2),
        );
        (tb * diff(a) - ta * diff(b)) / (tb - ta)
    };
    extrapolate(0, 1, 0.0)
        .abs()
        .max(extrapolate(m - 1, m - 2, std::f64::consts::PI).abs())
}

/// Position and exterior unit normal of the graph at node `j`.
pub fn embed(g: &HyperbolicGraph, j: usize) -> Result<(MinkowskiPoint, MinkowskiPoint), GeometryError> {
    if j >= g.grid.m {
        return Err(GeometryError::NodeOutOfRange(j));
    }
    let du = differentiate(&g.u, 1)?;
    embed_node(g, j, du.values[j])
}

/// Positions and normals at every node.
pub fn embed_all(g: &HyperbolicGraph) -> Result<Vec<(MinkowskiPoint, MinkowskiPoint)>, GeometryError> {
    let du = differentiate(&g.u, 1)?;
    (0..g.grid.m).map(|j| embed_node(g, j, du.values[j])).collect()
}

fn embed_node(
    g: &HyperbolicGraph,
    j: usize,
    du: f64,
) -> Result<(MinkowskiPoint, MinkowskiPoint), GeometryError> {
    let u = g.u.values[j];
    let (sh, ch) = (u.sinh(), u.cosh());
    let phi1 = du / sh;
    let v = (1.0 + phi1 * phi1).sqrt();
    let (w, wt) = direction(&g.grid, g.grid.node(j));
    let mut x = Vec::with_capacity(w.len() + 1);
    let mut nu = Vec::with_capacity(w.len() + 1);
    x.push(ch);
    nu.push(sh / v);
    for (a, b) in w.iter().zip(&wt) {
        x.push(sh * a);
        nu.push((ch * a - phi1 * b) / v);
    }
    Ok((
        MinkowskiPoint::new(x, CausalType::Hyperbolic)?,
        MinkowskiPoint::new(nu, CausalType::DeSitter)?,
    ))
}

/// Per-node comparison with the Euclidean picture in Beltrami coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EuclideanRecord {
    /// Euclidean radius `tanh u`.
    pub r: f64,
    pub v_e: f64,
    pub v: f64,
    /// Euclidean over hyperbolic second fundamental form, per principal direction.
    pub h_ratio: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EuclideanComparison {
    pub records: Vec<EuclideanRecord>,
    /// `1 - max r^2`
    pub delta: f64,
    /// Every ratio lies in `[delta, 1/delta]` and `delta v^2 <= v_e^2 <= v^2`.
    pub within_bounds: bool,
}

/// Compares the graph with its image under the Beltrami map about the center.
pub fn euclidean_compare(g: &HyperbolicGraph) -> EuclideanComparison {
    let du = differentiate(&g.u, 1).expect("order 1");
    let d2u = differentiate(&g.u, 2).expect("order 2");
    let mut records = Vec::with_capacity(g.grid.m);
    for j in 0..g.grid.m {
        let th = g.grid.node(j);
        let (u, u1, u2) = (g.u.values[j], du.values[j], d2u.values[j]);
        let (sh, ch) = (u.sinh(), u.cosh());
        let phi1 = u1 / sh;
        let v = (1.0 + phi1 * phi1).sqrt();
        let r = u.tanh();
        assert!(r < 1.0, "Beltrami radius must stay below 1");
        let c2 = ch * ch;
        let r1 = u1 / c2;
        let r2 = u2 / c2 - 2.0 * u1 * u1 * r / c2;
        let v_e = (1.0 + r1 * r1 / (r * r)).sqrt();
        let h_hyp_profile = (-u2 + sh * ch + 2.0 * u1 * u1 * ch / sh) / v;
        let h_euc_profile = (r * r + 2.0 * r1 * r1 - r * r2) / (r * v_e);
        let mut h_ratio = vec![h_euc_profile / h_hyp_profile];
        if g.grid.mode == GridMode::Axisym {
            let (s, c) = th.sin_cos();
            let h_hyp_ang = sh * s * (s * ch - phi1 * c) / v;
            let h_euc_ang = s * (r * s - r1 * c) / v_e;
            h_ratio.extend(std::iter::repeat_n(h_euc_ang / h_hyp_ang, g.n - 1));
        }
        records.push(EuclideanRecord { r, v_e, v, h_ratio });
    }
    let rmax = records.iter().map(|rec| rec.r).fold(0.0, f64::max);
    let delta = 1.0 - rmax * rmax;
    let slack = 1e-12;
    let within_bounds = records.iter().all(|rec| {
        let metric_ok = delta * rec.v * rec.v <= rec.v_e * rec.v_e * (1.0 + slack)
            && rec.v_e <= rec.v * (1.0 + slack);
        metric_ok
            && rec
                .h_ratio
                .iter()
                .all(|&q| q >= delta * (1.0 - slack) && q <= (1.0 + slack) / delta)
    });
    EuclideanComparison {
        records,
        delta,
        within_bounds,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Radii {
    pub rho_minus: f64,
    pub rho_plus: f64,
    /// Axis offset of the inball center.
    pub center_offset: f64,
    /// Axis offset of the circumball center.
    pub circum_offset: f64,
    /// The coarse scan was not unimodal and a dense scan was used instead.
    pub fallback: bool,
}

const COARSE_SCAN: usize = 64;
const DENSE_SCAN: usize = 2048;

/// Inradius and circumradius over balls centered on the symmetry axis
/// (`theta = 0` direction), measured against the grid nodes.
pub fn inradius_circumradius(g: &HyperbolicGraph) -> Radii {
    let pts: Vec<(f64, f64)> = (0..g.grid.m)
        .map(|j| {
            let u = g.u.values[j];
            (u.cosh(), u.sinh() * g.grid.node(j).cos())
        })
        .collect();
    // cosh d(c_s, X) = cosh s cosh u - sinh s sinh u cos theta
    let cosh_dist = |s: f64, (a, b): (f64, f64)| s.cosh() * a - s.sinh() * b;
    let inner = |s: f64| {
        pts.iter()
            .map(|&p| cosh_dist(s, p))
            .fold(f64::INFINITY, f64::min)
    };
    let outer = |s: f64| {
        pts.iter()
            .map(|&p| cosh_dist(s, p))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let lo = -g.u.interpolate_at(std::f64::consts::PI);
    let hi = g.u.interpolate_at(0.0);
    let (s_in, c_in, fb_in) = search(|s| -inner(s), lo, hi);
    let (s_out, c_out, fb_out) = search(outer, lo, hi);
    Radii {
        rho_minus: (-c_in).max(1.0).acosh(),
        rho_plus: c_out.max(1.0).acosh(),
        center_offset: s_in,
        circum_offset: s_out,
        fallback: fb_in || fb_out,
    }
}

/// Minimizes `f` on `[lo, hi]`: coarse scan, unimodality check, golden section.
fn search(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64, bool) {
    let scan = |k: usize| -> (Vec<f64>, Vec<f64>) {
        let xs: Vec<f64> = (0..=k).map(|i| lo + (hi - lo) * i as f64 / k as f64).collect();
        let ys = xs.iter().map(|&x| f(x)).collect();
        (xs, ys)
    };
    let (xs, ys) = scan(COARSE_SCAN);
    let best = argmin(&ys);
    let unimodal = (1..=best).all(|i| ys[i] <= ys[i - 1]) && (best + 1..ys.len()).all(|i| ys[i] >= ys[i - 1]);
    let (xs, ys, fallback) = if unimodal {
        (xs, ys, false)
    } else {
        let (xs, ys) = scan(DENSE_SCAN);
        (xs, ys, true)
    };
    let best = argmin(&ys);
    let a = xs[best.saturating_sub(1)];
    let b = xs[(best + 1).min(xs.len() - 1)];
    let (x, y) = golden_min(&f, a, b);
    if y <= ys[best] {
        (x, y, fallback)
    } else {
        (xs[best], ys[best], fallback)
    }
}

fn argmin(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(0, |best, (i, &x)| if x < v[best] { i } else { best })
}
