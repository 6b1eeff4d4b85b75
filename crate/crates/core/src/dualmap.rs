//! Gauss-map duality between convex graphs in `H^{n+1}` and spacelike graphs
//! in de Sitter space `N = {<x,x> = 1}`.
//!
//! A de Sitter graph is described in eigentime coordinates: the point over
//! direction `omega` is `(sinh tau, cosh tau omega)`. The dual of a convex body
//! containing the center lies in the past half `N_-`, so the stored function is
//! `u* = EIGENTIME_SIGN * tau`, negative there.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curvfn::CurvatureFunction;
use crate::hgeom::{
    assemble_geometry, curvature_vector, embed_all, geometry_of, GeometryError, GraphGeometry,
    HyperbolicGraph,
};
use crate::sphere_grid::{
    differentiate, extend_scattered, lagrange_at, resample_lagrange, resample_monotone, Grid,
    GridError, GridMode, Parity, ScalarField,
};

/// The light cone is switched: eigentime is negated so duals of convex bodies
/// are negative-valued graphs. Every dual construction goes through this sign.
pub const LIGHT_CONE_SWITCHED: bool = true;
pub const EIGENTIME_SIGN: f64 = if LIGHT_CONE_SWITCHED { -1.0 } else { 1.0 };

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DualError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("duality broken: dual angles not strictly increasing at node {0} (primal not strictly convex at this resolution)")]
    DualityBroken(usize),
    #[error("causality violated: |Du*|^2 = {value} >= 1 at node {index}")]
    Causality { index: usize, value: f64 },
    #[error("primal graph is not strictly convex")]
    NotConvex,
}

/// How scattered dual samples are brought onto a uniform grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resampling {
    /// Eighth-point Lagrange; keeps the dual curvatures fourth-order accurate.
    #[default]
    Lagrange,
    /// Shape-preserving cubic Hermite; third order in the values only.
    Monotone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeSitterGraph {
    pub grid: Grid,
    pub u_star: ScalarField,
    pub n: usize,
}

impl DeSitterGraph {
    pub fn new(u_star: ScalarField) -> Self {
        let mut u_star = u_star;
        u_star.parity = Parity::Even;
        DeSitterGraph {
            grid: u_star.grid,
            n: u_star.grid.n,
            u_star,
        }
    }

    /// The coordinate slice `{u* = c}`.
    pub fn slice(grid: Grid, c: f64) -> Self {
        DeSitterGraph::new(ScalarField::constant(grid, c))
    }

    /// `|Du*|^2 = u*'^2 / cosh^2 u*` per node.
    pub fn gradient_sq(&self) -> Vec<f64> {
        let d = differentiate(&self.u_star, 1).expect("order 1");
        self.u_star
            .values
            .iter()
            .zip(&d.values)
            .map(|(&s, &ds)| (ds / s.cosh()).powi(2))
            .collect()
    }

    pub fn check_spacelike(&self) -> Result<(), DualError> {
        for (index, value) in self.gradient_sq().into_iter().enumerate() {
            if !(value < 1.0) {
                return Err(DualError::Causality { index, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPair {
    pub primal: HyperbolicGraph,
    pub dual: DeSitterGraph,
    /// Dual angle of each primal node.
    pub matching: Vec<f64>,
}

/// Pointwise dual curvatures from `u*, u*', u*''` at angle `theta`.
///
/// Returns `(kappa_profile, kappa_angular, v_tilde)` with respect to the
/// normal that makes slices `{u* = -r}` have curvature `tanh r`, or `None`
/// when the graph is not spacelike there.
#[inline]
pub fn pointwise_dual_curvatures(s: f64, ds: f64, d2s: f64, theta: f64) -> Option<(f64, f64, f64)> {
    let (sh, ch) = (s.sinh(), s.cosh());
    let vt2 = 1.0 - ds * ds / (ch * ch);
    if !(vt2 > 0.0) {
        return None;
    }
    let vt = vt2.sqrt();
    let th = sh / ch;
    let k_profile = (-d2s - sh * ch + 2.0 * ds * ds * th) / (vt2 * vt * ch * ch);
    let k_angular = (-th - ds / (ch * ch * theta.tan())) / vt;
    Some((k_profile, k_angular, vt))
}

/// Metric factor and principal curvatures of a spacelike de Sitter graph.
///
/// The `chi` field holds `v_tilde / cosh u*`.
pub fn desitter_geometry(
    d: &DeSitterGraph,
    f: Option<&CurvatureFunction>,
) -> Result<GraphGeometry, DualError> {
    let d1 = differentiate(&d.u_star, 1)?;
    let d2 = differentiate(&d.u_star, 2)?;
    let m = d.grid.m;
    let mut v = Vec::with_capacity(m);
    let mut kappa = Vec::with_capacity(m);
    let mut chi = Vec::with_capacity(m);
    for j in 0..m {
        let s = d.u_star.values[j];
        let (kp, ka, vt) =
            pointwise_dual_curvatures(s, d1.values[j], d2.values[j], d.grid.node(j)).ok_or(
                DualError::Causality {
                    index: j,
                    value: (d1.values[j] / s.cosh()).powi(2),
                },
            )?;
        v.push(vt);
        chi.push(vt / s.cosh());
        kappa.push(curvature_vector(d.n, kp, ka));
    }
    Ok(assemble_geometry(d.grid, v, kappa, chi, f))
}

/// Wraps an angle difference into `(-pi, pi]`.
fn wrap(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    a - two_pi * ((a + std::f64::consts::PI) / two_pi).floor()
}

/// Polar hypersurface of a strictly convex graph, on the same grid.
pub fn gauss_dual(g: &HyperbolicGraph) -> Result<DualPair, DualError> {
    gauss_dual_with(g, Resampling::Lagrange)
}

pub fn gauss_dual_with(g: &HyperbolicGraph, method: Resampling) -> Result<DualPair, DualError> {
    if !geometry_of(g, None).strictly_convex {
        return Err(DualError::NotConvex);
    }
    let frames = embed_all(g)?;
    let m = g.grid.m;
    let mut angles = Vec::with_capacity(m);
    let mut values = Vec::with_capacity(m);
    for (j, (_, nu)) in frames.iter().enumerate() {
        let c = &nu.coords;
        let theta = g.grid.node(j);
        let direction = match g.grid.mode {
            GridMode::Circle => c[2].atan2(c[1]),
            GridMode::Axisym => c[1].atan2(c[c.len() - 1]),
        };
        angles.push(theta + wrap(direction - theta));
        values.push(EIGENTIME_SIGN * c[0].asinh());
    }
    let u_star = resample_dual(g.grid, &angles, &values, method)?;
    let dual = DeSitterGraph::new(u_star);
    dual.check_spacelike()?;
    Ok(DualPair {
        primal: g.clone(),
        dual,
        matching: angles,
    })
}

fn resample_dual(
    grid: Grid,
    angles: &[f64],
    values: &[f64],
    method: Resampling,
) -> Result<ScalarField, DualError> {
    if let Some(i) = (1..angles.len()).find(|&i| !(angles[i] > angles[i - 1])) {
        return Err(DualError::DualityBroken(i));
    }
    let field = match method {
        Resampling::Lagrange => resample_lagrange(angles, values, &grid, Parity::Even),
        Resampling::Monotone => {
            let (xs, ys) = extend_scattered(grid.mode, Parity::Even, angles, values, 3);
            resample_monotone(&xs, &ys, &grid).map(|f| ScalarField {
                parity: Parity::Even,
                ..f
            })
        }
    };
    field.map_err(|e| match e {
        GridError::NonMonotone(i) => DualError::DualityBroken(i.min(angles.len() - 1)),
        other => other.into(),
    })
}

/// Independent scalar route to the dual: `u* = -asinh(sinh u / v)` at the
/// matched angles `theta - atan2(u'/sinh u, cosh u)`.
pub fn scalar_dual(g: &HyperbolicGraph) -> (Vec<f64>, Vec<f64>) {
    let du = differentiate(&g.u, 1).expect("order 1");
    let mut angles = Vec::with_capacity(g.grid.m);
    let mut values = Vec::with_capacity(g.grid.m);
    for j in 0..g.grid.m {
        let u = g.u.values[j];
        let phi1 = du.values[j] / u.sinh();
        let v = (1.0 + phi1 * phi1).sqrt();
        angles.push(g.grid.node(j) - phi1.atan2(u.cosh()));
        values.push(EIGENTIME_SIGN * (u.sinh() / v).asinh());
    }
    (angles, values)
}

/// Recovers the primal graph from its polar dual, resampled onto `target`.
pub fn inverse_gauss(d: &DeSitterGraph, target: &Grid) -> Result<HyperbolicGraph, DualError> {
    d.check_spacelike()?;
    let ds = differentiate(&d.u_star, 1)?;
    let mut angles = Vec::with_capacity(d.grid.m);
    let mut values = Vec::with_capacity(d.grid.m);
    for j in 0..d.grid.m {
        // tau = -u* in the switched convention
        let s = EIGENTIME_SIGN * d.u_star.values[j];
        let s1 = EIGENTIME_SIGN * ds.values[j];
        let q = s1 / s.cosh();
        let vt = (1.0 - q * q).sqrt();
        let sh = s.sinh();
        angles.push(d.grid.node(j) + q.atan2(sh));
        values.push(((sh * sh + q * q).sqrt() / vt).asinh());
    }
    let u = resample_dual(*target, &angles, &values, Resampling::Lagrange)?;
    Ok(HyperbolicGraph::new(u)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    /// `max |kappa_tilde_i kappa_i - 1|` at matched nodes.
    pub max_kappa_product_error: f64,
    /// `max |h_tilde - h|` over the diagonal entries in primal coordinates.
    pub max_h_mismatch: f64,
    /// `max(|u_max + u*_min|, |u_min + u*_max|)`.
    pub relation_u_ustar_error: f64,
}

impl DualityReport {
    pub fn max_error(&self) -> f64 {
        self.max_kappa_product_error
            .max(self.max_h_mismatch)
            .max(self.relation_u_ustar_error)
    }
}

/// Measures how far a pair is from exact polar duality.
pub fn verify_duality(p: &DualPair) -> Result<DualityReport, DualError> {
    let g = &p.primal;
    let grid = g.grid;
    let primal = geometry_of(g, None);
    let dual = desitter_geometry(&p.dual, None)?;
    let du = differentiate(&g.u, 1)?;
    let d2u = differentiate(&g.u, 2)?;

    // dtheta*/dtheta from the odd offset field theta* - theta
    let offset = ScalarField {
        grid,
        values: p
            .matching
            .iter()
            .enumerate()
            .map(|(j, a)| a - grid.node(j))
            .collect(),
        parity: Parity::Odd,
    };
    let stretch = differentiate(&offset, 1)?;

    let interp = |values: Vec<f64>| {
        let field = ScalarField {
            grid,
            values,
            parity: Parity::Even,
        };
        let (xs, ys) = field.extended_samples(6);
        p.matching
            .iter()
            .map(|&a| lagrange_at(&xs, &ys, a, 8))
            .collect::<Vec<f64>>()
    };
    let kt_profile = interp(dual.kappa.iter().map(|k| k[0]).collect());
    let kt_angular = if g.n > 1 {
        interp(dual.kappa.iter().map(|k| k[1]).collect())
    } else {
        Vec::new()
    };
    let ustar_at = interp(p.dual.u_star.values.clone());
    let vt_at = interp(dual.v.values.clone());

    let mut kappa_err: f64 = 0.0;
    let mut h_err: f64 = 0.0;
    for j in 0..grid.m {
        let theta = grid.node(j);
        let (u, u1, u2) = (g.u.values[j], du.values[j], d2u.values[j]);
        let (sh, ch) = (u.sinh(), u.cosh());
        let v = primal.v.values[j];
        let k = &primal.kappa[j];
        kappa_err = kappa_err.max((kt_profile[j] * k[0] - 1.0).abs());

        let h_profile = (-u2 + sh * ch + 2.0 * u1 * u1 * ch / sh) / v;
        let cs = ustar_at[j].cosh();
        let ds = 1.0 + stretch.values[j];
        let ht_profile = kt_profile[j] * (cs * vt_at[j]).powi(2) * ds * ds;
        h_err = h_err.max((ht_profile - h_profile).abs());

        if g.n > 1 {
            kappa_err = kappa_err.max((kt_angular[j] * k[1] - 1.0).abs());
            let h_angular = k[1] * (sh * theta.sin()).powi(2);
            let ht_angular = kt_angular[j] * (cs * p.matching[j].sin()).powi(2);
            h_err = h_err.max((ht_angular - h_angular).abs());
        }
    }

    let (u_min, u_max) = g.u.refined_extrema();
    let (s_min, s_max) = p.dual.u_star.refined_extrema();
    let relation = (u_max + s_min).abs().max((u_min + s_max).abs());
    Ok(DualityReport {
        max_kappa_product_error: kappa_err,
        max_h_mismatch: h_err,
        relation_u_ustar_error: relation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid2(m: usize) -> Grid {
        Grid::new(GridMode::Axisym, 2, m).unwrap()
    }

    #[test]
    fn sphere_dualizes_to_slice() {
        for &r in &[0.3, 0.8, 2.0] {
            let g = HyperbolicGraph::sphere(grid2(64), r).unwrap();
            let p = gauss_dual(&g).unwrap();
            for &s in &p.dual.u_star.values {
                assert!((s + r).abs() < 1e-12, "{s}");
            }
            let rep = verify_duality(&p).unwrap();
            assert!(rep.max_error() < 1e-10, "{rep:?}");
        }
    }

    #[test]
    fn slice_curvatures() {
        let geo = desitter_geometry(&DeSitterGraph::slice(grid2(32), -1.0), None).unwrap();
        for k in &geo.kappa {
            for &x in k {
                assert!((x - 1.0f64.tanh()).abs() < 1e-12);
            }
        }
        let flat = desitter_geometry(&DeSitterGraph::slice(grid2(32), 0.0), None).unwrap();
        assert!(flat.kappa.iter().flatten().all(|&x| x.abs() < 1e-15));
    }

    #[test]
    fn circle_sphere_duality() {
        let rep = |m: usize| {
            let grid = Grid::new(GridMode::Circle, 1, m).unwrap();
            let g = HyperbolicGraph::from_fn(grid, |t| 1.0 + 0.1 * (2.0 * t).cos()).unwrap();
            verify_duality(&gauss_dual(&g).unwrap()).unwrap()
        };
        let (a, b) = (rep(64), rep(128));
        assert!(a.max_error() < 1e-3, "{a:?}");
        assert!(a.max_kappa_product_error / b.max_kappa_product_error >= 12.0, "{a:?} {b:?}");
    }

    #[test]
    fn perturbed_sphere_is_spacelike_and_matches_scalar_route() {
        let g = HyperbolicGraph::from_fn(grid2(128), |t| 1.0 + 0.1 * t.cos()).unwrap();
        let p = gauss_dual(&g).unwrap();
        assert!(p.dual.gradient_sq().into_iter().fold(0.0, f64::max) < 1.0);
        let (angles, values) = scalar_dual(&g);
        for j in 0..g.grid.m {
            assert!((angles[j] - p.matching[j]).abs() < 1e-12);
            let at = p.dual.u_star.interpolate_at(angles[j]);
            assert!((at - values[j]).abs() < 1e-8, "{j}: {at} vs {}", values[j]);
        }
    }

    #[test]
    fn duality_errors_converge() {
        let rep = |m: usize| {
            let g = HyperbolicGraph::from_fn(grid2(m), |t| 1.0 + 0.1 * t.cos()).unwrap();
            verify_duality(&gauss_dual(&g).unwrap()).unwrap()
        };
        let (a, b) = (rep(64), rep(128));
        assert!(a.max_kappa_product_error / b.max_kappa_product_error >= 12.0, "{a:?} {b:?}");
        assert!(a.max_h_mismatch / b.max_h_mismatch >= 12.0, "{a:?} {b:?}");
    }

    #[test]
    fn involution_recovers_primal() {
        let g = HyperbolicGraph::from_fn(grid2(128), |t| 0.9 + 0.08 * t.cos() + 0.03 * (2.0 * t).cos()).unwrap();
        let p = gauss_dual(&g).unwrap();
        let back = inverse_gauss(&p.dual, &g.grid).unwrap();
        let err = back
            .u
            .values
            .iter()
            .zip(&g.u.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn horoconvex_primal_has_dual_curvatures_at_most_one() {
        let g = HyperbolicGraph::from_fn(grid2(64), |t| 0.6 + 0.02 * t.cos()).unwrap();
        assert!(geometry_of(&g, None).horoconvex);
        let p = gauss_dual(&g).unwrap();
        let dual = desitter_geometry(&p.dual, None).unwrap();
        assert!(dual.max_kappa() <= 1.0);
    }

    #[test]
    fn nonconvex_primal_is_rejected() {
        let g = HyperbolicGraph::from_fn(grid2(64), |t| 1.0 + 0.3 * (6.0 * t).cos()).unwrap();
        assert!(matches!(gauss_dual(&g), Err(DualError::NotConvex)));
    }

    #[test]
    fn monotone_resampling_route_agrees_to_low_order() {
        let g = HyperbolicGraph::from_fn(grid2(128), |t| 1.0 + 0.1 * t.cos()).unwrap();
        let a = gauss_dual(&g).unwrap();
        let b = gauss_dual_with(&g, Resampling::Monotone).unwrap();
        let err = a
            .dual
            .u_star
            .values
            .iter()
            .zip(&b.dual.u_star.values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-4, "{err}");
    }
}
