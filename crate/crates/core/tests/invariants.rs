//! Property tests for the structural invariants of each module.

use proptest::prelude::*;

use dualflow::curvfn::{invert, CurvatureFunction};
use dualflow::dualmap::{gauss_dual, inverse_gauss, EIGENTIME_SIGN};
use dualflow::flow::{barrier_theta, ln_cosh, spherical_theta};
use dualflow::hgeom::{geometry_of, HyperbolicGraph};
use dualflow::sphere_grid::{differentiate, integrate_sphere, sphere_area, Grid, Parity, ScalarField};

const FAMILIES: [&str; 10] = [
    "mean",
    "power_mean:0.5",
    "power_mean:-0.7",
    "power_mean:0",
    "sigma_k:2",
    "sigma_k:3",
    "quotient:3:1",
    "geom:0.2,0.3,0.5",
    "complete:2",
    "norm_A",
];

fn cone_point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, 3).prop_map(|v| v.into_iter().map(f64::exp).collect())
}

fn family() -> impl Strategy<Value = CurvatureFunction> {
    prop::sample::select(FAMILIES.to_vec()).prop_map(|name| CurvatureFunction::parse(name, 3).unwrap())
}

proptest! {
    #[test]
    fn curvature_functions_are_normalized_homogeneous_symmetric(
        f in family(),
        k in cone_point(),
        lambda in 0.05f64..20.0,
    ) {
        let v = f.value(&k).unwrap();
        prop_assert!((f.value(&[1.0; 3]).unwrap() - 1.0).abs() < 1e-14);
        let scaled: Vec<f64> = k.iter().map(|x| lambda * x).collect();
        prop_assert!((f.value(&scaled).unwrap() - lambda * v).abs() <= 1e-12 * lambda * v);
        let swapped = [k[2], k[0], k[1]];
        prop_assert!((f.value(&swapped).unwrap() - v).abs() <= 1e-12 * v);
    }

    #[test]
    fn curvature_functions_are_monotone_and_satisfy_euler(f in family(), k in cone_point()) {
        let (v, g) = f.value_and_gradient(&k).unwrap();
        prop_assert!(g.iter().all(|&gi| gi > 0.0));
        let euler: f64 = g.iter().zip(&k).map(|(a, b)| a * b).sum();
        prop_assert!((euler - v).abs() <= 1e-10 * v);
    }

    #[test]
    fn curvature_functions_lie_between_min_and_max(f in family(), k in cone_point()) {
        let v = f.value(&k).unwrap();
        let lo = k.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = k.iter().copied().fold(0.0, f64::max);
        // norm_A is only bounded above by sqrt(n) max
        prop_assert!(v >= lo * (1.0 - 1e-12));
        prop_assert!(v <= 3f64.sqrt() * hi * (1.0 + 1e-12));
    }

    #[test]
    fn inversion_is_an_involution(f in family(), k in cone_point()) {
        let back = invert(&invert(&f));
        let v = f.value(&k).unwrap();
        prop_assert!((back.value(&k).unwrap() - v).abs() <= 1e-10 * v);
        let inv: Vec<f64> = k.iter().map(|x| 1.0 / x).collect();
        prop_assert!((invert(&f).value(&inv).unwrap() * v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cone_is_enforced(f in family(), k in cone_point(), i in 0usize..3) {
        let mut bad = k.clone();
        bad[i] = -bad[i];
        prop_assert!(f.value(&bad).is_err());
    }

    #[test]
    fn constants_have_zero_derivatives(n in 1usize..4, c in -5.0f64..5.0, log_m in 4u32..8) {
        let grid = Grid::for_dimension(n, 1 << log_m).unwrap();
        let f = ScalarField::constant(grid, c);
        for order in [1, 2] {
            let d = differentiate(&f, order).unwrap();
            prop_assert!(d.values.iter().all(|x| x.abs() <= 1e-10 * (1.0 + c.abs()) / grid.h().powi(order as i32)));
        }
        let area = if n == 1 { 2.0 * std::f64::consts::PI } else { sphere_area(n) };
        prop_assert!((integrate_sphere(&f) - c * area).abs() <= 1e-4 * (1.0 + c.abs()));
    }

    #[test]
    fn differentiation_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, k in 1u32..5) {
        let grid = Grid::for_dimension(2, 64).unwrap();
        let f = ScalarField::from_fn(grid, Parity::Even, |t| (k as f64 * t).cos()).unwrap();
        let g = ScalarField::from_fn(grid, Parity::Even, |t| t.cos().powi(2)).unwrap();
        let sum = ScalarField::new(
            grid,
            f.values.iter().zip(&g.values).map(|(x, y)| a * x + b * y).collect(),
            Parity::Even,
        )
        .unwrap();
        let (df, dg, ds) = (
            differentiate(&f, 2).unwrap(),
            differentiate(&g, 2).unwrap(),
            differentiate(&sum, 2).unwrap(),
        );
        for j in 0..grid.m {
            prop_assert!((ds.values[j] - a * df.values[j] - b * dg.values[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn refined_extrema_bracket_the_nodes(c1 in -0.3f64..0.3, c2 in -0.2f64..0.2) {
        let grid = Grid::for_dimension(2, 32).unwrap();
        let f = ScalarField::from_fn(grid, Parity::Even, |t| 1.0 + c1 * t.cos() + c2 * (2.0 * t).cos()).unwrap();
        let (lo, hi) = f.refined_extrema();
        prop_assert!(lo <= f.min() && hi >= f.max());
        prop_assert!(lo >= 1.0 - c1.abs() - c2.abs() - 1e-9 && hi <= 1.0 + c1.abs() + c2.abs() + 1e-9);
    }

    #[test]
    fn sphere_duals_are_slices(r in 0.05f64..3.0, n in 1usize..4) {
        let grid = Grid::for_dimension(n, 32).unwrap();
        let pair = gauss_dual(&HyperbolicGraph::sphere(grid, r).unwrap()).unwrap();
        prop_assert!(pair.dual.u_star.values.iter().all(|s| (s - EIGENTIME_SIGN * r).abs() < 1e-12));
    }

    #[test]
    fn convex_duals_are_negative_spacelike_and_invertible(
        r0 in 0.5f64..1.5,
        a in -0.08f64..0.08,
        k in 1u32..4,
    ) {
        let grid = Grid::for_dimension(2, 64).unwrap();
        let g = HyperbolicGraph::from_fn(grid, |t| r0 + a * (2.0 * k as f64 * t).cos()).unwrap();
        // weakly convex graphs converge slowly at the poles
        prop_assume!(geometry_of(&g, None).min_kappa() > 0.5);
        let pair = gauss_dual(&g).unwrap();
        prop_assert!(pair.dual.u_star.values.iter().all(|&s| s < 0.0));
        prop_assert!(pair.dual.check_spacelike().is_ok());
        let back = inverse_gauss(&pair.dual, &grid).unwrap();
        let err = back.u.values.iter().zip(&g.u.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn spherical_solution_decreases_to_zero(r0 in 0.05f64..4.0, frac in 0.0f64..0.999) {
        let t_star = ln_cosh(r0);
        let t = frac * t_star;
        let theta = spherical_theta(t, r0).unwrap();
        prop_assert!(theta > 0.0 && theta <= r0 * (1.0 + 1e-12));
        prop_assert!((barrier_theta(t, t_star).unwrap() - theta).abs() < 1e-9 * (1.0 + r0));
        prop_assert!(spherical_theta((frac + 0.0005) * t_star, r0).unwrap() < theta);
    }
}
