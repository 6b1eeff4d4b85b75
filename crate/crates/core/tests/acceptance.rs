//! Acceptance suite. Each test prints one `PASS`/`FAIL` line to stderr
//! (bypassing output capture) and then asserts its verdict.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dualflow::curvfn::{invert, Concavity, CurvatureFunction};
use dualflow::diagnostics::{
    compute_record, epsilon_from_initial, fit_decay, fit_exponential, grid_tolerance,
    DiagnosticsRecord,
};
use dualflow::dualmap::{gauss_dual, verify_duality, DeSitterGraph};
use dualflow::flow::{
    barrier_theta, ln_cosh, run_dual_flow, run_flow, DualFlowOptions, FlowConfig, FlowTrajectory,
    InitialClass, InitialDatum,
};
use dualflow::sphere_grid::Grid;

const BUILTIN: [&str; 11] = [
    "mean",
    "power_mean:0.5",
    "power_mean:0",
    "power_mean:-1",
    "sigma_k:2",
    "quotient:2:1",
    "geom:0.5,0.5",
    "complete:2",
    "norm_A",
    "inverse:sigma_k:2",
    "inverse:power_mean:0.5",
];

fn report(criterion: u32, title: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "{verdict} criterion {criterion} ({title}): {detail}"
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn run(f: &str, m: usize, initial: InitialDatum) -> FlowTrajectory {
    let cfg = FlowConfig::new(f, 2, m, initial);
    let traj = run_flow(&cfg).expect("valid configuration");
    assert!(traj.failure.is_none(), "{f}: {:?}", traj.failure);
    traj
}

fn records(traj: &FlowTrajectory, duals: &[Option<DeSitterGraph>]) -> Vec<DiagnosticsRecord> {
    let t_star = traj.t_star_estimate.expect("completed run").value;
    let eps = epsilon_from_initial(&traj.states[0].geometry);
    traj.states
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            let theta = barrier_theta(s.t, t_star)?;
            let d = duals.get(i).and_then(|d| d.as_ref());
            Some(compute_record(s, d, theta, eps, 0.1))
        })
        .collect()
}

/// Flows the Gauss dual of the initial state with the inverse speed and
/// returns the dual state at each primal record time.
fn dual_companion(traj: &FlowTrajectory) -> Vec<Option<DeSitterGraph>> {
    let f = traj.config.curvature_function().unwrap();
    let pair = gauss_dual(&traj.states[0].graph()).expect("convex initial datum");
    let times: Vec<f64> = traj.states.iter().map(|s| s.t).collect();
    let opts = DualFlowOptions {
        record_every: usize::MAX,
        t_end: times.last().copied(),
        record_times: times,
        u_stop: 0.0,
        ..Default::default()
    };
    let dtraj = run_dual_flow(&invert(&f), &pair.dual, &opts);
    assert!(dtraj.failure.is_none(), "{:?}", dtraj.failure);
    traj.states
        .iter()
        .map(|s| dtraj.states.iter().find(|d| d.t == s.t).map(|d| d.dual.clone()))
        .collect()
}

fn horoconvex_data() -> Vec<InitialDatum> {
    vec![
        InitialDatum::Sphere { r0: 1.0 },
        InitialDatum::PerturbedSphere { r0: 0.8, a: 0.05, k: 2 },
        InitialDatum::Random { r0: 0.7, amp: 0.04, modes: 4 },
        InitialDatum::Ellipsoid { a: 0.5, b: 0.6 },
    ]
}

#[test]
fn criterion_1_spherical_oracle() {
    let mut worst_err: f64 = 0.0;
    let mut worst_tstar: f64 = 0.0;
    let mut slowest: f64 = 0.0;
    for r0 in [0.5, 1.0, 2.0] {
        for f in BUILTIN {
            let clock = Instant::now();
            let traj = run(f, 64, InitialDatum::Sphere { r0 });
            slowest = slowest.max(clock.elapsed().as_secs_f64());
            let exact_tstar = ln_cosh(r0);
            for s in &traj.states {
                let theta = ((r0.cosh()) * (-s.t).exp()).acosh();
                let err = s.u.values.iter().map(|u| (u - theta).abs()).fold(0.0, f64::max);
                worst_err = worst_err.max(err);
            }
            assert!(traj.states.last().unwrap().u.max() <= 0.02);
            let est = traj.t_star_estimate.unwrap().value;
            worst_tstar = worst_tstar.max((est - exact_tstar).abs());
        }
    }
    let pass = worst_err <= 1e-6 && worst_tstar <= 1e-5 && slowest < 10.0;
    report(
        1,
        "spherical oracle",
        pass,
        &format!(
            "max |u - Theta| = {worst_err:.3e} (<= 1e-6), max |T* - ln cosh r0| = {worst_tstar:.3e} (<= 1e-5), slowest run {slowest:.2} s (< 10 s)"
        ),
    );
}

fn order(e: &[f64; 3]) -> f64 {
    (e[0] / e[1]).log2().min((e[1] / e[2]).log2())
}

#[test]
fn criterion_2_duality_statics() {
    let datum = InitialDatum::Random { r0: 1.0, amp: 0.06, modes: 3 };
    let mut worst = [f64::INFINITY; 3];
    let mut graphs = 0;
    for seed in 0..20u64 {
        let mut errs = [[0.0; 3]; 3];
        for (level, m) in [64usize, 128, 256].into_iter().enumerate() {
            let grid = Grid::for_dimension(2, m).unwrap();
            let g = datum.build(grid, seed).unwrap();
            let pair = gauss_dual(&g).expect("strictly convex");
            let r = verify_duality(&pair).unwrap();
            errs[0][level] = r.max_kappa_product_error;
            errs[1][level] = r.max_h_mismatch;
            errs[2][level] = r.relation_u_ustar_error;
        }
        for (w, e) in worst.iter_mut().zip(&errs) {
            *w = w.min(order(e));
        }
        graphs += 1;
    }
    let pass = graphs == 20 && worst.iter().all(|&p| p >= 3.5);
    report(
        2,
        "duality statics",
        pass,
        &format!(
            "{graphs} graphs, worst observed orders: kappa product {:.2}, h mismatch {:.2}, u/u* relation {:.2} (>= 3.5)",
            worst[0], worst[1], worst[2]
        ),
    );
}

fn flow_duality_error(f: &str, m: usize, times: &[f64]) -> f64 {
    let mut cfg = FlowConfig::new(f, 2, m, InitialDatum::PerturbedSphere { r0: 1.0, a: 0.1, k: 2 });
    cfg.record_times = times.to_vec();
    cfg.t_end = times.last().copied();
    let traj = run_flow(&cfg).unwrap();
    assert!(traj.failure.is_none());
    let duals = dual_companion(&traj);
    let mut err: f64 = 0.0;
    for &t in times {
        let i = traj.states.iter().position(|s| s.t == t).expect("landed on record time");
        let dual = duals[i].as_ref().expect("dual record");
        let direct = gauss_dual(&traj.states[i].graph()).unwrap().dual;
        let e = direct
            .u_star
            .values
            .iter()
            .zip(&dual.u_star.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        err = err.max(e);
    }
    err
}

#[test]
fn criterion_3_flow_duality() {
    let clock = Instant::now();
    let times = [0.05, 0.1, 0.15, 0.2, 0.25];
    let mut lines = Vec::new();
    let mut pass = true;
    for f in ["sigma_k:2", "power_mean:0.5"] {
        let e128 = flow_duality_error(f, 128, &times);
        let e256 = flow_duality_error(f, 256, &times);
        let ratio = e128 / e256;
        pass &= e128 <= 5e-4 && ratio >= 8.0;
        lines.push(format!("{f}: {e128:.3e} at m = 128 (<= 5e-4), ratio {ratio:.1} at m = 256 (>= 8)"));
    }
    let secs = clock.elapsed().as_secs_f64();
    pass &= secs < 120.0;
    lines.push(format!("{secs:.1} s (< 120 s)"));
    report(3, "duality of flows", pass, &lines.join("; "));
}

#[test]
fn criterion_4_barrier() {
    let mut worst = f64::INFINITY;
    let mut runs = 0;
    for f in BUILTIN {
        for datum in horoconvex_data() {
            let traj = run(f, 64, datum);
            for r in records(&traj, &[]) {
                let theta = (-r.tau).exp();
                worst = worst.min((theta - r.u_min).min(r.u_max - theta));
            }
            runs += 1;
        }
    }
    report(
        4,
        "barrier",
        worst >= -1e-4,
        &format!("{runs} runs, worst slack {worst:.3e} (>= -1e-4)"),
    );
}

#[test]
fn criterion_5_preserved_inequalities() {
    let mut worst_margin = f64::INFINITY;
    let mut worst_pinching = f64::INFINITY;
    let mut min_ratio = f64::INFINITY;
    let mut runs = 0;
    for f in BUILTIN {
        for datum in horoconvex_data() {
            let traj = run(f, 64, datum);
            assert_eq!(traj.initial_class, InitialClass::Horoconvex);
            let tol = grid_tolerance(traj.states[0].u.grid.h());
            let recs = records(&traj, &[]);
            let p0 = recs[0].pinching_t;
            for r in &recs {
                worst_margin = worst_margin.min(r.horoconvex_margin + tol);
                worst_pinching = worst_pinching.min(r.pinching_t - (p0 - tol));
                min_ratio = min_ratio.min(r.pinch_ratio);
            }
            runs += 1;
        }
    }
    let pass = worst_margin >= 0.0 && worst_pinching >= 0.0 && min_ratio > 0.0;
    report(
        5,
        "preserved inequalities",
        pass,
        &format!(
            "{runs} horoconvex runs, min (margin + C h^2) = {worst_margin:.3e}, min (pinching - pinching(0) + C h^2) = {worst_pinching:.3e}, min pinch ratio {min_ratio:.3} (> 0)"
        ),
    );
}

fn max_abs_dev(values: &[f64], target: f64) -> f64 {
    values.iter().map(|x| (x - target).abs()).fold(0.0, f64::max)
}

#[test]
fn criterion_6_rescaled_convergence() {
    let mut pass = true;
    let mut lines = Vec::new();
    for f in ["sigma_k:2", "power_mean:0.5", "quotient:2:1", "mean"] {
        let traj = run(f, 64, InitialDatum::PerturbedSphere { r0: 1.0, a: 0.1, k: 2 });
        let duals = dual_companion(&traj);
        let t_star = traj.t_star_estimate.unwrap().value;
        let (mut taus, mut osc, mut wdev, mut fdev) = (vec![], vec![], vec![], vec![]);
        let (mut u_final, mut w_final) = (f64::NAN, f64::NAN);
        for (s, d) in traj.states.iter().zip(&duals) {
            let Some(theta) = barrier_theta(s.t, t_star) else { continue };
            let d = d.as_ref().expect("dual record");
            let ut: Vec<f64> = s.u.values.iter().map(|u| u / theta).collect();
            let w: Vec<f64> = d.u_star.values.iter().map(|x| x / theta).collect();
            let ft: Vec<f64> = s.geometry.f_value.as_ref().unwrap().values.iter().map(|x| x * theta).collect();
            taus.push(-theta.ln());
            osc.push(s.u.oscillation() / theta);
            wdev.push(max_abs_dev(&w, -1.0));
            fdev.push(max_abs_dev(&ft, 1.0));
            u_final = max_abs_dev(&ut, 1.0);
            w_final = wdev[wdev.len() - 1];
        }
        let mut parts = Vec::new();
        for (name, ys) in [("osc u~", &osc), ("|w+1|", &wdev), ("|F~-1|", &fdev)] {
            let fit = fit_exponential(&taus, ys).unwrap();
            let ok = fit.delta > 0.0 && fit.residual < 0.1 * fit.log_range;
            pass &= ok;
            parts.push(format!(
                "{name} delta {:.2} residual/range {:.3}",
                fit.delta,
                fit.residual / fit.log_range
            ));
        }
        pass &= u_final <= 0.02 && w_final <= 0.02;
        lines.push(format!(
            "{f}: {}, final |u~-1| {u_final:.2e}, |w+1| {w_final:.2e}",
            parts.join(", ")
        ));
    }
    report(6, "rescaled convergence", pass, &lines.join("; "));
}

fn random_kappa(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| (rng.gen_range(-2.0f64..2.0)).exp()).collect()
}

#[test]
fn criterion_7_curvature_battery() {
    let clock = Instant::now();
    let expected = [
        ("mean", Concavity::ConcaveDegenerate),
        ("power_mean:0.5", Concavity::StrictlyConcave),
        ("power_mean:0", Concavity::StrictlyConcave),
        ("power_mean:-1", Concavity::StrictlyConcave),
        ("sigma_k:2", Concavity::StrictlyConcave),
        ("sigma_k:3", Concavity::StrictlyConcave),
        ("quotient:2:1", Concavity::StrictlyConcave),
        ("quotient:3:2", Concavity::StrictlyConcave),
        ("geom:0.5,0.5,0", Concavity::StrictlyConcave),
        ("geom:0.2,0.3,0.5", Concavity::StrictlyConcave),
        ("geom:1,0,0", Concavity::ConcaveDegenerate),
    ];
    let n = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut verdicts_ok = true;
    let mut worst_euler: f64 = 0.0;
    let mut worst_involution: f64 = 0.0;
    let mut worst_order = f64::INFINITY;
    let mut failures = Vec::new();
    let all = expected
        .iter()
        .map(|(name, _)| *name)
        .chain(["complete:2", "norm_A", "inverse:sigma_k:2"]);
    for name in all {
        let f = CurvatureFunction::parse(name, n).unwrap();
        let back = invert(&invert(&f));
        let want = expected.iter().find(|(e, _)| *e == name).map(|(_, c)| *c);
        for _ in 0..100 {
            let k = random_kappa(&mut rng, n);
            if let Some(want) = want {
                let got = f.check_strict_concavity(&k, None).unwrap();
                if got != want {
                    verdicts_ok = false;
                    failures.push(format!("{name} at {k:?}: {got:?}"));
                }
            }
            let (v, g) = f.value_and_gradient(&k).unwrap();
            let euler: f64 = g.iter().zip(&k).map(|(a, b)| a * b).sum();
            worst_euler = worst_euler.max((euler - v).abs() / v);
            worst_involution = worst_involution.max((back.value(&k).unwrap() - v).abs() / v);
            // forward differences along a random direction
            let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let slope: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
            let fd = |h: f64| {
                let kp: Vec<f64> = k.iter().zip(&dir).map(|(a, b)| a + h * b).collect();
                let km: Vec<f64> = k.iter().zip(&dir).map(|(a, b)| a - h * b).collect();
                (f.value(&kp).unwrap() - f.value(&km).unwrap()) / (2.0 * h)
            };
            let h = 1e-2 * k.iter().copied().fold(f64::INFINITY, f64::min);
            let (e1, e2) = ((fd(h) - slope).abs(), (fd(h / 2.0) - slope).abs());
            if e2 > 1e-11 * v {
                worst_order = worst_order.min((e1 / e2).log2());
            }
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    let pass = verdicts_ok
        && worst_euler <= 1e-10
        && worst_involution <= 1e-10
        && worst_order >= 1.9
        && secs < 30.0;
    report(
        7,
        "curvature battery",
        pass,
        &format!(
            "verdicts {}{}, Euler {worst_euler:.1e}, involution {worst_involution:.1e} (<= 1e-10), FD order {worst_order:.2} (>= 1.9), {secs:.2} s",
            if verdicts_ok { "ok" } else { "WRONG" },
            failures.first().map(|s| format!(" ({s})")).unwrap_or_default()
        ),
    );
}

#[test]
fn criterion_8_decay_inequality() {
    let mut pass = true;
    let mut lines = Vec::new();
    for f in ["sigma_k:2", "power_mean:0.5", "power_mean:0", "quotient:2:1", "geom:0.5,0.5", "mean"] {
        for datum in [
            InitialDatum::PerturbedSphere { r0: 1.0, a: 0.1, k: 2 },
            InitialDatum::Ellipsoid { a: 0.5, b: 0.6 },
        ] {
            let traj = run(f, 64, datum);
            match fit_decay(&traj.states).unwrap() {
                Some(r) if r.delta > 0.0 && r.holds => {
                    lines.push(format!("{f}: c0 {:.3}, delta {:.3}", r.c0, r.delta))
                }
                other => {
                    pass = false;
                    lines.push(format!("{f}: {other:?}"));
                }
            }
        }
    }
    report(8, "decay inequality", pass, &lines.join("; "));
}
