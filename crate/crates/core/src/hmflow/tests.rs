use super::*;
use crate::geometry::MetricField;
use crate::maps::MapInit;
use std::f64::consts::TAU;

fn circle_solver(metric: MetricFamily, n: usize, formulation: Formulation) -> FlowSolver {
    let config = FlowConfig {
        formulation,
        ..FlowConfig::default()
    };
    FlowSolver::new(metric, Grid::torus1(n).unwrap(), TargetManifold::unit_circle(), config).unwrap()
}

fn lift_of(space: &MapSpace, u: &Field, idx: usize) -> f64 {
    match space.chart {
        Some(_) => u.get(0, idx),
        None => u.get(1, idx).atan2(u.get(0, idx)),
    }
}

fn wrap(d: f64) -> f64 {
    (d + std::f64::consts::PI).rem_euclid(TAU) - std::f64::consts::PI
}

#[test]
fn winding_energy_density_and_conformal_scaling() {
    let grid = Grid::torus1(64).unwrap();
    let target = TargetManifold::unit_circle();
    for formulation in [Formulation::Extrinsic, Formulation::Intrinsic] {
        let space = MapSpace::new(target, formulation).unwrap();
        let u = MapInit::Winding { k: 3 }.generate(&target, formulation, grid).unwrap();
        let flat = MetricField::sample(&MetricFamily::flat(1), &grid, 0.0).unwrap();
        let e = space.energy_density(&flat, &u).unwrap();
        // central differences of cos/sin see sin(kh)/h in place of k
        let h = grid.spacing(0);
        let exact = match formulation {
            Formulation::Extrinsic => ((3.0 * h).sin() / h).powi(2),
            Formulation::Intrinsic => 9.0,
        };
        assert!(e.values().iter().all(|v| (v - exact).abs() < 1e-10), "{formulation:?}");
        assert!((exact - 9.0).abs() < 9.0 * 9.0 * h * h / 3.0);
        let a = 0.7;
        let t = 0.4;
        let conf = MetricField::sample(&MetricFamily::conformal_exp(1, a), &grid, t).unwrap();
        let ec = space.energy_density(&conf, &u).unwrap();
        let scale = (-2.0 * a * t).exp();
        assert!(ec.values().iter().all(|v| (v - exact * scale).abs() < 1e-10));
    }
}

#[test]
fn constant_map_has_zero_energy_and_tension() {
    let grid = Grid::torus2(16, 16).unwrap();
    let target = TargetManifold::unit_sphere();
    let space = MapSpace::new(target, Formulation::Extrinsic).unwrap();
    let u = MapInit::Constant { value: vec![0.0, 0.0, 2.0] }
        .generate(&target, Formulation::Extrinsic, grid)
        .unwrap();
    let mf = MetricField::sample(&MetricFamily::aniso_torus(2, 0.2, 1.0), &grid, 0.3).unwrap();
    assert_eq!(space.energy_density(&mf, &u).unwrap().sup_norm(), 0.0);
    assert_eq!(space.tension(&mf, &u).unwrap().sup_norm(), 0.0);
}

#[test]
fn geodesic_maps_have_vanishing_tension() {
    let grid = Grid::torus1(64).unwrap();
    let mf = MetricField::sample(&MetricFamily::flat(1), &grid, 0.0).unwrap();
    let cases = [
        (TargetManifold::unit_circle(), MapInit::Winding { k: 2 }),
        (TargetManifold::unit_sphere(), MapInit::GreatCircle),
    ];
    for (target, init) in cases {
        for formulation in [Formulation::Extrinsic, Formulation::Intrinsic] {
            let space = MapSpace::new(target, formulation).unwrap();
            let u = init.generate(&target, formulation, grid).unwrap();
            let tau = space.tension(&mf, &u).unwrap();
            assert!(tau.sup_norm() < 1e-12, "{} {formulation:?}: {}", target.label(), tau.sup_norm());
        }
    }
}

#[test]
fn sphere_nonlinearity_identity() {
    // -pi_BC(F) <grad F^B, grad F^C> = |grad F|^2 F at on-sphere points with
    // tangent gradients, for a non-flat domain metric
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(19);
    let target = TargetManifold::unit_sphere();
    let ginv = [[1.3, 0.2], [0.2, 0.7]];
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let z: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = crate::target::norm(&z);
        let f: Vec<f64> = z.iter().map(|v| v / n).collect();
        let mut grads = [[0.0; 3]; 2];
        for g in grads.iter_mut() {
            for v in g.iter_mut() {
                *v = rng.gen_range(-2.0..2.0);
            }
            target.tangent_project(&f, g);
        }
        let mut pairs = [0.0; 9];
        let mut g2 = 0.0;
        for b in 0..3 {
            for c in 0..3 {
                for i in 0..2 {
                    for j in 0..2 {
                        pairs[b * 3 + c] += ginv[i][j] * grads[i][b] * grads[j][c];
                    }
                }
            }
            g2 += pairs[b * 3 + b];
        }
        let nl = target.hessian_contraction(&f, &pairs).unwrap();
        for a in 0..3 {
            worst = worst.max((nl[a] - g2 * f[a]).abs());
        }
    }
    assert!(worst < 1e-10, "{worst}");
}

#[test]
fn stationary_winding_map_does_not_move() {
    let mut cfg = FlowRunConfig::new(
        "stationary",
        MetricFamily::flat(1),
        Grid::torus1(64).unwrap(),
        TargetManifold::unit_circle(),
        MapInit::Winding { k: 2 },
        0.5,
    );
    cfg.stationary = true;
    let run = run_flow(&cfg).unwrap();
    assert!(run.report.passed(), "{}", run.report.to_markdown());
    assert!(run.report.entry("stationarity").unwrap().pass);
    let mono = run.report.entry("energy monotone").unwrap();
    assert!(mono.pass);
}

/// theta + 0.3 sin(theta) relaxes like the scalar heat equation in the lift.
fn lift_error(metric: MetricFamily, n: usize, formulation: Formulation, t_end: f64, sigma: f64) -> (f64, f64) {
    let solver = circle_solver(metric, n, formulation);
    let target = TargetManifold::unit_circle();
    let init = MapInit::PerturbedWinding { k: 1, amplitude: 0.3 }
        .generate(&target, formulation, *solver.grid())
        .unwrap();
    let state = solver.prepare(init).unwrap();
    let (end, stats) = solver.advance(state, &[t_end], |_, _| Ok(())).unwrap();
    assert_eq!(end.time(), t_end);
    let grid = *solver.grid();
    let mut err: f64 = 0.0;
    for idx in 0..grid.len() {
        let x = grid.coords(idx)[0];
        let exact = x + 0.3 * (-sigma).exp() * x.sin();
        err = err.max(wrap(lift_of(solver.space(), &end.map, idx) - exact).abs());
    }
    (err, stats.max_dt)
}

#[test]
fn circle_flow_matches_heat_solution_in_the_lift() {
    for formulation in [Formulation::Intrinsic, Formulation::Extrinsic] {
        let mut errs = Vec::new();
        for n in [32, 64] {
            let (err, dt) = lift_error(MetricFamily::flat(1), n, formulation, 0.5, 0.5);
            let h = TAU / n as f64;
            assert!(err <= 5.0 * (h * h + dt * dt), "{formulation:?} n={n}: {err}");
            errs.push(err);
        }
        let order = (errs[0] / errs[1]).log2();
        assert!((order - 2.0).abs() < 0.3, "{formulation:?} order {order}");
    }
}

#[test]
fn circle_flow_under_conformal_metric_follows_reparametrized_time() {
    let a: f64 = 0.5;
    let t = 0.6;
    let sigma = (1.0 - (-2.0 * a * t).exp()) / (2.0 * a);
    for formulation in [Formulation::Intrinsic, Formulation::Extrinsic] {
        let n = 64;
        let (err, dt) = lift_error(MetricFamily::conformal_exp(1, a), n, formulation, t, sigma);
        let h = TAU / n as f64;
        assert!(err <= 5.0 * (h * h + dt * dt), "{formulation:?}: {err}");
    }
}

#[test]
fn intrinsic_and_extrinsic_sphere_flows_agree() {
    let metric = MetricFamily::aniso_torus(1, 0.2, 1.0);
    let target = TargetManifold::unit_sphere();
    let init = MapInit::RandomSmooth {
        seed: 3,
        bandlimit: 2,
        amplitude: 0.4,
    };
    let mut errs = Vec::new();
    for n in [32, 64] {
        let grid = Grid::torus1(n).unwrap();
        let mut ends = Vec::new();
        for formulation in [Formulation::Extrinsic, Formulation::Intrinsic] {
            let config = FlowConfig {
                formulation,
                ..FlowConfig::default()
            };
            let solver = FlowSolver::new(metric.clone(), grid, target, config).unwrap();
            let u0 = init.generate(&target, formulation, grid).unwrap();
            let s0 = solver.prepare(u0).unwrap();
            let (end, _) = solver.advance(s0, &[0.3], |_, _| Ok(())).unwrap();
            ends.push(solver.space().to_ambient(&end.map));
        }
        errs.push(ends[0].sup_distance(&ends[1]).unwrap());
    }
    assert!(errs[1] < 1e-2, "{errs:?}");
    assert!(errs[0] / errs[1] > 3.0, "{errs:?}");
}

#[test]
fn comparison_value_and_window() {
    assert!((comparison_value(2.0, 0.0, 1.0, 0.1) - 10.0 / 3.0).abs() < 1e-12);
    let w = existence_window(1.0, 0.0, 1.0, 10.0);
    assert!((w.t0 - 0.25).abs() < 1e-12);
    assert_eq!(existence_window(5.0, 0.3, 0.0, 2.0).t0, 2.0);
    assert_eq!(existence_window(0.0, 0.3, 1.0, 2.0).t0, 2.0);
    assert!(comparison_value(1.0, 0.0, 1.0, 0.5).is_infinite());
}

#[test]
fn great_circle_into_unit_sphere_window_is_a_quarter() {
    let mut cfg = FlowRunConfig::new(
        "great circle",
        MetricFamily::flat(1),
        Grid::torus1(64).unwrap(),
        TargetManifold::unit_sphere(),
        MapInit::GreatCircle,
        1.0,
    );
    cfg.flow.formulation = Formulation::Intrinsic;
    cfg.kappa = Some(1.0);
    let run = run_flow(&cfg).unwrap();
    assert!((run.window.e0 - 1.0).abs() < 1e-12);
    assert_eq!(run.window.k0, 0.0);
    assert!((run.window.t0 - 0.25).abs() < 1e-12);
    assert_eq!(run.final_state.time(), run.window.t0);
    assert!(run.report.passed(), "{}", run.report.to_markdown());
}

#[test]
fn declared_kappa_below_exact_is_rejected() {
    let mut cfg = FlowRunConfig::new(
        "bad kappa",
        MetricFamily::flat(1),
        Grid::torus1(16).unwrap(),
        TargetManifold::unit_sphere(),
        MapInit::GreatCircle,
        1.0,
    );
    cfg.kappa = Some(0.5);
    assert!(matches!(run_flow(&cfg), Err(Error::Config { .. })));
}

#[test]
fn perturbed_sphere_run_satisfies_bounds_and_restarts_exactly() {
    let mut cfg = FlowRunConfig::new(
        "perturbed",
        MetricFamily::conformal_exp(2, 0.3),
        Grid::torus2(16, 16).unwrap(),
        TargetManifold::unit_sphere(),
        MapInit::RandomSmooth {
            seed: 11,
            bandlimit: 2,
            amplitude: 0.3,
        },
        0.2,
    );
    cfg.restart_at = Some(0.07);
    let run = run_flow(&cfg).unwrap();
    assert!(run.report.passed(), "{}", run.report.to_markdown());
    let r = run.report.entry("restart consistency").unwrap();
    assert_eq!(r.fitted["difference"], 0.0);
}

#[test]
fn residual_shrinks_under_co_refinement() {
    for (metric, target) in [
        (MetricFamily::conformal_exp(1, 0.4), TargetManifold::unit_sphere()),
        (MetricFamily::aniso_torus(1, 0.3, 1.0), TargetManifold::unit_sphere()),
    ] {
        for kind in [ResidualKind::Energy, ResidualKind::TensionSq] {
            let mut res = Vec::new();
            for n in [64, 128] {
                let grid = Grid::torus1(n).unwrap();
                let solver = FlowSolver::new(metric.clone(), grid, target, FlowConfig::default()).unwrap();
                let u0 = MapInit::RandomSmooth {
                    seed: 5,
                    bandlimit: 2,
                    amplitude: 0.5,
                }
                .generate(&target, Formulation::Extrinsic, grid)
                .unwrap();
                let s = residual_after_steps(&solver, solver.prepare(u0).unwrap(), 0.05, kind).unwrap();
                res.push(s.sup_residual);
            }
            let ratio = res[0] / res[1];
            assert!((3.0..=5.0).contains(&ratio), "{} {kind:?}: {res:?}", metric.label());
        }
    }
}

#[test]
fn constant_map_residual_is_zero() {
    let grid = Grid::torus2(16, 16).unwrap();
    let target = TargetManifold::unit_sphere();
    let solver = FlowSolver::new(MetricFamily::conformal_exp(2, 0.3), grid, target, FlowConfig::default()).unwrap();
    let u0 = MapInit::Constant { value: vec![1.0, 1.0, 0.0] }
        .generate(&target, Formulation::Extrinsic, grid)
        .unwrap();
    for kind in [ResidualKind::Energy, ResidualKind::TensionSq] {
        let s = residual_after_steps(&solver, solver.prepare(u0.clone()).unwrap(), 0.1, kind).unwrap();
        assert_eq!(s.sup_residual, 0.0);
    }
}
