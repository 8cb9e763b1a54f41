//! Property tests for the structural invariants.

use proptest::prelude::*;

use hmlab::exhaustion::{CutoffProfile, ConformalBlowup};
use hmlab::geometry::MetricField;
use hmlab::grid::{Field, Grid};
use hmlab::hmflow::{comparison_value, existence_window};
use hmlab::io::{decode_field, encode_field, fmt_f64};
use hmlab::linheat::{self, LinearHeatProblem, Outputs};
use hmlab::maps::ScalarInit;
use hmlab::metric::MetricFamily;
use hmlab::report::BoundsEntry;
use hmlab::stepping::StepPolicy;
use hmlab::target::TargetManifold;

fn family(i: usize, dim: usize, p: f64) -> MetricFamily {
    match i % 5 {
        0 => MetricFamily::flat(dim),
        1 => MetricFamily::conformal_exp(dim, p),
        2 => MetricFamily::conformal_root(dim),
        3 => MetricFamily::aniso_torus(dim, 0.5 * p, 1.0 + p),
        _ => MetricFamily::ricci_static_flat(dim, 0.5 * p),
    }
}

fn grid(dim: usize, n0: usize, n1: usize) -> Grid {
    if dim == 1 {
        Grid::torus1(n0).unwrap()
    } else {
        Grid::torus2(n0, n1).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn laplacian_integrates_to_zero(
        fam in 0usize..5, dim in 1usize..=2, p in -0.6f64..0.6,
        n0 in 8usize..24, n1 in 8usize..24, seed in 0u64..1000, t in 0.0f64..2.0,
    ) {
        let g = grid(dim, n0, n1);
        let u = ScalarInit::RandomSmooth { seed, bandlimit: 3, amplitude: 1.0 }.generate(g);
        let mf = MetricField::sample(&family(fam, dim, p), &g, t).unwrap();
        let lap = mf.laplacian(&u).unwrap();
        let total = mf.integrate(&lap).unwrap();
        prop_assert!(total.abs() <= 1e-11 * (1.0 + lap.sup_norm()), "{total}");
    }

    #[test]
    fn steps_land_on_the_stop(remaining in 1e-6f64..10.0, limit in 1e-4f64..1.0) {
        let mut left = remaining;
        let mut steps = 0;
        while left > 0.0 && steps < 200_000 {
            let dt = StepPolicy::next_dt(left, limit);
            prop_assert!(dt <= limit * (1.0 + 1e-8));
            prop_assert!(dt > 0.0);
            left -= dt;
            if left.abs() <= 1e-12 * remaining { break; }
            steps += 1;
        }
        prop_assert!(left.abs() <= 1e-12 * remaining);
    }

    #[test]
    fn sphere_projection_is_a_retraction(
        r in 0.2f64..5.0, q in 2usize..=4, scale in 0.55f64..3.0, dir in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        let target = TargetManifold::sphere(r, q).unwrap();
        let d: Vec<f64> = dir[..q].to_vec();
        let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(n > 1e-3);
        let z: Vec<f64> = d.iter().map(|v| v / n * r * scale).collect();
        let p = target.project(&z).unwrap();
        prop_assert!(target.distance(&p) <= 1e-12 * r);
        let pp = target.project(&p).unwrap();
        for (a, b) in p.iter().zip(&pp) {
            prop_assert!((a - b).abs() <= 1e-14 * r.max(1.0));
        }
    }

    #[test]
    fn projection_refuses_the_inner_shell(r in 0.2f64..5.0, frac in 0.0f64..0.5) {
        let target = TargetManifold::sphere(r, 3).unwrap();
        prop_assert!(target.project(&[r * frac, 0.0, 0.0]).is_err());
    }

    #[test]
    fn field_dumps_round_trip(
        dim in 1usize..=2, n0 in 8usize..20, n1 in 8usize..20, comps in 1usize..=4,
        t in -1e3f64..1e3, lift in -10.0f64..10.0, seed in 0u64..1000,
    ) {
        let g = grid(dim, n0, n1);
        let mut f = Field::zeros(g, comps).with_time(t).with_lift(0, 0, lift);
        let s = ScalarInit::RandomSmooth { seed, bandlimit: 2, amplitude: 3.0 }.generate(g);
        for c in 0..comps {
            for i in 0..g.len() {
                f.set(c, i, s.get(0, i) * (c as f64 + 1.0));
            }
        }
        let back = decode_field(&encode_field(&f)).unwrap();
        prop_assert_eq!(back.values(), f.values());
        prop_assert_eq!(back.lifts(), f.lifts());
        prop_assert_eq!(back.time.to_bits(), f.time.to_bits());
    }

    #[test]
    fn csv_cells_round_trip(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        let back: f64 = fmt_f64(v).parse().unwrap();
        prop_assert_eq!(back.to_bits(), v.to_bits());
    }

    #[test]
    fn entry_fails_iff_a_margin_is_negative(
        obs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..20),
    ) {
        let mut e = BoundsEntry::new("p", "value <= limit");
        for (k, (v, l)) in obs.iter().enumerate() {
            e.record(k as f64, *v, *l, None, None);
        }
        let any_bad = obs.iter().any(|(v, l)| l - v < 0.0);
        prop_assert_eq!(e.pass, !any_bad);
        prop_assert_eq!(e.violation.is_some(), any_bad);
        prop_assert!(serde_json::to_string(&e).is_ok());
    }

    #[test]
    fn entry_json_survives_non_finite_values(v in prop::sample::select(vec![f64::NAN, f64::INFINITY, f64::NEG_INFINITY])) {
        let mut e = BoundsEntry::new("p", "value <= limit").fit("C", v);
        e.record(0.0, v, 1.0, None, None);
        let json = serde_json::to_string(&e).unwrap();
        let back: BoundsEntry = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back.pass, e.pass);
        prop_assert!(!e.pass || v == f64::NEG_INFINITY);
    }

    #[test]
    fn window_never_exceeds_the_horizon(
        e0 in 0.0f64..10.0, k0 in 0.0f64..3.0, kappa in 0.0f64..4.0, t in 0.01f64..5.0,
    ) {
        let w = existence_window(e0, k0, kappa, t);
        prop_assert!(w.t0 <= t && w.t0 > 0.0);
        // the comparison function stays finite and increasing inside the window
        let a = comparison_value(e0, k0, kappa, 0.5 * w.t0);
        let b = comparison_value(e0, k0, kappa, w.t0);
        prop_assert!(a.is_finite() && b.is_finite() && a <= b);
        prop_assert!((comparison_value(e0, k0, kappa, 0.0) - e0).abs() <= 1e-12 * e0.max(1.0));
    }

    #[test]
    fn heat_obeys_the_maximum_principle(
        fam in 0usize..5, p in -0.5f64..0.5, n in 16usize..48, seed in 0u64..1000,
    ) {
        let g = Grid::torus1(n).unwrap();
        let init = ScalarInit::RandomSmooth { seed, bandlimit: 3, amplitude: 1.0 }.generate(g);
        let (lo, hi) = (init.min(), init.max());
        let prob = LinearHeatProblem::new(family(fam, 1, p), g, init, 0.3)
            .with_outputs(Outputs::Times(vec![0.1, 0.2]));
        let (s, e) = linheat::solve_homogeneous(&prob).unwrap();
        prop_assert!(e.pass);
        for u in &s.fields {
            prop_assert!(u.min() >= lo - 1e-8 && u.max() <= hi + 1e-8);
        }
    }

    #[test]
    fn cutoff_profile_shape(chi in 0.01f64..0.124, s in 0.0f64..0.999) {
        let p = CutoffProfile::new(chi).unwrap();
        prop_assert!(p.zero_boundary() < p.ramp_end() && p.ramp_end() < 1.0);
        let f = p.big_f(s);
        prop_assert!(f >= 0.0);
        if s <= p.zero_boundary() {
            prop_assert_eq!(f, 0.0);
        }
        let phi = p.phi(s);
        prop_assert!((0.0..=1.0).contains(&phi));
        prop_assert!(p.big_f(s.min(0.998) + 1e-3) >= f);
    }

    #[test]
    fn blowup_needs_the_centre_in_the_zero_region(rho in 0.1f64..1.0) {
        let p = CutoffProfile::new(1.0 / 16.0).unwrap();
        prop_assert!(ConformalBlowup::new(p, rho).is_err());
    }
}
