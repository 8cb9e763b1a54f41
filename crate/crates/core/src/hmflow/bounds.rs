//! Existence window, ODE comparison barrier, and the report entries for the
//! a priori bounds along a flow run.

use serde::{Deserialize, Serialize};

use super::run::FlowSample;
use super::{FlowSolver, FlowState};
use crate::error::Result;
use crate::geometry::AuditReport;
use crate::io;
use crate::report::BoundsEntry;

/// T0 = min{T, 1/(2 (2 kappa e0 e^K0))}, or T when kappa e0 = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExistenceWindow {
    pub e0: f64,
    pub k0: f64,
    pub kappa: f64,
    pub t_user: f64,
    pub t0: f64,
    /// end of the interval carrying the coarse bound 2 e0 e^K0
    pub t1: f64,
}

impl ExistenceWindow {
    /// v(t) = (1/e0 - 2 kappa e^K0 t)^(-1); infinite past the blow-up time.
    pub fn comparison(&self, t: f64) -> f64 {
        comparison_value(self.e0, self.k0, self.kappa, t)
    }

    pub fn contains(&self, t: f64) -> bool {
        t <= self.t0 * (1.0 + 1e-12)
    }
}

pub fn existence_window(e0: f64, k0: f64, kappa: f64, t_user: f64) -> ExistenceWindow {
    let t0 = if kappa == 0.0 || e0 == 0.0 {
        t_user
    } else {
        t_user.min(0.5 / (2.0 * kappa * e0 * k0.exp()))
    };
    ExistenceWindow {
        e0,
        k0,
        kappa,
        t_user,
        t0,
        t1: t0,
    }
}

pub fn comparison_value(e0: f64, k0: f64, kappa: f64, t: f64) -> f64 {
    if e0 <= 0.0 {
        return 0.0;
    }
    let d = 1.0 / e0 - 2.0 * kappa * k0.exp() * t;
    if d <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / d
    }
}

/// Relative slack of the energy comparison: 1e-3 + 10 (h^2 + dt).
pub fn energy_slack(h: f64, dt: f64) -> f64 {
    1e-3 + 10.0 * (h * h + dt)
}

/// Pointwise comparison bound, the coarse bound on [0, T1], and (for
/// kappa = 0 with K identically 0) monotonicity of sup e.
pub fn energy_bound_entries(
    samples: &[FlowSample],
    window: &ExistenceWindow,
    audit: &AuditReport,
    slack: f64,
) -> Vec<BoundsEntry> {
    let beyond = samples.iter().any(|s| !window.contains(s.t));
    let mut point = BoundsEntry::new("energy comparison", "e(F)(x,t) <= exp(lambda(t)) v(t)")
        .fit("e0", window.e0)
        .fit("K0", window.k0)
        .fit("kappa", window.kappa)
        .fit("slack", slack);
    let mut coarse = BoundsEntry::new("energy coarse bound", "e(F) <= 2 e0 exp(K0) on [0, T1]").fit("T1", window.t1);
    let mut worst_ratio: f64 = 0.0;
    for s in samples {
        if !window.contains(s.t) {
            continue;
        }
        let limit = audit.lambda(s.t).exp() * window.comparison(s.t) * (1.0 + slack);
        if limit.is_finite() && limit > 0.0 {
            worst_ratio = worst_ratio.max(s.sup_energy / limit);
        }
        point.record(s.t, s.sup_energy, limit, Some(s.argmax_energy), Some(s.argmax_coords));
        if s.t <= window.t1 * (1.0 + 1e-12) {
            coarse.record(
                s.t,
                s.sup_energy,
                2.0 * window.e0 * window.k0.exp() * (1.0 + slack),
                Some(s.argmax_energy),
                Some(s.argmax_coords),
            );
        }
    }
    point = point.fit("max ratio", worst_ratio);
    let mut out = vec![point, coarse];
    let k_zero = audit.samples.iter().all(|a| a.k == 0.0);
    if window.kappa == 0.0 && k_zero {
        let mut mono = BoundsEntry::new("energy monotone", "kappa = 0, K = 0: sup e(F) non-increasing");
        for w in samples.windows(2) {
            if window.contains(w[1].t) {
                mono.record(
                    w[1].t,
                    w[1].sup_energy,
                    w[0].sup_energy * (1.0 + slack),
                    Some(w[1].argmax_energy),
                    Some(w[1].argmax_coords),
                );
            }
        }
        out.push(mono);
    }
    if beyond {
        let late = samples.iter().filter(|s| !window.contains(s.t));
        let mut adv = BoundsEntry::new("energy comparison past T0", "no guarantee beyond T0").advisory(true);
        for s in late {
            let limit = audit.lambda(s.t).exp() * window.comparison(s.t) * (1.0 + slack);
            adv.record(s.t, s.sup_energy, limit, Some(s.argmax_energy), Some(s.argmax_coords));
        }
        out.push(adv);
    }
    out
}

/// Q(t) = sqrt(t) sup|tau|. Passes when finite; stationary scenarios also
/// require Q <= 10 (h^2 + dt).
pub fn tension_bound_entry(samples: &[FlowSample], window: &ExistenceWindow, stationary: Option<f64>) -> BoundsEntry {
    let mut e = BoundsEntry::new("tension decay", "|tau(F)|(x,t) <= C t^(-1/2)");
    let mut c: f64 = 0.0;
    let mut c_late: f64 = 0.0;
    for s in samples.iter().filter(|s| s.t > 0.0) {
        let q = s.t.sqrt() * s.sup_tension;
        if window.contains(s.t) {
            c = c.max(q);
            let limit = stationary.unwrap_or(f64::INFINITY);
            e.record(s.t, q, limit, Some(s.argmax_tension), None);
            if !q.is_finite() {
                e.pass = false;
            }
        } else {
            c_late = c_late.max(q);
        }
    }
    e = e.fit("C", c);
    if c_late > 0.0 {
        e = e.fit("C past T0", c_late);
    }
    e
}

/// Gluing check: the run stopped at `t_split`, written out and read back,
/// then continued, must match an uninterrupted run through the same stops.
pub fn restart_consistency(
    solver: &FlowSolver,
    initial: &FlowState,
    t_split: f64,
    stops: &[f64],
) -> Result<BoundsEntry> {
    let t_end = stops.last().copied().unwrap_or(t_split);
    let mut all: Vec<f64> = stops.iter().copied().filter(|&t| t > t_split).collect();
    let mut with_split = stops.iter().copied().filter(|&t| t < t_split).collect::<Vec<_>>();
    with_split.push(t_split);
    with_split.extend(all.iter().copied());
    let (a, _) = solver.advance(initial.clone(), &with_split, |_, _| Ok(()))?;
    let head: Vec<f64> = with_split.iter().copied().filter(|&t| t <= t_split).collect();
    let (mid, _) = solver.advance(initial.clone(), &head, |_, _| Ok(()))?;
    let bytes = io::encode_field(&mid.map);
    let restored = FlowState::new(io::decode_field(&bytes)?);
    all.retain(|&t| t > t_split);
    let (b, _) = solver.advance(restored, &all, |_, _| Ok(()))?;
    let diff = a.map.sup_distance(&b.map)?;
    let mut e = BoundsEntry::new("restart consistency", "glued solution equals the uninterrupted one")
        .fit("T_split", t_split)
        .fit("difference", diff);
    e.record(t_end, diff, 1e-10, None, None);
    Ok(e)
}
