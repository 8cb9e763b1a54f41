//! A complete flow run: integration inside the existence window, diagnostics
//! at the output times and the bounds report.

use serde::{Deserialize, Serialize};

use super::bounds::{self, ExistenceWindow};
use super::residual::{residual_after_steps, ResidualKind};
use super::{AdvanceStats, FlowConfig, FlowSolver, FlowState};
use crate::error::{Error, Result};
use crate::geometry::{assumption_audit, AuditLimits, AuditReport, GeometrySnapshot, MetricField};
use crate::grid::{Field, Grid};
use crate::maps::MapInit;
use crate::metric::MetricFamily;
use crate::report::{BoundsEntry, BoundsReport};
use crate::target::{TargetKind, TargetManifold};

/// Number of uniform times added to the output times for the audit.
pub const AUDIT_UNIFORM_TIMES: usize = 32;

#[derive(Debug, Clone)]
pub struct FlowRunConfig {
    pub name: String,
    pub metric: MetricFamily,
    pub grid: Grid,
    pub target: TargetManifold,
    pub init: MapInit,
    pub flow: FlowConfig,
    pub t_end: f64,
    /// output times in (0, t_end]; empty means ten uniform times
    pub outputs: Vec<f64>,
    /// declared upper curvature bound of the target, at least the exact one
    pub kappa: Option<f64>,
    pub past_t0: bool,
    /// initial data is harmonic and the metric static
    pub stationary: bool,
    pub audit: AuditLimits,
    /// time of the co-refinement residual check against the half grid
    pub residual_at: Option<f64>,
    pub restart_at: Option<f64>,
    pub keep_states: bool,
}

impl FlowRunConfig {
    pub fn new(
        name: impl Into<String>,
        metric: MetricFamily,
        grid: Grid,
        target: TargetManifold,
        init: MapInit,
        t_end: f64,
    ) -> Self {
        Self {
            name: name.into(),
            metric,
            grid,
            target,
            init,
            flow: FlowConfig::default(),
            t_end,
            outputs: Vec::new(),
            kappa: None,
            past_t0: false,
            stationary: false,
            audit: AuditLimits::default(),
            residual_at: None,
            restart_at: None,
            keep_states: false,
        }
    }

    pub fn output_times(&self) -> Vec<f64> {
        if self.outputs.is_empty() {
            (1..=10).map(|k| self.t_end * k as f64 / 10.0).collect()
        } else {
            self.outputs.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::config("time.t_end", "must be positive and finite"));
        }
        let outs = self.output_times();
        if outs.iter().any(|&t| !(t > 0.0 && t <= self.t_end)) || outs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("output.times", "must increase strictly inside (0, t_end]"));
        }
        if let Some(k) = self.kappa {
            if !(k.is_finite() && k >= self.target.kappa()) {
                return Err(Error::config(
                    "flow.kappa",
                    format!("declared {k} is below the target curvature {}", self.target.kappa()),
                ));
            }
        }
        if let Some(t) = self.restart_at {
            if !(t > 0.0 && t < self.t_end) {
                return Err(Error::config("flow.restart_at", "must lie inside (0, t_end)"));
            }
        }
        if let Some(t) = self.residual_at {
            if !(t >= 0.0 && t < self.t_end) {
                return Err(Error::config("flow.residual_at", "must lie inside [0, t_end)"));
            }
            if (0..self.grid.dim()).any(|a| self.grid.size(a) % 2 == 1) {
                return Err(Error::config("flow.residual_at", "needs even grid sizes"));
            }
        }
        Ok(())
    }
}

/// Diagnostics at one output time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowSample {
    pub t: f64,
    pub sup_energy: f64,
    pub argmax_energy: usize,
    pub argmax_coords: [f64; 2],
    pub sup_tension: f64,
    pub argmax_tension: usize,
    /// integral of e(F) against dV_t
    pub energy: f64,
    pub sup_ddf: f64,
    /// max over x of |tau| - sqrt(m) |DdF|
    pub tension_excess: f64,
    pub drift: f64,
    /// sup |F(t) - F(0)|
    pub displacement: f64,
    pub lambda: f64,
    pub comparison: f64,
}

impl FlowSample {
    pub fn q(&self) -> f64 {
        self.t.sqrt() * self.sup_tension
    }
}

#[derive(Debug, Clone)]
pub struct FlowRun {
    pub window: ExistenceWindow,
    pub audit: AuditReport,
    pub samples: Vec<FlowSample>,
    pub report: BoundsReport,
    pub stats: AdvanceStats,
    pub states: Vec<FlowState>,
    pub final_state: FlowState,
}

impl FlowRun {
    pub const CSV_HEADER: [&'static str; 9] = [
        "t",
        "sup_e",
        "sup_tau",
        "sqrt_t_sup_tau",
        "energy",
        "energy_limit",
        "energy_margin",
        "drift",
        "sup_ddf",
    ];

    pub fn csv_rows(&self) -> Vec<Vec<f64>> {
        let slack = self
            .report
            .entry("energy comparison")
            .and_then(|e| e.fitted.get("slack").copied())
            .unwrap_or(0.0);
        self.samples
            .iter()
            .map(|s| {
                let limit = s.lambda.exp() * s.comparison * (1.0 + slack);
                vec![
                    s.t,
                    s.sup_energy,
                    s.sup_tension,
                    s.q(),
                    s.energy,
                    limit,
                    limit - s.sup_energy,
                    s.drift,
                    s.sup_ddf,
                ]
            })
            .collect()
    }
}

fn sample(
    solver: &FlowSolver,
    state: &FlowState,
    initial: &Field,
    audit: &AuditReport,
    window: Option<&ExistenceWindow>,
) -> Result<FlowSample> {
    let space = solver.space();
    let grid = *solver.grid();
    let m = grid.dim();
    let t = state.time();
    let snap = GeometrySnapshot::build(solver.metric(), &grid, t)?;
    let mf: &MetricField = snap.metric();
    let e = space.energy_density(mf, &state.map)?;
    let tau = space.tension(mf, &state.map)?;
    let tn = space.tension_norm(&state.map, &tau);
    let dd = space.ddf_norm_sq(&snap, &state.map)?;
    let (mut se, mut ie) = (f64::NEG_INFINITY, 0);
    let (mut st, mut it) = (0.0f64, 0);
    let mut sdd: f64 = 0.0;
    let mut excess = f64::NEG_INFINITY;
    for idx in 0..grid.len() {
        let ev = e.get(0, idx);
        if ev > se {
            se = ev;
            ie = idx;
        }
        let tv = tn.get(0, idx);
        if tv > st {
            st = tv;
            it = idx;
        }
        let d = dd.get(0, idx).max(0.0).sqrt();
        sdd = sdd.max(d);
        excess = excess.max(tv - (m as f64).sqrt() * d);
    }
    Ok(FlowSample {
        t,
        sup_energy: se,
        argmax_energy: ie,
        argmax_coords: grid.coords(ie),
        sup_tension: st,
        argmax_tension: it,
        energy: mf.integrate(&e)?,
        sup_ddf: sdd,
        tension_excess: excess,
        drift: space.drift(&state.map),
        displacement: state.map.sup_distance(initial)?,
        lambda: audit.lambda(t),
        comparison: window.map_or(f64::NAN, |w| w.comparison(t)),
    })
}

fn audit_times(outputs: &[f64], t_end: f64) -> Vec<f64> {
    let mut ts: Vec<f64> = outputs.to_vec();
    ts.extend((1..=AUDIT_UNIFORM_TIMES).map(|k| t_end * k as f64 / AUDIT_UNIFORM_TIMES as f64));
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * t_end);
    ts
}

fn sphere_radius(target: &TargetManifold) -> Option<f64> {
    match target.kind() {
        TargetKind::Sphere { radius } => Some(radius),
        TargetKind::Euclidean => None,
    }
}

/// Builds the solver and the projected initial state for `config` on `grid`.
pub fn prepare_flow(config: &FlowRunConfig, grid: Grid) -> Result<(FlowSolver, FlowState)> {
    let solver = FlowSolver::new(config.metric.clone(), grid, config.target, config.flow)?;
    let map = config.init.generate(&config.target, config.flow.formulation, grid)?;
    let state = solver.prepare(map.with_time(0.0))?;
    Ok((solver, state))
}

pub fn run_flow(config: &FlowRunConfig) -> Result<FlowRun> {
    config.validate()?;
    let (solver, initial) = prepare_flow(config, config.grid)?;
    let grid = config.grid;
    let m = grid.dim();
    let h = grid.min_spacing();
    let outputs = config.output_times();
    let audit = assumption_audit(&config.metric, &grid, &audit_times(&outputs, config.t_end), config.audit)?;
    let mf0 = MetricField::sample(&config.metric, &grid, 0.0)?;
    let e0 = solver.space().energy_density(&mf0, &initial.map)?.max();
    let kappa = config.kappa.unwrap_or(config.target.kappa());
    let window = bounds::existence_window(e0, audit.k0, kappa, config.t_end);
    let t_stop = if config.past_t0 { config.t_end } else { window.t0 };
    let mut stops: Vec<f64> = outputs.iter().copied().filter(|&t| t < t_stop * (1.0 - 1e-12)).collect();
    stops.push(t_stop);

    let mut samples = vec![sample(&solver, &initial, &initial.map, &audit, Some(&window))?];
    let mut states = Vec::new();
    if config.keep_states {
        states.push(initial.clone());
    }
    let mut last_good = initial.clone();
    let outcome = solver.advance(initial.clone(), &stops, |s, at_stop| {
        if at_stop {
            samples.push(sample(&solver, s, &initial.map, &audit, Some(&window))?);
            if config.keep_states {
                states.push(s.clone());
            }
            last_good = s.clone();
        }
        Ok(())
    });
    let mut report = BoundsReport::new(config.name.clone());
    let (final_state, stats, failure) = match outcome {
        Ok((s, st)) => (s, st, None),
        Err(e) => (last_good, AdvanceStats::default(), Some(e)),
    };
    let dt = if stats.max_dt > 0.0 {
        stats.max_dt
    } else {
        solver.step_limit(0.0)?
    };
    let disc = 10.0 * (h * h + dt);

    let mut win = BoundsEntry::new("existence window", "flow exists on [0, T0], T0 = min{T, 1/(4 kappa e0 exp(K0))}")
        .fit("T0", window.t0)
        .fit("e0", window.e0)
        .fit("K0", window.k0)
        .fit("kappa", window.kappa)
        .fit("reached", final_state.time());
    if let Some(err) = &failure {
        win.record(final_state.time(), final_state.time(), t_stop, None, None);
        win = win.note(format!("solver error after t = {}: {err}", final_state.time()));
        win.pass = false;
    } else if config.t_end > window.t0 && !config.past_t0 {
        win = win.note("stopped at T0");
    }
    report.push(win);
    report.extend(bounds::energy_bound_entries(
        &samples,
        &window,
        &audit,
        bounds::energy_slack(h, dt),
    ));
    let stationary = config.stationary.then_some(disc);
    report.push(bounds::tension_bound_entry(&samples, &window, stationary));
    if config.stationary {
        let mut st = BoundsEntry::new("stationarity", "harmonic data on a static metric does not move");
        for s in &samples[1..] {
            st.record(s.t, s.displacement, 10.0 * (h * h + dt * dt) * s.t, None, None);
        }
        report.push(st);
    }
    if let Some(r) = sphere_radius(&config.target) {
        if config.flow.formulation == crate::maps::Formulation::Extrinsic {
            let mut d = BoundsEntry::new("target drift", "F stays on N after re-projection");
            for s in &samples {
                d.record(s.t, s.drift, super::DRIFT_TOL * r, None, None);
            }
            report.push(d);
        }
    }
    let sup_dd = samples.iter().map(|s| s.sup_ddf).fold(0.0, f64::max);
    let mut tr = BoundsEntry::new("trace inequality", "|tau| <= sqrt(m) |DdF|");
    for s in &samples {
        tr.record(s.t, s.tension_excess, disc * (1.0 + (m as f64).sqrt() * sup_dd), None, None);
    }
    report.push(tr);
    if config.metric.is_static() {
        let mut en = BoundsEntry::new("total energy", "static metric: integral of e(F) non-increasing");
        for w in samples.windows(2) {
            let limit = w[0].energy * (1.0 + disc * (w[1].t - w[0].t)) + 1e-12 * samples[0].energy.max(1.0);
            en.record(w[1].t, w[1].energy, limit, None, None);
        }
        report.push(en);
    }
    if failure.is_none() {
        if let Some(ts) = config.restart_at.filter(|&t| t < t_stop) {
            report.push(bounds::restart_consistency(&solver, &initial, ts, &stops)?);
        }
        if let Some(ts) = config.residual_at.filter(|&t| t < t_stop) {
            report.extend(residual_entries(config, &solver, &initial, ts)?);
        }
    }
    Ok(FlowRun {
        window,
        audit,
        samples,
        report,
        stats,
        states,
        final_state,
    })
}

/// Residual of the evolution identities on this grid and on the half grid.
/// The fine residual must be at most half the coarse one unless both sit at
/// rounding level.
fn residual_entries(
    config: &FlowRunConfig,
    solver: &FlowSolver,
    initial: &FlowState,
    t_star: f64,
) -> Result<Vec<BoundsEntry>> {
    let grid = config.grid;
    let sizes: Vec<usize> = (0..grid.dim()).map(|a| grid.size(a) / 2).collect();
    let periods: Vec<f64> = (0..grid.dim()).map(|a| grid.period(a)).collect();
    let coarse_grid = Grid::new(&sizes, &periods)?;
    let (coarse, coarse_init) = prepare_flow(config, coarse_grid)?;
    let mut out = Vec::new();
    for kind in [ResidualKind::Energy, ResidualKind::TensionSq] {
        let fine = residual_after_steps(solver, initial.clone(), t_star, kind)?;
        let crs = residual_after_steps(&coarse, coarse_init.clone(), t_star, kind)?;
        let floor = 1e-9 * fine.sup_lhs.max(crs.sup_lhs).max(1.0);
        let ratio = if fine.sup_residual > 0.0 {
            crs.sup_residual / fine.sup_residual
        } else {
            f64::INFINITY
        };
        let mut e = BoundsEntry::new(
            format!("{} evolution residual", kind.label()),
            "discrete (d/dt - Delta) identity, residual shrinks under co-refinement",
        )
        .fit("fine", fine.sup_residual)
        .fit("coarse", crs.sup_residual)
        .fit("ratio", ratio);
        let rounding = fine.sup_residual <= floor && crs.sup_residual <= floor;
        if rounding {
            e = e.note("both residuals at rounding level");
        } else {
            e.record(fine.t, fine.sup_residual, 0.5 * crs.sup_residual, Some(fine.point), None);
        }
        out.push(e);
    }
    Ok(out)
}
