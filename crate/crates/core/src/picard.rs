//! Picard iteration for the semilinear system
//! (d/dt - Delta) u^A = F^A_BC(u) <grad u^B, grad u^C>, u(0) = f,
//! with the nonlinearity frozen at the previous iterate, and the bookkeeping
//! of its contraction argument.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::MetricField;
use crate::grid::{Field, Grid};
use crate::hmflow::diagnostics::{gradient_pairs, point_jet};
use crate::hmflow::{FlowConfig, FlowSolver, FlowState};
use crate::linheat::{self, MetricClock, Outputs};
use crate::maps::{Formulation, MAX_COMPONENTS};
use crate::metric::MetricFamily;
use crate::report::BoundsEntry;
use crate::stepping::{self, StepPolicy};
use crate::target::{TargetKind, TargetManifold};

pub const DEFAULT_CONV_TOL: f64 = 1e-9;
pub const DEFAULT_K_MAX: usize = 50;
/// Slack on the ledger conclusion C1 T1^(1/2) p_k <= 1/2.
pub const LEDGER_SLACK: f64 = 1e-6;

/// out^A = F^A_BC(u) P^BC with P row-major q x q.
pub type CoefficientFn = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
pub enum Coefficients {
    Zero { q: usize },
    /// F^A_BC = -pi^A_BC, the Hessian of the nearest-point projection
    Target(TargetManifold),
    Custom {
        label: String,
        q: usize,
        /// declared sup |F_BC|
        bound: f64,
        f: CoefficientFn,
    },
}

impl fmt::Debug for Coefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl Coefficients {
    pub fn label(&self) -> String {
        match self {
            Coefficients::Zero { q } => format!("zero(q={q})"),
            Coefficients::Target(t) => format!("projection-hessian({})", t.label()),
            Coefficients::Custom { label, .. } => label.clone(),
        }
    }

    pub fn components(&self) -> usize {
        match self {
            Coefficients::Zero { q } | Coefficients::Custom { q, .. } => *q,
            Coefficients::Target(t) => t.ambient_dim(),
        }
    }

    /// L = sup |F_BC| (for each A the Frobenius norm over B, C).
    pub fn bound(&self) -> f64 {
        match self {
            Coefficients::Zero { .. } => 0.0,
            Coefficients::Target(t) => t.tube_bounds().hessian,
            Coefficients::Custom { bound, .. } => *bound,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Coefficients::Zero { .. })
    }

    pub fn apply(&self, u: &[f64], pairs: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            Coefficients::Zero { .. } => out.iter_mut().for_each(|v| *v = 0.0),
            Coefficients::Target(t) => {
                t.check_tube(u)?;
                t.hessian_contraction_into(u, pairs, out);
            }
            Coefficients::Custom { f, .. } => f(u, pairs, out),
        }
        Ok(())
    }

    /// max_A (sum_BC (F^A_BC(u))^2)^(1/2), read off by contracting with
    /// symmetric unit pairs.
    pub fn norm_at(&self, u: &[f64]) -> Result<f64> {
        let q = self.components();
        let mut acc = vec![0.0; q];
        let mut pairs = vec![0.0; q * q];
        let mut out = vec![0.0; q];
        for b in 0..q {
            for c in b..q {
                pairs.iter_mut().for_each(|v| *v = 0.0);
                pairs[b * q + c] = 1.0;
                pairs[c * q + b] = 1.0;
                self.apply(u, &pairs, &mut out)?;
                for a in 0..q {
                    // F_bc and F_cb both carry out/2 when b != c
                    let v = if b == c { out[a] } else { 0.5 * out[a] };
                    let mult = if b == c { 1.0 } else { 2.0 };
                    acc[a] += mult * v * v;
                }
            }
        }
        Ok(acc.into_iter().fold(0.0, f64::max).sqrt())
    }
}

#[derive(Debug, Clone)]
pub struct SemiLinearProblem {
    pub metric: MetricFamily,
    pub grid: Grid,
    pub coefficients: Coefficients,
    pub initial: Field,
    /// outer time T bounding the window T1
    pub horizon: f64,
    pub policy: StepPolicy,
}

impl SemiLinearProblem {
    pub fn new(metric: MetricFamily, grid: Grid, coefficients: Coefficients, initial: Field, horizon: f64) -> Self {
        Self {
            metric,
            grid,
            coefficients,
            initial: initial.with_time(0.0),
            horizon,
            policy: StepPolicy::euler(),
        }
    }

    pub fn with_policy(mut self, policy: StepPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.metric.dim() != self.grid.dim() {
            return Err(Error::InvalidInput("metric and grid dimensions differ".into()));
        }
        if *self.initial.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let q = self.coefficients.components();
        if q == 0 || q > MAX_COMPONENTS || self.initial.components() != q {
            return Err(Error::InvalidInput(format!(
                "initial map has {} components, coefficients expect {q} (at most {MAX_COMPONENTS})",
                self.initial.components()
            )));
        }
        if self.initial.lifts().iter().any(|l| l[0] != 0.0 || l[1] != 0.0) {
            return Err(Error::InvalidInput("the semilinear system needs unlifted ambient data".into()));
        }
        if !self.initial.all_finite() {
            return Err(Error::InvalidInput("initial map is not finite".into()));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::config("picard.horizon", "must be positive and finite"));
        }
        self.policy.validate()
    }

    pub fn bound(&self) -> f64 {
        self.coefficients.bound()
    }

    /// m = sup_M (sum_A |grad f^A|^2)^(1/2) at t = 0.
    pub fn gradient_scale(&self) -> Result<f64> {
        let mf = MetricField::sample(&self.metric, &self.grid, 0.0)?;
        Ok(mf.grad_norm_sq(&self.initial)?.max().max(0.0).sqrt())
    }

    /// F_BC(u) <grad u^B, grad u^C> at time `mf.time()`.
    pub fn nonlinearity(&self, mf: &MetricField, u: &Field, out: &mut Field) -> Result<()> {
        if self.coefficients.is_zero() {
            return Ok(());
        }
        let q = self.coefficients.components();
        let m = self.grid.dim();
        let mut pairs = [0.0; MAX_COMPONENTS * MAX_COMPONENTS];
        let mut nl = [0.0; MAX_COMPONENTS];
        for idx in 0..self.grid.len() {
            let jet = point_jet(u, idx, false);
            gradient_pairs(mf.ginv(idx), &jet, m, q, &mut pairs[..q * q]);
            self.coefficients.apply(&jet.f[..q], &pairs[..q * q], &mut nl[..q])?;
            for (a, v) in nl.iter().enumerate().take(q) {
                out.set(a, idx, *v);
            }
        }
        Ok(())
    }
}

/// Per-iteration bookkeeping.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IterationTrace {
    pub t1: f64,
    /// step times shared by every sweep
    pub times: Vec<f64>,
    /// p_k(t) at every step time (running sup over [0, t])
    pub p_series: Vec<Vec<f64>>,
    /// d_k = sup |u^k - u^(k-1)| over the window, for k >= 1 (index k - 1)
    pub d: Vec<f64>,
    /// sup over the window of |u^{k,A}| against sup|f^A| + T1 L p_(k-1)^2
    pub sweep_sup: Vec<f64>,
    pub sweep_sup_limit: Vec<f64>,
    pub bound: f64,
    pub gradient_scale: f64,
    pub converged: bool,
}

impl IterationTrace {
    pub fn iterations(&self) -> usize {
        self.p_series.len()
    }

    /// p_k(T1).
    pub fn p(&self) -> Vec<f64> {
        self.p_series.iter().map(|s| s.last().copied().unwrap_or(0.0)).collect()
    }

    /// max d_(k+1)/d_k over k >= 2 with d_k > 0.
    pub fn rate(&self) -> Option<f64> {
        // d[k - 1] = d_k
        let r = self
            .d
            .windows(2)
            .skip(1)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .fold(f64::NEG_INFINITY, f64::max);
        r.is_finite().then_some(r)
    }
}

#[derive(Debug, Clone)]
pub struct PicardResult {
    /// the last iterate at every step time
    pub series: Vec<Field>,
    pub trace: IterationTrace,
}

impl PicardResult {
    pub fn last(&self) -> &Field {
        self.series.last().expect("series holds the initial state")
    }
}

fn running_sup_gradient(mf_at: &mut MetricClock<'_>, fields: &[Field]) -> Result<Vec<f64>> {
    let mut run: f64 = 0.0;
    let mut out = Vec::with_capacity(fields.len());
    for u in fields {
        let g = mf_at.at(u.time)?.grad_norm_sq(u)?;
        run = run.max(g.max().max(0.0).sqrt());
        out.push(run);
    }
    Ok(out)
}

fn series_distance(a: &[Field], b: &[Field]) -> Result<f64> {
    let mut d: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        d = d.max(x.sup_distance(y)?);
    }
    Ok(d)
}

/// Iterates u^k on [0, t1]: u^(-1) = 0, each sweep a linear solve with the
/// nonlinearity of u^(k-1) at the same step times. Stops at d_k <= conv_tol.
pub fn picard_iterate(problem: &SemiLinearProblem, t1: f64, k_max: usize, conv_tol: f64) -> Result<PicardResult> {
    picard_trace(problem, t1, k_max, conv_tol).and_then(|r| {
        if r.trace.converged {
            Ok(r)
        } else {
            Err(Error::NoConvergence {
                iterations: r.trace.iterations(),
                last_difference: r.trace.d.last().copied().unwrap_or(f64::NAN),
            })
        }
    })
}

/// As [`picard_iterate`] but returns the trace without converging.
pub fn picard_trace(problem: &SemiLinearProblem, t1: f64, k_max: usize, conv_tol: f64) -> Result<PicardResult> {
    problem.validate()?;
    if !(t1 > 0.0 && t1 <= problem.horizon * (1.0 + 1e-12)) {
        return Err(Error::config("picard.t1", format!("must lie in (0, {}]", problem.horizon)));
    }
    if k_max == 0 || !(conv_tol > 0.0) {
        return Err(Error::config("picard.k_max", "k_max and conv_tol must be positive"));
    }
    let q = problem.coefficients.components();
    let l = problem.bound();
    let sup_f: Vec<f64> = (0..q)
        .map(|c| problem.initial.component(c).iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .collect();
    let mut trace = IterationTrace {
        t1,
        bound: l,
        gradient_scale: problem.gradient_scale()?,
        ..IterationTrace::default()
    };
    let mut clock = MetricClock::new(&problem.metric, problem.grid);
    let mut prev: Option<Vec<Field>> = None;
    let mut p_prev = 0.0;
    for _k in 0..k_max {
        let mut fclock = MetricClock::new(&problem.metric, problem.grid);
        let frozen = prev.as_ref();
        let times = &trace.times;
        let series = linheat::solve_with(
            &problem.metric,
            problem.grid,
            &problem.initial,
            0.0,
            t1,
            problem.policy,
            &Outputs::EveryStep,
            |t, out| {
                let Some(fields) = frozen else { return Ok(()) };
                let n = times
                    .binary_search_by(|s| s.total_cmp(&t))
                    .map_err(|_| Error::InvalidInput(format!("no frozen iterate at t = {t}")))?;
                problem.nonlinearity(fclock.at(t)?, &fields[n], out)
            },
        )?;
        if trace.times.is_empty() {
            trace.times = series.times.clone();
        } else if trace.times != series.times {
            return Err(Error::InvalidInput("sweeps used different step times".into()));
        }
        let fields = series.fields;
        let p = running_sup_gradient(&mut clock, &fields)?;
        let mut sup_u: f64 = 0.0;
        let mut limit = f64::INFINITY;
        for a in 0..q {
            let s = fields.iter().map(|u| u.component(a).iter().fold(0.0f64, |m, v| m.max(v.abs()))).fold(0.0, f64::max);
            let lim = sup_f[a] + t1 * l * p_prev * p_prev;
            if s - lim > sup_u - limit || limit.is_infinite() {
                sup_u = s;
                limit = lim;
            }
        }
        trace.sweep_sup.push(sup_u);
        trace.sweep_sup_limit.push(limit);
        p_prev = *p.last().expect("non-empty series");
        trace.p_series.push(p);
        let done = match &prev {
            Some(old) => {
                let d = series_distance(&fields, old)?;
                trace.d.push(d);
                d <= conv_tol
            }
            None => problem.coefficients.is_zero(),
        };
        prev = Some(fields);
        if done {
            trace.converged = true;
            break;
        }
    }
    Ok(PicardResult {
        series: prev.expect("at least one sweep"),
        trace,
    })
}

/// Smallest C1 with sqrt(T1) p_k <= C1 (T1 p_(k-1)^2 + sqrt(T1) m) for all
/// recorded k (p_(-1) = 0).
pub fn fit_c1(trace: &IterationTrace) -> f64 {
    let st = trace.t1.sqrt();
    let m = trace.gradient_scale;
    let p = trace.p();
    let mut c: f64 = 0.0;
    let mut prev = 0.0;
    for &pk in &p {
        let den = st * prev * prev + m;
        if den > 0.0 {
            c = c.max(pk / den);
        }
        prev = pk;
    }
    c
}

/// Contraction ledger: with the fitted C1, the smallness condition
/// C1^2 T1^(1/2) m <= 1/4 must hold and then C1 T1^(1/2) p_k <= 1/2 for all k.
pub fn contraction_ledger(trace: &IterationTrace) -> BoundsEntry {
    let c1 = fit_c1(trace);
    let st = trace.t1.sqrt();
    let m = trace.gradient_scale;
    let smallness = c1 * c1 * st * m;
    let mut e = BoundsEntry::new(
        "contraction ledger",
        "C1^2 T1^(1/2) m <= 1/4 implies C1 T1^(1/2) p_k <= 1/2",
    )
    .fit("C1", c1)
    .fit("T1", trace.t1)
    .fit("m", m)
    .fit("L", trace.bound)
    .fit("smallness", smallness);
    if let Some(r) = trace.rate() {
        e = e.fit("rho", r);
    }
    e.record(0.0, smallness, 0.25 + LEDGER_SLACK, None, None);
    for (k, pk) in trace.p().iter().enumerate() {
        e.record(k as f64, c1 * st * pk, 0.5 + LEDGER_SLACK, None, None);
    }
    if trace.iterations() < 3 {
        e = e.note("fewer than three iterations recorded");
    }
    e
}

/// Sup bound of every sweep against its own frozen forcing.
pub fn sweep_sup_entry(trace: &IterationTrace) -> BoundsEntry {
    let mut e = BoundsEntry::new("sweep sup bound", "sup|u^k| <= sup|f| + T1 L p_(k-1)^2");
    for (k, (v, l)) in trace.sweep_sup.iter().zip(&trace.sweep_sup_limit).enumerate() {
        e.record(k as f64, *v, l * (1.0 + linheat::SUP_SLACK), None, None);
    }
    e
}

/// Window selection T1^(1/2) = min{T^(1/2), C1^(-2) (1 + m)^(-1) / 4} with C1
/// fitted from a pilot run (on T, halved while the iterates leave the target's
/// tube); refits and shrinks until the smallness condition holds for the run
/// at T1 itself.
pub fn auto_t1(problem: &SemiLinearProblem, k_max: usize, conv_tol: f64) -> Result<f64> {
    let m = problem.gradient_scale()?;
    let mut pilot_t = problem.horizon;
    let pilot = loop {
        match picard_trace(problem, pilot_t, k_max.min(4), conv_tol) {
            Ok(r) => break r,
            Err(Error::OutsideTube { .. }) if pilot_t > problem.horizon * 1e-6 => pilot_t *= 0.5,
            Err(e) => return Err(e),
        }
    };
    let mut c1 = fit_c1(&pilot.trace);
    let mut t1 = pilot_t;
    for _ in 0..8 {
        if c1 == 0.0 {
            return Ok(t1);
        }
        let s = problem.horizon.sqrt().min(0.25 / (c1 * c1 * (1.0 + m)));
        t1 = t1.min(s * s);
        let run = picard_trace(problem, t1, k_max.min(4), conv_tol)?;
        let refit = fit_c1(&run.trace);
        if refit * refit * t1.sqrt() * m <= 0.25 {
            return Ok(t1);
        }
        c1 = refit;
    }
    Ok(t1)
}

/// The nonlinear system stepped directly with the same scheme and step times.
/// For projection-Hessian coefficients this is the unconstrained ambient flow.
pub fn direct_solve(problem: &SemiLinearProblem, t1: f64) -> Result<Vec<Field>> {
    problem.validate()?;
    if let Coefficients::Target(target) = &problem.coefficients {
        if matches!(target.kind(), TargetKind::Sphere { .. } | TargetKind::Euclidean) {
            let config = FlowConfig {
                formulation: Formulation::Extrinsic,
                policy: problem.policy,
                constrained: false,
            };
            let solver = FlowSolver::new(problem.metric.clone(), problem.grid, *target, config)?;
            let mut out = vec![problem.initial.clone()];
            solver.advance(FlowState::new(problem.initial.clone()), &[t1], |s, _| {
                out.push(s.map.clone());
                Ok(())
            })?;
            return Ok(out);
        }
    }
    let mut clock = MetricClock::new(&problem.metric, problem.grid);
    let mut u = problem.initial.clone();
    let mut out = vec![u.clone()];
    let mut buf = Field::zeros(problem.grid, u.components());
    while u.time < t1 {
        let t = u.time;
        let limit = problem.policy.limit(clock.at(t)?);
        let dt = StepPolicy::next_dt(t1 - t, limit);
        let arrived = t1 - t - dt <= 1e-14 * t1.abs().max(1.0);
        stepping::check_stable(clock.at(t + dt)?, t, dt)?;
        let mut next = stepping::step(
            problem.policy.scheme,
            &u,
            t,
            dt,
            |s, v| {
                let mf = clock.at(s)?;
                let mut r = mf.laplacian(v)?;
                buf.values_mut().iter_mut().for_each(|x| *x = 0.0);
                problem.nonlinearity(mf, v, &mut buf)?;
                r.add_scaled(1.0, &buf);
                Ok(r)
            },
            |_| Ok(()),
        )?;
        next.time = if arrived { t1 } else { t + dt };
        u = next;
        out.push(u.clone());
    }
    Ok(out)
}

/// sup over steps of the Euler residual (u_(n+1) - u_n)/dt - Delta u_n - N(u_n).
pub fn semilinear_residual(problem: &SemiLinearProblem, series: &[Field]) -> Result<f64> {
    let mut clock = MetricClock::new(&problem.metric, problem.grid);
    let mut worst: f64 = 0.0;
    let mut nl = Field::zeros(problem.grid, problem.coefficients.components());
    for w in series.windows(2) {
        let dt = w[1].time - w[0].time;
        let mf = clock.at(w[0].time)?;
        let lap = mf.laplacian(&w[0])?;
        nl.values_mut().iter_mut().for_each(|x| *x = 0.0);
        problem.nonlinearity(mf, &w[0], &mut nl)?;
        for i in 0..w[0].values().len() {
            let r = (w[1].values()[i] - w[0].values()[i]) / dt - lap.values()[i] - nl.values()[i];
            worst = worst.max(r.abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::MapInit;

    fn circle_problem(n: usize, amp: f64, horizon: f64) -> SemiLinearProblem {
        let grid = Grid::torus1(n).unwrap();
        let target = TargetManifold::unit_circle();
        let f = MapInit::PerturbedWinding { k: 1, amplitude: amp }
            .generate(&target, Formulation::Extrinsic, grid)
            .unwrap();
        SemiLinearProblem::new(MetricFamily::flat(1), grid, Coefficients::Target(target), f, horizon)
    }

    #[test]
    fn linear_case_converges_in_one_sweep() {
        let grid = Grid::torus1(32).unwrap();
        let f = Field::scalar_from_fn(grid, |x| x[0].sin());
        let p = SemiLinearProblem::new(MetricFamily::flat(1), grid, Coefficients::Zero { q: 1 }, f, 0.5);
        let r = picard_iterate(&p, 0.5, 10, 1e-9).unwrap();
        assert_eq!(r.trace.iterations(), 1);
        let ledger = contraction_ledger(&r.trace);
        assert_eq!(ledger.fitted["C1"], r.trace.p()[0] / r.trace.gradient_scale);
    }

    #[test]
    fn constant_map_is_a_fixed_point() {
        let grid = Grid::torus2(12, 12).unwrap();
        let target = TargetManifold::unit_sphere();
        let f = MapInit::Constant { value: vec![0.0, 1.0, 0.0] }
            .generate(&target, Formulation::Extrinsic, grid)
            .unwrap();
        let p = SemiLinearProblem::new(MetricFamily::conformal_exp(2, 0.2), grid, Coefficients::Target(target), f.clone(), 0.2);
        let r = picard_iterate(&p, 0.2, 10, 1e-12).unwrap();
        assert_eq!(r.trace.d, vec![0.0]);
        assert!(r.last().sup_distance(&f).unwrap() == 0.0);
    }

    #[test]
    fn circle_iteration_matches_direct_solver() {
        let p = circle_problem(64, 0.1, 1.0);
        let t1 = auto_t1(&p, DEFAULT_K_MAX, DEFAULT_CONV_TOL).unwrap();
        assert!(t1 > 0.0 && t1 < 1.0);
        let r = picard_iterate(&p, t1, DEFAULT_K_MAX, DEFAULT_CONV_TOL).unwrap();
        let direct = direct_solve(&p, t1).unwrap();
        assert_eq!(direct.len(), r.series.len());
        assert!(series_distance(&direct, &r.series).unwrap() <= 10.0 * DEFAULT_CONV_TOL);
        let ledger = contraction_ledger(&r.trace);
        assert!(ledger.pass, "{ledger:?}");
        assert!(r.trace.rate().unwrap() < 1.0);
        assert!(sweep_sup_entry(&r.trace).pass);
        assert!(semilinear_residual(&p, &r.series).unwrap() < 1e-5);
    }

    #[test]
    fn halving_the_window_keeps_convergence() {
        let p = circle_problem(32, 0.2, 0.2);
        let r = picard_iterate(&p, 0.05, DEFAULT_K_MAX, DEFAULT_CONV_TOL).unwrap();
        let half = picard_iterate(&p, 0.025, DEFAULT_K_MAX, DEFAULT_CONV_TOL).unwrap();
        assert!(half.trace.iterations() <= r.trace.iterations());
    }

    #[test]
    fn projection_hessian_norm_respects_bound() {
        use rand::{Rng, SeedableRng};
        let target = TargetManifold::unit_sphere();
        let c = Coefficients::Target(target);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..2000 {
            let dir: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = crate::target::norm(&dir);
            let rad = rng.gen_range(0.51..1.49);
            let z: Vec<f64> = dir.iter().map(|v| v / n * rad).collect();
            assert!(c.norm_at(&z).unwrap() <= c.bound() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn too_few_sweeps_report_no_convergence() {
        let p = circle_problem(32, 0.3, 0.05);
        assert!(matches!(
            picard_iterate(&p, 0.05, 2, 1e-14),
            Err(Error::NoConvergence { iterations: 2, .. })
        ));
    }
}
