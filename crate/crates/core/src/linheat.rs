//! Linear heat equations (d/dt - Delta_{g(t)}) u = F on the torus, with the
//! sup, gradient and maximum-principle checks run on every solve.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{assumption_audit, AuditLimits, MetricField};
use crate::grid::{Field, Grid};
use crate::metric::MetricFamily;
use crate::report::BoundsEntry;
use crate::stepping::{self, StepPolicy};

pub type SourceFn = Arc<dyn Fn([f64; 2], f64) -> f64 + Send + Sync>;

/// Slack on the inhomogeneous sup bound.
pub const SUP_SLACK: f64 = 1e-6;
/// Slack on the homogeneous maximum principle.
pub const MAX_PRINCIPLE_SLACK: f64 = 1e-8;

#[derive(Clone)]
pub enum Forcing {
    Zero,
    Constant(f64),
    /// amplitude * sin(k x^1)
    Mode { k: f64, amplitude: f64 },
    Custom { label: String, f: SourceFn },
}

impl fmt::Debug for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl Forcing {
    pub fn label(&self) -> String {
        match self {
            Forcing::Zero => "zero".into(),
            Forcing::Constant(c) => format!("constant({c})"),
            Forcing::Mode { k, amplitude } => format!("mode(k={k},amp={amplitude})"),
            Forcing::Custom { label, .. } => label.clone(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Forcing::Zero => true,
            Forcing::Constant(c) => *c == 0.0,
            Forcing::Mode { amplitude, .. } => *amplitude == 0.0,
            Forcing::Custom { .. } => false,
        }
    }

    #[inline]
    pub fn eval(&self, x: [f64; 2], t: f64) -> f64 {
        match self {
            Forcing::Zero => 0.0,
            Forcing::Constant(c) => *c,
            Forcing::Mode { k, amplitude } => amplitude * (k * x[0]).sin(),
            Forcing::Custom { f, .. } => f(x, t),
        }
    }

    /// Writes F(., t) into every component of `out`.
    pub fn fill(&self, t: f64, out: &mut Field) {
        let grid = *out.grid();
        for c in 0..out.components() {
            let dst = out.component_mut(c);
            for (idx, d) in dst.iter_mut().enumerate() {
                *d = self.eval(grid.coords(idx), t);
            }
        }
    }
}

/// Which states a solve keeps.
#[derive(Debug, Clone, PartialEq)]
pub enum Outputs {
    EveryStep,
    /// strictly increasing times inside (t_start, t_end]; t_end is always added
    Times(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct LinearHeatProblem {
    pub metric: MetricFamily,
    pub grid: Grid,
    pub forcing: Forcing,
    pub initial: Field,
    pub t_start: f64,
    pub t_end: f64,
    pub policy: StepPolicy,
    pub outputs: Outputs,
}

impl LinearHeatProblem {
    pub fn new(metric: MetricFamily, grid: Grid, initial: Field, t_end: f64) -> Self {
        Self {
            metric,
            grid,
            forcing: Forcing::Zero,
            initial,
            t_start: 0.0,
            t_end,
            policy: StepPolicy::default(),
            outputs: Outputs::Times(Vec::new()),
        }
    }

    pub fn with_forcing(mut self, forcing: Forcing) -> Self {
        self.forcing = forcing;
        self
    }

    pub fn with_policy(mut self, policy: StepPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_outputs(mut self, outputs: Outputs) -> Self {
        self.outputs = outputs;
        self
    }

    pub fn with_start(mut self, t_start: f64) -> Self {
        self.t_start = t_start;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        if *self.initial.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        if !self.initial.all_finite() {
            return Err(Error::InvalidInput("initial data is not finite".into()));
        }
        if !(self.t_end > self.t_start) || !self.t_end.is_finite() || self.t_start < 0.0 {
            return Err(Error::InvalidInput(format!(
                "time window [{}, {}] is empty or invalid",
                self.t_start, self.t_end
            )));
        }
        if self.t_end > self.metric.horizon() {
            return Err(Error::InvalidInput(format!(
                "window end {} exceeds the metric horizon {}",
                self.t_end,
                self.metric.horizon()
            )));
        }
        if let Outputs::Times(ts) = &self.outputs {
            let mut prev = self.t_start;
            for &t in ts {
                if !(t > prev) || t > self.t_end {
                    return Err(Error::InvalidInput(format!("output time {t} out of order or outside the window")));
                }
                prev = t;
            }
        }
        Ok(())
    }
}

/// Solver output. `times[0]`/`fields[0]` is the initial state.
#[derive(Debug, Clone)]
pub struct HeatSeries {
    pub times: Vec<f64>,
    pub fields: Vec<Field>,
    /// running sup |F| over all stage evaluations up to each stored time
    pub forcing_sup: Vec<f64>,
    /// state after the first step (used for first-step fits)
    pub first_step: Option<Field>,
    pub steps: usize,
    pub max_dt: f64,
}

impl HeatSeries {
    pub fn last(&self) -> &Field {
        self.fields.last().expect("series holds the initial state")
    }
}

/// Caches the metric at the two most recent stage times.
pub(crate) struct MetricClock<'a> {
    family: &'a MetricFamily,
    grid: Grid,
    cache: Vec<MetricField>,
}

impl<'a> MetricClock<'a> {
    pub(crate) fn new(family: &'a MetricFamily, grid: Grid) -> Self {
        Self {
            family,
            grid,
            cache: Vec::with_capacity(2),
        }
    }

    pub(crate) fn at(&mut self, t: f64) -> Result<&MetricField> {
        let is_static = self.family.is_static();
        let pos = self
            .cache
            .iter()
            .position(|m| is_static || m.time().to_bits() == t.to_bits());
        match pos {
            Some(p) => Ok(&self.cache[p]),
            None => {
                let mf = MetricField::sample(self.family, &self.grid, t)?;
                if self.cache.len() == 2 {
                    self.cache.remove(0);
                }
                self.cache.push(mf);
                Ok(self.cache.last().expect("just pushed"))
            }
        }
    }
}

/// Time-marches (d/dt - Delta) u = F with F supplied by `forcing(t, out)`.
/// `out` arrives zeroed with the layout of `u`.
#[allow(clippy::too_many_arguments)]
pub fn solve_with<S>(
    metric: &MetricFamily,
    grid: Grid,
    initial: &Field,
    t_start: f64,
    t_end: f64,
    policy: StepPolicy,
    outputs: &Outputs,
    mut forcing: S,
) -> Result<HeatSeries>
where
    S: FnMut(f64, &mut Field) -> Result<()>,
{
    let mut clock = MetricClock::new(metric, grid);
    let mut stops: Vec<f64> = match outputs {
        Outputs::EveryStep => Vec::new(),
        Outputs::Times(ts) => ts.clone(),
    };
    if stops.last().is_none_or(|&l| l < t_end) {
        stops.push(t_end);
    }
    let every = matches!(outputs, Outputs::EveryStep);
    let mut u = initial.clone().with_time(t_start);
    let mut t = t_start;
    let mut fsup: f64 = 0.0;
    let mut series = HeatSeries {
        times: vec![t_start],
        fields: vec![u.clone()],
        forcing_sup: vec![0.0],
        first_step: None,
        steps: 0,
        max_dt: 0.0,
    };
    let mut buf = Field::zeros(grid, u.components());
    for &stop in &stops {
        while t < stop {
            let limit = policy.limit(clock.at(t)?);
            let dt = StepPolicy::next_dt(stop - t, limit);
            let t_next = if stop - t - dt <= 1e-14 * stop.abs().max(1.0) { stop } else { t + dt };
            stepping::check_stable(clock.at(t_next)?, t, dt)?;
            let next = stepping::step(
                policy.scheme,
                &u,
                t,
                dt,
                |s, v| {
                    let mut out = clock.at(s)?.laplacian(v)?;
                    buf.values_mut().iter_mut().for_each(|x| *x = 0.0);
                    forcing(s, &mut buf)?;
                    fsup = fsup.max(buf.sup_norm());
                    out.add_scaled(1.0, &buf);
                    Ok(out)
                },
                |_| Ok(()),
            )?;
            u = next;
            t = t_next;
            u.time = t;
            if !u.all_finite() {
                return Err(Error::UnstableStep { t, dt, limit });
            }
            series.steps += 1;
            series.max_dt = series.max_dt.max(dt);
            if series.first_step.is_none() {
                series.first_step = Some(u.clone());
            }
            if every && t < stop {
                series.times.push(t);
                series.fields.push(u.clone());
                series.forcing_sup.push(fsup);
            }
        }
        series.times.push(t);
        series.fields.push(u.clone());
        series.forcing_sup.push(fsup);
    }
    Ok(series)
}

pub fn solve(problem: &LinearHeatProblem) -> Result<HeatSeries> {
    problem.validate()?;
    let forcing = problem.forcing.clone();
    let zero = forcing.is_zero();
    solve_with(
        &problem.metric,
        problem.grid,
        &problem.initial,
        problem.t_start,
        problem.t_end,
        problem.policy,
        &problem.outputs,
        |t, out| {
            if !zero {
                forcing.fill(t, out);
            }
            Ok(())
        },
    )
}

/// Sup bound sup|u(t)| <= (t - t_start) sup|F| for zero initial data.
pub fn sup_bound_entry(series: &HeatSeries) -> BoundsEntry {
    let t0 = series.times[0];
    let mut e = BoundsEntry::new("linear sup bound", "inhomogeneous heat: sup|u| <= t sup|F|");
    for ((t, u), fs) in series.times.iter().zip(&series.fields).zip(&series.forcing_sup) {
        let (idx, v) = argmax_abs(u);
        let limit = (t - t0) * fs * (1.0 + SUP_SLACK);
        e.record(*t, v, limit, Some(idx), Some(u.grid().coords(idx % u.grid().len())));
    }
    let fmax = series.forcing_sup.last().copied().unwrap_or(0.0);
    e.fit("sup_F", fmax)
}

/// Discrete maximum principle min f <= v <= max f.
pub fn max_principle_entry(series: &HeatSeries) -> BoundsEntry {
    let f = &series.fields[0];
    let (lo, hi) = (f.min(), f.max());
    let mut e = BoundsEntry::new("homogeneous maximum principle", "homogeneous heat: min f <= v <= max f");
    for (t, v) in series.times.iter().zip(&series.fields) {
        let over = v.max() - hi;
        let under = lo - v.min();
        let (worst, idx) = if over >= under {
            (over, argmax(v))
        } else {
            (under, argmin(v))
        };
        e.record(*t, worst, MAX_PRINCIPLE_SLACK, Some(idx), Some(v.grid().coords(idx % v.grid().len())));
    }
    e
}

pub fn solve_inhomogeneous(problem: &LinearHeatProblem) -> Result<(HeatSeries, BoundsEntry)> {
    if problem.initial.sup_norm() != 0.0 {
        return Err(Error::InvalidInput("inhomogeneous solve expects zero initial data".into()));
    }
    let s = solve(problem)?;
    let e = sup_bound_entry(&s);
    Ok((s, e))
}

pub fn solve_homogeneous(problem: &LinearHeatProblem) -> Result<(HeatSeries, BoundsEntry)> {
    if !problem.forcing.is_zero() {
        return Err(Error::InvalidInput("homogeneous solve expects zero forcing".into()));
    }
    let s = solve(problem)?;
    let e = max_principle_entry(&s);
    Ok((s, e))
}

fn argmax_abs(u: &Field) -> (usize, f64) {
    u.values()
        .iter()
        .enumerate()
        .fold((0, 0.0), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) })
}

fn argmax(u: &Field) -> usize {
    u.values()
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

fn argmin(u: &Field) -> usize {
    u.values()
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) })
        .0
}

/// sup_x |grad u|_{g(t)} (all components).
pub fn sup_gradient(metric: &MetricFamily, u: &Field) -> Result<f64> {
    let mf = MetricField::sample(metric, u.grid(), u.time)?;
    Ok(mf.grad_norm_sq(u)?.max().max(0.0).sqrt())
}

/// Per-time ratios behind the gradient estimates.
#[derive(Debug, Clone, Default)]
pub struct GradientRatios {
    pub times: Vec<f64>,
    /// sup|grad u| / (sup|F| sqrt(t))
    pub inhomogeneous: Vec<f64>,
    /// sup|grad v| / sup|grad f|
    pub growth: Vec<f64>,
    /// sup|v - f| / (sqrt(t) sup|grad f|)
    pub holder: Vec<f64>,
}

impl GradientRatios {
    pub fn max_inhomogeneous(&self) -> f64 {
        self.inhomogeneous.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_growth(&self) -> f64 {
        self.growth.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_holder(&self) -> f64 {
        self.holder.iter().copied().fold(0.0, f64::max)
    }
}

pub fn gradient_ratios(series: &HeatSeries, problem: &LinearHeatProblem) -> Result<GradientRatios> {
    let t0 = series.times[0];
    let f = &series.fields[0];
    let grad_f = sup_gradient(&problem.metric, f)?;
    let mut r = GradientRatios::default();
    for ((t, u), fs) in series.times.iter().zip(&series.fields).zip(&series.forcing_sup).skip(1) {
        let s = (t - t0).sqrt();
        let gu = sup_gradient(&problem.metric, u)?;
        r.times.push(*t);
        r.inhomogeneous.push(if *fs > 0.0 { gu / (fs * s) } else { 0.0 });
        r.growth.push(if grad_f > 0.0 { gu / grad_f } else { 0.0 });
        r.holder.push(if grad_f > 0.0 { u.sup_distance(f)? / (s * grad_f) } else { 0.0 });
    }
    Ok(r)
}

/// Gradient estimate entries: the sqrt(t) inhomogeneous ratio, exponential
/// growth of the homogeneous gradient, and the sqrt(t) modulus of continuity.
///
/// The growth entry fits C from the first step and reports it; pass/fail uses
/// the Bochner bound sup|grad v|(t) <= exp(lambda(t)/2) sup|grad f| with lambda
/// the integral of the audited curvature floor K.
pub fn verify_gradient_estimates(series: &HeatSeries, problem: &LinearHeatProblem) -> Result<Vec<BoundsEntry>> {
    let ratios = gradient_ratios(series, problem)?;
    let t0 = series.times[0];
    let h = problem.grid.min_spacing();
    let slack = 1e-6 + 10.0 * (h * h + series.max_dt);
    let mut out = Vec::new();

    let mut inh = BoundsEntry::new("gradient estimate (inhomogeneous)", "sup|grad u| <= C sup|F| t^(1/2)");
    for (t, r) in ratios.times.iter().zip(&ratios.inhomogeneous) {
        inh.record(*t, *r, f64::MAX, None, None);
        if !r.is_finite() {
            inh.pass = false;
        }
    }
    out.push(inh.fit("C", ratios.max_inhomogeneous()));

    let grad_f = sup_gradient(&problem.metric, &series.fields[0])?;
    let mut growth = BoundsEntry::new("gradient estimate (homogeneous growth)", "sup|grad v| <= e^(Ct) sup|grad f|");
    let c_hat = match &series.first_step {
        Some(u1) if grad_f > 0.0 => {
            let g1 = sup_gradient(&problem.metric, u1)?;
            ((g1 / grad_f).ln() / (u1.time - t0)).max(0.0)
        }
        _ => 0.0,
    };
    let audit_times: Vec<f64> = series.times.iter().copied().filter(|&t| t > 0.0).collect();
    let audit = assumption_audit(&problem.metric, &problem.grid, &audit_times, AuditLimits::default())?;
    let mut first_step_fit_holds = true;
    for (t, g) in ratios.times.iter().zip(&ratios.growth) {
        let lam = audit.lambda(*t) - audit.lambda(t0);
        growth.record(*t, *g, (0.5 * lam).exp() * (1.0 + slack), None, None);
        if *g > (c_hat * (t - t0)).exp() * (1.0 + slack) {
            first_step_fit_holds = false;
        }
    }
    let mut growth = growth
        .fit("C_hat", c_hat)
        .fit("max_growth", ratios.max_growth())
        .fit("K0", audit.k0);
    if !first_step_fit_holds {
        growth = growth.note("growth exceeded exp(C_hat t) from the first-step fit; the Bochner bound decides");
    }
    out.push(growth);

    let mut hol = BoundsEntry::new("gradient estimate (continuity in time)", "sup|v - f| <= C t^(1/2) sup|grad f|");
    for (t, r) in ratios.times.iter().zip(&ratios.holder) {
        hol.record(*t, *r, f64::MAX, None, None);
        if !r.is_finite() {
            hol.pass = false;
        }
    }
    out.push(hol.fit("C", ratios.max_holder()));
    Ok(out)
}

/// Checks a candidate trace w (at consecutive solver steps) against the
/// maximum principle: if (d/dt - Delta) w <= tol wherever w >= 0 and
/// w(., 0) <= 0, then w <= slack everywhere.
///
/// The residual is the trapezoidal discrete operator
/// (w_{k+1} - w_k)/dt - (Delta_k w_k + Delta_{k+1} w_{k+1}) / 2.
/// `tol = None` uses 10 (h^2 + dt) (1 + sup|w| + sup|Delta w|).
pub fn maximum_principle_check(
    metric: &MetricFamily,
    grid: &Grid,
    times: &[f64],
    trace: &[Field],
    tol: Option<f64>,
) -> Result<BoundsEntry> {
    if times.len() != trace.len() || times.len() < 2 {
        return Err(Error::InsufficientData("candidate trace needs at least two states".into()));
    }
    let h = grid.min_spacing();
    let laps: Vec<Field> = times
        .iter()
        .zip(trace)
        .map(|(t, w)| MetricField::sample(metric, grid, *t)?.laplacian(w))
        .collect::<Result<_>>()?;
    let mut max_dt: f64 = 0.0;
    for w in times.windows(2) {
        max_dt = max_dt.max(w[1] - w[0]);
    }
    let scale = 1.0
        + trace.iter().map(Field::sup_norm).fold(0.0, f64::max)
        + laps.iter().map(Field::sup_norm).fold(0.0, f64::max);
    let tol = tol.unwrap_or(10.0 * (h * h + max_dt) * scale);
    let w0 = &trace[0];
    if w0.max() > tol {
        let idx = argmax(w0);
        return Err(Error::NotASupersolution {
            point: idx,
            time: times[0],
            residual: w0.max(),
            tolerance: tol,
        });
    }
    for k in 0..times.len() - 1 {
        let dt = times[k + 1] - times[k];
        let (a, b) = (&trace[k], &trace[k + 1]);
        for i in 0..a.values().len() {
            let r = (b.values()[i] - a.values()[i]) / dt - 0.5 * (laps[k].values()[i] + laps[k + 1].values()[i]);
            if r > tol && (a.values()[i] >= 0.0 || b.values()[i] >= 0.0) {
                return Err(Error::NotASupersolution {
                    point: i % grid.len(),
                    time: times[k],
                    residual: r,
                    tolerance: tol,
                });
            }
        }
    }
    let slack = tol * (times[times.len() - 1] - times[0]) + MAX_PRINCIPLE_SLACK;
    let mut e = BoundsEntry::new("maximum principle", "subsolution with w(0) <= 0 stays <= 0");
    for (t, w) in times.iter().zip(trace) {
        let idx = argmax(w);
        e.record(*t, w.max(), slack, Some(idx % grid.len()), Some(grid.coords(idx % grid.len())));
    }
    Ok(e.fit("tolerance", tol))
}
