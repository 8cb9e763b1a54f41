//! Discrete fundamental solution G(x,t;y,s) of d/dt - Delta_{g(t)}.
//!
//! Forward tables step a discrete delta at (y,s) and hold G(., t_k; y, s).
//! The conjugate solve steps backwards from a delta at (x,t) in density form
//! psi = w sqrt(det g), d_tau psi = sqrt(g) Delta(psi / sqrt(g)); it is the
//! transpose of the forward scheme, so it yields G(x,t; ., s) as a function
//! of the source point and conserves sum(psi) exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::MetricField;
use crate::grid::{Field, Grid};
use crate::linheat::{solve_with, MetricClock, Outputs};
use crate::metric::MetricFamily;
use crate::report::BoundsEntry;
use crate::stepping::{self, StepPolicy};

/// Mass tolerance on static metrics.
pub const MASS_TOL_STATIC: f64 = 1e-6;
/// Mass tolerance on evolving metrics.
pub const MASS_TOL_EVOLVING: f64 = 1e-3;
/// Lowest value accepted as discrete positivity.
pub const POSITIVITY_FLOOR: f64 = -1e-10;

#[derive(Debug, Clone)]
pub struct KernelTable {
    pub source: usize,
    pub s: f64,
    pub times: Vec<f64>,
    /// G(., t_k; source, s)
    pub values: Vec<Field>,
    pub metric: MetricFamily,
    pub grid: Grid,
    pub policy: StepPolicy,
}

impl KernelTable {
    pub fn min_value(&self) -> f64 {
        self.values.iter().map(Field::min).fold(f64::INFINITY, f64::min)
    }

    pub fn at(&self, k: usize, x: usize) -> f64 {
        self.values[k].get(0, x)
    }
}

fn delta(metric: &MetricFamily, grid: Grid, point: usize, t: f64) -> Result<Field> {
    if point >= grid.len() {
        return Err(Error::InvalidInput(format!("source index {point} outside grid of {} points", grid.len())));
    }
    let mf = MetricField::sample(metric, &grid, t)?;
    let mut d = Field::zeros(grid, 1).with_time(t);
    d.set(0, point, 1.0 / (mf.sqrt_det(point) * grid.cell_volume()));
    Ok(d)
}

/// Forward kernel from a delta at (`source`, `s`), stored at `times` (all in (s, t_end]).
pub fn build_kernel(
    metric: &MetricFamily,
    grid: Grid,
    source: usize,
    s: f64,
    times: &[f64],
    policy: StepPolicy,
) -> Result<KernelTable> {
    let t_end = *times
        .last()
        .ok_or_else(|| Error::InsufficientData("kernel needs at least one output time".into()))?;
    if !(t_end > s) {
        return Err(Error::InvalidInput(format!("kernel window ({s}, {t_end}] is empty")));
    }
    policy.validate()?;
    let init = delta(metric, grid, source, s)?;
    let outputs = Outputs::Times(times[..times.len() - 1].to_vec());
    let series = solve_with(metric, grid, &init, s, t_end, policy, &outputs, |_, _| Ok(()))?;
    let values: Vec<Field> = series.fields.into_iter().skip(1).collect();
    let table = KernelTable {
        source,
        s,
        times: series.times[1..].to_vec(),
        values,
        metric: metric.clone(),
        grid,
        policy,
    };
    let lo = table.min_value();
    if lo < POSITIVITY_FLOOR {
        return Err(Error::UnstableStep {
            t: t_end,
            dt: series.max_dt,
            limit: lo,
        });
    }
    Ok(table)
}

/// G(x, t; ., s) as a function of the source point, by the backward density solve.
pub fn conjugate_kernel(
    metric: &MetricFamily,
    grid: Grid,
    x: usize,
    t: f64,
    s: f64,
    policy: StepPolicy,
) -> Result<Field> {
    if !(t > s) {
        return Err(Error::InvalidInput(format!("conjugate solve needs t > s, got t={t}, s={s}")));
    }
    if x >= grid.len() {
        return Err(Error::InvalidInput(format!("point index {x} outside grid")));
    }
    let mut clock = MetricClock::new(metric, grid);
    // psi = G sqrt(g); a delta with unit dV_t mass has psi = 1/cell at x
    let mut psi = Field::zeros(grid, 1);
    psi.set(0, x, 1.0 / grid.cell_volume());
    let total = t - s;
    let mut tau = 0.0;
    while tau < total {
        let limit = policy.limit(clock.at(t - tau)?);
        let dt = StepPolicy::next_dt(total - tau, limit);
        let tau_next = if total - tau - dt <= 1e-14 * total.max(1.0) { total } else { tau + dt };
        stepping::check_stable(clock.at(t - tau_next)?, t - tau, dt)?;
        psi = stepping::step(
            policy.scheme,
            &psi,
            tau,
            dt,
            |tt, p| {
                let mf = clock.at(t - tt)?;
                let mut w = p.clone();
                for (i, v) in w.values_mut().iter_mut().enumerate() {
                    *v /= mf.sqrt_det(i);
                }
                let mut out = mf.laplacian(&w)?;
                for (i, v) in out.values_mut().iter_mut().enumerate() {
                    *v *= mf.sqrt_det(i);
                }
                Ok(out)
            },
            |_| Ok(()),
        )?;
        tau = tau_next;
    }
    let mf = MetricField::sample(metric, &grid, s)?;
    for (i, v) in psi.values_mut().iter_mut().enumerate() {
        *v /= mf.sqrt_det(i);
    }
    Ok(psi.with_time(s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MassMethod {
    /// quadrature of the forward table against dV_s (exact duality on static metrics)
    Forward,
    /// conjugate solve from (source, t_k) back to s, integrated against dV_s
    Conjugate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MassSeries {
    pub method: MassMethod,
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub tolerance: f64,
}

impl MassSeries {
    pub fn max_deviation(&self) -> f64 {
        self.mass.iter().map(|m| (m - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn entry(&self) -> BoundsEntry {
        let mut e = BoundsEntry::new("kernel mass", "integral of G against dV_s equals 1");
        for (t, m) in self.times.iter().zip(&self.mass) {
            e.record(*t, (m - 1.0).abs(), self.tolerance, None, None);
        }
        e.fit("max_deviation", self.max_deviation())
            .note(format!("method: {:?}", self.method))
    }
}

/// Time series of integral G(source, t_k; y, s) dV_s(y).
pub fn kernel_mass_series(table: &KernelTable) -> Result<MassSeries> {
    let mf = MetricField::sample(&table.metric, &table.grid, table.s)?;
    if table.metric.is_static() {
        let mass = table.values.iter().map(|g| mf.integrate(g)).collect::<Result<_>>()?;
        return Ok(MassSeries {
            method: MassMethod::Forward,
            times: table.times.clone(),
            mass,
            tolerance: MASS_TOL_STATIC,
        });
    }
    let mut mass = Vec::with_capacity(table.times.len());
    for &t in &table.times {
        let g = conjugate_kernel(&table.metric, table.grid, table.source, t, table.s, table.policy)?;
        mass.push(mf.integrate(&g)?);
    }
    Ok(MassSeries {
        method: MassMethod::Conjugate,
        times: table.times.clone(),
        mass,
        tolerance: MASS_TOL_EVOLVING,
    })
}

/// Squared g(t)-length of the minimal-image coordinate displacement, with the
/// metric frozen at `from`.
fn distance_sq(metric: &MetricFamily, grid: &Grid, from: usize, to: usize, t: f64) -> f64 {
    let d = grid.displacement(from, to);
    let g = metric.metric(grid.coords(from), t);
    let m = grid.dim();
    let mut s = 0.0;
    for i in 0..m {
        for j in 0..m {
            s += g[i][j] * d[i] * d[j];
        }
    }
    s
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianFit {
    /// fitted D in exp(-r^2 / (D (t - s)))
    pub d_fit: f64,
    /// sup of G (t-s)^{m/2} exp(r^2 / (D (t-s))) over fitted points
    pub c_fit: f64,
    /// per-time intercepts of log G
    pub intercepts: Vec<f64>,
    /// RMS residual of the log fit
    pub residual: f64,
    pub points: usize,
    /// large residual (delta not yet Gaussian); reported, not failed
    pub flagged: bool,
}

/// Least squares log G = a_k - (1/D) r^2/(t_k - s) with one slope shared by all
/// times, over points where G > 1e-3 max G.
pub fn gaussian_bound_fit(table: &KernelTable) -> Result<GaussianFit> {
    if table.times.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "gaussian fit needs at least 3 output times, got {}",
            table.times.len()
        )));
    }
    let m = table.grid.dim() as f64;
    let mut rows: Vec<(usize, f64, f64)> = Vec::new(); // (time index, xi, log G)
    for (k, (t, g)) in table.times.iter().zip(&table.values).enumerate() {
        let gmax = g.max();
        let tau = t - table.s;
        for x in 0..table.grid.len() {
            let v = g.get(0, x);
            if v > 1e-3 * gmax && v > 0.0 {
                let r2 = distance_sq(&table.metric, &table.grid, table.source, x, *t);
                rows.push((k, r2 / tau, v.ln()));
            }
        }
    }
    let nk = table.times.len();
    // eliminate per-time intercepts: slope from within-time centred data
    let mut mean_xi = vec![0.0; nk];
    let mut mean_y = vec![0.0; nk];
    let mut count = vec![0usize; nk];
    for &(k, xi, y) in &rows {
        mean_xi[k] += xi;
        mean_y[k] += y;
        count[k] += 1;
    }
    for k in 0..nk {
        if count[k] > 0 {
            mean_xi[k] /= count[k] as f64;
            mean_y[k] /= count[k] as f64;
        }
    }
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(k, xi, y) in &rows {
        let dx = xi - mean_xi[k];
        sxx += dx * dx;
        sxy += dx * (y - mean_y[k]);
    }
    if sxx <= 0.0 {
        return Err(Error::InsufficientData("kernel support too narrow to fit".into()));
    }
    let slope = sxy / sxx; // = -1/D
    let d_fit = -1.0 / slope;
    let intercepts: Vec<f64> = (0..nk).map(|k| mean_y[k] - slope * mean_xi[k]).collect();
    let mut ss = 0.0;
    let mut c_fit: f64 = 0.0;
    for &(k, xi, y) in &rows {
        let pred = intercepts[k] + slope * xi;
        ss += (y - pred).powi(2);
        let tau = table.times[k] - table.s;
        c_fit = c_fit.max((y + xi / d_fit).exp() * tau.powf(0.5 * m));
    }
    let residual = (ss / rows.len() as f64).sqrt();
    Ok(GaussianFit {
        d_fit,
        c_fit,
        intercepts,
        residual,
        points: rows.len(),
        flagged: residual > 0.1 || !d_fit.is_finite() || d_fit <= 0.0,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct L1Difference {
    pub times: Vec<f64>,
    pub l1: Vec<f64>,
    /// g(t)-distance between the two points
    pub distance: Vec<f64>,
    /// max_t L1 sqrt(t - s) / r
    pub c_fit: f64,
}

impl L1Difference {
    pub fn entry(&self) -> BoundsEntry {
        let mut e = BoundsEntry::new("kernel L1 difference", "L1 |G(p) - G(q)| <= C r / sqrt(t - s), and <= 2");
        for (t, l) in self.times.iter().zip(&self.l1) {
            e.record(*t, *l, 2.0, None, None);
        }
        e.fit("C", self.c_fit)
    }
}

/// integral |G(p,t_k;y,s) - G(q,t_k;y,s)| dV_s(y) for forward tables from p and q.
///
/// On static metrics source symmetry turns the forward tables into functions of
/// the source point; otherwise conjugate solves from (p,t_k) and (q,t_k) are used.
pub fn kernel_difference_l1(p: &KernelTable, q: &KernelTable) -> Result<L1Difference> {
    if p.grid != q.grid || p.metric.label() != q.metric.label() || p.s != q.s || p.times != q.times {
        return Err(Error::MetricMismatch);
    }
    let s = p.s;
    let mf = MetricField::sample(&p.metric, &p.grid, s)?;
    let mut out = L1Difference {
        times: p.times.clone(),
        l1: Vec::new(),
        distance: Vec::new(),
        c_fit: 0.0,
    };
    for (k, &t) in p.times.iter().enumerate() {
        let (gp, gq) = if p.metric.is_static() {
            (p.values[k].clone(), q.values[k].clone())
        } else {
            (
                conjugate_kernel(&p.metric, p.grid, p.source, t, s, p.policy)?,
                conjugate_kernel(&p.metric, p.grid, q.source, t, s, p.policy)?,
            )
        };
        let mut diff = gp;
        diff.add_scaled(-1.0, &gq);
        diff.values_mut().iter_mut().for_each(|v| *v = v.abs());
        let l1 = mf.integrate(&diff)?;
        let r = distance_sq(&p.metric, &p.grid, p.source, q.source, t).sqrt();
        out.l1.push(l1);
        out.distance.push(r);
        if r > 0.0 {
            out.c_fit = out.c_fit.max(l1 * (t - s).sqrt() / r);
        }
    }
    Ok(out)
}

/// Wrapped Gaussian on the flat circle of length 2 pi.
pub fn wrapped_gaussian(x: f64, y: f64, tau: f64) -> f64 {
    let mut s = 0.0;
    for k in -6i32..=6 {
        let d = x - y + std::f64::consts::TAU * k as f64;
        s += (-d * d / (4.0 * tau)).exp();
    }
    s / (4.0 * std::f64::consts::PI * tau).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn times(a: f64, b: f64, n: usize) -> Vec<f64> {
        (1..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
    }

    #[test]
    fn flat_kernel_matches_wrapped_gaussian() {
        let n = 128;
        let grid = Grid::torus1(n).unwrap();
        let src = 40;
        let table = build_kernel(&MetricFamily::flat(1), grid, src, 0.0, &[0.25, 0.5], StepPolicy::default()).unwrap();
        let y = grid.coords(src)[0];
        let h = grid.spacing(0);
        for (t, g) in table.times.iter().zip(&table.values) {
            let err = (0..n)
                .map(|i| (g.get(0, i) - wrapped_gaussian(grid.coords(i)[0], y, *t)).abs())
                .fold(0.0, f64::max);
            assert!(err < 2.0 * h * h / t.powf(1.5), "t={t} err={err}");
        }
    }

    #[test]
    fn static_mass_and_symmetry() {
        let grid = Grid::torus1(64).unwrap();
        let fam = MetricFamily::flat(1);
        let ts = times(0.0, 0.5, 4);
        let a = build_kernel(&fam, grid, 10, 0.0, &ts, StepPolicy::default()).unwrap();
        let b = build_kernel(&fam, grid, 30, 0.0, &ts, StepPolicy::default()).unwrap();
        let m = kernel_mass_series(&a).unwrap();
        assert!(m.max_deviation() < 1e-12);
        assert!(m.entry().pass);
        for k in 0..ts.len() {
            assert!((a.at(k, 30) - b.at(k, 10)).abs() < 1e-12);
        }
        assert!(a.min_value() >= POSITIVITY_FLOOR);
    }

    #[test]
    fn evolving_mass_via_conjugate() {
        let grid = Grid::torus2(16, 16).unwrap();
        let fam = MetricFamily::aniso_torus(2, 0.3, 2.0);
        let table = build_kernel(&fam, grid, 37, 0.1, &times(0.1, 0.4, 3), StepPolicy::default()).unwrap();
        let m = kernel_mass_series(&table).unwrap();
        assert_eq!(m.method, MassMethod::Conjugate);
        assert!(m.max_deviation() < 1e-10, "{}", m.max_deviation());
    }

    #[test]
    fn conjugate_is_transpose_of_forward_on_static_metric() {
        let grid = Grid::torus2(12, 12).unwrap();
        let fam = MetricFamily::ricci_static_flat(2, 0.3);
        let fwd = build_kernel(&fam, grid, 5, 0.0, &[0.2], StepPolicy::euler()).unwrap();
        let conj = conjugate_kernel(&fam, grid, 77, 0.2, 0.0, StepPolicy::euler()).unwrap();
        // G(77, t; 5, s) both ways
        assert!((fwd.at(0, 77) - conj.get(0, 5)).abs() < 1e-10 * fwd.at(0, 77).abs().max(1.0));
    }

    #[test]
    fn gaussian_exponent_on_flat_circle() {
        let grid = Grid::torus1(256).unwrap();
        let table =
            build_kernel(&MetricFamily::flat(1), grid, 128, 0.0, &times(0.0, 0.1, 5), StepPolicy::default()).unwrap();
        let fit = gaussian_bound_fit(&table).unwrap();
        assert!((fit.d_fit - 4.0).abs() < 0.4, "{}", fit.d_fit);
        assert!(!fit.flagged);
        let short = KernelTable {
            times: table.times[..2].to_vec(),
            values: table.values[..2].to_vec(),
            ..table
        };
        assert!(matches!(gaussian_bound_fit(&short), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn l1_difference_basics() {
        let grid = Grid::torus1(128).unwrap();
        let fam = MetricFamily::flat(1);
        let ts = times(0.0, 0.5, 5);
        let p = build_kernel(&fam, grid, 60, 0.0, &ts, StepPolicy::default()).unwrap();
        let q = build_kernel(&fam, grid, 64, 0.0, &ts, StepPolicy::default()).unwrap();
        let same = kernel_difference_l1(&p, &p).unwrap();
        assert!(same.l1.iter().all(|&v| v == 0.0));
        let d = kernel_difference_l1(&p, &q).unwrap();
        assert!(d.l1.iter().all(|&v| v <= 2.0));
        for w in d.l1.windows(2) {
            assert!(w[1] <= w[0] + 1e-14);
        }
        let other = build_kernel(&MetricFamily::conformal_exp(1, 0.5), grid, 64, 0.0, &ts, StepPolicy::default())
            .unwrap();
        assert!(matches!(kernel_difference_l1(&p, &other), Err(Error::MetricMismatch)));
    }
}
