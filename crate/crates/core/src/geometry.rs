//! Metric-dependent operators on the periodic lattice.
//!
//! A [`MetricField`] carries the pointwise metric data needed by the differential
//! operators; a [`GeometrySnapshot`] adds connection, curvature and the velocity
//! H = dg/dt with its covariant derivative. Spatial derivatives of g and H use
//! fourth-order central differences so curvature stays second-order accurate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::metric::{MetricFamily, MetricJet, VelocityJet};
use crate::tensor::{self, Mat2, Tensor3, ZERO2, ZERO3};

#[derive(Debug, Clone)]
pub struct MetricField {
    grid: Grid,
    time: f64,
    g: Vec<Mat2>,
    ginv: Vec<Mat2>,
    sqrt_det: Vec<f64>,
    /// sqrt(det g) g^{ij}
    flux: Vec<Mat2>,
}

impl MetricField {
    pub fn sample(metric: &MetricFamily, grid: &Grid, t: f64) -> Result<Self> {
        if metric.dim() != grid.dim() {
            return Err(Error::InvalidInput(format!(
                "metric family is {}-dimensional but the grid is {}-dimensional",
                metric.dim(),
                grid.dim()
            )));
        }
        let m = grid.dim();
        let n = grid.len();
        let mut g = Vec::with_capacity(n);
        let mut ginv = Vec::with_capacity(n);
        let mut sqrt_det = Vec::with_capacity(n);
        let mut flux = Vec::with_capacity(n);
        for idx in 0..n {
            let gi = metric.metric(grid.coords(idx), t);
            let lam = tensor::sym_eigenvalues(&gi, m)[0];
            if !(lam > 0.0) || !lam.is_finite() {
                return Err(Error::NonSpdMetric {
                    point: idx,
                    eigenvalue: lam,
                });
            }
            let inv = tensor::inverse(&gi, m);
            let sd = tensor::det(&gi, m).sqrt();
            g.push(gi);
            ginv.push(inv);
            sqrt_det.push(sd);
            flux.push(tensor::scale(&inv, sd));
        }
        Ok(Self {
            grid: *grid,
            time: t,
            g,
            ginv,
            sqrt_det,
            flux,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn g(&self, idx: usize) -> &Mat2 {
        &self.g[idx]
    }

    pub fn ginv(&self, idx: usize) -> &Mat2 {
        &self.ginv[idx]
    }

    pub fn sqrt_det(&self, idx: usize) -> f64 {
        self.sqrt_det[idx]
    }

    /// Largest eigenvalue of g^{-1} over the grid.
    pub fn max_inverse_eigenvalue(&self) -> f64 {
        let m = self.grid.dim();
        self.ginv
            .iter()
            .map(|gi| tensor::sym_eigenvalues(gi, m)[1])
            .fold(0.0, f64::max)
    }

    /// Explicit-stepper stability limit `safety * h_min^2 / lambda_max(g^{-1})`.
    pub fn stable_dt(&self, safety: f64) -> f64 {
        let h = self.grid.min_spacing();
        safety * h * h / self.max_inverse_eigenvalue()
    }

    fn check_grid(&self, u: &Field) -> Result<()> {
        if *u.grid() != self.grid {
            Err(Error::GridMismatch)
        } else {
            Ok(())
        }
    }

    /// Conservative (divergence-form) Laplace-Beltrami of component `c` at `idx`.
    #[inline]
    pub fn laplacian_at(&self, u: &Field, c: usize, idx: usize) -> f64 {
        let m = self.grid.dim();
        let mut acc = 0.0;
        let center = u.get(c, idx);
        for a in 0..m {
            let h = self.grid.spacing(a);
            let (ip, _) = self.grid.neighbor(idx, a, 1);
            let (im, _) = self.grid.neighbor(idx, a, -1);
            let ap = 0.5 * (self.flux[idx][a][a] + self.flux[ip][a][a]);
            let am = 0.5 * (self.flux[idx][a][a] + self.flux[im][a][a]);
            let up = u.shifted(c, idx, a, 1);
            let um = u.shifted(c, idx, a, -1);
            acc += (ap * (up - center) - am * (center - um)) / (h * h);
            for b in 0..m {
                if b == a {
                    continue;
                }
                let cp = self.flux[ip][a][b] * u.d1(c, ip, b);
                let cm = self.flux[im][a][b] * u.d1(c, im, b);
                acc += (cp - cm) / (2.0 * h);
            }
        }
        acc / self.sqrt_det[idx]
    }

    /// Delta_{g(t)} applied to every component of `u`.
    pub fn laplacian(&self, u: &Field) -> Result<Field> {
        self.check_grid(u)?;
        let mut out = Field::zeros(self.grid, u.components()).with_time(u.time);
        for c in 0..u.components() {
            let dst = out.component_mut(c);
            for (idx, d) in dst.iter_mut().enumerate() {
                *d = self.laplacian_at(u, c, idx);
            }
        }
        Ok(out)
    }

    /// Coordinate gradient (central differences) of component `c`.
    #[inline]
    pub fn gradient(&self, u: &Field, c: usize, idx: usize) -> [f64; 2] {
        let mut d = [0.0; 2];
        for (a, da) in d.iter_mut().enumerate().take(self.grid.dim()) {
            *da = u.d1(c, idx, a);
        }
        d
    }

    /// g^{ij} d_i u d_j w per point (first components).
    pub fn inner_grad(&self, u: &Field, w: &Field) -> Result<Field> {
        self.check_grid(u)?;
        self.check_grid(w)?;
        let m = self.grid.dim();
        let mut out = Field::zeros(self.grid, 1).with_time(u.time);
        for idx in 0..self.grid.len() {
            let du = self.gradient(u, 0, idx);
            let dw = self.gradient(w, 0, idx);
            let gi = &self.ginv[idx];
            let mut s = 0.0;
            for i in 0..m {
                for j in 0..m {
                    s += gi[i][j] * du[i] * dw[j];
                }
            }
            out.set(0, idx, s);
        }
        Ok(out)
    }

    /// |grad u|^2_{g(t)} summed over all components of `u`.
    pub fn grad_norm_sq(&self, u: &Field) -> Result<Field> {
        self.check_grid(u)?;
        let m = self.grid.dim();
        let mut out = Field::zeros(self.grid, 1).with_time(u.time);
        for idx in 0..self.grid.len() {
            let gi = &self.ginv[idx];
            let mut s = 0.0;
            for c in 0..u.components() {
                let du = self.gradient(u, c, idx);
                for i in 0..m {
                    for j in 0..m {
                        s += gi[i][j] * du[i] * du[j];
                    }
                }
            }
            out.set(0, idx, s);
        }
        Ok(out)
    }

    /// Riemann sum of the first component against dV_t.
    pub fn integrate(&self, u: &Field) -> Result<f64> {
        self.check_grid(u)?;
        let cell = self.grid.cell_volume();
        Ok(u
            .component(0)
            .iter()
            .zip(&self.sqrt_det)
            .map(|(v, s)| v * s)
            .sum::<f64>()
            * cell)
    }

    pub fn volume(&self) -> f64 {
        self.sqrt_det.iter().sum::<f64>() * self.grid.cell_volume()
    }
}

/// Metric data plus connection, curvature and H at one time.
#[derive(Debug, Clone)]
pub struct GeometrySnapshot {
    metric: MetricField,
    christoffel: Vec<Tensor3>,
    ricci: Vec<Mat2>,
    scalar: Vec<f64>,
    velocity: Vec<Mat2>,
    velocity_norm: Vec<f64>,
    nabla_velocity: Vec<Tensor3>,
    nabla_velocity_norm: Vec<f64>,
}

const D4: [(isize, f64); 4] = [(-2, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0)];

/// Fourth-order central first derivative along `axis` of a per-point quantity.
fn d4<T, F: Fn(&T) -> f64>(grid: &Grid, data: &[T], idx: usize, axis: usize, pick: F) -> f64 {
    let h = grid.spacing(axis);
    let mut s = 0.0;
    for (off, w) in D4 {
        let (j, _) = grid.neighbor(idx, axis, off);
        s += w * pick(&data[j]);
    }
    s / (12.0 * h)
}

fn d4_sym2(grid: &Grid, data: &[Mat2], idx: usize) -> Tensor3 {
    let m = grid.dim();
    let mut out = ZERO3;
    for l in 0..m {
        for i in 0..m {
            for j in i..m {
                let v = d4(grid, data, idx, l, |a| a[i][j]);
                out[l][i][j] = v;
                out[l][j][i] = v;
            }
        }
    }
    out
}

impl GeometrySnapshot {
    pub fn build(metric: &MetricFamily, grid: &Grid, t: f64) -> Result<Self> {
        let mf = MetricField::sample(metric, grid, t)?;
        let m = grid.dim();
        let n = grid.len();
        let christoffel: Vec<Tensor3> = (0..n)
            .map(|idx| tensor::christoffel(&mf.ginv[idx], &d4_sym2(grid, &mf.g, idx), m))
            .collect();
        let mut ricci = Vec::with_capacity(n);
        let mut scalar = Vec::with_capacity(n);
        for idx in 0..n {
            let mut dgamma = [ZERO3; 2];
            for (l, dl) in dgamma.iter_mut().enumerate().take(m) {
                for k in 0..m {
                    for i in 0..m {
                        for j in i..m {
                            let v = d4(grid, &christoffel, idx, l, |g| g[k][i][j]);
                            dl[k][i][j] = v;
                            dl[k][j][i] = v;
                        }
                    }
                }
            }
            let riem = tensor::riemann(&christoffel[idx], &dgamma, m);
            let ric = tensor::ricci(&riem, m);
            scalar.push(tensor::trace(&mf.ginv[idx], &ric, m));
            ricci.push(ric);
        }
        let velocity: Vec<Mat2> = (0..n).map(|idx| metric.velocity(grid.coords(idx), t)).collect();
        let velocity_norm = (0..n)
            .map(|idx| tensor::inner2(&mf.ginv[idx], &velocity[idx], &velocity[idx], m).max(0.0).sqrt())
            .collect();
        let nabla_velocity: Vec<Tensor3> = (0..n)
            .map(|idx| {
                let dh = d4_sym2(grid, &velocity, idx);
                tensor::covariant_derivative_sym2(&velocity[idx], &dh, &christoffel[idx], m)
            })
            .collect();
        let nabla_velocity_norm = (0..n)
            .map(|idx| {
                tensor::inner3(&mf.ginv[idx], &nabla_velocity[idx], &nabla_velocity[idx], m)
                    .max(0.0)
                    .sqrt()
            })
            .collect();
        Ok(Self {
            metric: mf,
            christoffel,
            ricci,
            scalar,
            velocity,
            velocity_norm,
            nabla_velocity,
            nabla_velocity_norm,
        })
    }

    pub fn metric(&self) -> &MetricField {
        &self.metric
    }

    pub fn grid(&self) -> &Grid {
        &self.metric.grid
    }

    pub fn time(&self) -> f64 {
        self.metric.time
    }

    pub fn christoffel(&self, idx: usize) -> &Tensor3 {
        &self.christoffel[idx]
    }

    pub fn ricci(&self, idx: usize) -> &Mat2 {
        &self.ricci[idx]
    }

    pub fn scalar_curvature(&self, idx: usize) -> f64 {
        self.scalar[idx]
    }

    pub fn velocity(&self, idx: usize) -> &Mat2 {
        &self.velocity[idx]
    }

    pub fn velocity_norm(&self, idx: usize) -> f64 {
        self.velocity_norm[idx]
    }

    /// `nabla_velocity(idx)[k][i][j] = nabla_k H_ij`.
    pub fn nabla_velocity(&self, idx: usize) -> &Tensor3 {
        &self.nabla_velocity[idx]
    }

    pub fn nabla_velocity_norm(&self, idx: usize) -> f64 {
        self.nabla_velocity_norm[idx]
    }

    /// Smallest eigenvalue of 2 Ric + H relative to g at `idx`.
    pub fn ricci_velocity_floor(&self, idx: usize) -> f64 {
        let m = self.grid().dim();
        let a = tensor::add(&tensor::scale(&self.ricci[idx], 2.0), &self.velocity[idx]);
        tensor::smallest_generalized_eigenvalue(&a, &self.metric.g[idx], m)
    }

    pub fn laplacian(&self, u: &Field) -> Result<Field> {
        self.metric.laplacian(u)
    }

    pub fn grad_norm_sq(&self, u: &Field) -> Result<Field> {
        self.metric.grad_norm_sq(u)
    }

    pub fn inner_grad(&self, u: &Field, w: &Field) -> Result<Field> {
        self.metric.inner_grad(u, w)
    }

    pub fn integrate(&self, u: &Field) -> Result<f64> {
        self.metric.integrate(u)
    }
}

/// Geometry at a single point computed from analytic metric jets.
#[derive(Debug, Clone, Copy)]
pub struct PointGeometry {
    pub dim: usize,
    pub g: Mat2,
    pub ginv: Mat2,
    pub christoffel: Tensor3,
    pub ricci: Mat2,
    pub scalar: f64,
    pub riemann_norm: f64,
    pub velocity: Mat2,
    pub velocity_norm: f64,
    pub nabla_velocity: Tensor3,
    pub nabla_velocity_norm: f64,
}

impl PointGeometry {
    pub fn from_jets(jet: &MetricJet, vjet: &VelocityJet, m: usize) -> Self {
        let ginv = tensor::inverse(&jet.g, m);
        let gamma = tensor::christoffel(&ginv, &jet.dg, m);
        // d_l g^{ka} = -g^{kb} d_l g_bc g^{ca}
        let mut dginv = [ZERO2; 2];
        for (l, dl) in dginv.iter_mut().enumerate().take(m) {
            for k in 0..m {
                for a in 0..m {
                    let mut s = 0.0;
                    for b in 0..m {
                        for c in 0..m {
                            s -= ginv[k][b] * jet.dg[l][b][c] * ginv[c][a];
                        }
                    }
                    dl[k][a] = s;
                }
            }
        }
        let mut dgamma = [ZERO3; 2];
        for l in 0..m {
            for k in 0..m {
                for i in 0..m {
                    for j in 0..m {
                        let mut s = 0.0;
                        for a in 0..m {
                            let sija = jet.dg[i][j][a] + jet.dg[j][i][a] - jet.dg[a][i][j];
                            let dsija =
                                jet.ddg[l][i][j][a] + jet.ddg[l][j][i][a] - jet.ddg[l][a][i][j];
                            s += dginv[l][k][a] * sija + ginv[k][a] * dsija;
                        }
                        dgamma[l][k][i][j] = 0.5 * s;
                    }
                }
            }
        }
        let riem = tensor::riemann(&gamma, &dgamma, m);
        let ricci = tensor::ricci(&riem, m);
        let scalar = tensor::trace(&ginv, &ricci, m);
        let riemann_norm = tensor::riemann_norm(&riem, &jet.g, &ginv, m);
        let nabla = tensor::covariant_derivative_sym2(&vjet.h, &vjet.dh, &gamma, m);
        Self {
            dim: m,
            g: jet.g,
            ginv,
            christoffel: gamma,
            ricci,
            scalar,
            riemann_norm,
            velocity: vjet.h,
            velocity_norm: tensor::inner2(&ginv, &vjet.h, &vjet.h, m).max(0.0).sqrt(),
            nabla_velocity: nabla,
            nabla_velocity_norm: tensor::inner3(&ginv, &nabla, &nabla, m).max(0.0).sqrt(),
        }
    }

    pub fn at(metric: &MetricFamily, x: [f64; 2], t: f64) -> Self {
        Self::from_jets(&metric.jet(x, t), &metric.velocity_jet(x, t), metric.dim())
    }

    /// Smallest eigenvalue of 2 Ric + H relative to g.
    pub fn ricci_velocity_floor(&self) -> f64 {
        let a = tensor::add(&tensor::scale(&self.ricci, 2.0), &self.velocity);
        tensor::smallest_generalized_eigenvalue(&a, &self.g, self.dim)
    }
}

/// Per-time entry of an [`AuditReport`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditSample {
    pub t: f64,
    /// K(t) = max over points of max(0, -lambda_min(2 Ric + H; g)).
    pub k: f64,
    pub sup_velocity_norm: f64,
    pub sup_nabla_velocity_norm: f64,
}

/// Declared constants to audit against.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct AuditLimits {
    pub k0: Option<f64>,
    pub a: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub samples: Vec<AuditSample>,
    /// integral of K over [0, t_last] (trapezoid, constant extension on [0, t_first]).
    pub k0: f64,
    /// sup t |H|_{g(t)}
    pub sup_t_velocity: f64,
    /// sup t^{3/2} |nabla H|_{g(t)}
    pub sup_t32_nabla_velocity: f64,
    /// max of the two growth constants above.
    pub a: f64,
    pub pass: Option<bool>,
}

impl AuditReport {
    /// lambda(t) = integral_0^t K by the same quadrature as `k0`.
    pub fn lambda(&self, t: f64) -> f64 {
        integrate_samples(&self.samples, t)
    }
}

fn integrate_samples(samples: &[AuditSample], t_end: f64) -> f64 {
    if samples.is_empty() || t_end <= 0.0 {
        return 0.0;
    }
    let first = &samples[0];
    let mut acc = first.k * first.t.min(t_end);
    for w in samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.t >= t_end {
            break;
        }
        if b.t <= t_end {
            acc += 0.5 * (a.k + b.k) * (b.t - a.t);
        } else {
            let kb = a.k + (b.k - a.k) * (t_end - a.t) / (b.t - a.t);
            acc += 0.5 * (a.k + kb) * (t_end - a.t);
        }
    }
    if let Some(last) = samples.last() {
        if t_end > last.t {
            acc += last.k * (t_end - last.t);
        }
    }
    acc
}

/// Audits the curvature/velocity hypotheses of the existence theory at the
/// given times (all in (0, T]).
pub fn assumption_audit(
    metric: &MetricFamily,
    grid: &Grid,
    times: &[f64],
    limits: AuditLimits,
) -> Result<AuditReport> {
    let mut samples = Vec::with_capacity(times.len());
    for &t in times {
        let snap = GeometrySnapshot::build(metric, grid, t)?;
        let n = grid.len();
        let mut k: f64 = 0.0;
        let mut hn: f64 = 0.0;
        let mut nhn: f64 = 0.0;
        for idx in 0..n {
            k = k.max(-snap.ricci_velocity_floor(idx));
            hn = hn.max(snap.velocity_norm(idx));
            nhn = nhn.max(snap.nabla_velocity_norm(idx));
        }
        samples.push(AuditSample {
            t,
            k: k.max(0.0),
            sup_velocity_norm: hn,
            sup_nabla_velocity_norm: nhn,
        });
    }
    let t_last = samples.last().map(|s| s.t).unwrap_or(0.0);
    let k0 = integrate_samples(&samples, t_last);
    let sup_t_velocity = samples.iter().map(|s| s.t * s.sup_velocity_norm).fold(0.0, f64::max);
    let sup_t32 = samples
        .iter()
        .map(|s| s.t.powf(1.5) * s.sup_nabla_velocity_norm)
        .fold(0.0, f64::max);
    let a = sup_t_velocity.max(sup_t32);
    let pass = if limits.k0.is_none() && limits.a.is_none() {
        None
    } else {
        Some(limits.k0.is_none_or(|l| k0 <= l) && limits.a.is_none_or(|l| a <= l))
    };
    Ok(AuditReport {
        samples,
        k0,
        sup_t_velocity,
        sup_t32_nabla_velocity: sup_t32,
        a,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    #[test]
    fn flat_metric_has_no_connection_or_curvature() {
        let grid = Grid::torus2(16, 16).unwrap();
        let snap = GeometrySnapshot::build(&MetricFamily::flat(2), &grid, 0.3).unwrap();
        for idx in 0..grid.len() {
            for k in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        assert!(snap.christoffel(idx)[k][i][j].abs() < 1e-10);
                    }
                }
            }
            assert!(snap.ricci(idx).iter().flatten().all(|v| v.abs() < 1e-10));
            assert!(snap.velocity_norm(idx) == 0.0);
        }
    }

    #[test]
    fn conformal_velocity_norm() {
        // H = 2a g, |H|_g = 2a sqrt(m)
        let grid = Grid::torus1(16).unwrap();
        let snap = GeometrySnapshot::build(&MetricFamily::conformal_exp(1, 0.5), &grid, 1.0).unwrap();
        for idx in 0..grid.len() {
            assert!((snap.velocity_norm(idx) - 1.0).abs() < 1e-12);
        }
        let grid2 = Grid::torus2(8, 8).unwrap();
        let snap2 = GeometrySnapshot::build(&MetricFamily::conformal_exp(2, 0.5), &grid2, 1.0).unwrap();
        assert!((snap2.velocity_norm(3) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn inverse_metric_and_christoffel_symmetry() {
        let grid = Grid::torus2(16, 16).unwrap();
        let snap = GeometrySnapshot::build(&MetricFamily::ricci_static_flat(2, 0.3), &grid, 0.0).unwrap();
        for idx in 0..grid.len() {
            let g = snap.metric().g(idx);
            let gi = snap.metric().ginv(idx);
            for i in 0..2 {
                for k in 0..2 {
                    let s: f64 = (0..2).map(|j| gi[i][j] * g[j][k]).sum();
                    assert!((s - if i == k { 1.0 } else { 0.0 }).abs() < 1e-12);
                }
            }
            let c = snap.christoffel(idx);
            for k in 0..2 {
                assert_eq!(c[k][0][1], c[k][1][0]);
            }
        }
    }

    #[test]
    fn constants_are_harmonic_and_mass_is_conserved() {
        let grid = Grid::torus2(16, 12).unwrap();
        let fam = MetricFamily::aniso_torus(2, 0.3, 1.0);
        let mf = MetricField::sample(&fam, &grid, 0.7).unwrap();
        let c = Field::constant(grid, 3.5);
        assert!(mf.laplacian(&c).unwrap().sup_norm() < 1e-12);
        let u = Field::scalar_from_fn(grid, |x| (x[0] + 2.0 * x[1]).sin().exp());
        let lap = mf.laplacian(&u).unwrap();
        let total = mf.integrate(&lap).unwrap();
        assert!(total.abs() <= 1e-10 * u.sup_norm() * mf.volume());
    }

    #[test]
    fn fourier_eigenfunction_is_second_order() {
        let k = 3.0;
        let err = |n: usize| {
            let grid = Grid::torus1(n).unwrap();
            let mf = MetricField::sample(&MetricFamily::flat(1), &grid, 0.0).unwrap();
            let u = Field::scalar_from_fn(grid, |x| (k * x[0]).sin());
            let lap = mf.laplacian(&u).unwrap();
            (0..n)
                .map(|i| (lap.get(0, i) + k * k * u.get(0, i)).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(64) / err(128);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn conformal_laplacian_scaling() {
        let a = 0.5;
        let t = 0.8;
        let grid = Grid::torus1(256).unwrap();
        let mf = MetricField::sample(&MetricFamily::conformal_exp(1, a), &grid, t).unwrap();
        let u = Field::scalar_from_fn(grid, |x| x[0].sin());
        let lap = mf.laplacian(&u).unwrap();
        let h = grid.spacing(0);
        for i in 0..256 {
            let want = -(-2.0 * a * t).exp() * u.get(0, i);
            assert!((lap.get(0, i) - want).abs() < h * h);
        }
    }

    #[test]
    fn gradient_of_lifted_angle() {
        let grid = Grid::torus1(32).unwrap();
        let k = 2.0;
        let u = Field::scalar_from_fn(grid, |x| k * x[0]).with_lift(0, 0, k * TAU);
        let flat = MetricField::sample(&MetricFamily::flat(1), &grid, 0.0).unwrap();
        let e = flat.grad_norm_sq(&u).unwrap();
        assert!(e.values().iter().all(|v| (v - k * k).abs() < 1e-10));
        let a = 0.5;
        let t = 0.6;
        let conf = MetricField::sample(&MetricFamily::conformal_exp(1, a), &grid, t).unwrap();
        let w = Field::scalar_from_fn(grid, |x| x[0]).with_lift(0, 0, TAU);
        let ip = conf.inner_grad(&w, &w).unwrap();
        assert!(ip.values().iter().all(|v| (v - (-2.0 * a * t).exp()).abs() < 1e-12));
    }

    #[test]
    fn integrals() {
        let grid = Grid::torus1(64).unwrap();
        let flat = MetricField::sample(&MetricFamily::flat(1), &grid, 0.0).unwrap();
        assert!((flat.integrate(&Field::constant(grid, 1.0)).unwrap() - TAU).abs() < 1e-12);
        let a = 0.5;
        let conf = MetricField::sample(&MetricFamily::conformal_exp(1, a), &grid, 1.0).unwrap();
        let v = conf.integrate(&Field::constant(grid, 1.0)).unwrap();
        assert!((v - a.exp() * TAU).abs() < 1e-12);
        let g2 = Grid::torus2(16, 16).unwrap();
        let f2 = MetricField::sample(&MetricFamily::flat(2), &g2, 0.0).unwrap();
        let s = Field::scalar_from_fn(g2, |x| x[0].sin());
        assert!(f2.integrate(&s).unwrap().abs() < 1e-12);
    }

    /// Gaussian curvature of dx^2 + w(x)^2 dy^2 is -w''/w; Ric = K g.
    fn aniso_ricci_exact(x: f64, eps: f64) -> (f64, f64) {
        let w = 1.0 + eps * x.sin();
        let k = eps * x.sin() / w;
        (k, k * w * w)
    }

    #[test]
    fn aniso_curvature_richardson() {
        let eps = 0.1;
        let fam = MetricFamily::aniso_torus(2, eps, 0.0);
        let coarse = Grid::torus2(32, 8).unwrap();
        let fine = Grid::torus2(64, 8).unwrap();
        let sc = GeometrySnapshot::build(&fam, &coarse, 0.0).unwrap();
        let sf = GeometrySnapshot::build(&fam, &fine, 0.0).unwrap();
        let mut err_c: f64 = 0.0;
        let mut err_f: f64 = 0.0;
        let mut err_rich: f64 = 0.0;
        for i in 0..32 {
            let ic = coarse.flat_index([i, 0]);
            let jf = fine.flat_index([2 * i, 0]);
            let x = coarse.coords(ic)[0];
            let (_, r11_exact) = aniso_ricci_exact(x, eps);
            let rc = sc.ricci(ic)[1][1];
            let rf = sf.ricci(jf)[1][1];
            let rich = (16.0 * rf - rc) / 15.0;
            err_c = err_c.max((rc - r11_exact).abs());
            err_f = err_f.max((rf - r11_exact).abs());
            err_rich = err_rich.max((rich - r11_exact).abs());
            assert!(sc.ricci(ic)[0][1].abs() < 1e-12);
        }
        // two resolutions agree after extrapolation, and both are converging
        assert!(err_f < err_c);
        assert!(err_rich <= err_f);
        assert!(err_f < 1e-5, "fine error {err_f}");
    }

    #[test]
    fn ricci_static_flat_is_flat() {
        let grid = Grid::torus2(64, 64).unwrap();
        let snap = GeometrySnapshot::build(&MetricFamily::ricci_static_flat(2, 0.2), &grid, 0.0).unwrap();
        let max_scalar = (0..grid.len()).map(|i| snap.scalar_curvature(i).abs()).fold(0.0, f64::max);
        assert!(max_scalar < 1e-4, "{max_scalar}");
    }

    #[test]
    fn point_geometry_matches_closed_form_curvature() {
        let eps = 0.2;
        let fam = MetricFamily::aniso_torus(2, eps, 0.0);
        for x in [0.3, 1.2, 4.0] {
            let pg = PointGeometry::at(&fam, [x, 0.5], 0.0);
            let (k, r11) = aniso_ricci_exact(x, eps);
            assert!((pg.ricci[1][1] - r11).abs() < 1e-12);
            assert!((pg.ricci[0][0] - k).abs() < 1e-12);
            assert!((pg.scalar - 2.0 * k).abs() < 1e-12);
            assert!((pg.riemann_norm - 2.0 * k.abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn audit_flat_and_conformal() {
        let grid = Grid::torus1(32).unwrap();
        let times: Vec<f64> = (1..=10).map(|i| i as f64 * 0.1).collect();
        let flat = assumption_audit(&MetricFamily::flat(1), &grid, &times, AuditLimits::default()).unwrap();
        assert_eq!(flat.k0, 0.0);
        assert_eq!(flat.a, 0.0);
        let conf =
            assumption_audit(&MetricFamily::conformal_exp(1, 0.5), &grid, &times, AuditLimits::default())
                .unwrap();
        assert!(conf.samples.iter().all(|s| s.k == 0.0));
        let root = assumption_audit(
            &MetricFamily::conformal_root(1),
            &grid,
            &times,
            AuditLimits {
                k0: Some(0.0),
                a: Some(0.5),
            },
        )
        .unwrap();
        assert_eq!(root.pass, Some(true));
        // t |H| = sqrt(t) / (2 (1 + sqrt t)) peaks at t = 1
        assert!((root.sup_t_velocity - 0.25).abs() < 1e-12);
    }
}
