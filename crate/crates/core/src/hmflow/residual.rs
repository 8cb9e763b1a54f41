//! Discrete check of the parabolic evolution identities satisfied by the
//! energy density and the squared tension along the flow:
//!
//! (d/dt - Delta) e = -<H + 2 Ric, F*h> - 2 |DdF|^2 + 2 kappa (e^2 - |F*h|^2)
//!
//! (d/dt - Delta) |tau|^2 = 2 kappa (|tau|^2 e - g^kl <tau,F_k><tau,F_l>)
//!     - 2 |nabla tau|^2 - 2 H^kl <tau, DdF_kl>
//!     - 2 g^ka <tau,F_k> (div H - 1/2 d tr H)_a
//!
//! with dg/dt = H and kappa the constant sectional curvature of the target.

use serde::{Deserialize, Serialize};

use super::diagnostics::{point_jet, MapSpace, Vq};
use super::{FlowSolver, FlowState};
use crate::error::{Error, Result};
use crate::geometry::{GeometrySnapshot, MetricField};
use crate::grid::Field;
use crate::maps::MAX_COMPONENTS;
use crate::metric::MetricFamily;
use crate::tensor::{Mat2, ZERO2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResidualKind {
    Energy,
    TensionSq,
}

impl ResidualKind {
    pub fn label(self) -> &'static str {
        match self {
            ResidualKind::Energy => "energy",
            ResidualKind::TensionSq => "tension^2",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualSample {
    pub kind: ResidualKind,
    pub t: f64,
    pub dt: f64,
    pub spacing: f64,
    pub sup_residual: f64,
    /// sup of |(d/dt - Delta) q|, for scale
    pub sup_lhs: f64,
    pub point: usize,
}

fn raise(gi: &Mat2, a: &Mat2, m: usize) -> Mat2 {
    let mut out = ZERO2;
    for k in 0..m {
        for l in 0..m {
            let mut s = 0.0;
            for i in 0..m {
                for j in 0..m {
                    s += gi[k][i] * gi[l][j] * a[i][j];
                }
            }
            out[k][l] = s;
        }
    }
    out
}

fn contract(a: &Mat2, b: &Mat2, m: usize) -> f64 {
    let mut s = 0.0;
    for k in 0..m {
        for l in 0..m {
            s += a[k][l] * b[k][l];
        }
    }
    s
}

fn quantity(space: &MapSpace, mf: &MetricField, u: &Field, kind: ResidualKind) -> Result<Field> {
    match kind {
        ResidualKind::Energy => space.energy_density(mf, u),
        ResidualKind::TensionSq => {
            let tau = space.tension(mf, u)?;
            let mut n = space.tension_norm(u, &tau);
            for v in n.values_mut() {
                *v *= *v;
            }
            Ok(n)
        }
    }
}

/// Right-hand side of the identity at every grid point of `snap`.
fn identity_rhs(space: &MapSpace, snap: &GeometrySnapshot, u: &Field, kind: ResidualKind) -> Result<Field> {
    let grid = *snap.grid();
    let m = grid.dim();
    let n = space.components();
    let kappa = space.target.kappa();
    let mf = snap.metric();
    let tau = match kind {
        ResidualKind::TensionSq => Some(space.tension(mf, u)?),
        ResidualKind::Energy => None,
    };
    let mut out = Field::zeros(grid, 1).with_time(u.time);
    for idx in 0..grid.len() {
        let jet = point_jet(u, idx, true);
        let h = space.target_metric(&jet.f);
        let gi = mf.ginv(idx);
        let p = space.pullback(&jet, &h, m);
        let pu = raise(gi, &p, m);
        let e = crate::tensor::trace(gi, &p, m);
        let p2 = contract(&pu, &p, m);
        let dd = space.ddf(snap, idx, &jet)?;
        let vel = snap.velocity(idx);
        let value = match kind {
            ResidualKind::Energy => {
                let ric = snap.ricci(idx);
                let mut a = ZERO2;
                for k in 0..m {
                    for l in 0..m {
                        a[k][l] = vel[k][l] + 2.0 * ric[k][l];
                    }
                }
                let mut dd2 = 0.0;
                for k in 0..m {
                    for l in 0..m {
                        for i in 0..m {
                            for j in 0..m {
                                dd2 += gi[k][i] * gi[l][j] * space.inner(&h, &dd[k][l], &dd[i][j]);
                            }
                        }
                    }
                }
                -contract(&pu, &a, m) - 2.0 * dd2 + 2.0 * kappa * (e * e - p2)
            }
            ResidualKind::TensionSq => {
                let tau = tau.as_ref().expect("tension computed above");
                let mut t: Vq = [0.0; MAX_COMPONENTS];
                for (c, tc) in t.iter_mut().enumerate().take(n) {
                    *tc = tau.get(c, idx);
                }
                let t2 = space.inner(&h, &t, &t);
                // <tau, F_k>
                let mut tf = [0.0; 2];
                for (k, v) in tf.iter_mut().enumerate().take(m) {
                    *v = space.inner(&h, &t, &jet.d[k]);
                }
                let mut curv = t2 * e;
                for k in 0..m {
                    for l in 0..m {
                        curv -= gi[k][l] * tf[k] * tf[l];
                    }
                }
                // nabla_k tau
                let mut nt = [[0.0; MAX_COMPONENTS]; 2];
                let tgam = match space.chart {
                    Some(c) => Some(c.christoffel(&jet.f[..c.dim()])?),
                    None => None,
                };
                for k in 0..m {
                    for c in 0..n {
                        nt[k][c] = tau.d1(c, idx, k);
                    }
                    match &tgam {
                        None => {
                            let q = space.target.ambient_dim();
                            space.target.tangent_project(&jet.f[..q], &mut nt[k][..q]);
                        }
                        Some(g) => {
                            let mut add = [0.0; MAX_COMPONENTS];
                            for (a, av) in add.iter_mut().enumerate().take(n) {
                                for b in 0..n {
                                    for c in 0..n {
                                        *av += g[a][b][c] * jet.d[k][b] * t[c];
                                    }
                                }
                            }
                            for a in 0..n {
                                nt[k][a] += add[a];
                            }
                        }
                    }
                }
                let mut grad_tau = 0.0;
                for k in 0..m {
                    for l in 0..m {
                        grad_tau += gi[k][l] * space.inner(&h, &nt[k], &nt[l]);
                    }
                }
                let hu = raise(gi, vel, m);
                let mut hdd = 0.0;
                for k in 0..m {
                    for l in 0..m {
                        hdd += hu[k][l] * space.inner(&h, &t, &dd[k][l]);
                    }
                }
                let nv = snap.nabla_velocity(idx);
                let mut w = [0.0; 2];
                for (a, wa) in w.iter_mut().enumerate().take(m) {
                    let mut div = 0.0;
                    let mut dtr = 0.0;
                    for i in 0..m {
                        for j in 0..m {
                            div += gi[i][j] * nv[i][j][a];
                            dtr += gi[i][j] * nv[a][i][j];
                        }
                    }
                    *wa = div - 0.5 * dtr;
                }
                let mut last = 0.0;
                for k in 0..m {
                    for a in 0..m {
                        last += gi[k][a] * tf[k] * w[a];
                    }
                }
                2.0 * kappa * curv - 2.0 * grad_tau - 2.0 * hdd - 2.0 * last
            }
        };
        out.set(0, idx, value);
    }
    Ok(out)
}

/// Residual LHS - RHS of the chosen identity at the middle of three
/// consecutive flow states (nonuniform three-point time derivative).
pub fn evolution_residual(
    space: &MapSpace,
    metric: &MetricFamily,
    states: [&FlowState; 3],
    kind: ResidualKind,
) -> Result<(Field, ResidualSample)> {
    let [s0, s1, s2] = states;
    let grid = *s1.map.grid();
    let (t0, t1, t2) = (s0.time(), s1.time(), s2.time());
    let (d1, d2) = (t1 - t0, t2 - t1);
    if !(d1 > 0.0 && d2 > 0.0) {
        return Err(Error::InsufficientData("residual needs three increasing times".into()));
    }
    let q: Vec<Field> = [s0, s1, s2]
        .iter()
        .map(|s| {
            let mf = MetricField::sample(metric, &grid, s.time())?;
            quantity(space, &mf, &s.map, kind)
        })
        .collect::<Result<_>>()?;
    let snap = GeometrySnapshot::build(metric, &grid, t1)?;
    let lap = snap.laplacian(&q[1])?;
    let rhs = identity_rhs(space, &snap, &s1.map, kind)?;
    let cm = -d2 / (d1 * (d1 + d2));
    let c0 = (d2 - d1) / (d1 * d2);
    let cp = d1 / (d2 * (d1 + d2));
    let mut res = Field::zeros(grid, 1).with_time(t1);
    let mut sup: f64 = 0.0;
    let mut sup_lhs: f64 = 0.0;
    let mut point = 0;
    for idx in 0..grid.len() {
        let dq = cm * q[0].get(0, idx) + c0 * q[1].get(0, idx) + cp * q[2].get(0, idx);
        let lhs = dq - lap.get(0, idx);
        let r = lhs - rhs.get(0, idx);
        res.set(0, idx, r);
        sup_lhs = sup_lhs.max(lhs.abs());
        if r.abs() > sup {
            sup = r.abs();
            point = idx;
        }
    }
    Ok((
        res,
        ResidualSample {
            kind,
            t: t1,
            dt: d1.max(d2),
            spacing: grid.min_spacing(),
            sup_residual: sup,
            sup_lhs,
            point,
        },
    ))
}

/// Integrates to `t_star`, then takes two extra steps at the CFL limit and
/// evaluates the residual at the middle state.
pub fn residual_after_steps(
    solver: &FlowSolver,
    initial: FlowState,
    t_star: f64,
    kind: ResidualKind,
) -> Result<ResidualSample> {
    let (s0, _) = solver.advance(initial, &[t_star], |_, _| Ok(()))?;
    let dt = solver.step_limit(t_star)?;
    let s1 = solver.step(&s0, dt)?;
    let s2 = solver.step(&s1, dt)?;
    let (_, sample) = evolution_residual(solver.space(), solver.metric(), [&s0, &s1, &s2], kind)?;
    Ok(sample)
}
