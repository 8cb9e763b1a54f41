//! Built-in time-dependent metric families g(x, t) on coordinate charts of T^m.

use std::fmt;
use std::sync::Arc;

use crate::tensor::{identity, scale, Mat2, Tensor3, ZERO2, ZERO3};

/// Metric value with its first and second coordinate derivatives at one point:
/// `dg[l][i][j] = d_l g_ij`, `ddg[k][l][i][j] = d_k d_l g_ij`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricJet {
    pub g: Mat2,
    pub dg: Tensor3,
    pub ddg: [Tensor3; 2],
}

/// Velocity H = dg/dt with its first coordinate derivatives `dh[k][i][j] = d_k H_ij`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityJet {
    pub h: Mat2,
    pub dh: Tensor3,
}

/// Scalar conformal exponent phi with coordinate gradient and Hessian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConformalJet {
    pub phi: f64,
    pub dphi: [f64; 2],
    pub ddphi: Mat2,
}

/// Spatial conformal exponent used by [`MetricKind::Conformal`].
pub trait ConformalFactor: fmt::Debug + Send + Sync {
    fn jet(&self, x: [f64; 2]) -> ConformalJet;
    fn label(&self) -> String;
}

#[derive(Debug, Clone)]
pub enum MetricKind {
    /// g = delta.
    Flat,
    /// g = exp(2 a t) delta.
    ConformalExp { rate: f64 },
    /// g = (1 + sqrt t) delta.
    ConformalRoot,
    /// w = 1 + eps sin(x^1) cos(omega t); g = w^2 on T^1, diag(1, w^2) on T^2.
    AnisoTorus { amplitude: f64, frequency: f64 },
    /// Pull-back of the flat metric by x^a -> x^a + eps sin x^a: g_aa = (1 + eps cos x^a)^2.
    /// Static and flat, so it is a (trivial) Ricci flow with H = -2 Ric = 0.
    RicciStaticFlat { amplitude: f64 },
    /// exp(2 phi(x)) g_base(x, t).
    Conformal {
        base: Box<MetricKind>,
        factor: Arc<dyn ConformalFactor>,
    },
}

/// Time-dependent metric family on an m-dimensional chart, t in [0, horizon].
#[derive(Debug, Clone)]
pub struct MetricFamily {
    kind: MetricKind,
    dim: usize,
    horizon: f64,
    analytic_velocity: bool,
}

/// Step used for finite-difference velocities when no analytic H is available.
pub const VELOCITY_FD_STEP: f64 = 1e-4;

impl MetricFamily {
    pub fn new(kind: MetricKind, dim: usize, horizon: f64) -> Self {
        assert!((1..=2).contains(&dim), "domain dimension must be 1 or 2");
        Self {
            kind,
            dim,
            horizon,
            analytic_velocity: true,
        }
    }

    pub fn flat(dim: usize) -> Self {
        Self::new(MetricKind::Flat, dim, f64::INFINITY)
    }

    pub fn conformal_exp(dim: usize, rate: f64) -> Self {
        Self::new(MetricKind::ConformalExp { rate }, dim, f64::INFINITY)
    }

    pub fn conformal_root(dim: usize) -> Self {
        Self::new(MetricKind::ConformalRoot, dim, f64::INFINITY)
    }

    pub fn aniso_torus(dim: usize, amplitude: f64, frequency: f64) -> Self {
        Self::new(MetricKind::AnisoTorus { amplitude, frequency }, dim, f64::INFINITY)
    }

    pub fn ricci_static_flat(dim: usize, amplitude: f64) -> Self {
        Self::new(MetricKind::RicciStaticFlat { amplitude }, dim, f64::INFINITY)
    }

    /// Same family with the analytic velocity hidden, forcing finite differences in t.
    pub fn without_analytic_velocity(mut self) -> Self {
        self.analytic_velocity = false;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn kind(&self) -> &MetricKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn has_analytic_velocity(&self) -> bool {
        self.analytic_velocity
    }

    pub fn label(&self) -> String {
        kind_label(&self.kind)
    }

    /// True when g does not depend on t.
    pub fn is_static(&self) -> bool {
        kind_is_static(&self.kind)
    }

    pub fn metric(&self, x: [f64; 2], t: f64) -> Mat2 {
        kind_jet(&self.kind, self.dim, x, t).g
    }

    pub fn jet(&self, x: [f64; 2], t: f64) -> MetricJet {
        kind_jet(&self.kind, self.dim, x, t)
    }

    /// H(x, t): analytic when available, otherwise central differences in t.
    pub fn velocity(&self, x: [f64; 2], t: f64) -> Mat2 {
        if self.analytic_velocity {
            kind_velocity(&self.kind, self.dim, x, t).h
        } else {
            self.velocity_fd(x, t, VELOCITY_FD_STEP)
        }
    }

    /// Analytic velocity jet (ignores the finite-difference flag).
    pub fn velocity_jet(&self, x: [f64; 2], t: f64) -> VelocityJet {
        kind_velocity(&self.kind, self.dim, x, t)
    }

    /// Second-order finite-difference velocity with step `delta`; one-sided near t = 0.
    pub fn velocity_fd(&self, x: [f64; 2], t: f64, delta: f64) -> Mat2 {
        let mut out = ZERO2;
        if t - delta >= 0.0 {
            let gp = self.metric(x, t + delta);
            let gm = self.metric(x, t - delta);
            for i in 0..2 {
                for j in 0..2 {
                    out[i][j] = (gp[i][j] - gm[i][j]) / (2.0 * delta);
                }
            }
        } else {
            let g0 = self.metric(x, t);
            let g1 = self.metric(x, t + delta);
            let g2 = self.metric(x, t + 2.0 * delta);
            for i in 0..2 {
                for j in 0..2 {
                    out[i][j] = (-3.0 * g0[i][j] + 4.0 * g1[i][j] - g2[i][j]) / (2.0 * delta);
                }
            }
        }
        out
    }
}

fn kind_label(kind: &MetricKind) -> String {
    match kind {
        MetricKind::Flat => "flat".into(),
        MetricKind::ConformalExp { rate } => format!("conformal-exp(a={rate})"),
        MetricKind::ConformalRoot => "conformal-root".into(),
        MetricKind::AnisoTorus { amplitude, frequency } => {
            format!("aniso-torus(eps={amplitude},omega={frequency})")
        }
        MetricKind::RicciStaticFlat { amplitude } => format!("ricci-static-flat(eps={amplitude})"),
        MetricKind::Conformal { base, factor } => {
            format!("conformal[{}]({})", factor.label(), kind_label(base))
        }
    }
}

fn kind_is_static(kind: &MetricKind) -> bool {
    match kind {
        MetricKind::Flat | MetricKind::RicciStaticFlat { .. } => true,
        MetricKind::ConformalExp { rate } => *rate == 0.0,
        MetricKind::ConformalRoot => false,
        MetricKind::AnisoTorus { frequency, .. } => *frequency == 0.0,
        MetricKind::Conformal { base, .. } => kind_is_static(base),
    }
}

fn scalar_jet(dim: usize, c: f64) -> MetricJet {
    MetricJet {
        g: scale(&identity(dim), c),
        dg: ZERO3,
        ddg: [ZERO3; 2],
    }
}

fn kind_jet(kind: &MetricKind, dim: usize, x: [f64; 2], t: f64) -> MetricJet {
    match kind {
        MetricKind::Flat => scalar_jet(dim, 1.0),
        MetricKind::ConformalExp { rate } => scalar_jet(dim, (2.0 * rate * t).exp()),
        MetricKind::ConformalRoot => scalar_jet(dim, 1.0 + t.max(0.0).sqrt()),
        MetricKind::AnisoTorus { amplitude, frequency } => {
            let ct = (frequency * t).cos();
            let (s, c) = x[0].sin_cos();
            let w = 1.0 + amplitude * s * ct;
            let w1 = amplitude * c * ct;
            let w11 = -amplitude * s * ct;
            let slot = if dim == 1 { 0 } else { 1 };
            let mut jet = scalar_jet(dim, 1.0);
            jet.g[slot][slot] = w * w;
            jet.dg[0][slot][slot] = 2.0 * w * w1;
            jet.ddg[0][0][slot][slot] = 2.0 * (w1 * w1 + w * w11);
            jet
        }
        MetricKind::RicciStaticFlat { amplitude } => {
            let mut jet = scalar_jet(dim, 1.0);
            for a in 0..dim {
                let (s, c) = x[a].sin_cos();
                let w = 1.0 + amplitude * c;
                let w1 = -amplitude * s;
                let w11 = -amplitude * c;
                jet.g[a][a] = w * w;
                jet.dg[a][a][a] = 2.0 * w * w1;
                jet.ddg[a][a][a][a] = 2.0 * (w1 * w1 + w * w11);
            }
            jet
        }
        MetricKind::Conformal { base, factor } => {
            let b = kind_jet(base, dim, x, t);
            let cj = factor.jet(x);
            let e = (2.0 * cj.phi).exp();
            let mut jet = MetricJet {
                g: scale(&b.g, e),
                dg: ZERO3,
                ddg: [ZERO3; 2],
            };
            for i in 0..dim {
                for j in 0..dim {
                    for k in 0..dim {
                        jet.dg[k][i][j] = e * (2.0 * cj.dphi[k] * b.g[i][j] + b.dg[k][i][j]);
                        for l in 0..dim {
                            jet.ddg[k][l][i][j] = e
                                * ((4.0 * cj.dphi[k] * cj.dphi[l] + 2.0 * cj.ddphi[k][l]) * b.g[i][j]
                                    + 2.0 * cj.dphi[k] * b.dg[l][i][j]
                                    + 2.0 * cj.dphi[l] * b.dg[k][i][j]
                                    + b.ddg[k][l][i][j]);
                        }
                    }
                }
            }
            jet
        }
    }
}

fn kind_velocity(kind: &MetricKind, dim: usize, x: [f64; 2], t: f64) -> VelocityJet {
    let zero = VelocityJet { h: ZERO2, dh: ZERO3 };
    match kind {
        MetricKind::Flat | MetricKind::RicciStaticFlat { .. } => zero,
        MetricKind::ConformalExp { rate } => VelocityJet {
            h: scale(&identity(dim), 2.0 * rate * (2.0 * rate * t).exp()),
            dh: ZERO3,
        },
        MetricKind::ConformalRoot => VelocityJet {
            h: scale(&identity(dim), 0.5 / t.max(f64::MIN_POSITIVE).sqrt()),
            dh: ZERO3,
        },
        MetricKind::AnisoTorus { amplitude, frequency } => {
            let (st, ct) = (frequency * t).sin_cos();
            let (s, c) = x[0].sin_cos();
            let w = 1.0 + amplitude * s * ct;
            let w1 = amplitude * c * ct;
            let wt = -amplitude * frequency * s * st;
            let wt1 = -amplitude * frequency * c * st;
            let slot = if dim == 1 { 0 } else { 1 };
            let mut v = zero;
            v.h[slot][slot] = 2.0 * w * wt;
            v.dh[0][slot][slot] = 2.0 * (w1 * wt + w * wt1);
            v
        }
        MetricKind::Conformal { base, factor } => {
            let b = kind_velocity(base, dim, x, t);
            let cj = factor.jet(x);
            let e = (2.0 * cj.phi).exp();
            let mut v = VelocityJet {
                h: scale(&b.h, e),
                dh: ZERO3,
            };
            for k in 0..dim {
                for i in 0..dim {
                    for j in 0..dim {
                        v.dh[k][i][j] = e * (2.0 * cj.dphi[k] * b.h[i][j] + b.dh[k][i][j]);
                    }
                }
            }
            v
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(family: &MetricFamily, x: [f64; 2], t: f64) {
        let d = 1e-5;
        let jet = family.jet(x, t);
        let m = family.dim();
        for l in 0..m {
            let mut xp = x;
            let mut xm = x;
            xp[l] += d;
            xm[l] -= d;
            let gp = family.jet(xp, t);
            let gm = family.jet(xm, t);
            for i in 0..m {
                for j in 0..m {
                    let fd = (gp.g[i][j] - gm.g[i][j]) / (2.0 * d);
                    assert!((fd - jet.dg[l][i][j]).abs() < 1e-8, "dg mismatch");
                    for k in 0..m {
                        let fd2 = (gp.dg[k][i][j] - gm.dg[k][i][j]) / (2.0 * d);
                        assert!((fd2 - jet.ddg[l][k][i][j]).abs() < 1e-7, "ddg mismatch");
                    }
                }
            }
        }
        let v = family.velocity_jet(x, t);
        let fd_h = family.velocity_fd(x, t, 1e-5);
        for i in 0..m {
            for j in 0..m {
                assert!((fd_h[i][j] - v.h[i][j]).abs() < 1e-7, "H mismatch");
            }
        }
    }

    #[test]
    fn analytic_jets_match_finite_differences() {
        for dim in [1, 2] {
            fd_check(&MetricFamily::aniso_torus(dim, 0.3, 2.0), [0.7, 1.1], 0.4);
            fd_check(&MetricFamily::ricci_static_flat(dim, 0.2), [0.7, 2.1], 0.4);
            fd_check(&MetricFamily::conformal_exp(dim, 0.5), [0.1, 0.2], 0.9);
            fd_check(&MetricFamily::conformal_root(dim), [0.1, 0.2], 0.9);
        }
    }

    #[test]
    fn velocity_fd_is_second_order() {
        let fam = MetricFamily::conformal_exp(1, 0.5).without_analytic_velocity();
        let exact = fam.velocity_jet([0.0; 2], 1.0).h[0][0];
        let e1 = (fam.velocity_fd([0.0; 2], 1.0, 1e-2)[0][0] - exact).abs();
        let e2 = (fam.velocity_fd([0.0; 2], 1.0, 5e-3)[0][0] - exact).abs();
        let ratio = e1 / e2;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn static_flags() {
        assert!(MetricFamily::flat(2).is_static());
        assert!(MetricFamily::aniso_torus(2, 0.1, 0.0).is_static());
        assert!(!MetricFamily::conformal_exp(1, 0.5).is_static());
    }
}
