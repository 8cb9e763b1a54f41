//! Pointwise map geometry: energy density, tension field, second fundamental
//! form of the map, and the flow right-hand side.

use crate::error::{Error, Result};
use crate::geometry::{GeometrySnapshot, MetricField};
use crate::grid::Field;
use crate::maps::{Formulation, MAX_COMPONENTS};
use crate::target::{TargetChart, TargetManifold};
use crate::tensor::{Mat2, ZERO2};

pub(crate) type Vq = [f64; MAX_COMPONENTS];
const ZQ: Vq = [0.0; MAX_COMPONENTS];

/// Value and central-difference derivatives of every component at one point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PointJet {
    pub f: Vq,
    pub d: [Vq; 2],
    pub dd: [[Vq; 2]; 2],
}

pub(crate) fn point_jet(u: &Field, idx: usize, second: bool) -> PointJet {
    let m = u.grid().dim();
    let mut j = PointJet {
        f: ZQ,
        d: [ZQ; 2],
        dd: [[ZQ; 2]; 2],
    };
    for c in 0..u.components() {
        j.f[c] = u.get(c, idx);
        for k in 0..m {
            j.d[k][c] = u.d1(c, idx, k);
            if second {
                for l in k..m {
                    let v = u.d2(c, idx, k, l);
                    j.dd[k][l][c] = v;
                    j.dd[l][k][c] = v;
                }
            }
        }
    }
    j
}

/// P^BC = g^ij d_i u^B d_j u^C, row-major q x q.
pub(crate) fn gradient_pairs(gi: &Mat2, jet: &PointJet, m: usize, q: usize, pairs: &mut [f64]) {
    for b in 0..q {
        for c in b..q {
            let mut s = 0.0;
            for i in 0..m {
                for j in 0..m {
                    s += gi[i][j] * jet.d[i][b] * jet.d[j][c];
                }
            }
            pairs[b * q + c] = s;
            pairs[c * q + b] = s;
        }
    }
}

/// Target data for one formulation.
#[derive(Debug, Clone, Copy)]
pub struct MapSpace {
    pub target: TargetManifold,
    pub formulation: Formulation,
    pub chart: Option<TargetChart>,
}

impl MapSpace {
    pub fn new(target: TargetManifold, formulation: Formulation) -> Result<Self> {
        if target.ambient_dim() > MAX_COMPONENTS {
            return Err(Error::InvalidInput(format!(
                "ambient dimension {} exceeds the supported maximum {MAX_COMPONENTS}",
                target.ambient_dim()
            )));
        }
        let chart = match formulation {
            Formulation::Extrinsic => None,
            Formulation::Intrinsic => Some(target.chart()?),
        };
        Ok(Self {
            target,
            formulation,
            chart,
        })
    }

    /// Components of a map field in this formulation.
    pub fn components(&self) -> usize {
        match self.chart {
            Some(c) => c.dim(),
            None => self.target.ambient_dim(),
        }
    }

    /// Target metric at the point `f` (identity in ambient form).
    pub(crate) fn target_metric(&self, f: &Vq) -> Mat2 {
        match self.chart {
            Some(c) => c.metric(&f[..c.dim()]),
            None => ZERO2,
        }
    }

    /// h_f(a, b).
    #[inline]
    pub(crate) fn inner(&self, h: &Mat2, a: &Vq, b: &Vq) -> f64 {
        let n = self.components();
        match self.chart {
            Some(_) => {
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        s += h[i][j] * a[i] * b[j];
                    }
                }
                s
            }
            None => (0..n).map(|i| a[i] * b[i]).sum(),
        }
    }

    fn tangent(&self, f: &Vq, v: &mut Vq) {
        if self.chart.is_none() {
            let q = self.target.ambient_dim();
            self.target.tangent_project(&f[..q], &mut v[..q]);
        }
    }

    fn chart_christoffel(&self, f: &Vq) -> Result<crate::tensor::Tensor3> {
        match self.chart {
            Some(c) => c.christoffel(&f[..c.dim()]),
            None => Ok(crate::tensor::ZERO3),
        }
    }

    /// (F*h)_kl = h(F_k, F_l).
    pub(crate) fn pullback(&self, jet: &PointJet, h: &Mat2, m: usize) -> Mat2 {
        let mut p = ZERO2;
        for k in 0..m {
            for l in k..m {
                let v = self.inner(h, &jet.d[k], &jet.d[l]);
                p[k][l] = v;
                p[l][k] = v;
            }
        }
        p
    }

    pub fn energy_density(&self, mf: &MetricField, u: &Field) -> Result<Field> {
        let grid = *mf.grid();
        let m = grid.dim();
        let mut out = Field::zeros(grid, 1).with_time(u.time);
        for idx in 0..grid.len() {
            let jet = point_jet(u, idx, false);
            let h = self.target_metric(&jet.f);
            let p = self.pullback(&jet, &h, m);
            out.set(0, idx, crate::tensor::trace(mf.ginv(idx), &p, m));
        }
        Ok(out)
    }

    /// Tension field. Ambient form: tangential part of Delta_g F (the normal
    /// projection-Hessian term drops out). Chart form:
    /// Delta_g f + g^{ij} Gamma~(f)(f_i, f_j).
    pub fn tension(&self, mf: &MetricField, u: &Field) -> Result<Field> {
        let grid = *mf.grid();
        let m = grid.dim();
        let n = self.components();
        let mut tau = mf.laplacian(u)?;
        tau.set_lifts(vec![[0.0; 2]; n]);
        for idx in 0..grid.len() {
            let jet = point_jet(u, idx, false);
            let mut v = ZQ;
            for (c, vc) in v.iter_mut().enumerate().take(n) {
                *vc = tau.get(c, idx);
            }
            match self.chart {
                None => self.tangent(&jet.f, &mut v),
                Some(_) => {
                    let gam = self.chart_christoffel(&jet.f)?;
                    let gi = mf.ginv(idx);
                    for (a, va) in v.iter_mut().enumerate().take(n) {
                        for b in 0..n {
                            for c in 0..n {
                                if gam[a][b][c] == 0.0 {
                                    continue;
                                }
                                for i in 0..m {
                                    for j in 0..m {
                                        *va += gi[i][j] * gam[a][b][c] * jet.d[i][b] * jet.d[j][c];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            for (c, vc) in v.iter().enumerate().take(n) {
                tau.set(c, idx, *vc);
            }
        }
        Ok(tau)
    }

    /// |tau|_h per point for a tension field computed on `u`.
    pub fn tension_norm(&self, u: &Field, tau: &Field) -> Field {
        let grid = *u.grid();
        let n = self.components();
        let mut out = Field::zeros(grid, 1).with_time(u.time);
        for idx in 0..grid.len() {
            let mut f = ZQ;
            let mut t = ZQ;
            for c in 0..n {
                f[c] = u.get(c, idx);
                t[c] = tau.get(c, idx);
            }
            let h = self.target_metric(&f);
            out.set(0, idx, self.inner(&h, &t, &t).max(0.0).sqrt());
        }
        out
    }

    /// Right-hand side of the flow. `constrained` selects the tangential
    /// tension (ambient form, used with re-projection); otherwise the ambient
    /// semilinear form Delta F - pi_BC(F) <grad F^B, grad F^C> is returned.
    pub fn flow_rhs(&self, mf: &MetricField, u: &Field, constrained: bool) -> Result<Field> {
        if constrained || self.chart.is_some() {
            return self.tension(mf, u);
        }
        let grid = *mf.grid();
        let m = grid.dim();
        let q = self.target.ambient_dim();
        let mut out = mf.laplacian(u)?;
        let mut pairs = [0.0; MAX_COMPONENTS * MAX_COMPONENTS];
        let mut nl = [0.0; MAX_COMPONENTS];
        for idx in 0..grid.len() {
            let jet = point_jet(u, idx, false);
            gradient_pairs(mf.ginv(idx), &jet, m, q, &mut pairs[..q * q]);
            self.target
                .hessian_contraction_into(&jet.f[..q], &pairs[..q * q], &mut nl[..q]);
            for (a, v) in nl.iter().enumerate().take(q) {
                out.set(a, idx, out.get(a, idx) + v);
            }
        }
        Ok(out)
    }

    /// Second fundamental form of the map at a point, `ddf[k][l]`.
    pub(crate) fn ddf(&self, snap: &GeometrySnapshot, idx: usize, jet: &PointJet) -> Result<[[Vq; 2]; 2]> {
        let m = snap.grid().dim();
        let n = self.components();
        let gam = snap.christoffel(idx);
        let tgam = self.chart_christoffel(&jet.f)?;
        let mut out = [[ZQ; 2]; 2];
        for k in 0..m {
            for l in k..m {
                let mut v = jet.dd[k][l];
                for a in 0..n {
                    for mm in 0..m {
                        v[a] -= gam[mm][k][l] * jet.d[mm][a];
                    }
                    if self.chart.is_some() {
                        for b in 0..n {
                            for c in 0..n {
                                v[a] += tgam[a][b][c] * jet.d[k][b] * jet.d[l][c];
                            }
                        }
                    }
                }
                self.tangent(&jet.f, &mut v);
                out[k][l] = v;
                out[l][k] = v;
            }
        }
        Ok(out)
    }

    /// |DdF|^2 per point.
    pub fn ddf_norm_sq(&self, snap: &GeometrySnapshot, u: &Field) -> Result<Field> {
        let grid = *snap.grid();
        let m = grid.dim();
        let mut out = Field::zeros(grid, 1).with_time(u.time);
        for idx in 0..grid.len() {
            let jet = point_jet(u, idx, true);
            let h = self.target_metric(&jet.f);
            let dd = self.ddf(snap, idx, &jet)?;
            let gi = snap.metric().ginv(idx);
            let mut s = 0.0;
            for k in 0..m {
                for a in 0..m {
                    for l in 0..m {
                        for b in 0..m {
                            s += gi[k][a] * gi[l][b] * self.inner(&h, &dd[k][l], &dd[a][b]);
                        }
                    }
                }
            }
            out.set(0, idx, s);
        }
        Ok(out)
    }

    /// Largest distance from N over the field (0 in chart form).
    pub fn drift(&self, u: &Field) -> f64 {
        if self.chart.is_some() {
            return 0.0;
        }
        let q = self.target.ambient_dim();
        let mut z = vec![0.0; q];
        let mut worst: f64 = 0.0;
        for idx in 0..u.grid().len() {
            u.point_into(idx, &mut z);
            worst = worst.max(self.target.distance(&z));
        }
        worst
    }

    /// Ambient samples of the map.
    pub fn to_ambient(&self, u: &Field) -> Field {
        match self.chart {
            Some(c) => crate::maps::to_ambient(u, &c),
            None => u.clone(),
        }
    }
}
