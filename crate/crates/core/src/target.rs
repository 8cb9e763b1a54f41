//! Embedded targets N in R^q: nearest-point projection, its second derivative
//! contracted against gradient pairings, and the coordinate charts used by the
//! intrinsic formulation.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::tensor::{Mat2, Tensor3, ZERO2, ZERO3};

/// Points farther than this from N are rejected by the checked contraction.
pub const ON_MANIFOLD_TOL: f64 = 1e-8;

/// Charts refuse points with |sin theta| below this.
pub const POLE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TargetKind {
    Euclidean,
    Sphere { radius: f64 },
}

/// Suprema of |d pi| and |d^2 pi| over the tubular neighbourhood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeBounds {
    pub gradient: f64,
    pub hessian: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetManifold {
    kind: TargetKind,
    ambient_dim: usize,
}

impl TargetManifold {
    pub fn euclidean(q: usize) -> Result<Self> {
        if q == 0 {
            return Err(Error::InvalidInput("euclidean target needs q >= 1".into()));
        }
        Ok(Self {
            kind: TargetKind::Euclidean,
            ambient_dim: q,
        })
    }

    pub fn sphere(radius: f64, q: usize) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidInput(format!("sphere radius must be positive, got {radius}")));
        }
        if q < 2 {
            return Err(Error::InvalidInput("sphere target needs q >= 2".into()));
        }
        Ok(Self {
            kind: TargetKind::Sphere { radius },
            ambient_dim: q,
        })
    }

    pub fn unit_circle() -> Self {
        Self {
            kind: TargetKind::Sphere { radius: 1.0 },
            ambient_dim: 2,
        }
    }

    pub fn unit_sphere() -> Self {
        Self {
            kind: TargetKind::Sphere { radius: 1.0 },
            ambient_dim: 3,
        }
    }

    pub fn kind(&self) -> TargetKind {
        self.kind
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    /// Intrinsic dimension n.
    pub fn dim(&self) -> usize {
        match self.kind {
            TargetKind::Euclidean => self.ambient_dim,
            TargetKind::Sphere { .. } => self.ambient_dim - 1,
        }
    }

    /// Upper bound on sectional curvature (exact constant for spheres).
    pub fn kappa(&self) -> f64 {
        match self.kind {
            TargetKind::Euclidean => 0.0,
            TargetKind::Sphere { radius } => {
                // a circle is flat
                if self.ambient_dim == 2 {
                    0.0
                } else {
                    1.0 / (radius * radius)
                }
            }
        }
    }

    /// Curvature constant used in the comparison ODE; for S^1 the embedded
    /// circle still carries the r^-2 normal curvature of the extrinsic form.
    pub fn comparison_kappa(&self) -> f64 {
        match self.kind {
            TargetKind::Euclidean => 0.0,
            TargetKind::Sphere { radius } => 1.0 / (radius * radius),
        }
    }

    pub fn tube_radius(&self) -> f64 {
        match self.kind {
            TargetKind::Euclidean => f64::INFINITY,
            TargetKind::Sphere { radius } => 0.5 * radius,
        }
    }

    pub fn tube_bounds(&self) -> TubeBounds {
        match self.kind {
            TargetKind::Euclidean => TubeBounds {
                gradient: 1.0,
                hessian: 0.0,
            },
            TargetKind::Sphere { radius } => {
                let zmin = radius - self.tube_radius();
                let q = self.ambient_dim as f64;
                TubeBounds {
                    gradient: radius / zmin,
                    hessian: radius / (zmin * zmin) * (3.0 * q - 3.0).sqrt(),
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            TargetKind::Euclidean => format!("euclidean(q={})", self.ambient_dim),
            TargetKind::Sphere { radius } => format!("sphere(r={radius},q={})", self.ambient_dim),
        }
    }

    fn check_len(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.ambient_dim {
            return Err(Error::InvalidInput(format!(
                "ambient point has {} components, target expects {}",
                z.len(),
                self.ambient_dim
            )));
        }
        Ok(())
    }

    pub fn distance(&self, z: &[f64]) -> f64 {
        match self.kind {
            TargetKind::Euclidean => 0.0,
            TargetKind::Sphere { radius } => (norm(z) - radius).abs(),
        }
    }

    pub fn project_into(&self, z: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_len(z)?;
        match self.kind {
            TargetKind::Euclidean => out.copy_from_slice(z),
            TargetKind::Sphere { radius } => {
                // the derivative bounds hold on all of |z| > r/2, so only the
                // inner side of the shell is refused
                let zn = norm(z);
                if !(zn > radius - self.tube_radius()) {
                    return Err(Error::OutsideTube {
                        distance: self.distance(z),
                        radius: self.tube_radius(),
                    });
                }
                let s = radius / zn;
                for (o, v) in out.iter_mut().zip(z) {
                    *o = s * v;
                }
            }
        }
        Ok(())
    }

    /// Drift check used by the flow: symmetric shell of half-width r/2.
    pub fn check_tube(&self, z: &[f64]) -> Result<()> {
        let d = self.distance(z);
        if d < self.tube_radius() {
            Ok(())
        } else {
            Err(Error::OutsideTube {
                distance: d,
                radius: self.tube_radius(),
            })
        }
    }

    pub fn project(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; z.len()];
        self.project_into(z, &mut out)?;
        Ok(out)
    }

    /// Removes the normal part of `v` at the on-manifold point `f`.
    pub fn tangent_project(&self, f: &[f64], v: &mut [f64]) {
        if let TargetKind::Sphere { .. } = self.kind {
            let ff = dot(f, f);
            if ff > 0.0 {
                let c = dot(f, v) / ff;
                for (vi, fi) in v.iter_mut().zip(f) {
                    *vi -= c * fi;
                }
            }
        }
    }

    /// `-pi^A_{BC}(z) P^{BC}` for a symmetric q x q matrix `pairs` (row-major),
    /// valid anywhere in the tube. No on-manifold check.
    pub fn hessian_contraction_into(&self, z: &[f64], pairs: &[f64], out: &mut [f64]) {
        let q = self.ambient_dim;
        match self.kind {
            TargetKind::Euclidean => out.iter_mut().for_each(|o| *o = 0.0),
            TargetKind::Sphere { radius } => {
                let zz = dot(z, z);
                let zn = zz.sqrt();
                let mut tr = 0.0;
                let mut zpz = 0.0;
                for b in 0..q {
                    tr += pairs[b * q + b];
                    for c in 0..q {
                        zpz += z[b] * pairs[b * q + c] * z[c];
                    }
                }
                let z3 = zz * zn;
                let z5 = z3 * zz;
                for a in 0..q {
                    let pz: f64 = (0..q).map(|c| pairs[a * q + c] * z[c]).sum();
                    let h = -(2.0 * pz + tr * z[a]) / z3 + 3.0 * z[a] * zpz / z5;
                    out[a] = -radius * h;
                }
            }
        }
    }

    /// Checked form of [`Self::hessian_contraction_into`]: `f` must lie on N.
    pub fn hessian_contraction(&self, f: &[f64], pairs: &[f64]) -> Result<Vec<f64>> {
        self.check_len(f)?;
        let q = self.ambient_dim;
        if pairs.len() != q * q {
            return Err(Error::InvalidInput(format!(
                "gradient pairing must be {q}x{q}, got {} entries",
                pairs.len()
            )));
        }
        for b in 0..q {
            for c in 0..b {
                let (x, y) = (pairs[b * q + c], pairs[c * q + b]);
                if (x - y).abs() > 1e-12 * (1.0 + x.abs().max(y.abs())) {
                    return Err(Error::InvalidInput("gradient pairing is not symmetric".into()));
                }
            }
        }
        let d = self.distance(f);
        if d > ON_MANIFOLD_TOL {
            return Err(Error::OffManifold { distance: d });
        }
        let mut out = vec![0.0; q];
        self.hessian_contraction_into(f, pairs, &mut out);
        Ok(out)
    }

    /// Jacobian d pi^A / d z^B (row-major), used by diagnostics and tests.
    pub fn projection_jacobian(&self, z: &[f64]) -> Vec<f64> {
        let q = self.ambient_dim;
        let mut j = vec![0.0; q * q];
        match self.kind {
            TargetKind::Euclidean => {
                for a in 0..q {
                    j[a * q + a] = 1.0;
                }
            }
            TargetKind::Sphere { radius } => {
                let zn = norm(z);
                for a in 0..q {
                    for b in 0..q {
                        let d = if a == b { 1.0 } else { 0.0 };
                        j[a * q + b] = radius * (d / zn - z[a] * z[b] / (zn * zn * zn));
                    }
                }
            }
        }
        j
    }

    /// Chart for the intrinsic formulation, where one exists.
    pub fn chart(&self) -> Result<TargetChart> {
        match (self.kind, self.ambient_dim) {
            (TargetKind::Euclidean, q) if q <= 2 => Ok(TargetChart::Euclidean { dim: q }),
            (TargetKind::Sphere { radius }, 2) => Ok(TargetChart::Circle { radius }),
            (TargetKind::Sphere { radius }, 3) => Ok(TargetChart::Spherical { radius }),
            _ => Err(Error::InvalidInput(format!("no intrinsic chart for {}", self.label()))),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Coordinate charts of the supported targets.
///
/// Circle: angle `psi`, embedding r(cos psi, sin psi).
/// Spherical: `(theta, phi)`, embedding r(sin theta cos phi, sin theta sin phi, cos theta).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TargetChart {
    Euclidean { dim: usize },
    Circle { radius: f64 },
    Spherical { radius: f64 },
}

impl TargetChart {
    pub fn dim(&self) -> usize {
        match self {
            TargetChart::Euclidean { dim } => *dim,
            TargetChart::Circle { .. } => 1,
            TargetChart::Spherical { .. } => 2,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            TargetChart::Euclidean { dim } => *dim,
            TargetChart::Circle { .. } => 2,
            TargetChart::Spherical { .. } => 3,
        }
    }

    /// Deck period of each chart coordinate (0 when not periodic).
    pub fn periods(&self) -> [f64; 2] {
        match self {
            TargetChart::Euclidean { .. } => [0.0, 0.0],
            TargetChart::Circle { .. } => [TAU, 0.0],
            TargetChart::Spherical { .. } => [0.0, TAU],
        }
    }

    fn check_pole(&self, y: &[f64]) -> Result<()> {
        if let TargetChart::Spherical { .. } = self {
            if y[0].sin().abs() < POLE_TOL {
                return Err(Error::ChartSingularity { theta: y[0] });
            }
        }
        Ok(())
    }

    pub fn metric(&self, y: &[f64]) -> Mat2 {
        let mut h = ZERO2;
        match self {
            TargetChart::Euclidean { dim } => {
                for (i, row) in h.iter_mut().enumerate().take(*dim) {
                    row[i] = 1.0;
                }
            }
            TargetChart::Circle { radius } => h[0][0] = radius * radius,
            TargetChart::Spherical { radius } => {
                let r2 = radius * radius;
                h[0][0] = r2;
                h[1][1] = r2 * y[0].sin().powi(2);
            }
        }
        h
    }

    /// Christoffel symbols `gamma[a][b][c]` of the chart metric.
    pub fn christoffel(&self, y: &[f64]) -> Result<Tensor3> {
        self.check_pole(y)?;
        let mut g = ZERO3;
        if let TargetChart::Spherical { .. } = self {
            let (s, c) = y[0].sin_cos();
            g[0][1][1] = -s * c;
            g[1][0][1] = c / s;
            g[1][1][0] = c / s;
        }
        Ok(g)
    }

    pub fn embed_into(&self, y: &[f64], out: &mut [f64]) {
        match self {
            TargetChart::Euclidean { dim } => out[..*dim].copy_from_slice(&y[..*dim]),
            TargetChart::Circle { radius } => {
                out[0] = radius * y[0].cos();
                out[1] = radius * y[0].sin();
            }
            TargetChart::Spherical { radius } => {
                let (st, ct) = y[0].sin_cos();
                let (sp, cp) = y[1].sin_cos();
                out[0] = radius * st * cp;
                out[1] = radius * st * sp;
                out[2] = radius * ct;
            }
        }
    }

    pub fn embed(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ambient_dim()];
        self.embed_into(y, &mut out);
        out
    }

    /// Push-forward of the chart vector `v` at `y` into R^q.
    pub fn pushforward_into(&self, y: &[f64], v: &[f64], out: &mut [f64]) {
        match self {
            TargetChart::Euclidean { dim } => out[..*dim].copy_from_slice(&v[..*dim]),
            TargetChart::Circle { radius } => {
                out[0] = -radius * y[0].sin() * v[0];
                out[1] = radius * y[0].cos() * v[0];
            }
            TargetChart::Spherical { radius } => {
                let (st, ct) = y[0].sin_cos();
                let (sp, cp) = y[1].sin_cos();
                out[0] = radius * (ct * cp * v[0] - st * sp * v[1]);
                out[1] = radius * (ct * sp * v[0] + st * cp * v[1]);
                out[2] = -radius * st * v[0];
            }
        }
    }

    /// Chart coordinates of an ambient point (principal branch).
    pub fn from_ambient(&self, z: &[f64]) -> Vec<f64> {
        match self {
            TargetChart::Euclidean { dim } => z[..*dim].to_vec(),
            TargetChart::Circle { .. } => vec![z[1].atan2(z[0])],
            TargetChart::Spherical { .. } => {
                let rho = norm(z);
                vec![(z[2] / rho).clamp(-1.0, 1.0).acos(), z[1].atan2(z[0])]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_hessian_contraction(t: &TargetManifold, z: &[f64], pairs: &[f64]) -> Vec<f64> {
        let q = z.len();
        let h = 1e-4;
        let mut out = vec![0.0; q];
        let pi = |w: &[f64]| t.project(w).unwrap();
        for b in 0..q {
            for c in 0..q {
                let p = pairs[b * q + c];
                if p == 0.0 {
                    continue;
                }
                let mut zpp = z.to_vec();
                let mut zpm = z.to_vec();
                let mut zmp = z.to_vec();
                let mut zmm = z.to_vec();
                zpp[b] += h;
                zpp[c] += h;
                zpm[b] += h;
                zpm[c] -= h;
                zmp[b] -= h;
                zmp[c] += h;
                zmm[b] -= h;
                zmm[c] -= h;
                let (a1, a2, a3, a4) = (pi(&zpp), pi(&zpm), pi(&zmp), pi(&zmm));
                for a in 0..q {
                    let d2 = (a1[a] - a2[a] - a3[a] + a4[a]) / (4.0 * h * h);
                    out[a] -= d2 * p;
                }
            }
        }
        out
    }

    #[test]
    fn projection_examples() {
        let s = TargetManifold::unit_circle();
        assert_eq!(s.project(&[2.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        let p = s.project(&[0.6 * 1.3, 0.8 * 1.3]).unwrap();
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        let e = TargetManifold::euclidean(3).unwrap();
        assert_eq!(e.project(&[1.0, -2.0, 5.0]).unwrap(), vec![1.0, -2.0, 5.0]);
        assert!(matches!(s.project(&[0.1, 0.0]), Err(Error::OutsideTube { .. })));
        assert!(s.check_tube(&[1.6, 0.0]).is_err());
        assert!(s.check_tube(&[1.4, 0.0]).is_ok());
    }

    #[test]
    fn projection_is_idempotent_in_tube() {
        let s = TargetManifold::sphere(2.0, 3).unwrap();
        for z in [[2.5, 0.3, -0.4], [-1.2, 1.1, 0.2], [0.0, 0.0, 2.9]] {
            let p = s.project(&z).unwrap();
            let pp = s.project(&p).unwrap();
            let d: f64 = p.iter().zip(&pp).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(d <= 1e-12);
        }
    }

    #[test]
    fn circle_winding_contraction() {
        // F = (cos k x, sin k x) at x = 0: dF = k (0, 1), pairs = k^2 e2 e2^T
        let s = TargetManifold::unit_circle();
        let k = 3.0;
        let out = s.hessian_contraction(&[1.0, 0.0], &[0.0, 0.0, 0.0, k * k]).unwrap();
        assert!((out[0] - k * k).abs() < 1e-14 && out[1].abs() < 1e-14);
    }

    #[test]
    fn contraction_matches_finite_difference_hessian() {
        for r in [1.0, 0.7, 2.5] {
            let t = TargetManifold::sphere(r, 3).unwrap();
            let z = [0.3 * r, -0.5 * r, 0.9 * r];
            let pairs = [1.0, 0.2, -0.1, 0.2, 0.5, 0.3, -0.1, 0.3, 2.0];
            let mut an = vec![0.0; 3];
            t.hessian_contraction_into(&z, &pairs, &mut an);
            let fd = fd_hessian_contraction(&t, &z, &pairs);
            for a in 0..3 {
                assert!((an[a] - fd[a]).abs() < 1e-5 * (1.0 + an[a].abs()), "{an:?} {fd:?}");
            }
        }
    }

    #[test]
    fn euclidean_contraction_vanishes() {
        let e = TargetManifold::euclidean(2).unwrap();
        assert_eq!(e.hessian_contraction(&[3.0, 4.0], &[1.0, 2.0, 2.0, 5.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn off_manifold_is_rejected() {
        let s = TargetManifold::unit_sphere();
        assert!(matches!(
            s.hessian_contraction(&[1.1, 0.0, 0.0], &[0.0; 9]),
            Err(Error::OffManifold { .. })
        ));
    }

    #[test]
    fn spherical_christoffel_matches_metric_derivative() {
        let c = TargetChart::Spherical { radius: 1.0 };
        let y = [0.9, 0.4];
        let g = c.christoffel(&y).unwrap();
        assert!((g[0][1][1] + y[0].sin() * y[0].cos()).abs() < 1e-15);
        // Gamma^theta_phiphi = -1/2 h^{theta theta} d_theta h_phiphi
        let h = 1e-5;
        let dh = (c.metric(&[y[0] + h, y[1]])[1][1] - c.metric(&[y[0] - h, y[1]])[1][1]) / (2.0 * h);
        assert!((g[0][1][1] + 0.5 * dh).abs() < 1e-9);
        let hpp = c.metric(&y)[1][1];
        assert!((g[1][0][1] - 0.5 * dh / hpp).abs() < 1e-9);
        assert!(matches!(c.christoffel(&[0.0, 0.0]), Err(Error::ChartSingularity { .. })));
        assert_eq!(TargetChart::Circle { radius: 1.0 }.christoffel(&[1.0]).unwrap(), ZERO3);
        assert_eq!(TargetChart::Euclidean { dim: 2 }.christoffel(&[1.0, 2.0]).unwrap(), ZERO3);
    }

    #[test]
    fn pushforward_matches_embedding_derivative() {
        let c = TargetChart::Spherical { radius: 1.5 };
        let y = [1.1, -0.7];
        let v = [0.3, -0.8];
        let mut pf = [0.0; 3];
        c.pushforward_into(&y, &v, &mut pf);
        let h = 1e-6;
        let zp = c.embed(&[y[0] + h * v[0], y[1] + h * v[1]]);
        let zm = c.embed(&[y[0] - h * v[0], y[1] - h * v[1]]);
        for a in 0..3 {
            assert!(((zp[a] - zm[a]) / (2.0 * h) - pf[a]).abs() < 1e-8);
        }
        let back = c.from_ambient(&c.embed(&y));
        assert!((back[0] - y[0]).abs() < 1e-12 && (back[1] - y[1]).abs() < 1e-12);
    }

    #[test]
    fn tube_bounds_dominate_sampled_derivatives() {
        let t = TargetManifold::sphere(1.0, 3).unwrap();
        let b = t.tube_bounds();
        for s in [0.55, 0.8, 1.0, 1.3, 1.49] {
            let z = [s * 0.6, 0.0, s * 0.8];
            let j = t.projection_jacobian(&z);
            let op = j.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(op <= b.gradient * 3f64.sqrt() + 1e-12);
        }
        assert!(b.gradient <= 2.0 + 1e-15);
    }
}
