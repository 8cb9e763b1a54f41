//! Periodic lattices on the torus T^m (m = 1, 2) and fields sampled on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform periodic lattice. Points are stored row-major with axis 0 slowest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    sizes: [usize; 2],
    period: [f64; 2],
}

pub const MIN_POINTS_PER_AXIS: usize = 8;

impl Grid {
    pub fn new(sizes: &[usize], period: &[f64]) -> Result<Self> {
        let dim = sizes.len();
        if !(1..=2).contains(&dim) || period.len() != dim {
            return Err(Error::InvalidInput(format!(
                "grid dimension must be 1 or 2 with one period per axis (got {} sizes, {} periods)",
                dim,
                period.len()
            )));
        }
        let mut s = [1usize; 2];
        let mut p = [1.0f64; 2];
        for a in 0..dim {
            if sizes[a] < MIN_POINTS_PER_AXIS {
                return Err(Error::InvalidInput(format!(
                    "grid axis {a} has {} points, need at least {MIN_POINTS_PER_AXIS}",
                    sizes[a]
                )));
            }
            if !(period[a].is_finite() && period[a] > 0.0) {
                return Err(Error::InvalidInput(format!("grid axis {a} has non-positive period")));
            }
            s[a] = sizes[a];
            p[a] = period[a];
        }
        Ok(Self {
            dim,
            sizes: s,
            period: p,
        })
    }

    /// T^1 of period 2 pi.
    pub fn torus1(n: usize) -> Result<Self> {
        Self::new(&[n], &[std::f64::consts::TAU])
    }

    /// T^2 with both periods 2 pi.
    pub fn torus2(n0: usize, n1: usize) -> Result<Self> {
        Self::new(&[n0, n1], &[std::f64::consts::TAU; 2])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn size(&self, axis: usize) -> usize {
        self.sizes[axis]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes[..self.dim]
    }

    pub fn period(&self, axis: usize) -> f64 {
        self.period[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.period[axis] / self.sizes[axis] as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).fold(f64::INFINITY, f64::min)
    }

    /// Volume of a lattice cell in coordinates.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    pub fn len(&self) -> usize {
        self.sizes[0] * if self.dim == 2 { self.sizes[1] } else { 1 }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Refined copy with every axis doubled.
    pub fn refined(&self) -> Self {
        let mut g = *self;
        for a in 0..self.dim {
            g.sizes[a] *= 2;
        }
        g
    }

    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx / self.sizes[1], idx % self.sizes[1]]
        }
    }

    pub fn flat_index(&self, mi: [usize; 2]) -> usize {
        if self.dim == 1 {
            mi[0]
        } else {
            mi[0] * self.sizes[1] + mi[1]
        }
    }

    pub fn coords(&self, idx: usize) -> [f64; 2] {
        let mi = self.multi_index(idx);
        let mut x = [0.0; 2];
        for a in 0..self.dim {
            x[a] = mi[a] as f64 * self.spacing(a);
        }
        x
    }

    /// Neighbour `offset` steps along `axis`, together with the number of periods
    /// crossed (needed for lifted fields).
    #[inline]
    pub fn neighbor(&self, idx: usize, axis: usize, offset: isize) -> (usize, isize) {
        let mut mi = self.multi_index(idx);
        let n = self.sizes[axis] as isize;
        let raw = mi[axis] as isize + offset;
        let wraps = raw.div_euclid(n);
        mi[axis] = raw.rem_euclid(n) as usize;
        (self.flat_index(mi), wraps)
    }

    /// Minimal-image coordinate displacement from `from` to `to`.
    pub fn displacement(&self, from: usize, to: usize) -> [f64; 2] {
        let a = self.coords(from);
        let b = self.coords(to);
        let mut d = [0.0; 2];
        for ax in 0..self.dim {
            let p = self.period[ax];
            let mut v = b[ax] - a[ax];
            v -= p * (v / p).round();
            d[ax] = v;
        }
        d
    }
}

/// Grid-sampled field with `components` values per point, stored component-major.
///
/// Components may be lifts of angle-valued maps: `lifts[c][axis]` is the jump
/// added to component `c` whenever one period along `axis` is crossed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    grid: Grid,
    components: usize,
    values: Vec<f64>,
    lifts: Vec<[f64; 2]>,
    pub time: f64,
}

/// Scalar fields are single-component fields.
pub type ScalarField = Field;

impl Field {
    pub fn zeros(grid: Grid, components: usize) -> Self {
        Self {
            grid,
            components,
            values: vec![0.0; grid.len() * components],
            lifts: vec![[0.0; 2]; components],
            time: 0.0,
        }
    }

    pub fn from_values(grid: Grid, components: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() * components {
            return Err(Error::InvalidInput(format!(
                "expected {} values, got {}",
                grid.len() * components,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite field value at slot {pos}")));
        }
        Ok(Self {
            grid,
            components,
            values,
            lifts: vec![[0.0; 2]; components],
            time: 0.0,
        })
    }

    pub fn scalar_from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.coords(i))).collect();
        Self {
            grid,
            components: 1,
            values,
            lifts: vec![[0.0; 2]],
            time: 0.0,
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self::scalar_from_fn(grid, |_| c)
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time = t;
        self
    }

    pub fn with_lift(mut self, component: usize, axis: usize, jump: f64) -> Self {
        self.lifts[component][axis] = jump;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn lifts(&self) -> &[[f64; 2]] {
        &self.lifts
    }

    pub fn set_lifts(&mut self, lifts: Vec<[f64; 2]>) {
        assert_eq!(lifts.len(), self.components);
        self.lifts = lifts;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.grid.len();
        &mut self.values[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, idx: usize) -> f64 {
        self.values[c * self.grid.len() + idx]
    }

    #[inline]
    pub fn set(&mut self, c: usize, idx: usize, v: f64) {
        let n = self.grid.len();
        self.values[c * n + idx] = v;
    }

    /// Point value as a vector over components.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        (0..self.components).map(|c| self.get(c, idx)).collect()
    }

    pub fn point_into(&self, idx: usize, out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate().take(self.components) {
            *o = self.get(c, idx);
        }
    }

    /// Value of the lifted component at `offset` steps along `axis` from `idx`.
    #[inline]
    pub fn shifted(&self, c: usize, idx: usize, axis: usize, offset: isize) -> f64 {
        let (j, wraps) = self.grid.neighbor(idx, axis, offset);
        self.get(c, j) + wraps as f64 * self.lifts[c][axis]
    }

    /// Second-order central first derivative.
    #[inline]
    pub fn d1(&self, c: usize, idx: usize, axis: usize) -> f64 {
        let h = self.grid.spacing(axis);
        (self.shifted(c, idx, axis, 1) - self.shifted(c, idx, axis, -1)) / (2.0 * h)
    }

    /// Second-order central second derivative d_a d_b.
    #[inline]
    pub fn d2(&self, c: usize, idx: usize, a: usize, b: usize) -> f64 {
        if a == b {
            let h = self.grid.spacing(a);
            (self.shifted(c, idx, a, 1) - 2.0 * self.get(c, idx) + self.shifted(c, idx, a, -1)) / (h * h)
        } else {
            let ha = self.grid.spacing(a);
            // lifts along `a` are constant offsets and drop out of the b-derivative
            let (ip, _) = self.grid.neighbor(idx, a, 1);
            let (im, _) = self.grid.neighbor(idx, a, -1);
            (self.d1(c, ip, b) - self.d1(c, im, b)) / (2.0 * ha)
        }
    }

    pub fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            Err(Error::GridMismatch)
        } else {
            Ok(())
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Largest |self - other| over all slots.
    pub fn sup_distance(&self, other: &Field) -> Result<f64> {
        self.check_same_grid(other)?;
        if self.components != other.components {
            return Err(Error::GridMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Field of per-point Euclidean norms over components.
    pub fn pointwise_norm(&self) -> Field {
        let n = self.grid.len();
        let mut out = Field::zeros(self.grid, 1).with_time(self.time);
        for i in 0..n {
            let s: f64 = (0..self.components).map(|c| self.get(c, i).powi(2)).sum();
            out.values[i] = s.sqrt();
        }
        out
    }

    /// In-place `self += s * other`.
    pub fn add_scaled(&mut self, s: f64, other: &Field) {
        for (o, b) in self.values.iter_mut().zip(&other.values) {
            *o += s * b;
        }
    }

    /// Linear combination `self + s * other` (lifts taken from `self`).
    pub fn axpy(&self, s: f64, other: &Field) -> Field {
        let mut out = self.clone();
        for (o, b) in out.values.iter_mut().zip(&other.values) {
            *o += s * b;
        }
        out
    }
}
