//! Named initial data: scalar fields for the linear solvers and maps into the
//! target, in ambient (extrinsic) or chart (intrinsic) components.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::target::{TargetChart, TargetKind, TargetManifold};

/// Largest ambient dimension handled by the map-flow kernels.
pub const MAX_COMPONENTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Formulation {
    #[default]
    Extrinsic,
    Intrinsic,
}

/// Band-limited trigonometric field with seeded coefficients, bounded by `amp`
/// independently of the grid.
#[derive(Debug, Clone)]
pub struct RandomModes {
    modes: Vec<([i32; 2], f64, f64)>,
    scale: f64,
}

impl RandomModes {
    pub fn new(rng: &mut ChaCha8Rng, dim: usize, bandlimit: usize, amp: f64) -> Self {
        let b = bandlimit as i32;
        let mut modes = Vec::new();
        let k1_range = if dim == 2 { -b..=b } else { 0..=0 };
        for k0 in 0..=b {
            for k1 in k1_range.clone() {
                if k0 == 0 && k1 <= 0 {
                    continue;
                }
                let a: f64 = rng.gen_range(-1.0..=1.0);
                let c: f64 = rng.gen_range(-1.0..=1.0);
                modes.push(([k0, k1], a, c));
            }
        }
        let total: f64 = modes.iter().map(|(_, a, c)| a.abs() + c.abs()).sum();
        let scale = if total > 0.0 { amp / total } else { 0.0 };
        Self { modes, scale }
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let mut s = 0.0;
        for ([k0, k1], a, c) in &self.modes {
            let ph = *k0 as f64 * x[0] + *k1 as f64 * x[1];
            s += a * ph.cos() + c * ph.sin();
        }
        s * self.scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScalarInit {
    Zero,
    Constant { value: f64 },
    /// amplitude * sin(k x^1)
    Mode { k: f64, amplitude: f64 },
    RandomSmooth { seed: u64, bandlimit: usize, amplitude: f64 },
}

impl ScalarInit {
    pub fn generate(&self, grid: Grid) -> Field {
        match self {
            ScalarInit::Zero => Field::zeros(grid, 1),
            ScalarInit::Constant { value } => Field::constant(grid, *value),
            ScalarInit::Mode { k, amplitude } => Field::scalar_from_fn(grid, |x| amplitude * (k * x[0]).sin()),
            ScalarInit::RandomSmooth {
                seed,
                bandlimit,
                amplitude,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let r = RandomModes::new(&mut rng, grid.dim(), *bandlimit, *amplitude);
                Field::scalar_from_fn(grid, |x| r.eval(x))
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            ScalarInit::Zero => "zero".into(),
            ScalarInit::Constant { value } => format!("constant({value})"),
            ScalarInit::Mode { k, amplitude } => format!("mode(k={k},amp={amplitude})"),
            ScalarInit::RandomSmooth {
                seed,
                bandlimit,
                amplitude,
            } => format!("random-smooth(seed={seed},band={bandlimit},amp={amplitude})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MapInit {
    /// constant map to the projection of `value`
    Constant { value: Vec<f64> },
    /// x -> angle k x^1 on an equator
    Winding { k: i32 },
    /// x -> angle k x^1 + amplitude sin x^1
    PerturbedWinding { k: i32, amplitude: f64 },
    /// unit-speed equator embedding
    GreatCircle,
    /// seeded band-limited perturbation of a base point
    RandomSmooth { seed: u64, bandlimit: usize, amplitude: f64 },
}

impl MapInit {
    pub fn label(&self) -> String {
        match self {
            MapInit::Constant { value } => format!("constant({value:?})"),
            MapInit::Winding { k } => format!("winding(k={k})"),
            MapInit::PerturbedWinding { k, amplitude } => format!("perturbed-winding(k={k},amp={amplitude})"),
            MapInit::GreatCircle => "great-circle".into(),
            MapInit::RandomSmooth {
                seed,
                bandlimit,
                amplitude,
            } => format!("random-smooth(seed={seed},band={bandlimit},amp={amplitude})"),
        }
    }

    /// Equator angle as a function of x, with its lift per 2 pi in x^1.
    fn angle(&self) -> Option<(Box<dyn Fn([f64; 2]) -> f64>, f64)> {
        match self {
            MapInit::Winding { k } => {
                let k = *k as f64;
                Some((Box::new(move |x| k * x[0]), k * TAU))
            }
            MapInit::PerturbedWinding { k, amplitude } => {
                let (k, a) = (*k as f64, *amplitude);
                Some((Box::new(move |x| k * x[0] + a * x[0].sin()), k * TAU))
            }
            MapInit::GreatCircle => Some((Box::new(|x| x[0]), TAU)),
            _ => None,
        }
    }

    /// Samples the map. Intrinsic output is in chart coordinates with lifts set.
    pub fn generate(&self, target: &TargetManifold, formulation: Formulation, grid: Grid) -> Result<Field> {
        let q = target.ambient_dim();
        if q > MAX_COMPONENTS {
            return Err(Error::InvalidInput(format!(
                "ambient dimension {q} exceeds the supported maximum {MAX_COMPONENTS}"
            )));
        }
        let radius = match target.kind() {
            TargetKind::Sphere { radius } => radius,
            TargetKind::Euclidean => 1.0,
        };
        if let Some((angle, lift)) = self.angle() {
            if q < 2 {
                return Err(Error::InvalidInput(format!("{} needs an ambient dimension >= 2", self.label())));
            }
            return match formulation {
                Formulation::Extrinsic => {
                    let mut f = Field::zeros(grid, q);
                    for idx in 0..grid.len() {
                        let a = angle(grid.coords(idx));
                        f.set(0, idx, radius * a.cos());
                        f.set(1, idx, radius * a.sin());
                    }
                    Ok(f)
                }
                Formulation::Intrinsic => match target.chart()? {
                    TargetChart::Circle { .. } => Ok(Field::scalar_from_fn(grid, angle).with_lift(0, 0, lift)),
                    TargetChart::Spherical { .. } => {
                        let mut f = Field::zeros(grid, 2).with_lift(1, 0, lift);
                        for idx in 0..grid.len() {
                            f.set(0, idx, FRAC_PI_2);
                            f.set(1, idx, angle(grid.coords(idx)));
                        }
                        Ok(f)
                    }
                    TargetChart::Euclidean { .. } => Err(Error::InvalidInput(
                        "winding maps into a euclidean chart are not periodic".into(),
                    )),
                },
            };
        }
        let ambient = match self {
            MapInit::Constant { value } => {
                if value.len() != q {
                    return Err(Error::InvalidInput(format!(
                        "constant map has {} components, target expects {q}",
                        value.len()
                    )));
                }
                let p = match target.kind() {
                    TargetKind::Euclidean => value.clone(),
                    TargetKind::Sphere { radius } => {
                        let n = crate::target::norm(value);
                        if n == 0.0 {
                            return Err(Error::InvalidInput("constant map value must be nonzero".into()));
                        }
                        value.iter().map(|v| radius * v / n).collect()
                    }
                };
                let mut f = Field::zeros(grid, q);
                for c in 0..q {
                    f.component_mut(c).iter_mut().for_each(|v| *v = p[c]);
                }
                f
            }
            MapInit::RandomSmooth {
                seed,
                bandlimit,
                amplitude,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let modes: Vec<RandomModes> = (0..q)
                    .map(|_| RandomModes::new(&mut rng, grid.dim(), *bandlimit, *amplitude))
                    .collect();
                let mut f = Field::zeros(grid, q);
                let mut z = vec![0.0; q];
                let mut p = vec![0.0; q];
                for idx in 0..grid.len() {
                    let x = grid.coords(idx);
                    for (c, zc) in z.iter_mut().enumerate() {
                        *zc = modes[c].eval(x) * radius;
                    }
                    if let TargetKind::Sphere { .. } = target.kind() {
                        z[0] += radius;
                    }
                    target.project_into(&z, &mut p)?;
                    for c in 0..q {
                        f.set(c, idx, p[c]);
                    }
                }
                f
            }
            _ => unreachable!("angle-based inits handled above"),
        };
        match formulation {
            Formulation::Extrinsic => Ok(ambient),
            Formulation::Intrinsic => to_chart(&ambient, &target.chart()?),
        }
    }
}

/// Maps ambient samples into chart coordinates, unwrapping periodic chart
/// coordinates so neighbouring values differ by less than half a period.
pub fn to_chart(ambient: &Field, chart: &TargetChart) -> Result<Field> {
    let grid = *ambient.grid();
    let n = chart.dim();
    let mut out = Field::zeros(grid, n).with_time(ambient.time);
    let mut z = vec![0.0; ambient.components()];
    for idx in 0..grid.len() {
        ambient.point_into(idx, &mut z);
        let y = chart.from_ambient(&z);
        for (c, v) in y.iter().enumerate() {
            out.set(c, idx, *v);
        }
    }
    let periods = chart.periods();
    let mut lifts = vec![[0.0; 2]; n];
    for c in 0..n {
        let p = if n == 1 { periods[0] } else { periods[c] };
        if p > 0.0 {
            lifts[c] = unwrap_component(&mut out, c, p);
        }
    }
    out.set_lifts(lifts);
    Ok(out)
}

fn wrap(d: f64, p: f64) -> f64 {
    d - p * (d / p).round()
}

/// Unwraps component `c` along axis 0 then axis 1; returns the lifts.
fn unwrap_component(f: &mut Field, c: usize, p: f64) -> [f64; 2] {
    let grid = *f.grid();
    let [n0, n1] = [grid.size(0), if grid.dim() == 2 { grid.size(1) } else { 1 }];
    let raw: Vec<f64> = f.component(c).to_vec();
    let idx = |i: usize, j: usize| if grid.dim() == 2 { grid.flat_index([i, j]) } else { i };
    let mut v = vec![0.0; raw.len()];
    v[idx(0, 0)] = raw[idx(0, 0)];
    for i in 1..n0 {
        v[idx(i, 0)] = v[idx(i - 1, 0)] + wrap(raw[idx(i, 0)] - raw[idx(i - 1, 0)], p);
    }
    for i in 0..n0 {
        for j in 1..n1 {
            v[idx(i, j)] = v[idx(i, j - 1)] + wrap(raw[idx(i, j)] - raw[idx(i, j - 1)], p);
        }
    }
    let lift0 = v[idx(n0 - 1, 0)] + wrap(raw[idx(0, 0)] - raw[idx(n0 - 1, 0)], p) - v[idx(0, 0)];
    let lift1 = if grid.dim() == 2 {
        v[idx(0, n1 - 1)] + wrap(raw[idx(0, 0)] - raw[idx(0, n1 - 1)], p) - v[idx(0, 0)]
    } else {
        0.0
    };
    f.component_mut(c).copy_from_slice(&v);
    [p * (lift0 / p).round(), p * (lift1 / p).round()]
}

/// Ambient samples of a chart-coordinate field.
pub fn to_ambient(chart_field: &Field, chart: &TargetChart) -> Field {
    let grid = *chart_field.grid();
    let q = chart.ambient_dim();
    let mut out = Field::zeros(grid, q).with_time(chart_field.time);
    let mut y = vec![0.0; chart_field.components()];
    let mut z = vec![0.0; q];
    for idx in 0..grid.len() {
        chart_field.point_into(idx, &mut y);
        chart.embed_into(&y, &mut z);
        for (c, v) in z.iter().enumerate() {
            out.set(c, idx, *v);
        }
    }
    out
}

/// Distance of the sample at `idx` from both chart poles.
pub fn pole_clearance(chart_field: &Field, idx: usize) -> f64 {
    let th = chart_field.get(0, idx);
    th.rem_euclid(PI).min(PI - th.rem_euclid(PI))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn winding_forms_agree() {
        let grid = Grid::torus1(32).unwrap();
        let s2 = TargetManifold::unit_sphere();
        let ext = MapInit::Winding { k: 2 }.generate(&s2, Formulation::Extrinsic, grid).unwrap();
        let int = MapInit::Winding { k: 2 }.generate(&s2, Formulation::Intrinsic, grid).unwrap();
        let back = to_ambient(&int, &s2.chart().unwrap());
        assert!(back.sup_distance(&ext).unwrap() < 1e-14);
        assert_eq!(int.lifts()[1], [2.0 * TAU, 0.0]);
    }

    #[test]
    fn random_smooth_is_deterministic_and_on_target() {
        let grid = Grid::torus2(16, 16).unwrap();
        let s2 = TargetManifold::unit_sphere();
        let init = MapInit::RandomSmooth {
            seed: 7,
            bandlimit: 3,
            amplitude: 0.4,
        };
        let a = init.generate(&s2, Formulation::Extrinsic, grid).unwrap();
        let b = init.generate(&s2, Formulation::Extrinsic, grid).unwrap();
        assert_eq!(a.values(), b.values());
        for i in 0..grid.len() {
            assert!((crate::target::norm(&a.point(i)) - 1.0).abs() < 1e-14);
        }
        let int = init.generate(&s2, Formulation::Intrinsic, grid).unwrap();
        let back = to_ambient(&int, &s2.chart().unwrap());
        assert!(back.sup_distance(&a).unwrap() < 1e-13);
        assert!((0..grid.len()).all(|i| pole_clearance(&int, i) > 0.3));
    }

    #[test]
    fn unwrap_recovers_winding_lift() {
        let grid = Grid::torus1(64).unwrap();
        let c = TargetManifold::unit_circle();
        let ext = MapInit::PerturbedWinding { k: -3, amplitude: 0.3 }
            .generate(&c, Formulation::Extrinsic, grid)
            .unwrap();
        let int = to_chart(&ext, &c.chart().unwrap()).unwrap();
        assert!((int.lifts()[0][0] + 3.0 * TAU).abs() < 1e-12);
        for i in 0..64 {
            assert!(int.d1(0, i, 0).abs() < 4.0);
        }
    }

    #[test]
    fn scalar_random_is_bounded() {
        let grid = Grid::torus2(16, 16).unwrap();
        let f = ScalarInit::RandomSmooth {
            seed: 1,
            bandlimit: 4,
            amplitude: 0.5,
        }
        .generate(grid);
        assert!(f.sup_norm() <= 0.5);
        assert!(f.sup_norm() > 0.0);
    }
}
