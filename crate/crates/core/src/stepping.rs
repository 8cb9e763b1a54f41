//! Explicit time stepping shared by the linear, kernel and map-flow solvers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::MetricField;
use crate::grid::Field;

/// Default CFL safety factor: dt <= 0.2 h^2 / lambda_max(g^{-1}).
pub const DEFAULT_SAFETY: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Euler,
    /// two-stage strong-stability-preserving Runge-Kutta
    #[default]
    Heun,
}

impl Scheme {
    pub fn order(self) -> u32 {
        match self {
            Scheme::Euler => 1,
            Scheme::Heun => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPolicy {
    pub scheme: Scheme,
    pub safety: f64,
    /// optional cap on top of the CFL limit
    pub max_dt: Option<f64>,
}

impl Default for StepPolicy {
    fn default() -> Self {
        Self {
            scheme: Scheme::Heun,
            safety: DEFAULT_SAFETY,
            max_dt: None,
        }
    }
}

impl StepPolicy {
    pub fn euler() -> Self {
        Self {
            scheme: Scheme::Euler,
            ..Self::default()
        }
    }

    pub fn with_max_dt(mut self, dt: f64) -> Self {
        self.max_dt = Some(dt);
        self
    }

    pub fn with_safety(mut self, safety: f64) -> Self {
        self.safety = safety;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.safety > 0.0 && self.safety <= 0.25) {
            return Err(Error::config("time.safety", format!("must lie in (0, 0.25], got {}", self.safety)));
        }
        if let Some(d) = self.max_dt {
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::config("time.max_dt", format!("must be positive, got {d}")));
            }
        }
        Ok(())
    }

    /// Step limit for the metric snapshot `mf`.
    pub fn limit(&self, mf: &MetricField) -> f64 {
        let cfl = mf.stable_dt(self.safety);
        self.max_dt.map_or(cfl, |m| m.min(cfl))
    }

    /// Splits `remaining` into equal steps no longer than `limit` and returns
    /// the next step. Runs therefore land exactly on stop times.
    pub fn next_dt(remaining: f64, limit: f64) -> f64 {
        let n = (remaining / limit - 1e-9).ceil().max(1.0);
        remaining / n
    }
}

/// Hard explicit-stability limit h^2 / (2 m lambda_max) used to detect a
/// metric that shrank during a step.
pub fn hard_limit(mf: &MetricField) -> f64 {
    let h = mf.grid().min_spacing();
    h * h / (2.0 * mf.grid().dim() as f64 * mf.max_inverse_eigenvalue())
}

pub fn check_stable(mf: &MetricField, t: f64, dt: f64) -> Result<()> {
    let lim = hard_limit(mf);
    if dt > lim {
        Err(Error::UnstableStep { t, dt, limit: lim })
    } else {
        Ok(())
    }
}

/// One explicit step of u' = rhs(t, u). `post` runs after every stage (used
/// for re-projection). Heun is written as the convex combination
/// u_{n+1} = (u + (u1 + dt rhs(t+dt, u1))) / 2.
pub fn step<R, P>(scheme: Scheme, u: &Field, t: f64, dt: f64, mut rhs: R, mut post: P) -> Result<Field>
where
    R: FnMut(f64, &Field) -> Result<Field>,
    P: FnMut(&mut Field) -> Result<()>,
{
    let k1 = rhs(t, u)?;
    let mut u1 = u.clone();
    u1.add_scaled(dt, &k1);
    u1.time = t + dt;
    post(&mut u1)?;
    match scheme {
        Scheme::Euler => Ok(u1),
        Scheme::Heun => {
            let k2 = rhs(t + dt, &u1)?;
            let mut u2 = u1.clone();
            u2.add_scaled(dt, &k2);
            for (a, b) in u2.values_mut().iter_mut().zip(u.values()) {
                *a = 0.5 * (*a + *b);
            }
            u2.time = t + dt;
            post(&mut u2)?;
            Ok(u2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn next_dt_lands_on_stop_time() {
        let mut t = 0.0;
        let end = 1.0;
        let mut n = 0;
        while t < end {
            let dt = StepPolicy::next_dt(end - t, 0.3);
            assert!(dt <= 0.3 + 1e-15);
            t += dt;
            n += 1;
        }
        assert_eq!(n, 4);
        assert!((t - end).abs() < 1e-15);
        assert_eq!(StepPolicy::next_dt(0.6, 0.3), 0.3);
    }

    #[test]
    fn scheme_orders_on_linear_ode() {
        let grid = Grid::torus1(8).unwrap();
        let err = |scheme: Scheme, n: usize| {
            let dt = 1.0 / n as f64;
            let mut u = Field::constant(grid, 1.0);
            for k in 0..n {
                u = step(scheme, &u, k as f64 * dt, dt, |_, v| {
                    let mut o = v.clone();
                    o.values_mut().iter_mut().for_each(|x| *x = -*x);
                    Ok(o)
                }, |_| Ok(()))
                .unwrap();
            }
            (u.get(0, 0) - (-1f64).exp()).abs()
        };
        let r1 = err(Scheme::Euler, 100) / err(Scheme::Euler, 200);
        let r2 = err(Scheme::Heun, 100) / err(Scheme::Heun, 200);
        assert!((r1 - 2.0).abs() < 0.1, "{r1}");
        assert!((r2 - 4.0).abs() < 0.2, "{r2}");
    }
}
