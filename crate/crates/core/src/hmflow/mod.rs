//! Harmonic map heat flow d/dt F = tau(F) under an evolving domain metric, in
//! ambient form (with re-projection onto the target) or in chart form.

mod bounds;
pub(crate) mod diagnostics;
mod residual;
mod run;

pub use bounds::{
    comparison_value, energy_bound_entries, energy_slack, existence_window, restart_consistency, tension_bound_entry,
    ExistenceWindow,
};
pub use diagnostics::MapSpace;
pub use residual::{evolution_residual, residual_after_steps, ResidualKind, ResidualSample};
pub use run::{prepare_flow, run_flow, FlowRun, FlowRunConfig, FlowSample};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::linheat::MetricClock;
use crate::maps::Formulation;
use crate::metric::MetricFamily;
use crate::stepping::{self, StepPolicy};
use crate::target::TargetManifold;

/// Allowed distance from the target after a constrained step, relative to r.
pub const DRIFT_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct FlowState {
    pub map: Field,
}

impl FlowState {
    pub fn new(map: Field) -> Self {
        Self { map }
    }

    pub fn time(&self) -> f64 {
        self.map.time
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AdvanceStats {
    pub steps: usize,
    pub max_dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    pub formulation: Formulation,
    pub policy: StepPolicy,
    /// ambient form only: tangential tension plus re-projection after every stage
    pub constrained: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            formulation: Formulation::Extrinsic,
            policy: StepPolicy::default(),
            constrained: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowSolver {
    metric: MetricFamily,
    grid: Grid,
    space: MapSpace,
    config: FlowConfig,
}

impl FlowSolver {
    pub fn new(metric: MetricFamily, grid: Grid, target: TargetManifold, config: FlowConfig) -> Result<Self> {
        if metric.dim() != grid.dim() {
            return Err(Error::InvalidInput("metric and grid dimensions differ".into()));
        }
        config.policy.validate()?;
        Ok(Self {
            metric,
            grid,
            space: MapSpace::new(target, config.formulation)?,
            config,
        })
    }

    pub fn metric(&self) -> &MetricFamily {
        &self.metric
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn space(&self) -> &MapSpace {
        &self.space
    }

    pub fn config(&self) -> &FlowConfig {
        &self.config
    }

    fn check_state(&self, state: &FlowState) -> Result<()> {
        if *state.map.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        if state.map.components() != self.space.components() {
            return Err(Error::InvalidInput(format!(
                "map has {} components, formulation expects {}",
                state.map.components(),
                self.space.components()
            )));
        }
        if !state.map.all_finite() {
            return Err(Error::InvalidInput("map field is not finite".into()));
        }
        Ok(())
    }

    /// Re-projection (constrained ambient form) and tube check after a stage.
    fn post_stage(&self, u: &mut Field) -> Result<()> {
        if self.space.chart.is_some() {
            return Ok(());
        }
        let target = self.space.target;
        let q = target.ambient_dim();
        let mut z = vec![0.0; q];
        let mut p = vec![0.0; q];
        for idx in 0..self.grid.len() {
            u.point_into(idx, &mut z);
            target.check_tube(&z)?;
            if self.config.constrained {
                target.project_into(&z, &mut p)?;
                for c in 0..q {
                    u.set(c, idx, p[c]);
                }
            }
        }
        Ok(())
    }

    /// Projects an ambient initial map onto the target (constrained form).
    pub fn prepare(&self, mut map: Field) -> Result<FlowState> {
        if self.config.constrained {
            self.post_stage(&mut map)?;
        }
        let state = FlowState::new(map);
        self.check_state(&state)?;
        Ok(state)
    }

    /// One step of size `dt` from `state`.
    pub fn step(&self, state: &FlowState, dt: f64) -> Result<FlowState> {
        let mut clock = MetricClock::new(&self.metric, self.grid);
        self.step_with(&mut clock, state, dt)
    }

    fn step_with(&self, clock: &mut MetricClock<'_>, state: &FlowState, dt: f64) -> Result<FlowState> {
        self.check_state(state)?;
        let t = state.time();
        stepping::check_stable(clock.at(t + dt)?, t, dt)?;
        let constrained = self.config.constrained;
        let map = stepping::step(
            self.config.policy.scheme,
            &state.map,
            t,
            dt,
            |s, u| self.space.flow_rhs(clock.at(s)?, u, constrained),
            |u| self.post_stage(u),
        )?;
        if !map.all_finite() {
            return Err(Error::UnstableStep {
                t,
                dt,
                limit: clock.at(t)?.stable_dt(self.config.policy.safety),
            });
        }
        Ok(FlowState::new(map))
    }

    /// CFL-limited step size at the state's time.
    pub fn step_limit(&self, t: f64) -> Result<f64> {
        let mf = crate::geometry::MetricField::sample(&self.metric, &self.grid, t)?;
        Ok(self.config.policy.limit(&mf))
    }

    /// Integrates through the increasing `stops`, calling `observe` after every
    /// step with a flag marking arrival at a stop. Step sizes depend only on the
    /// current time and the next stop, so restarts from a stop reproduce the
    /// same sequence bit for bit.
    pub fn advance<O>(&self, state: FlowState, stops: &[f64], mut observe: O) -> Result<(FlowState, AdvanceStats)>
    where
        O: FnMut(&FlowState, bool) -> Result<()>,
    {
        let mut clock = MetricClock::new(&self.metric, self.grid);
        let mut state = state;
        let mut stats = AdvanceStats::default();
        for &stop in stops {
            if stop < state.time() {
                continue;
            }
            while state.time() < stop {
                let t = state.time();
                let limit = self.config.policy.limit(clock.at(t)?);
                let dt = StepPolicy::next_dt(stop - t, limit);
                let mut next = self.step_with(&mut clock, &state, dt)?;
                let arrived = stop - t - dt <= 1e-14 * stop.abs().max(1.0);
                next.map.time = if arrived { stop } else { t + dt };
                stats.steps += 1;
                stats.max_dt = stats.max_dt.max(dt);
                state = next;
                observe(&state, arrived)?;
            }
        }
        Ok((state, stats))
    }
}

#[cfg(test)]
mod tests;
