//! Scenario files, validation and execution.

mod config;
mod runner;

pub use config::{
    parse_spec, ExhaustionSection, FlowSection, GridSection, InitSection, Job, KernelSection, LinheatSection,
    MetricSection, Module, OutputFlags, OutputSection, PicardSection, Scenario, ScenarioFile, T1Spec,
    TargetSection, TimeSection,
};
pub use runner::{
    run_batch, run_scenario, ScenarioOutcome, GAUSSIAN_D_RANGE, L1_STABILITY, REFINEMENT_STABILITY,
};

#[cfg(test)]
mod tests;
