use super::*;
use crate::error::Error;

fn key_of(e: Error) -> String {
    match e {
        Error::Config { key, .. } => key,
        other => panic!("expected a config error, got {other}"),
    }
}

const FLOW: &str = r#"
name = "t"
module = "flow"
[metric]
family = "flat"
[grid]
n = [32]
[target]
kind = "circle"
[init]
kind = "winding"
k = 1
[time]
t_end = 0.1
"#;

#[test]
fn negative_grid_size_names_grid_n() {
    let text = FLOW.replace("n = [32]", "n = [-4]");
    let f = ScenarioFile::parse(&text).unwrap();
    assert_eq!(key_of(f.validate(None, false).unwrap_err()), "grid.n");
}

#[test]
fn unknown_key_is_rejected_by_name() {
    let text = FLOW.replace("family = \"flat\"", "family = \"flat\"\nfamliy = 2");
    assert_eq!(key_of(ScenarioFile::parse(&text).unwrap_err()), "famliy");
}

#[test]
fn foreign_section_is_rejected() {
    let text = format!("{FLOW}\n[picard]\nk_max = 3\n");
    let f = ScenarioFile::parse(&text).unwrap();
    assert_eq!(key_of(f.validate(None, false).unwrap_err()), "picard");
}

#[test]
fn missing_rate_names_metric_rate() {
    let text = FLOW.replace("family = \"flat\"", "family = \"conformal-exp\"");
    let f = ScenarioFile::parse(&text).unwrap();
    assert_eq!(key_of(f.validate(None, false).unwrap_err()), "metric.rate");
}

#[test]
fn valid_flow_scenario_builds_a_job() {
    let sc = ScenarioFile::parse(FLOW).unwrap().validate(Some(7), false).unwrap();
    assert_eq!(sc.module, Module::Flow);
    assert_eq!(sc.seed, 7);
    match sc.job {
        Job::Flow(cfg) => assert_eq!(cfg.outputs.len(), 10),
        _ => panic!("flow job expected"),
    }
}

#[test]
fn spec_strings_fill_sections() {
    let m = MetricSection::from_spec("conformal-exp:a=0.3").unwrap();
    assert_eq!(m.family.as_deref(), Some("conformal-exp"));
    assert_eq!(m.rate, Some(0.3));
    let i = InitSection::from_spec("winding:k=1,perturb=0.1").unwrap();
    assert_eq!(i.kind.as_deref(), Some("perturbed-winding"));
    assert_eq!((i.k, i.amplitude), (Some(1), Some(0.1)));
    let t = TargetSection::from_spec("sphere:r=2,q=3").unwrap();
    assert_eq!((t.radius, t.ambient), (Some(2.0), Some(3)));
    assert_eq!(key_of(MetricSection::from_spec("flat:b=1").unwrap_err()), "metric.b");
}

#[test]
fn round_trip_through_toml() {
    let f = ScenarioFile::parse(FLOW).unwrap();
    assert_eq!(ScenarioFile::parse(&f.to_toml()).unwrap(), f);
}

#[test]
fn small_flow_run_is_deterministic() {
    let sc = ScenarioFile::parse(FLOW).unwrap().validate(None, false).unwrap();
    let a = run_scenario(&sc).unwrap();
    let b = run_batch(std::slice::from_ref(&sc), 2).pop().unwrap().unwrap();
    assert_eq!(a.artifacts, b.artifacts);
    assert!(a.artifacts.contains_key("series.csv"));
    assert!(a.passed(), "{}", a.report.to_markdown());
}
