//! Shipped scenario files and report documents.

use std::path::PathBuf;

use hmlab::error::Error;
use hmlab::report::{BoundsEntry, BoundsReport};
use hmlab::scenario::{run_scenario, Module, Scenario, ScenarioFile};

fn shipped() -> Vec<PathBuf> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    v.sort();
    v
}

#[test]
fn every_shipped_scenario_validates() {
    let paths = shipped();
    assert!(paths.len() >= 10);
    let mut modules = std::collections::BTreeSet::new();
    for p in &paths {
        let sc = Scenario::load(p, None, false).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(Some(sc.name.as_str()), p.file_stem().and_then(|s| s.to_str()));
        modules.insert(sc.module.name());
    }
    assert_eq!(modules.len(), 5, "{modules:?}");
}

#[test]
fn s1_passes_and_writes_its_artifacts() {
    let p = shipped().into_iter().find(|p| p.ends_with("s1-winding-static.toml")).unwrap();
    let sc = Scenario::load(&p, None, false).unwrap();
    let out = run_scenario(&sc).unwrap();
    assert!(out.passed(), "{}", out.report.to_markdown());
    let dir = tempfile::tempdir().unwrap();
    let written = out.write(dir.path()).unwrap();
    for f in ["report.json", "report.md", "series.csv", "scenario.toml"] {
        assert!(written.join(f).is_file(), "{f}");
    }
    let back = BoundsReport::from_json(&std::fs::read_to_string(written.join("report.json")).unwrap()).unwrap();
    assert_eq!(back, out.report);
    // the normalized input validates to the same scenario
    let again = ScenarioFile::load(&written.join("scenario.toml")).unwrap();
    assert_eq!(again, sc.file);
}

#[test]
fn full_flow_report_has_the_core_entries() {
    let p = shipped().into_iter().find(|p| p.ends_with("s4-random-sphere-2d.toml")).unwrap();
    let sc = Scenario::load(&p, None, false).unwrap();
    assert_eq!(sc.module, Module::Flow);
    let out = run_scenario(&sc).unwrap();
    for name in [
        "existence window",
        "energy comparison",
        "tension decay",
        "energy evolution residual",
        "tension^2 evolution residual",
        "restart consistency",
    ] {
        assert!(out.report.entry(name).is_some(), "{name}");
    }
    assert!(out.report.entries.len() >= 6);
}

#[test]
fn seed_override_changes_random_data_only_through_the_seed() {
    let p = shipped().into_iter().find(|p| p.ends_with("s4-random-sphere-2d.toml")).unwrap();
    let a = Scenario::load(&p, Some(1), false).unwrap();
    let b = Scenario::load(&p, Some(1), false).unwrap();
    let c = Scenario::load(&p, Some(2), false).unwrap();
    assert_eq!(format!("{:?}", a.job), format!("{:?}", b.job));
    assert_ne!(format!("{:?}", a.job), format!("{:?}", c.job));
}

#[test]
fn load_errors_carry_the_file_and_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(
        &path,
        "name = \"bad\"\nmodule = \"linheat\"\n[grid]\nn = [-16]\n[time]\nt_end = 1.0\n",
    )
    .unwrap();
    match Scenario::load(&path, None, false).unwrap_err() {
        Error::Scenario { scenario, source } => {
            assert!(scenario.ends_with("bad.toml"));
            assert!(matches!(*source, Error::Config { ref key, .. } if key == "grid.n"));
        }
        other => panic!("{other}"),
    }
}

#[test]
fn empty_report_is_a_valid_document() {
    let r = BoundsReport::new("empty");
    let back = BoundsReport::from_json(&r.to_json().unwrap()).unwrap();
    assert_eq!(back, r);
    assert!(r.passed());
    assert!(r.to_markdown().contains("| bound | reference | fitted constant | min margin | result |"));
}

#[test]
fn failing_entry_lists_the_violation() {
    let mut r = BoundsReport::new("failing");
    let mut e = BoundsEntry::new("sup bound", "sup|u| <= 1");
    e.record(0.5, 2.0, 1.0, Some(7), Some([0.25, 0.0]));
    r.push(e);
    assert!(!r.passed());
    let md = r.to_markdown();
    assert!(md.contains("FAIL"));
    assert!(md.contains("point 7 at (0.250000, 0.000000) t = 5.000000e-1"), "{md}");
    let v = r.entries[0].violation.as_ref().unwrap();
    assert_eq!((v.point, v.t), (Some(7), 0.5));
}
