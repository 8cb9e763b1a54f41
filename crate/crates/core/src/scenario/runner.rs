//! Executes validated scenarios and collects their artifacts in memory, so
//! reruns can be compared byte for byte before anything touches the disk.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exhaustion::{verify_conformal_lemma, volume_divergence_entry, ConformalBlowup, CutoffProfile};
use crate::grid::{Field, Grid};
use crate::heatkernel::{build_kernel, gaussian_bound_fit, kernel_difference_l1, kernel_mass_series, KernelTable, POSITIVITY_FLOOR};
use crate::hmflow::{run_flow, FlowRun};
use crate::io::{csv_bytes, encode_field};
use crate::linheat::{self, Forcing, LinearHeatProblem, Outputs};
use crate::maps::{Formulation, MapInit, ScalarInit};
use crate::metric::MetricFamily;
use crate::picard::{
    auto_t1, contraction_ledger, direct_solve, picard_trace, semilinear_residual, sweep_sup_entry, Coefficients,
    SemiLinearProblem,
};
use crate::report::{BoundsEntry, BoundsReport};
use crate::stepping::StepPolicy;
use crate::target::TargetManifold;

use super::config::{Job, Module, Scenario};

/// Accepted spread of the fitted L1 constant across separations.
pub const L1_STABILITY: f64 = 0.30;
/// Accepted spread of fitted constants under grid refinement.
pub const REFINEMENT_STABILITY: f64 = 0.20;
/// Accepted window for the fitted Gaussian exponent on flat static T^1.
pub const GAUSSIAN_D_RANGE: (f64, f64) = (3.6, 4.4);

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub name: String,
    pub module: Module,
    pub report: BoundsReport,
    /// file name (relative to the scenario directory) -> contents
    pub artifacts: BTreeMap<String, Vec<u8>>,
}

impl ScenarioOutcome {
    pub fn passed(&self) -> bool {
        self.report.passed()
    }

    /// Writes every artifact under `out/<name>/`.
    pub fn write(&self, out: &Path) -> Result<PathBuf> {
        let dir = out.join(&self.name);
        for (name, bytes) in &self.artifacts {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, bytes)?;
        }
        Ok(dir)
    }
}

fn json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

/// Below this every fitted constant counts as zero (e.g. a gradient that
/// vanishes identically).
const ZERO_CONSTANT: f64 = 1e-12;

fn relative_spread(values: &[f64]) -> f64 {
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    if hi.is_finite() && lo >= 0.0 && hi <= ZERO_CONSTANT {
        return 0.0;
    }
    if hi <= 0.0 || !hi.is_finite() || !lo.is_finite() {
        return f64::INFINITY;
    }
    (hi - lo) / hi
}

/// Stability of a fitted constant across resolutions or parameters.
fn stability_entry(name: &str, reference: &str, labels: &[&str], values: &[f64], tol: f64) -> BoundsEntry {
    let mut e = BoundsEntry::new(name, reference);
    for (l, v) in labels.iter().zip(values) {
        e = e.fit(l, *v);
    }
    let spread = relative_spread(values);
    e = e.fit("spread", spread);
    e.record(0.0, spread, tol, None, None);
    e
}

pub fn run_scenario(sc: &Scenario) -> Result<ScenarioOutcome> {
    let mut report = BoundsReport::new(sc.name.clone());
    let mut artifacts = BTreeMap::new();
    let res = match &sc.job {
        Job::Kernel {
            source,
            s,
            separation,
            times,
        } => run_kernel(sc, *source, *s, *separation, times, &mut report, &mut artifacts),
        Job::Linheat {
            forcing,
            initial,
            t_end,
            outputs,
        } => run_linheat(sc, forcing, initial, *t_end, outputs, &mut report, &mut artifacts),
        Job::Picard {
            target,
            init,
            horizon,
            t1,
            k_max,
            conv_tol,
        } => run_picard(sc, target, init, *horizon, *t1, *k_max, *conv_tol, &mut report, &mut artifacts),
        Job::Flow(cfg) => run_flow(cfg).and_then(|run| flow_artifacts(sc, run, &mut report, &mut artifacts)),
        Job::Exhaustion {
            chi,
            rho,
            samples,
            radial,
            dim,
            times,
            decades,
        } => run_exhaustion(sc, *chi, *rho, *samples, *radial, *dim, times, *decades, &mut report, &mut artifacts),
    };
    res.map_err(|e| Error::Scenario {
        scenario: sc.name.clone(),
        source: Box::new(e),
    })?;
    if sc.output.json {
        artifacts.insert("report.json".into(), json(&report)?);
    }
    if sc.output.markdown {
        artifacts.insert("report.md".into(), report.to_markdown().into_bytes());
    }
    artifacts.insert("scenario.toml".into(), sc.file.to_toml().into_bytes());
    Ok(ScenarioOutcome {
        name: sc.name.clone(),
        module: sc.module,
        report,
        artifacts,
    })
}

fn grid_of(sc: &Scenario) -> Result<Grid> {
    sc.grid.ok_or_else(|| Error::config("grid.n", "required"))
}

/// Same periods, every axis halved.
fn coarsened(grid: &Grid) -> Result<Grid> {
    let sizes: Vec<usize> = grid.sizes().iter().map(|n| n / 2).collect();
    let periods: Vec<f64> = (0..grid.dim()).map(|a| grid.period(a)).collect();
    Grid::new(&sizes, &periods)
}

fn shifted_source(grid: &Grid, source: usize, by: usize) -> usize {
    let mut mi = grid.multi_index(source);
    mi[0] = (mi[0] + by) % grid.size(0);
    grid.flat_index(mi)
}

#[derive(Serialize)]
struct KernelSummary<'a> {
    source: usize,
    s: f64,
    mass_times: &'a [f64],
    mass: &'a [f64],
    mass_method: String,
    d_fit: f64,
    c_fit: f64,
    fit_residual: f64,
    fit_flagged: bool,
    d_fit_coarse: f64,
    l1_separations: Vec<usize>,
    l1_c_fit: Vec<f64>,
    min_value: f64,
}

fn run_kernel(
    sc: &Scenario,
    source: usize,
    s: f64,
    separation: usize,
    times: &[f64],
    report: &mut BoundsReport,
    artifacts: &mut BTreeMap<String, Vec<u8>>,
) -> Result<()> {
    let grid = grid_of(sc)?;
    let table = build_kernel(&sc.metric, grid, source, s, times, sc.policy)?;

    let mass = kernel_mass_series(&table)?;
    report.push(mass.entry());

    let fit = gaussian_bound_fit(&table)?;
    let coarse_grid = coarsened(&grid)?;
    let coarse_source = coarse_grid.flat_index({
        let mi = grid.multi_index(source);
        [mi[0] / 2, mi[1] / 2]
    });
    let coarse = build_kernel(&sc.metric, coarse_grid, coarse_source, s, times, sc.policy)?;
    let coarse_fit = gaussian_bound_fit(&coarse)?;
    let mut g = BoundsEntry::new("kernel Gaussian fit", "G <= C (t - s)^(-m/2) exp(-d^2 / (D (t - s)))")
        .fit("D", fit.d_fit)
        .fit("C", fit.c_fit)
        .fit("D coarse", coarse_fit.d_fit)
        .fit("residual", fit.residual);
    let flat_1d = grid.dim() == 1 && sc.metric.is_static() && sc.metric.label().starts_with("flat");
    if flat_1d {
        g.record(0.0, fit.d_fit, GAUSSIAN_D_RANGE.1, None, None);
        g.record(0.0, GAUSSIAN_D_RANGE.0, fit.d_fit, None, None);
    } else {
        g = g.advisory(true).note("exponent window applies to the flat static circle only");
        if !(fit.d_fit.is_finite() && fit.d_fit > 0.0) {
            g.pass = false;
        }
    }
    if fit.flagged {
        g = g.note("log fit residual is large; the kernel is not yet Gaussian at the first output times");
    }
    let spread = (fit.d_fit - coarse_fit.d_fit).abs() / fit.d_fit.abs().max(coarse_fit.d_fit.abs());
    g = g.fit("refinement spread", spread);
    g.record(0.0, spread, 0.10, None, None);
    report.push(g);

    // L1 difference at the separation and two halvings of it
    let seps: Vec<usize> = [separation, separation / 2, separation / 4]
        .into_iter()
        .filter(|&d| d >= 1)
        .collect();
    let mut c_fits = Vec::new();
    let mut l1 = BoundsEntry::new("kernel L1 difference", "L1 |G(p) - G(q)| <= C r / sqrt(t - s), and <= 2");
    for &d in &seps {
        let other = build_kernel(&sc.metric, grid, shifted_source(&grid, source, d), s, times, sc.policy)?;
        let diff = kernel_difference_l1(&table, &other)?;
        let sub = diff.entry();
        for (t, v) in diff.times.iter().zip(&diff.l1) {
            l1.record(*t, *v, 2.0, Some(d), None);
        }
        l1 = l1.fit(&format!("C (separation {d})"), sub.fitted.get("C").copied().unwrap_or(f64::NAN));
        c_fits.push(diff.c_fit);
    }
    report.push(l1);
    let labels: Vec<String> = seps.iter().map(|d| format!("separation {d}")).collect();
    let label_refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    report.push(stability_entry(
        "kernel L1 constant stability",
        "fitted C stable across halvings of the separation",
        &label_refs,
        &c_fits,
        L1_STABILITY,
    ));

    let mut pos = BoundsEntry::new("kernel positivity", "G >= 0");
    pos.record(0.0, -table.min_value(), -POSITIVITY_FLOOR, None, None);
    report.push(pos.fit("min", table.min_value()));

    if sc.output.csv {
        artifacts.insert("series.csv".into(), kernel_csv(&table));
    }
    if sc.output.json {
        let summary = KernelSummary {
            source,
            s,
            mass_times: &mass.times,
            mass: &mass.mass,
            mass_method: format!("{:?}", mass.method).to_lowercase(),
            d_fit: fit.d_fit,
            c_fit: fit.c_fit,
            fit_residual: fit.residual,
            fit_flagged: fit.flagged,
            d_fit_coarse: coarse_fit.d_fit,
            l1_separations: seps,
            l1_c_fit: c_fits,
            min_value: table.min_value(),
        };
        artifacts.insert("summary.json".into(), json(&summary)?);
    }
    if sc.output.fields {
        for (k, f) in table.values.iter().enumerate() {
            artifacts.insert(format!("fields/kernel_{k:03}.bin"), encode_field(f));
        }
    }
    Ok(())
}

fn kernel_csv(table: &KernelTable) -> Vec<u8> {
    let mut rows = Vec::with_capacity(table.times.len() * table.grid.len());
    for (k, t) in table.times.iter().enumerate() {
        for x in 0..table.grid.len() {
            rows.push(vec![*t, x as f64, table.at(k, x)]);
        }
    }
    csv_bytes(&["t", "x_index", "G"], &rows)
}

/// Fitted gradient constants of one resolution: (inhomogeneous, growth, continuity).
fn linheat_constants(
    metric: &MetricFamily,
    grid: Grid,
    forcing: &Forcing,
    initial: &ScalarInit,
    t_end: f64,
    outputs: &[f64],
    policy: StepPolicy,
) -> Result<(Vec<BoundsEntry>, [f64; 3], linheat::HeatSeries, linheat::HeatSeries)> {
    let out = Outputs::Times(outputs[..outputs.len() - 1].to_vec());
    let inh = LinearHeatProblem::new(metric.clone(), grid, Field::zeros(grid, 1), t_end)
        .with_forcing(forcing.clone())
        .with_policy(policy)
        .with_outputs(out.clone());
    let (inh_series, sup) = linheat::solve_inhomogeneous(&inh)?;
    let hom = LinearHeatProblem::new(metric.clone(), grid, initial.generate(grid), t_end)
        .with_policy(policy)
        .with_outputs(out);
    let (hom_series, maxp) = linheat::solve_homogeneous(&hom)?;
    let ratios_inh = linheat::gradient_ratios(&inh_series, &inh)?;
    let ratios_hom = linheat::gradient_ratios(&hom_series, &hom)?;
    let mut inh_entries = linheat::verify_gradient_estimates(&inh_series, &inh)?;
    let mut hom_entries = linheat::verify_gradient_estimates(&hom_series, &hom)?;
    let mut entries = vec![sup, maxp];
    entries.push(inh_entries.remove(0));
    entries.extend(hom_entries.drain(1..));
    let consts = [
        ratios_inh.max_inhomogeneous(),
        ratios_hom.max_growth(),
        ratios_hom.max_holder(),
    ];
    Ok((entries, consts, inh_series, hom_series))
}

fn run_linheat(
    sc: &Scenario,
    forcing: &Forcing,
    initial: &ScalarInit,
    t_end: f64,
    outputs: &[f64],
    report: &mut BoundsReport,
    artifacts: &mut BTreeMap<String, Vec<u8>>,
) -> Result<()> {
    let grid = grid_of(sc)?;
    let (entries, fine, inh, hom) = linheat_constants(&sc.metric, grid, forcing, initial, t_end, outputs, sc.policy)?;
    report.extend(entries);
    let (_, coarse, _, _) =
        linheat_constants(&sc.metric, coarsened(&grid)?, forcing, initial, t_end, outputs, sc.policy)?;
    let names = ["inhomogeneous", "homogeneous growth", "continuity in time"];
    for i in 0..3 {
        report.push(stability_entry(
            &format!("gradient constant refinement ({})", names[i]),
            "fitted ratio stable under halving h",
            &["fine", "coarse"],
            &[fine[i], coarse[i]],
            REFINEMENT_STABILITY,
        ));
    }
    if forcing.is_zero() {
        // nothing to compare the sup bound against
        for e in report.entries.iter_mut().filter(|e| e.name == "linear sup bound") {
            e.notes.push("zero forcing: u stays 0".into());
        }
    }
    if sc.output.csv {
        let mut rows = Vec::new();
        for (k, t) in inh.times.iter().enumerate() {
            let u = &inh.fields[k];
            let v = &hom.fields[k];
            rows.push(vec![
                *t,
                u.sup_norm(),
                t * inh.forcing_sup[k],
                v.min(),
                v.max(),
                linheat::sup_gradient(&sc.metric, u)?,
                linheat::sup_gradient(&sc.metric, v)?,
            ]);
        }
        artifacts.insert(
            "series.csv".into(),
            csv_bytes(
                &["t", "sup_u", "t_sup_forcing", "min_v", "max_v", "sup_grad_u", "sup_grad_v"],
                &rows,
            ),
        );
    }
    if sc.output.fields {
        artifacts.insert("fields/u_final.bin".into(), encode_field(inh.last()));
        artifacts.insert("fields/v_final.bin".into(), encode_field(hom.last()));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_picard(
    sc: &Scenario,
    target: &TargetManifold,
    init: &MapInit,
    horizon: f64,
    t1: Option<f64>,
    k_max: usize,
    conv_tol: f64,
    report: &mut BoundsReport,
    artifacts: &mut BTreeMap<String, Vec<u8>>,
) -> Result<()> {
    let grid = grid_of(sc)?;
    let initial = init.generate(target, Formulation::Extrinsic, grid)?;
    let problem = SemiLinearProblem::new(
        sc.metric.clone(),
        grid,
        Coefficients::Target(*target),
        initial,
        horizon,
    )
    .with_policy(sc.policy);
    let auto = t1.is_none();
    let t1 = match t1 {
        Some(t) => t,
        None => auto_t1(&problem, k_max, conv_tol)?,
    };
    let result = picard_trace(&problem, t1, k_max, conv_tol)?;
    let trace = &result.trace;

    report.push(contraction_ledger(trace).note(if auto { "T1 selected automatically" } else { "T1 given" }));
    report.push(sweep_sup_entry(trace));

    let mut conv = BoundsEntry::new("picard convergence", "u^k converges geometrically on [0, T1]")
        .fit("iterations", trace.iterations() as f64)
        .fit("last difference", trace.d.last().copied().unwrap_or(f64::NAN));
    // two differences only: d_2 / d_1 is the one ratio available
    let rate = trace.rate().or_else(|| match trace.d.as_slice() {
        [d1, d2] if *d1 > 0.0 => Some(d2 / d1),
        _ => None,
    });
    match rate {
        Some(r) => {
            conv = conv.fit("rho", r);
            conv.record(t1, r, 1.0, None, None);
        }
        None => conv = conv.note("too few differences to fit a rate"),
    }
    if !trace.converged {
        conv.pass = false;
        conv = conv.note(format!("no convergence to {conv_tol:e} within {k_max} sweeps"));
    }
    report.push(conv.fit("residual", semilinear_residual(&problem, &result.series)?));

    let direct = direct_solve(&problem, t1)?;
    let mut diff: f64 = 0.0;
    for (a, b) in direct.iter().zip(&result.series) {
        diff = diff.max(a.sup_distance(b)?);
    }
    let mut d = BoundsEntry::new("picard fixed point vs direct solve", "the limit solves the semilinear system")
        .fit("difference", diff);
    d.record(t1, diff, 10.0 * conv_tol, None, None);
    if direct.len() != result.series.len() {
        d.pass = false;
        d = d.note("step counts differ");
    }
    report.push(d);

    if sc.output.csv {
        let rows: Vec<Vec<f64>> = trace
            .p()
            .iter()
            .enumerate()
            .map(|(k, p)| {
                vec![
                    k as f64,
                    *p,
                    if k == 0 { f64::NAN } else { trace.d[k - 1] },
                    trace.sweep_sup.get(k).copied().unwrap_or(f64::NAN),
                    trace.sweep_sup_limit.get(k).copied().unwrap_or(f64::NAN),
                ]
            })
            .collect();
        artifacts.insert(
            "series.csv".into(),
            csv_bytes(&["k", "p_k", "d_k", "sweep_sup", "sweep_sup_limit"], &rows),
        );
    }
    if sc.output.json {
        artifacts.insert("trace.json".into(), json(trace)?);
    }
    if sc.output.fields {
        artifacts.insert("fields/fixed_point_final.bin".into(), encode_field(result.last()));
    }
    Ok(())
}

fn flow_artifacts(
    sc: &Scenario,
    run: FlowRun,
    report: &mut BoundsReport,
    artifacts: &mut BTreeMap<String, Vec<u8>>,
) -> Result<()> {
    *report = run.report.clone();
    report.scenario = sc.name.clone();
    if sc.output.csv {
        artifacts.insert("series.csv".into(), csv_bytes(&FlowRun::CSV_HEADER, &run.csv_rows()));
    }
    if sc.output.fields {
        for (k, st) in run.states.iter().enumerate() {
            artifacts.insert(format!("fields/map_{k:03}.bin"), encode_field(&st.map));
        }
        artifacts.insert("fields/map_final.bin".into(), encode_field(&run.final_state.map));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_exhaustion(
    sc: &Scenario,
    chi: f64,
    rho: f64,
    samples: usize,
    radial: usize,
    dim: usize,
    times: &[f64],
    decades: i32,
    report: &mut BoundsReport,
    artifacts: &mut BTreeMap<String, Vec<u8>>,
) -> Result<()> {
    let profile = CutoffProfile::new(chi)?;
    for n in [samples, 10 * samples] {
        let scan = profile.invariant_scan(n);
        let mut e = BoundsEntry::new(
            format!("exhaustion profile invariants ({n} samples)"),
            "F = 0 near 0, F' >= 0, e^(-kF) |F^(k)| bounded, F -> infinity at 1",
        )
        .fit("sup e^-F |F'|", scan.sup_scaled[0])
        .fit("sup e^-2F |F''|", scan.sup_scaled[1])
        .fit("sup e^-3F |F'''|", scan.sup_scaled[2])
        .fit("max phi slope", scan.max_phi_slope);
        for f in &scan.failures {
            e = e.note(f.clone());
        }
        e.pass = scan.passed();
        report.push(e);
    }
    report.push(
        BoundsEntry::new("exhaustion zero region", "F vanishes on [0, s0]")
            .fit("s0", profile.zero_boundary())
            .fit("ramp end", profile.ramp_end()),
    );

    let base = sc.metric.clone();
    if base.dim() != dim {
        return Err(Error::config("exhaustion.dim", "disagrees with the metric dimension"));
    }
    let lemma = verify_conformal_lemma(&base, &profile, rho, radial, times)?;
    report.extend(lemma.entries.iter().cloned());
    let blowup = ConformalBlowup::new(profile, rho)?;
    if base.label().starts_with("flat") {
        report.push(volume_divergence_entry(&blowup, dim, decades));
    }

    if sc.output.csv {
        let n = samples.min(100_000);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let s = (i as f64 + 0.5) / n as f64;
                let d = profile.big_f_derivs(s);
                vec![s, profile.f(s), profile.phi(s), d[0], d[1], d[2], d[3]]
            })
            .collect();
        artifacts.insert(
            "series.csv".into(),
            csv_bytes(&["s", "f", "phi", "F", "dF", "d2F", "d3F"], &rows),
        );
    }
    if sc.output.json {
        artifacts.insert("conformal.json".into(), json(&lemma)?);
    }
    Ok(())
}

/// Runs scenarios on up to `workers` threads; results keep the input order.
pub fn run_batch(scenarios: &[Scenario], workers: usize) -> Vec<Result<ScenarioOutcome>> {
    let workers = workers.clamp(1, scenarios.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<ScenarioOutcome>>>> = scenarios.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= scenarios.len() {
                    break;
                }
                let r = run_scenario(&scenarios[i]);
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every slot filled"))
        .collect()
}
