//! `hmlab`: runs scenarios and module experiments, writes reports and CSVs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hmlab::error::{Error, Result};
use hmlab::report::BoundsReport;
use hmlab::scenario::{
    run_batch, ExhaustionSection, FlowSection, InitSection, KernelSection, LinheatSection, MetricSection,
    PicardSection, Scenario, ScenarioFile, ScenarioOutcome, T1Spec, TargetSection,
};

#[derive(Parser, Debug)]
#[command(name = "hmlab", version, about = "Harmonic map heat flow under evolving domain metrics")]
struct Cli {
    /// output root; each scenario writes to OUT/<name>/
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// overrides the seed of every scenario
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// concurrent scenarios in `run`
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// keep integrating flows after the comparison window closes
    #[arg(long = "past-T0", global = true)]
    past_t0: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run scenario files, directories of them, or batch lists (one path per line)
    Run {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Fundamental solution from a point source
    Kernel(KernelArgs),
    /// Linear heat solves with forcing and initial data
    Linheat(LinheatArgs),
    /// Fixed-point iteration for the extrinsic flow
    Picard(PicardArgs),
    /// Harmonic map heat flow
    Flow(FlowArgs),
    /// Exhaustion profile and conformal blow-up checks
    Exhaustion(ExhaustionArgs),
    /// Render a stored report.json
    Report {
        path: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Markdown)]
        format: Format,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Markdown,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// start from this scenario file; flags override its keys
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    /// family[:key=value,...], e.g. conformal-exp:a=0.3
    #[arg(long)]
    metric: Option<String>,
    /// N or NxM
    #[arg(long)]
    grid: Option<String>,
    #[arg(long = "T")]
    t_end: Option<f64>,
    /// heun or euler
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    max_dt: Option<f64>,
    /// number of uniform output times
    #[arg(long)]
    cadence: Option<i64>,
    /// also dump fields as binary files
    #[arg(long)]
    fields: bool,
}

#[derive(Args, Debug)]
struct KernelArgs {
    #[command(flatten)]
    common: Common,
    /// flat grid index of the source point
    #[arg(long)]
    source: Option<i64>,
    #[arg(long)]
    s: Option<f64>,
    /// grid points between the sources of the L1 difference
    #[arg(long)]
    separation: Option<i64>,
}

#[derive(Args, Debug)]
struct LinheatArgs {
    #[command(flatten)]
    common: Common,
    /// zero, constant:value=V, mode:k=K,amp=A, random-smooth:seed=S,bandlimit=B,amp=A
    #[arg(long)]
    init: Option<String>,
    /// zero, constant:value=V, mode:k=K,amp=A
    #[arg(long)]
    forcing: Option<String>,
}

#[derive(Args, Debug)]
struct PicardArgs {
    #[command(flatten)]
    common: Common,
    /// sphere[:r=R,q=Q], circle, euclidean[:q=Q]
    #[arg(long)]
    target: Option<String>,
    /// winding:k=1,perturb=0.1, great-circle, random-smooth:seed=S,...
    #[arg(long)]
    init: Option<String>,
    /// window length or `auto`
    #[arg(long = "T1")]
    t1: Option<String>,
    #[arg(long)]
    k_max: Option<i64>,
    #[arg(long)]
    conv_tol: Option<f64>,
}

#[derive(Args, Debug)]
struct FlowArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    init: Option<String>,
    /// extrinsic or intrinsic
    #[arg(long)]
    formulation: Option<String>,
    /// declared curvature bound of the target
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    restart_at: Option<f64>,
    #[arg(long)]
    residual_at: Option<f64>,
    /// initial map is harmonic and the metric static
    #[arg(long)]
    stationary: bool,
}

#[derive(Args, Debug)]
struct ExhaustionArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    chi: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    /// profile samples of the coarse invariant scan
    #[arg(long)]
    samples: Option<i64>,
    /// radial samples of the conformal checks
    #[arg(long)]
    radial: Option<i64>,
    #[arg(long)]
    dim: Option<i64>,
}

fn parse_grid(s: &str) -> Result<Vec<i64>> {
    s.split(['x', ','])
        .map(|p| {
            p.trim()
                .parse::<i64>()
                .map_err(|_| Error::config("grid.n", format!("`{s}`: expected N or NxM")))
        })
        .collect()
}

impl Common {
    fn base(&self, module: &str) -> Result<ScenarioFile> {
        let mut f = match &self.config {
            Some(p) => ScenarioFile::load(p)?,
            None => ScenarioFile::default(),
        };
        if f.module.as_deref().is_some_and(|m| m != module) {
            return Err(Error::config("module", format!("file is for `{}`, not `{module}`", f.module.as_deref().unwrap_or(""))));
        }
        f.module = Some(module.to_string());
        if let Some(n) = &self.name {
            f.name = Some(n.clone());
        }
        if f.name.is_none() {
            f.name = Some(module.to_string());
        }
        if let Some(m) = &self.metric {
            f.metric = MetricSection::from_spec(m)?;
        }
        if let Some(g) = &self.grid {
            f.grid.n = Some(parse_grid(g)?);
        }
        if self.t_end.is_some() {
            f.time.t_end = self.t_end;
        }
        if self.scheme.is_some() {
            f.time.scheme = self.scheme.clone();
        }
        if self.max_dt.is_some() {
            f.time.max_dt = self.max_dt;
        }
        if self.cadence.is_some() {
            f.time.cadence = self.cadence;
        }
        if self.fields {
            f.output.fields = Some(true);
        }
        Ok(f)
    }
}

fn set_target_init(f: &mut ScenarioFile, target: &Option<String>, init: &Option<String>) -> Result<()> {
    if let Some(t) = target {
        f.target = Some(TargetSection::from_spec(t)?);
    }
    if let Some(i) = init {
        f.init = Some(InitSection::from_spec(i)?);
    }
    Ok(())
}

fn module_file(cmd: &Command) -> Result<ScenarioFile> {
    match cmd {
        Command::Kernel(a) => {
            let mut f = a.common.base("kernel")?;
            let mut k = f.kernel.take().unwrap_or_default();
            if a.source.is_some() {
                k.source_index = a.source;
                k.source = None;
            }
            if a.s.is_some() {
                k.s = a.s;
            }
            if a.separation.is_some() {
                k.separation = a.separation;
            }
            f.kernel = (k != KernelSection::default()).then_some(k);
            Ok(f)
        }
        Command::Linheat(a) => {
            let mut f = a.common.base("linheat")?;
            set_target_init(&mut f, &None, &a.init)?;
            if let Some(spec) = &a.forcing {
                let (kind, map) = hmlab::scenario::parse_spec(spec)?;
                let num = |keys: &[&str]| -> Result<Option<f64>> {
                    for k in keys {
                        if let Some(v) = map.get(*k) {
                            return v
                                .parse()
                                .map(Some)
                                .map_err(|_| Error::config(format!("linheat.forcing.{k}"), "not a number"));
                        }
                    }
                    Ok(None)
                };
                if let Some(k) = map.keys().find(|k| !["k", "amp", "amplitude", "value"].contains(&k.as_str())) {
                    return Err(Error::config(format!("linheat.forcing.{k}"), "unknown key"));
                }
                f.linheat = Some(LinheatSection {
                    forcing: Some(kind),
                    forcing_k: num(&["k"])?,
                    forcing_amplitude: num(&["amp", "amplitude"])?,
                    forcing_value: num(&["value"])?,
                });
            }
            Ok(f)
        }
        Command::Picard(a) => {
            let mut f = a.common.base("picard")?;
            f.time.scheme.get_or_insert_with(|| "euler".into());
            set_target_init(&mut f, &a.target, &a.init)?;
            let mut p = f.picard.take().unwrap_or_default();
            if let Some(t1) = &a.t1 {
                p.t1 = Some(match t1.parse::<f64>() {
                    Ok(v) => T1Spec::Value(v),
                    Err(_) => T1Spec::Word(t1.clone()),
                });
            }
            if a.k_max.is_some() {
                p.k_max = a.k_max;
            }
            if a.conv_tol.is_some() {
                p.conv_tol = a.conv_tol;
            }
            f.picard = (p != PicardSection::default()).then_some(p);
            Ok(f)
        }
        Command::Flow(a) => {
            let mut f = a.common.base("flow")?;
            set_target_init(&mut f, &a.target, &a.init)?;
            let mut fl = f.flow.take().unwrap_or_default();
            if a.formulation.is_some() {
                fl.formulation = a.formulation.clone();
            }
            if a.kappa.is_some() {
                fl.kappa = a.kappa;
            }
            if a.restart_at.is_some() {
                fl.restart_at = a.restart_at;
            }
            if a.residual_at.is_some() {
                fl.residual_at = a.residual_at;
            }
            if a.stationary {
                fl.stationary = Some(true);
            }
            f.flow = (fl != FlowSection::default()).then_some(fl);
            Ok(f)
        }
        Command::Exhaustion(a) => {
            let mut f = a.common.base("exhaustion")?;
            let mut e = f.exhaustion.take().unwrap_or_default();
            if a.chi.is_some() {
                e.chi = a.chi;
            }
            if a.rho.is_some() {
                e.rho = a.rho;
            }
            if a.samples.is_some() {
                e.samples = a.samples;
            }
            if a.radial.is_some() {
                e.radial = a.radial;
            }
            if a.dim.is_some() {
                e.dim = a.dim;
            }
            if e.dim.is_none() && f.metric.family.is_none() {
                e.dim = Some(2);
            }
            f.exhaustion = (e != ExhaustionSection::default()).then_some(e);
            Ok(f)
        }
        Command::Run { .. } | Command::Report { .. } => unreachable!("not a module command"),
    }
}

/// Expands directories (their *.toml, sorted) and batch lists (*.txt: one
/// path per line, relative to the list; `#` starts a comment).
fn expand(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut v: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|q| q.extension().is_some_and(|x| x == "toml"))
                .collect();
            v.sort();
            out.extend(v);
        } else if p.extension().is_some_and(|x| x == "txt") {
            let base = p.parent().unwrap_or(Path::new("."));
            for line in std::fs::read_to_string(p)?.lines() {
                let line = line.split('#').next().unwrap_or("").trim();
                if !line.is_empty() {
                    out.push(base.join(line));
                }
            }
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn summarize(o: &ScenarioOutcome, dir: &Path) {
    let r = &o.report;
    let failed: Vec<&str> = r.failures().map(|e| e.name.as_str()).collect();
    let status = if failed.is_empty() { "PASS" } else { "FAIL" };
    println!(
        "{status} {} [{}] {} entries -> {}",
        o.name,
        o.module.name(),
        r.entries.len(),
        dir.display()
    );
    for name in failed {
        println!("  failed: {name}");
    }
}

fn execute(cli: &Cli) -> Result<bool> {
    let scenarios: Vec<Scenario> = match &cli.command {
        Command::Report { path, format } => {
            let report = BoundsReport::from_json(&std::fs::read_to_string(path)?)?;
            match format {
                Format::Json => println!("{}", report.to_json()?),
                Format::Markdown => print!("{}", report.to_markdown()),
            }
            return Ok(report.passed());
        }
        Command::Run { paths } => expand(paths)?
            .iter()
            .map(|p| Scenario::load(p, cli.seed, cli.past_t0))
            .collect::<Result<_>>()?,
        cmd => vec![module_file(cmd)?.validate(cli.seed, cli.past_t0)?],
    };
    let mut names = std::collections::BTreeSet::new();
    for s in &scenarios {
        if !names.insert(&s.name) {
            return Err(Error::config("name", format!("`{}` appears twice in the batch", s.name)));
        }
    }
    let mut all_pass = true;
    let mut first_err = None;
    for (sc, res) in scenarios.iter().zip(run_batch(&scenarios, cli.workers)) {
        match res {
            Ok(outcome) => {
                let dir = outcome.write(&cli.out)?;
                summarize(&outcome, &dir);
                all_pass &= outcome.passed();
            }
            Err(e) => {
                eprintln!("ERROR {}: {e}", sc.name);
                first_err.get_or_insert(e);
            }
        }
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(all_pass),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
