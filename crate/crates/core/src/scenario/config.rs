//! Scenario files: TOML with dotted sections, every key checked before any
//! compute. Errors name the offending key.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::AuditLimits;
use crate::grid::{Grid, MIN_POINTS_PER_AXIS};
use crate::hmflow::{FlowConfig, FlowRunConfig};
use crate::linheat::Forcing;
use crate::maps::{Formulation, MapInit, ScalarInit};
use crate::metric::MetricFamily;
use crate::stepping::{Scheme, StepPolicy, DEFAULT_SAFETY};
use crate::target::TargetManifold;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: Option<String>,
    pub module: Option<String>,
    pub seed: Option<i64>,
    pub description: Option<String>,
    #[serde(default)]
    pub metric: MetricSection,
    #[serde(default)]
    pub grid: GridSection,
    pub target: Option<TargetSection>,
    pub init: Option<InitSection>,
    #[serde(default)]
    pub time: TimeSection,
    pub flow: Option<FlowSection>,
    pub kernel: Option<KernelSection>,
    pub linheat: Option<LinheatSection>,
    pub picard: Option<PicardSection>,
    pub exhaustion: Option<ExhaustionSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSection {
    pub family: Option<String>,
    pub rate: Option<f64>,
    pub amplitude: Option<f64>,
    pub frequency: Option<f64>,
    pub fd_velocity: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: Option<Vec<i64>>,
    pub period: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    pub kind: Option<String>,
    pub radius: Option<f64>,
    pub ambient: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    pub kind: Option<String>,
    pub k: Option<i64>,
    pub amplitude: Option<f64>,
    pub value: Option<Vec<f64>>,
    pub bandlimit: Option<i64>,
    pub seed: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub t_end: Option<f64>,
    pub scheme: Option<String>,
    pub safety: Option<f64>,
    pub max_dt: Option<f64>,
    pub outputs: Option<Vec<f64>>,
    pub cadence: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    pub formulation: Option<String>,
    pub kappa: Option<f64>,
    pub stationary: Option<bool>,
    pub restart_at: Option<f64>,
    pub residual_at: Option<f64>,
    pub past_t0: Option<bool>,
    pub k0_limit: Option<f64>,
    pub a_limit: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    /// source coordinates; alternatively `source_index` (flat grid index)
    pub source: Option<Vec<f64>>,
    pub source_index: Option<i64>,
    pub s: Option<f64>,
    /// grid points between the two sources of the L1 difference
    pub separation: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinheatSection {
    pub forcing: Option<String>,
    pub forcing_k: Option<f64>,
    pub forcing_amplitude: Option<f64>,
    pub forcing_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum T1Spec {
    Value(f64),
    Word(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardSection {
    pub t1: Option<T1Spec>,
    pub k_max: Option<i64>,
    pub conv_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExhaustionSection {
    pub chi: Option<f64>,
    pub rho: Option<f64>,
    pub samples: Option<i64>,
    pub dim: Option<i64>,
    pub times: Option<Vec<f64>>,
    pub decades: Option<i64>,
    /// radial samples of the conformal checks
    pub radial: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub csv: Option<bool>,
    pub json: Option<bool>,
    pub markdown: Option<bool>,
    pub fields: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Module {
    Kernel,
    Linheat,
    Picard,
    Flow,
    Exhaustion,
}

impl Module {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "kernel" => Module::Kernel,
            "linheat" => Module::Linheat,
            "picard" => Module::Picard,
            "flow" => Module::Flow,
            "exhaustion" => Module::Exhaustion,
            other => {
                return Err(Error::config(
                    "module",
                    format!("unknown module `{other}` (kernel, linheat, picard, flow, exhaustion)"),
                ))
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Module::Kernel => "kernel",
            Module::Linheat => "linheat",
            Module::Picard => "picard",
            Module::Flow => "flow",
            Module::Exhaustion => "exhaustion",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFlags {
    pub csv: bool,
    pub json: bool,
    pub markdown: bool,
    pub fields: bool,
}

#[derive(Debug, Clone)]
pub enum Job {
    Kernel {
        source: usize,
        s: f64,
        separation: usize,
        times: Vec<f64>,
    },
    Linheat {
        forcing: Forcing,
        initial: ScalarInit,
        t_end: f64,
        outputs: Vec<f64>,
    },
    Picard {
        target: TargetManifold,
        init: MapInit,
        horizon: f64,
        t1: Option<f64>,
        k_max: usize,
        conv_tol: f64,
    },
    Flow(Box<FlowRunConfig>),
    Exhaustion {
        chi: f64,
        rho: f64,
        samples: usize,
        radial: usize,
        dim: usize,
        times: Vec<f64>,
        decades: i32,
    },
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub module: Module,
    pub seed: u64,
    pub metric: MetricFamily,
    pub grid: Option<Grid>,
    pub policy: StepPolicy,
    pub job: Job,
    pub output: OutputFlags,
    pub file: ScenarioFile,
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::config(key, format!("must be positive and finite (got {v})")))
    }
}

fn finite(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, "must be finite"))
    }
}

fn count(key: &str, v: i64, min: i64) -> Result<usize> {
    if v < min {
        Err(Error::config(key, format!("must be at least {min} (got {v})")))
    } else {
        Ok(v as usize)
    }
}

fn unused<T>(key: &str, v: &Option<T>, why: &str) -> Result<()> {
    if v.is_some() {
        Err(Error::config(key, format!("not used {why}")))
    } else {
        Ok(())
    }
}

/// `name:key=value,key=value` as used by CLI flags.
pub fn parse_spec(spec: &str) -> Result<(String, BTreeMap<String, String>)> {
    let (name, rest) = match spec.split_once(':') {
        Some((n, r)) => (n.trim(), r),
        None => (spec.trim(), ""),
    };
    let mut map = BTreeMap::new();
    for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::config(name, format!("expected key=value, got `{part}`")))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok((name.to_string(), map))
}

fn spec_f64(map: &BTreeMap<String, String>, keys: &[&str], section: &str) -> Result<Option<f64>> {
    for k in keys {
        if let Some(v) = map.get(*k) {
            return v
                .parse()
                .map(Some)
                .map_err(|_| Error::config(format!("{section}.{k}"), format!("not a number: `{v}`")));
        }
    }
    Ok(None)
}

fn check_spec_keys(map: &BTreeMap<String, String>, allowed: &[&str], section: &str) -> Result<()> {
    for k in map.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(Error::config(format!("{section}.{k}"), "unknown key"));
        }
    }
    Ok(())
}

impl MetricSection {
    /// `flat`, `conformal-exp:a=0.3`, `aniso-torus:eps=0.2,omega=1`, ...
    pub fn from_spec(spec: &str) -> Result<Self> {
        let (family, map) = parse_spec(spec)?;
        check_spec_keys(&map, &["a", "rate", "eps", "amplitude", "omega", "frequency"], "metric")?;
        Ok(Self {
            family: Some(family),
            rate: spec_f64(&map, &["a", "rate"], "metric")?,
            amplitude: spec_f64(&map, &["eps", "amplitude"], "metric")?,
            frequency: spec_f64(&map, &["omega", "frequency"], "metric")?,
            fd_velocity: None,
        })
    }
}

impl TargetSection {
    /// `sphere`, `sphere:r=2,q=3`, `circle`, `euclidean:q=2`.
    pub fn from_spec(spec: &str) -> Result<Self> {
        let (kind, map) = parse_spec(spec)?;
        check_spec_keys(&map, &["r", "radius", "q", "ambient"], "target")?;
        Ok(Self {
            kind: Some(kind),
            radius: spec_f64(&map, &["r", "radius"], "target")?,
            ambient: spec_f64(&map, &["q", "ambient"], "target")?.map(|v| v as i64),
        })
    }
}

impl InitSection {
    /// `winding:k=1`, `winding:k=1,perturb=0.1`, `great-circle`,
    /// `random-smooth:seed=3,bandlimit=2,amp=0.3`, `mode:k=1,amp=1`.
    pub fn from_spec(spec: &str) -> Result<Self> {
        let (kind, map) = parse_spec(spec)?;
        check_spec_keys(&map, &["k", "perturb", "amp", "amplitude", "seed", "bandlimit", "value"], "init")?;
        let perturb = spec_f64(&map, &["perturb"], "init")?;
        let kind = if kind == "winding" && perturb.is_some() {
            "perturbed-winding".to_string()
        } else {
            kind
        };
        Ok(Self {
            kind: Some(kind),
            k: spec_f64(&map, &["k"], "init")?.map(|v| v as i64),
            amplitude: perturb.or(spec_f64(&map, &["amp", "amplitude"], "init")?),
            value: spec_f64(&map, &["value"], "init")?.map(|v| vec![v]),
            bandlimit: spec_f64(&map, &["bandlimit"], "init")?.map(|v| v as i64),
            seed: spec_f64(&map, &["seed"], "init")?.map(|v| v as i64),
        })
    }
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let key = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.starts_with("unknown field"))
                .unwrap_or("<file>")
                .to_string();
            Error::config(key, msg)
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario sections serialize")
    }

    fn metric_family(&self, dim: usize) -> Result<MetricFamily> {
        let m = &self.metric;
        let family = m.family.as_deref().unwrap_or("flat");
        let fam = match family {
            "flat" => {
                unused("metric.rate", &m.rate, "by the flat family")?;
                unused("metric.amplitude", &m.amplitude, "by the flat family")?;
                MetricFamily::flat(dim)
            }
            "conformal-exp" => {
                let a = finite("metric.rate", m.rate.ok_or_else(|| Error::config("metric.rate", "required"))?)?;
                MetricFamily::conformal_exp(dim, a)
            }
            "conformal-root" => MetricFamily::conformal_root(dim),
            "aniso-torus" => {
                let eps = m.amplitude.ok_or_else(|| Error::config("metric.amplitude", "required"))?;
                if !(eps.abs() < 1.0) {
                    return Err(Error::config("metric.amplitude", "must lie in (-1, 1)"));
                }
                let w = finite("metric.frequency", m.frequency.unwrap_or(1.0))?;
                MetricFamily::aniso_torus(dim, eps, w)
            }
            "ricci-static-flat" => {
                let eps = m.amplitude.ok_or_else(|| Error::config("metric.amplitude", "required"))?;
                if !(eps.abs() < 1.0) {
                    return Err(Error::config("metric.amplitude", "must lie in (-1, 1)"));
                }
                MetricFamily::ricci_static_flat(dim, eps)
            }
            other => {
                return Err(Error::config(
                    "metric.family",
                    format!(
                        "unknown family `{other}` (flat, conformal-exp, conformal-root, aniso-torus, ricci-static-flat)"
                    ),
                ))
            }
        };
        Ok(if m.fd_velocity.unwrap_or(false) {
            fam.without_analytic_velocity()
        } else {
            fam
        })
    }

    fn grid(&self) -> Result<Grid> {
        let n = self.grid.n.as_ref().ok_or_else(|| Error::config("grid.n", "required"))?;
        if n.is_empty() || n.len() > 2 {
            return Err(Error::config("grid.n", "give one or two axis sizes"));
        }
        let sizes = n
            .iter()
            .map(|&v| count("grid.n", v, MIN_POINTS_PER_AXIS as i64))
            .collect::<Result<Vec<_>>>()?;
        let period = match &self.grid.period {
            Some(p) => {
                if p.len() != sizes.len() {
                    return Err(Error::config("grid.period", "needs one period per axis"));
                }
                for &v in p {
                    positive("grid.period", v)?;
                }
                p.clone()
            }
            None => vec![TAU; sizes.len()],
        };
        Grid::new(&sizes, &period).map_err(|e| Error::config("grid", e.to_string()))
    }

    fn target(&self) -> Result<TargetManifold> {
        let t = self.target.as_ref().ok_or_else(|| Error::config("target", "section required"))?;
        let kind = t.kind.as_deref().ok_or_else(|| Error::config("target.kind", "required"))?;
        let radius = positive("target.radius", t.radius.unwrap_or(1.0))?;
        let res = match kind {
            "sphere" => {
                let q = count("target.ambient", t.ambient.unwrap_or(3), 2)?;
                TargetManifold::sphere(radius, q)
            }
            "circle" => {
                if t.ambient.is_some_and(|q| q != 2) {
                    return Err(Error::config("target.ambient", "a circle lives in the plane (ambient = 2)"));
                }
                TargetManifold::sphere(radius, 2)
            }
            "euclidean" => {
                unused("target.radius", &t.radius, "by a euclidean target")?;
                TargetManifold::euclidean(count("target.ambient", t.ambient.unwrap_or(2), 1)?)
            }
            other => {
                return Err(Error::config(
                    "target.kind",
                    format!("unknown target `{other}` (sphere, circle, euclidean)"),
                ))
            }
        };
        res.map_err(|e| Error::config("target", e.to_string()))
    }

    fn init_section(&self) -> Result<&InitSection> {
        self.init.as_ref().ok_or_else(|| Error::config("init", "section required"))
    }

    fn map_init(&self, seed: u64) -> Result<MapInit> {
        let i = self.init_section()?;
        let kind = i.kind.as_deref().ok_or_else(|| Error::config("init.kind", "required"))?;
        let k = || -> Result<i32> {
            let k = i.k.ok_or_else(|| Error::config("init.k", "required"))?;
            i32::try_from(k).map_err(|_| Error::config("init.k", "out of range"))
        };
        Ok(match kind {
            "constant" => MapInit::Constant {
                value: i.value.clone().ok_or_else(|| Error::config("init.value", "required"))?,
            },
            "winding" => MapInit::Winding { k: k()? },
            "perturbed-winding" => MapInit::PerturbedWinding {
                k: k()?,
                amplitude: finite(
                    "init.amplitude",
                    i.amplitude.ok_or_else(|| Error::config("init.amplitude", "required"))?,
                )?,
            },
            "great-circle" => MapInit::GreatCircle,
            "random-smooth" => MapInit::RandomSmooth {
                seed: i.seed.map_or(Ok(seed), |s| count("init.seed", s, 0).map(|v| v as u64))?,
                bandlimit: count("init.bandlimit", i.bandlimit.unwrap_or(2), 1)?,
                amplitude: finite("init.amplitude", i.amplitude.unwrap_or(0.3))?,
            },
            other => {
                return Err(Error::config(
                    "init.kind",
                    format!(
                        "unknown map `{other}` (constant, winding, perturbed-winding, great-circle, random-smooth)"
                    ),
                ))
            }
        })
    }

    fn scalar_init(&self, seed: u64) -> Result<ScalarInit> {
        let Some(i) = &self.init else {
            return Ok(ScalarInit::Mode { k: 1.0, amplitude: 1.0 });
        };
        let kind = i.kind.as_deref().unwrap_or("mode");
        Ok(match kind {
            "zero" => ScalarInit::Zero,
            "constant" => ScalarInit::Constant {
                value: finite(
                    "init.value",
                    i.value
                        .as_ref()
                        .and_then(|v| (v.len() == 1).then(|| v[0]))
                        .ok_or_else(|| Error::config("init.value", "one number required"))?,
                )?,
            },
            "mode" => ScalarInit::Mode {
                k: i.k.unwrap_or(1) as f64,
                amplitude: finite("init.amplitude", i.amplitude.unwrap_or(1.0))?,
            },
            "random-smooth" => ScalarInit::RandomSmooth {
                seed: i.seed.map_or(Ok(seed), |s| count("init.seed", s, 0).map(|v| v as u64))?,
                bandlimit: count("init.bandlimit", i.bandlimit.unwrap_or(2), 1)?,
                amplitude: finite("init.amplitude", i.amplitude.unwrap_or(1.0))?,
            },
            other => {
                return Err(Error::config(
                    "init.kind",
                    format!("unknown scalar initial data `{other}` (zero, constant, mode, random-smooth)"),
                ))
            }
        })
    }

    fn policy(&self) -> Result<StepPolicy> {
        let scheme = match self.time.scheme.as_deref().unwrap_or("heun") {
            "heun" => Scheme::Heun,
            "euler" => Scheme::Euler,
            other => return Err(Error::config("time.scheme", format!("unknown scheme `{other}` (heun, euler)"))),
        };
        let mut p = StepPolicy {
            scheme,
            safety: self.time.safety.unwrap_or(DEFAULT_SAFETY),
            max_dt: None,
        };
        if let Some(m) = self.time.max_dt {
            p = p.with_max_dt(positive("time.max_dt", m)?);
        }
        p.validate()?;
        Ok(p)
    }

    fn t_end(&self) -> Result<f64> {
        positive(
            "time.t_end",
            self.time.t_end.ok_or_else(|| Error::config("time.t_end", "required"))?,
        )
    }

    /// Output times: explicit list, or `cadence` uniform times (default 10).
    fn outputs(&self, t_end: f64) -> Result<Vec<f64>> {
        if let Some(ts) = &self.time.outputs {
            unused("time.cadence", &self.time.cadence, "together with time.outputs")?;
            if ts.is_empty() || ts.iter().any(|&t| !(t > 0.0 && t <= t_end)) || ts.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::config("time.outputs", "must increase strictly inside (0, t_end]"));
            }
            return Ok(ts.clone());
        }
        let c = count("time.cadence", self.time.cadence.unwrap_or(10), 1)?;
        Ok((1..=c).map(|k| t_end * k as f64 / c as f64).collect())
    }

    fn only_sections(&self, module: Module) -> Result<()> {
        let present = [
            ("flow", self.flow.is_some(), Module::Flow),
            ("kernel", self.kernel.is_some(), Module::Kernel),
            ("linheat", self.linheat.is_some(), Module::Linheat),
            ("picard", self.picard.is_some(), Module::Picard),
            ("exhaustion", self.exhaustion.is_some(), Module::Exhaustion),
        ];
        for (name, is, m) in present {
            if is && m != module {
                return Err(Error::config(name, format!("section not used by module {}", module.name())));
            }
        }
        Ok(())
    }

    /// Full validation. `seed` and `past_t0` override the file.
    pub fn validate(&self, seed: Option<u64>, past_t0: bool) -> Result<Scenario> {
        let name = self.name.clone().ok_or_else(|| Error::config("name", "required"))?;
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            return Err(Error::config("name", "use letters, digits, '-', '_' or '.'"));
        }
        let module = Module::parse(self.module.as_deref().ok_or_else(|| Error::config("module", "required"))?)?;
        self.only_sections(module)?;
        let seed = match seed {
            Some(s) => s,
            None => count("seed", self.seed.unwrap_or(0), 0)? as u64,
        };
        let output = OutputFlags {
            csv: self.output.csv.unwrap_or(true),
            json: self.output.json.unwrap_or(true),
            markdown: self.output.markdown.unwrap_or(true),
            fields: self.output.fields.unwrap_or(false),
        };
        let policy = self.policy()?;

        if module == Module::Exhaustion {
            let ex = self.exhaustion.clone().unwrap_or_default();
            unused("grid", &self.grid.n, "by the exhaustion module")?;
            let dim = count("exhaustion.dim", ex.dim.unwrap_or(2), 1)?;
            if dim > 2 {
                return Err(Error::config("exhaustion.dim", "must be 1 or 2"));
            }
            let chi = ex.chi.unwrap_or(crate::exhaustion::DEFAULT_CHI);
            if !(chi > 0.0 && chi < 0.125) {
                return Err(Error::config("exhaustion.chi", "must lie in (0, 1/8)"));
            }
            let rho = positive("exhaustion.rho", ex.rho.unwrap_or(4.0))?;
            let t_end = self.time.t_end.map_or(Ok(1.0), |t| positive("time.t_end", t))?;
            let times = match ex.times {
                Some(ts) => {
                    if ts.is_empty() || ts.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
                        return Err(Error::config("exhaustion.times", "must be positive"));
                    }
                    ts
                }
                None => (1..=4).map(|k| t_end * k as f64 / 4.0).collect(),
            };
            return Ok(Scenario {
                name,
                module,
                seed,
                metric: self.metric_family(dim)?,
                grid: None,
                policy,
                job: Job::Exhaustion {
                    chi,
                    rho,
                    samples: count("exhaustion.samples", ex.samples.unwrap_or(10_000), 16)?,
                    radial: count("exhaustion.radial", ex.radial.unwrap_or(400), 8)?,
                    dim,
                    times,
                    decades: count("exhaustion.decades", ex.decades.unwrap_or(5), 3)? as i32,
                },
                output,
                file: self.clone(),
            });
        }

        let grid = self.grid()?;
        let metric = self.metric_family(grid.dim())?;
        let t_end = self.t_end()?;
        let outputs = self.outputs(t_end)?;
        let job = match module {
            Module::Kernel => {
                let k = self.kernel.clone().unwrap_or_default();
                let source = match (k.source_index, &k.source) {
                    (Some(_), Some(_)) => {
                        return Err(Error::config("kernel.source_index", "give either source or source_index"))
                    }
                    (Some(i), None) => {
                        let i = count("kernel.source_index", i, 0)?;
                        if i >= grid.len() {
                            return Err(Error::config("kernel.source_index", format!("grid has {} points", grid.len())));
                        }
                        i
                    }
                    (None, src) => {
                        let src = src
                            .clone()
                            .unwrap_or_else(|| (0..grid.dim()).map(|a| 0.5 * grid.period(a)).collect());
                        if src.len() != grid.dim() {
                            return Err(Error::config("kernel.source", "needs one coordinate per axis"));
                        }
                        let mut mi = [0usize; 2];
                        for a in 0..grid.dim() {
                            let x = finite("kernel.source", src[a])?.rem_euclid(grid.period(a));
                            mi[a] = ((x / grid.spacing(a)).round() as usize) % grid.size(a);
                        }
                        grid.flat_index(mi)
                    }
                };
                let s = finite("kernel.s", k.s.unwrap_or(0.0))?;
                if s < 0.0 || s >= outputs[0] {
                    return Err(Error::config("kernel.s", "must lie in [0, first output time)"));
                }
                let sep = count("kernel.separation", k.separation.unwrap_or(4), 4)?;
                if sep >= grid.size(0) / 2 {
                    return Err(Error::config("kernel.separation", "must be below half the axis"));
                }
                Job::Kernel {
                    source,
                    s,
                    separation: sep,
                    times: outputs.iter().map(|t| t + s).collect(),
                }
            }
            Module::Linheat => {
                let l = self.linheat.clone().unwrap_or_default();
                let forcing = match l.forcing.as_deref().unwrap_or("mode") {
                    "zero" => Forcing::Zero,
                    "constant" => Forcing::Constant(finite("linheat.forcing_value", l.forcing_value.unwrap_or(1.0))?),
                    "mode" => Forcing::Mode {
                        k: finite("linheat.forcing_k", l.forcing_k.unwrap_or(1.0))?,
                        amplitude: finite("linheat.forcing_amplitude", l.forcing_amplitude.unwrap_or(1.0))?,
                    },
                    other => {
                        return Err(Error::config(
                            "linheat.forcing",
                            format!("unknown forcing `{other}` (zero, constant, mode)"),
                        ))
                    }
                };
                Job::Linheat {
                    forcing,
                    initial: self.scalar_init(seed)?,
                    t_end,
                    outputs,
                }
            }
            Module::Picard => {
                let p = self.picard.clone().unwrap_or_default();
                if self.time.scheme.as_deref().is_some_and(|s| s != "euler") {
                    return Err(Error::config("time.scheme", "the iteration steps with euler"));
                }
                let t1 = match p.t1 {
                    None => None,
                    Some(T1Spec::Word(w)) if w == "auto" => None,
                    Some(T1Spec::Word(w)) => return Err(Error::config("picard.t1", format!("`{w}`: give a number or \"auto\""))),
                    Some(T1Spec::Value(v)) => {
                        let v = positive("picard.t1", v)?;
                        if v > t_end {
                            return Err(Error::config("picard.t1", "must not exceed time.t_end"));
                        }
                        Some(v)
                    }
                };
                let target = self.target()?;
                Job::Picard {
                    target,
                    init: self.map_init(seed)?,
                    horizon: t_end,
                    t1,
                    k_max: count("picard.k_max", p.k_max.unwrap_or(crate::picard::DEFAULT_K_MAX as i64), 1)?,
                    conv_tol: positive("picard.conv_tol", p.conv_tol.unwrap_or(crate::picard::DEFAULT_CONV_TOL))?,
                }
            }
            Module::Flow => {
                let f = self.flow.clone().unwrap_or_default();
                let formulation = match f.formulation.as_deref().unwrap_or("extrinsic") {
                    "extrinsic" => Formulation::Extrinsic,
                    "intrinsic" => Formulation::Intrinsic,
                    other => {
                        return Err(Error::config(
                            "flow.formulation",
                            format!("unknown formulation `{other}` (extrinsic, intrinsic)"),
                        ))
                    }
                };
                let target = self.target()?;
                let mut cfg = FlowRunConfig::new(name.clone(), metric.clone(), grid, target, self.map_init(seed)?, t_end);
                cfg.flow = FlowConfig {
                    formulation,
                    policy,
                    constrained: true,
                };
                cfg.outputs = outputs;
                cfg.kappa = f.kappa;
                cfg.past_t0 = past_t0 || f.past_t0.unwrap_or(false);
                cfg.stationary = f.stationary.unwrap_or(false);
                cfg.restart_at = f.restart_at;
                cfg.residual_at = f.residual_at;
                cfg.audit = AuditLimits {
                    k0: f.k0_limit,
                    a: f.a_limit,
                };
                cfg.keep_states = output.fields;
                cfg.validate()?;
                Job::Flow(Box::new(cfg))
            }
            Module::Exhaustion => unreachable!("handled above"),
        };
        Ok(Scenario {
            name,
            module,
            seed,
            metric,
            grid: Some(grid),
            policy,
            job,
            output,
            file: self.clone(),
        })
    }
}

impl Scenario {
    pub fn load(path: &Path, seed: Option<u64>, past_t0: bool) -> Result<Self> {
        let file = ScenarioFile::load(path)?;
        file.validate(seed, past_t0).map_err(|e| Error::Scenario {
            scenario: path.display().to_string(),
            source: Box::new(e),
        })
    }
}
