//! Run configuration: a TOML file with `[model]`, `[[initial]]`,
//! `[solver]`, `[stochastic]`, `[output]` and `[run]` sections.
//!
//! ```toml
//! [model]
//! kind = "jc"
//! gamma0 = 4.0
//! lambda = 1.0
//! delta = 12.0
//!
//! [[initial]]
//! probability = 1.0
//! state = ["0.8,0", "0.6,0"]
//!
//! [solver]
//! dt = 0.005
//! t_max = 5.0
//!
//! [run]
//! methods = ["det-euler", "oracle"]
//! ```
//!
//! Complex numbers are written as `"re,im"` strings, matrices as lists of
//! rows. A `[meta]` table is accepted and ignored, so the metadata sidecar
//! written next to the outputs is itself a valid config.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ensemble::InitialComponent;
use crate::error::{Error, Result};
use crate::models::{
    make_jc_model, make_two_band_model, Channel, Hamiltonian, JcParams, Model, RateFn, TimeLocalModel,
    TwoBandParams,
};
use crate::qcore::{self, Operator, SampledFunction, StateVector, C64};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    /// Initial decomposition. May be omitted for the built-in models, which
    /// then start from their reference states.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub initial: Vec<InitialEntry>,
    pub solver: SolverSection,
    #[serde(default)]
    pub stochastic: StochasticSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default, skip_serializing)]
    pub meta: Option<toml::Table>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSection {
    Jc {
        gamma0: f64,
        lambda: f64,
        delta: f64,
    },
    TwoBand {
        delta_eps: f64,
        gamma1: f64,
        gamma2: f64,
    },
    /// Explicit time-local model: constant Hamiltonian and jump operators,
    /// one rate function per channel.
    Custom {
        hamiltonian: Vec<Vec<String>>,
        channels: Vec<ChannelSpec>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub operator: Vec<Vec<String>>,
    pub rate: RateSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RateSpec {
    Const {
        value: f64,
    },
    /// `offset + amplitude * sin(omega t + phase)`
    Harmonic {
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
    },
    /// Linear interpolation through `(times, values)`, either inline or
    /// read from a two-column CSV file (`t,value` with a header row) given
    /// relative to the config file. Files are inlined on resolution.
    Table {
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        times: Vec<f64>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        values: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        file: Option<String>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialEntry {
    #[serde(default)]
    pub block: usize,
    pub probability: f64,
    pub state: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub dt: f64,
    pub t_max: f64,
    #[serde(default = "one")]
    pub record_stride: usize,
    #[serde(default = "yes")]
    pub renormalize: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticSection {
    /// Particle count. Zero disables the stochastic methods in `bench`.
    #[serde(default = "default_particles")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for StochasticSection {
    fn default() -> Self {
        Self { n: default_particles(), seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default = "default_prefix")]
    pub prefix: String,
    /// Significant digits of every CSV number.
    #[serde(default = "default_precision")]
    pub precision: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            prefix: default_prefix(),
            precision: default_precision(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { methods: default_methods() }
    }
}

fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_particles() -> usize {
    1000
}
fn default_dir() -> String {
    ".".into()
}
fn default_prefix() -> String {
    "run".into()
}
fn default_precision() -> usize {
    15
}
fn default_methods() -> Vec<String> {
    vec!["det-euler".into()]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MethodKind {
    DetEuler,
    DetRk4,
    Nmqj,
    McUnravel,
    Oracle,
}

impl MethodKind {
    pub const ALL: [MethodKind; 5] = [
        MethodKind::DetEuler,
        MethodKind::DetRk4,
        MethodKind::Nmqj,
        MethodKind::McUnravel,
        MethodKind::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::DetEuler => "det-euler",
            MethodKind::DetRk4 => "det-rk4",
            MethodKind::Nmqj => "nmqj",
            MethodKind::McUnravel => "mc-unravel",
            MethodKind::Oracle => "oracle",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, MethodKind::Nmqj | MethodKind::McUnravel)
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let known: Vec<_> = MethodKind::ALL.iter().map(|m| m.name()).collect();
                Error::Config(format!("unknown method `{s}` (expected one of {})", known.join(", ")))
            })
    }
}

/// Command-line overrides applied on top of a loaded config.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub methods: Vec<String>,
}

/// A validated config together with everything built from it.
#[derive(Clone, Debug)]
pub struct Experiment {
    /// Resolved config: overrides applied, rate files inlined, output
    /// directory absolute, initial decomposition explicit.
    pub config: RunConfig,
    pub model: Model,
    pub initial: Vec<InitialComponent>,
    pub methods: Vec<MethodKind>,
    pub out_dir: PathBuf,
}

impl Experiment {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str_in(&text, &base, overrides)
    }

    /// Parses config text; relative paths are taken against `base`.
    pub fn from_str_in(text: &str, base: &Path, overrides: &Overrides) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::resolve(config, base, overrides)
    }

    pub fn resolve(mut config: RunConfig, base: &Path, overrides: &Overrides) -> Result<Self> {
        if let Some(seed) = overrides.seed {
            config.stochastic.seed = seed;
        }
        if let Some(dt) = overrides.dt {
            config.solver.dt = dt;
        }
        if !overrides.methods.is_empty() {
            config.run.methods = overrides.methods.clone();
        }
        let out_dir = match &overrides.out {
            Some(dir) => absolute(dir)?,
            None => absolute(&base.join(&config.output.dir))?,
        };
        config.output.dir = out_dir.display().to_string();
        config.meta = None;

        validate_sections(&config)?;
        let methods = parse_methods(&config.run.methods)?;

        inline_tables(&mut config.model, base)?;
        let model = build_model(&config.model)?;
        if config.initial.is_empty() {
            config.initial = default_initial(&config.model)?;
        }
        let initial = config
            .initial
            .iter()
            .map(|e| {
                Ok(InitialComponent::new(e.block, parse_state(&e.state)?, e.probability))
            })
            .collect::<Result<Vec<_>>>()?;

        if methods.contains(&MethodKind::Nmqj) && matches!(model, Model::Generalized(_)) {
            return Err(Error::Config("nmqj needs a time-local model; use mc-unravel for block models".into()));
        }

        Ok(Self { config, model, initial, methods, out_dir })
    }

    /// The resolved config as TOML, with a `[meta]` table describing the
    /// run appended. Loading it back reproduces the run.
    pub fn sidecar(&self, extra: &[(&str, toml::Value)]) -> Result<String> {
        let mut table = toml::Table::try_from(&self.config).map_err(|e| Error::Config(e.to_string()))?;
        let mut meta = toml::Table::new();
        meta.insert("version".into(), env!("CARGO_PKG_VERSION").into());
        meta.insert("rng".into(), crate::stochastic::RNG_IDENTITY.into());
        for (k, v) in extra {
            meta.insert((*k).into(), v.clone());
        }
        table.insert("meta".into(), toml::Value::Table(meta));
        toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))
    }
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).map_err(|e| Error::io(p, e))
}

fn validate_sections(c: &RunConfig) -> Result<()> {
    let s = &c.solver;
    if !(s.dt.is_finite() && s.dt > 0.0) {
        return Err(Error::Config(format!("solver.dt must be positive and finite, got {}", s.dt)));
    }
    if !(s.t_max.is_finite() && s.t_max > 0.0) {
        return Err(Error::Config(format!("solver.t_max must be positive and finite, got {}", s.t_max)));
    }
    if s.dt > s.t_max {
        return Err(Error::Config(format!("solver.dt = {} exceeds t_max = {}", s.dt, s.t_max)));
    }
    if s.record_stride == 0 {
        return Err(Error::Config("solver.record_stride must be at least 1".into()));
    }
    if !(1..=17).contains(&c.output.precision) {
        return Err(Error::Config(format!("output.precision must be in 1..=17, got {}", c.output.precision)));
    }
    let prefix = &c.output.prefix;
    if prefix.is_empty() || prefix.contains(['/', '\\']) {
        return Err(Error::Config(format!("output.prefix `{prefix}` must be a plain file stem")));
    }
    if c.run.methods.is_empty() {
        return Err(Error::Config("run.methods is empty".into()));
    }
    Ok(())
}

fn parse_methods(names: &[String]) -> Result<Vec<MethodKind>> {
    let mut out = Vec::with_capacity(names.len());
    for n in names {
        let m: MethodKind = n.parse()?;
        if out.contains(&m) {
            return Err(Error::Config(format!("method `{m}` listed twice")));
        }
        out.push(m);
    }
    Ok(out)
}

pub fn parse_complex(s: &str) -> Result<C64> {
    let bad = || Error::Config(format!("`{s}` is not a complex number of the form \"re,im\""));
    let (re, im) = s.split_once(',').ok_or_else(bad)?;
    let re: f64 = re.trim().parse().map_err(|_| bad())?;
    let im: f64 = im.trim().parse().map_err(|_| bad())?;
    if !(re.is_finite() && im.is_finite()) {
        return Err(bad());
    }
    Ok(C64::new(re, im))
}

pub fn format_complex(z: C64) -> String {
    format!("{},{}", z.re, z.im)
}

pub fn parse_matrix(rows: &[Vec<String>]) -> Result<Operator> {
    let parsed = rows
        .iter()
        .map(|r| r.iter().map(|s| parse_complex(s)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Operator::from_rows(&parsed)
}

fn parse_state(entries: &[String]) -> Result<StateVector> {
    let amps = entries.iter().map(|s| parse_complex(s)).collect::<Result<Vec<_>>>()?;
    StateVector::new(amps)
}

fn state_strings(s: &StateVector) -> Vec<String> {
    s.0.iter().map(|z| format_complex(*z)).collect()
}

fn default_initial(model: &ModelSection) -> Result<Vec<InitialEntry>> {
    let state = match model {
        ModelSection::Jc { .. } => crate::corpus::jc_initial_state(),
        ModelSection::TwoBand { .. } => qcore::excited(),
        ModelSection::Custom { .. } => {
            return Err(Error::Config("custom models need an explicit [[initial]] decomposition".into()))
        }
    };
    Ok(vec![InitialEntry { block: 0, probability: 1.0, state: state_strings(&state) }])
}

fn inline_tables(model: &mut ModelSection, base: &Path) -> Result<()> {
    let ModelSection::Custom { channels, .. } = model else {
        return Ok(());
    };
    for (k, ch) in channels.iter_mut().enumerate() {
        if let RateSpec::Table { times, values, file } = &mut ch.rate {
            if let Some(name) = file.take() {
                if !times.is_empty() || !values.is_empty() {
                    return Err(Error::Config(format!("channel {k}: give either a rate file or inline values, not both")));
                }
                let path = base.join(&name);
                if !path.is_file() {
                    return Err(Error::Config(format!("channel {k}: rate file {} does not exist", path.display())));
                }
                let (t, v) = read_rate_table(&path)?;
                *times = t;
                *values = v;
            }
        }
    }
    Ok(())
}

fn read_rate_table(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::Config(format!("{} row {}: expected two columns", path.display(), i + 1)));
        }
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("{} row {}: `{s}` is not a number", path.display(), i + 1)))
        };
        times.push(num(&rec[0])?);
        values.push(num(&rec[1])?);
    }
    Ok((times, values))
}

fn build_rate(spec: &RateSpec) -> Result<RateFn> {
    Ok(match *spec {
        RateSpec::Const { value } => {
            if !value.is_finite() {
                return Err(Error::Config("constant rate must be finite".into()));
            }
            RateFn::constant(value)
        }
        RateSpec::Harmonic { amplitude, omega, phase, offset } => {
            if ![amplitude, omega, phase, offset].iter().all(|x| x.is_finite()) {
                return Err(Error::Config("harmonic rate parameters must be finite".into()));
            }
            RateFn::new(format!("{offset} + {amplitude} sin({omega} t + {phase})"), move |t| {
                offset + amplitude * (omega * t + phase).sin()
            })
        }
        RateSpec::Table { ref times, ref values, .. } => {
            if times.len() != values.len() {
                return Err(Error::Config(format!(
                    "rate table has {} times but {} values",
                    times.len(),
                    values.len()
                )));
            }
            RateFn::tabulated(SampledFunction::new(times.clone(), values.clone())?)
        }
    })
}

pub fn build_model(section: &ModelSection) -> Result<Model> {
    Ok(match *section {
        ModelSection::Jc { gamma0, lambda, delta } => make_jc_model(JcParams { gamma0, lambda, delta })?.into(),
        ModelSection::TwoBand { delta_eps, gamma1, gamma2 } => {
            make_two_band_model(TwoBandParams { delta_eps, gamma1, gamma2 })?.into()
        }
        ModelSection::Custom { ref hamiltonian, ref channels } => {
            let h = parse_matrix(hamiltonian)?;
            if h.dim() < 2 {
                return Err(Error::Config("custom model needs dimension at least 2".into()));
            }
            let channels = channels
                .iter()
                .map(|c| {
                    let operator = parse_matrix(&c.operator)?;
                    if operator.dim() != h.dim() {
                        return Err(Error::DimensionMismatch { expected: h.dim(), found: operator.dim() });
                    }
                    Ok(Channel { operator, rate: build_rate(&c.rate)? })
                })
                .collect::<Result<Vec<_>>>()?;
            TimeLocalModel::new(Hamiltonian::constant(h)?, channels)?.into()
        }
    })
}
