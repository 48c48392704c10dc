//! Flat dotted-key configuration: parsing, defaults, overrides and the echo written to manifests.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use shks_core::experiments::{
    embedding_constant, estimate_kappa, KappaEstimate, ScanParameter, StudyError, TheoryParams,
};
use shks_core::integrator::ConfigError;
use shks_core::{CutoffSpec, InitialCondition, NoiseModel, SolverConfig, TorusGrid};
use thiserror::Error;
use toml::{Table, Value};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigFileError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("unknown config keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("malformed override `{0}`: expected key=value")]
    BadOverride(String),
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigFileError {
    ConfigFileError::Invalid {
        field: field.to_string(),
        reason: reason.into(),
    }
}

impl From<ConfigError> for ConfigFileError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Invalid { field, reason } => invalid(field, reason),
            other => invalid("ic", other.to_string()),
        }
    }
}

/// Dotted key to value, sorted so echoes are stable.
pub type Flat = BTreeMap<String, Value>;

pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    "grid.dim",
    "grid.m",
    "s",
    "dt",
    "t_final",
    "cutoff.radius",
    "galerkin.n",
    "noise.type",
    "noise.lambda",
    "noise.delta",
    "noise.c_eff",
    "stop_threshold",
    "record_every",
    "ic.kind",
    "ic.c",
    "ic.offset",
    "ic.amplitude",
    "ic.wavevector",
    "ic.target_norm",
    "ic.decay",
    "ic.seed",
    "ic.bound_fraction",
    "theory.r",
    "theory.rho",
    "theory.c_tilde",
    "mc.paths",
    "scan.parameter",
    "scan.values",
    "kappa.samples",
    "kappa.amplitudes",
    "gbm.lambda",
    "gbm.rho",
    "gbm.t",
    "gbm.paths",
    "gbm.exponent",
    "converge.dt_ladder",
    "converge.paths",
    "converge.n_ladder",
    "converge.r",
];

/// Flattens nested tables into dotted keys; `[noise] type = "x"` and `"noise.type" = "x"` agree.
pub fn flatten(table: &Table) -> Flat {
    fn walk(prefix: &str, table: &Table, out: &mut Flat) {
        for (k, v) in table {
            let key = if prefix.is_empty() {
                k.clone()
            } else {
                format!("{prefix}.{k}")
            };
            match v {
                Value::Table(t) => walk(&key, t, out),
                other => {
                    out.insert(key, other.clone());
                }
            }
        }
    }
    let mut out = Flat::new();
    walk("", table, &mut out);
    out
}

/// Inverse of [`flatten`].
pub fn unflatten(flat: &Flat) -> Table {
    let mut root = Table::new();
    for (key, value) in flat {
        let mut parts: Vec<&str> = key.split('.').collect();
        let leaf = parts.pop().expect("split yields one part");
        let mut table = &mut root;
        for p in parts {
            table = table
                .entry(p.to_string())
                .or_insert_with(|| Value::Table(Table::new()))
                .as_table_mut()
                .expect("dotted prefixes are tables");
        }
        table.insert(leaf.to_string(), value.clone());
    }
    root
}

pub fn parse_str(text: &str) -> Result<Flat, ConfigFileError> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigFileError::Parse(e.message().to_string()))?;
    Ok(flatten(&table))
}

pub fn read_file(path: &Path) -> Result<Flat, ConfigFileError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigFileError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_str(&text)
}

/// `key=value`; the value is read as a TOML literal, falling back to a bare string.
pub fn parse_override(arg: &str) -> Result<(String, Value), ConfigFileError> {
    let (key, raw) = arg
        .split_once('=')
        .ok_or_else(|| ConfigFileError::BadOverride(arg.to_string()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigFileError::BadOverride(arg.to_string()));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

pub fn check_keys(flat: &Flat) -> Result<(), ConfigFileError> {
    let unknown: Vec<String> = flat
        .keys()
        .filter(|k| !KNOWN_KEYS.contains(&k.as_str()))
        .cloned()
        .collect();
    if unknown.is_empty() {
        Ok(())
    } else {
        Err(ConfigFileError::UnknownKeys(unknown))
    }
}

struct Reader<'a>(&'a Flat);

impl Reader<'_> {
    fn has(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    fn f64_opt(&self, key: &str) -> Result<Option<f64>, ConfigFileError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(Value::Float(x)) => Ok(Some(*x)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(other) => Err(invalid(key, format!("expected a number, got {other}"))),
        }
    }

    fn f64(&self, key: &str, default: f64) -> Result<f64, ConfigFileError> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    fn int_opt(&self, key: &str) -> Result<Option<i64>, ConfigFileError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) => Ok(Some(*i)),
            Some(other) => Err(invalid(key, format!("expected an integer, got {other}"))),
        }
    }

    fn usize_opt(&self, key: &str) -> Result<Option<usize>, ConfigFileError> {
        self.int_opt(key)?
            .map(|i| usize::try_from(i).map_err(|_| invalid(key, format!("must be non-negative, got {i}"))))
            .transpose()
    }

    fn usize(&self, key: &str, default: usize) -> Result<usize, ConfigFileError> {
        Ok(self.usize_opt(key)?.unwrap_or(default))
    }

    fn u64_opt(&self, key: &str) -> Result<Option<u64>, ConfigFileError> {
        self.int_opt(key)?
            .map(|i| u64::try_from(i).map_err(|_| invalid(key, format!("must be non-negative, got {i}"))))
            .transpose()
    }

    fn string(&self, key: &str, default: &str) -> Result<String, ConfigFileError> {
        match self.0.get(key) {
            None => Ok(default.to_string()),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(other) => Err(invalid(key, format!("expected a string, got {other}"))),
        }
    }

    fn array<'b>(&'b self, key: &str) -> Result<Option<&'b Vec<Value>>, ConfigFileError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(Value::Array(a)) => Ok(Some(a)),
            Some(other) => Err(invalid(key, format!("expected an array, got {other}"))),
        }
    }

    fn f64_list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigFileError> {
        match self.array(key)? {
            None => Ok(default.to_vec()),
            Some(a) => a
                .iter()
                .map(|v| match v {
                    Value::Float(x) => Ok(*x),
                    Value::Integer(i) => Ok(*i as f64),
                    other => Err(invalid(key, format!("expected numbers, found {other}"))),
                })
                .collect(),
        }
    }

    fn int_list(&self, key: &str) -> Result<Option<Vec<i64>>, ConfigFileError> {
        self.array(key)?
            .map(|a| {
                a.iter()
                    .map(|v| match v {
                        Value::Integer(i) => Ok(*i),
                        other => Err(invalid(key, format!("expected integers, found {other}"))),
                    })
                    .collect()
            })
            .transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheorySettings {
    pub r: f64,
    pub rho: f64,
    /// `None` means "estimate κ and multiply by the grid embedding constant".
    pub c_tilde: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbmSettings {
    pub lambda: f64,
    pub rho: f64,
    pub t: f64,
    pub paths: usize,
    pub exponent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergeSettings {
    pub dt_ladder: Vec<f64>,
    pub paths: usize,
    pub n_ladder: Vec<usize>,
    pub r: f64,
}

/// Everything a subcommand can be asked to do, fully resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub solver: SolverConfig,
    pub seed: u64,
    /// Rescale `u_0` to this fraction of the small-data bound (linear noise with theory constants).
    pub ic_bound_fraction: Option<f64>,
    pub theory: Option<TheorySettings>,
    pub mc_paths: usize,
    pub scan_parameter: ScanParameter,
    pub scan_values: Vec<f64>,
    pub kappa_samples: usize,
    pub kappa_amplitudes: Vec<f64>,
    pub gbm: GbmSettings,
    pub converge: ConvergeSettings,
}

pub const DEFAULT_DT_LADDER: [f64; 5] = [1e-2, 5e-3, 2.5e-3, 1.25e-3, 1.25e-3 / 32.0];

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::from_flat(&Flat::new()).expect("defaults are valid")
    }
}

fn positive(field: &str, x: f64) -> Result<f64, ConfigFileError> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(invalid(field, format!("must be positive, got {x}")))
    }
}

fn at_least_one(field: &str, n: usize) -> Result<usize, ConfigFileError> {
    if n >= 1 {
        Ok(n)
    } else {
        Err(invalid(field, "must be at least 1"))
    }
}

fn parse_grid(r: &Reader) -> Result<TorusGrid, ConfigFileError> {
    let dim = r.usize("grid.dim", 1)?;
    if !(1..=2).contains(&dim) {
        return Err(invalid("grid.dim", format!("must be 1 or 2, got {dim}")));
    }
    let m = r.usize("grid.m", 128)?;
    if m < 4 || !m.is_multiple_of(2) {
        return Err(invalid("grid.m", format!("must be even and at least 4, got {m}")));
    }
    TorusGrid::new(dim, m).map_err(|e| invalid("grid.m", e.to_string()))
}

fn parse_noise(r: &Reader) -> Result<NoiseModel, ConfigFileError> {
    let kind = r.string("noise.type", "zero")?;
    let unused = |keys: &[&str]| {
        for k in keys {
            if r.has(k) {
                warn!("`{k}` is ignored for noise.type = {kind}");
            }
        }
    };
    match kind.as_str() {
        "zero" => {
            unused(&["noise.lambda", "noise.delta", "noise.c_eff"]);
            Ok(NoiseModel::Zero)
        }
        "linear" => {
            unused(&["noise.delta", "noise.c_eff"]);
            Ok(NoiseModel::Linear {
                lambda: r.f64("noise.lambda", 1.0)?,
            })
        }
        "nonlinear" => {
            unused(&["noise.lambda"]);
            Ok(NoiseModel::Nonlinear {
                delta: r.f64("noise.delta", 1.0)?,
                c_eff: r.f64("noise.c_eff", 1.0)?,
            })
        }
        other => Err(invalid(
            "noise.type",
            format!("expected zero, linear or nonlinear, got `{other}`"),
        )),
    }
}

fn parse_initial(r: &Reader, dim: usize) -> Result<InitialCondition, ConfigFileError> {
    let kind = r.string("ic.kind", "single_mode")?;
    let allowed: &[&str] = match kind.as_str() {
        "constant" => &["ic.c"],
        "single_mode" => &["ic.offset", "ic.amplitude", "ic.wavevector"],
        "random_sobolev" => &["ic.target_norm", "ic.decay", "ic.seed"],
        "power_law" => &["ic.amplitude", "ic.decay"],
        other => {
            return Err(invalid(
                "ic.kind",
                format!("expected constant, single_mode, random_sobolev or power_law, got `{other}`"),
            ))
        }
    };
    for key in r.0.keys().filter(|k| k.starts_with("ic.")) {
        if !allowed.contains(&key.as_str()) && key != "ic.kind" && key != "ic.bound_fraction" {
            warn!("`{key}` is ignored for ic.kind = {kind}");
        }
    }
    Ok(match kind.as_str() {
        "constant" => InitialCondition::Constant { c: r.f64("ic.c", 0.5)? },
        "single_mode" => {
            let mut default_k = vec![0; dim];
            default_k[0] = 1;
            let wavevector = r.int_list("ic.wavevector")?.unwrap_or(default_k);
            if wavevector.len() != dim {
                return Err(invalid(
                    "ic.wavevector",
                    format!("needs {dim} components, got {}", wavevector.len()),
                ));
            }
            InitialCondition::SingleMode {
                offset: r.f64("ic.offset", 0.0)?,
                amplitude: r.f64("ic.amplitude", 0.1)?,
                wavevector,
            }
        }
        "random_sobolev" => InitialCondition::RandomSobolev {
            target_norm: r.f64("ic.target_norm", 0.1)?,
            decay: r.f64_opt("ic.decay")?,
            seed: r.u64_opt("ic.seed")?,
        },
        _ => InitialCondition::PowerLaw {
            amplitude: r.f64("ic.amplitude", 1.0)?,
            decay: r.f64("ic.decay", 0.0).and_then(|d| {
                if r.has("ic.decay") {
                    Ok(d)
                } else {
                    Err(invalid("ic.decay", "required for ic.kind = power_law"))
                }
            })?,
        },
    })
}

fn seed_value(field: &str, seed: u64) -> Result<u64, ConfigFileError> {
    if seed > i64::MAX as u64 {
        return Err(invalid(field, "must fit in a signed 64-bit integer"));
    }
    Ok(seed)
}

impl RunConfig {
    /// Resolves a flat key map, applying defaults and validating every field.
    pub fn from_flat(flat: &Flat) -> Result<Self, ConfigFileError> {
        check_keys(flat)?;
        let r = Reader(flat);
        let grid = parse_grid(&r)?;
        let dim = grid.dimension();
        let m = grid.points();
        let initial = parse_initial(&r, dim)?;
        let mut solver = SolverConfig::new(grid, initial);
        solver.s = r.f64("s", 2.0)?;
        solver.dt = r.f64("dt", 1e-3)?;
        solver.t_final = r.f64("t_final", 1.0)?;
        solver.cutoff = match r.f64_opt("cutoff.radius")? {
            None => CutoffSpec::Unbounded,
            Some(radius) => CutoffSpec::Radius(radius),
        };
        solver.galerkin_n = r.usize("galerkin.n", m / 2)?;
        solver.noise = parse_noise(&r)?;
        solver.stop_threshold = r.f64("stop_threshold", 1e3)?;
        solver.record_every = r.usize("record_every", 10)?;
        solver.validate()?;

        let seed = seed_value("seed", r.u64_opt("seed")?.unwrap_or(0))?;
        if let InitialCondition::RandomSobolev { seed: Some(s), .. } = solver.initial {
            seed_value("ic.seed", s)?;
        }
        // Building u_0 once surfaces invalid initial data as a config error.
        solver.validate_initial(&solver.initial_field(seed, 0)?)?;

        let ic_bound_fraction = r.f64_opt("ic.bound_fraction")?;
        if let Some(f) = ic_bound_fraction {
            positive("ic.bound_fraction", f)?;
        }
        let theory = if flat.keys().any(|k| k.starts_with("theory.")) {
            let t = TheorySettings {
                r: r.f64("theory.r", 100.0)?,
                rho: r.f64("theory.rho", 4.0)?,
                c_tilde: r.f64_opt("theory.c_tilde")?,
            };
            if !(t.r > 1.0) {
                return Err(invalid("theory.r", format!("must exceed 1, got {}", t.r)));
            }
            if !(t.rho > 2.0) {
                return Err(invalid("theory.rho", format!("must exceed 2, got {}", t.rho)));
            }
            if let Some(c) = t.c_tilde {
                positive("theory.c_tilde", c)?;
            }
            Some(t)
        } else {
            None
        };
        if ic_bound_fraction.is_some() && theory.is_none() {
            return Err(invalid("ic.bound_fraction", "needs the theory.* constants"));
        }
        if ic_bound_fraction.is_some() && !matches!(solver.noise, NoiseModel::Linear { .. }) {
            return Err(invalid("ic.bound_fraction", "needs noise.type = linear"));
        }

        let param_name = r.string("scan.parameter", "nonlinear_c")?;
        let scan_parameter = ScanParameter::parse(&param_name).ok_or_else(|| {
            invalid(
                "scan.parameter",
                format!("expected nonlinear_c, nonlinear_delta or linear_lambda, got `{param_name}`"),
            )
        })?;
        let scan_values = r.f64_list("scan.values", &[0.0, 1.0, 2.0, 4.0, 8.0])?;
        if scan_values.is_empty() || scan_values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("scan.values", "must be a non-empty list of non-negative numbers"));
        }

        let kappa_amplitudes = r.f64_list("kappa.amplitudes", &[0.1, 0.5, 1.0, 2.0])?;
        if kappa_amplitudes.is_empty() || kappa_amplitudes.iter().any(|a| !(*a > 0.0)) {
            return Err(invalid("kappa.amplitudes", "must be a non-empty list of positive numbers"));
        }

        let gbm = GbmSettings {
            lambda: r.f64("gbm.lambda", 1.0)?,
            rho: r.f64("gbm.rho", 4.0)?,
            t: r.f64("gbm.t", 1.0)?,
            paths: at_least_one("gbm.paths", r.usize("gbm.paths", 100_000)?)?,
            exponent: r.f64_opt("gbm.exponent")?,
        };
        if !(gbm.rho > 2.0) {
            return Err(invalid("gbm.rho", format!("must exceed 2, got {}", gbm.rho)));
        }
        if !(gbm.t >= 0.0) {
            return Err(invalid("gbm.t", "must be non-negative"));
        }

        let n_ladder: Vec<usize> = match r.int_list("converge.n_ladder")? {
            None => vec![4, 8, 16, 32],
            Some(v) => v
                .into_iter()
                .map(|n| {
                    usize::try_from(n)
                        .ok()
                        .filter(|n| *n >= 1)
                        .ok_or_else(|| invalid("converge.n_ladder", format!("entries must be positive, got {n}")))
                })
                .collect::<Result<_, _>>()?,
        };
        let converge = ConvergeSettings {
            dt_ladder: r.f64_list("converge.dt_ladder", &DEFAULT_DT_LADDER)?,
            paths: at_least_one("converge.paths", r.usize("converge.paths", 32)?)?,
            n_ladder,
            r: r.f64("converge.r", 1.0)?,
        };

        Ok(RunConfig {
            solver,
            seed,
            ic_bound_fraction,
            theory,
            mc_paths: at_least_one("mc.paths", r.usize("mc.paths", 64)?)?,
            scan_parameter,
            scan_values,
            kappa_samples: at_least_one("kappa.samples", r.usize("kappa.samples", 256)?)?,
            kappa_amplitudes,
            gbm,
            converge,
        })
    }

    /// Merges `file` and `overrides` (overrides win) and resolves the result.
    pub fn load(file: &Flat, overrides: &Flat) -> Result<Self, ConfigFileError> {
        let mut merged = file.clone();
        merged.extend(overrides.iter().map(|(k, v)| (k.clone(), v.clone())));
        Self::from_flat(&merged)
    }

    /// Every resolved key with its value; feeding it back through [`RunConfig::from_flat`]
    /// reproduces `self`.
    pub fn echo(&self) -> Flat {
        let mut f = Flat::new();
        let mut put = |k: &str, v: Value| {
            f.insert(k.to_string(), v);
        };
        let fl = Value::Float;
        let int = |n: usize| Value::Integer(n as i64);
        let floats = |xs: &[f64]| Value::Array(xs.iter().map(|x| Value::Float(*x)).collect());
        let s = &self.solver;
        put("seed", Value::Integer(self.seed as i64));
        put("grid.dim", int(s.grid.dimension()));
        put("grid.m", int(s.grid.points()));
        put("s", fl(s.s));
        put("dt", fl(s.dt));
        put("t_final", fl(s.t_final));
        if let CutoffSpec::Radius(radius) = s.cutoff {
            put("cutoff.radius", fl(radius));
        }
        put("galerkin.n", int(s.galerkin_n));
        match s.noise {
            NoiseModel::Zero => put("noise.type", Value::String("zero".into())),
            NoiseModel::Linear { lambda } => {
                put("noise.type", Value::String("linear".into()));
                put("noise.lambda", fl(lambda));
            }
            NoiseModel::Nonlinear { delta, c_eff } => {
                put("noise.type", Value::String("nonlinear".into()));
                put("noise.delta", fl(delta));
                put("noise.c_eff", fl(c_eff));
            }
        }
        put("stop_threshold", fl(s.stop_threshold));
        put("record_every", int(s.record_every));
        match &s.initial {
            InitialCondition::Constant { c } => {
                put("ic.kind", Value::String("constant".into()));
                put("ic.c", fl(*c));
            }
            InitialCondition::SingleMode {
                offset,
                amplitude,
                wavevector,
            } => {
                put("ic.kind", Value::String("single_mode".into()));
                put("ic.offset", fl(*offset));
                put("ic.amplitude", fl(*amplitude));
                put(
                    "ic.wavevector",
                    Value::Array(wavevector.iter().map(|k| Value::Integer(*k)).collect()),
                );
            }
            InitialCondition::RandomSobolev {
                target_norm,
                decay,
                seed,
            } => {
                put("ic.kind", Value::String("random_sobolev".into()));
                put("ic.target_norm", fl(*target_norm));
                if let Some(d) = decay {
                    put("ic.decay", fl(*d));
                }
                if let Some(sd) = seed {
                    put("ic.seed", Value::Integer(*sd as i64));
                }
            }
            InitialCondition::PowerLaw { amplitude, decay } => {
                put("ic.kind", Value::String("power_law".into()));
                put("ic.amplitude", fl(*amplitude));
                put("ic.decay", fl(*decay));
            }
        }
        if let Some(frac) = self.ic_bound_fraction {
            put("ic.bound_fraction", fl(frac));
        }
        if let Some(t) = self.theory {
            put("theory.r", fl(t.r));
            put("theory.rho", fl(t.rho));
            if let Some(c) = t.c_tilde {
                put("theory.c_tilde", fl(c));
            }
        }
        put("mc.paths", int(self.mc_paths));
        put("scan.parameter", Value::String(self.scan_parameter.name().into()));
        put("scan.values", floats(&self.scan_values));
        put("kappa.samples", int(self.kappa_samples));
        put("kappa.amplitudes", floats(&self.kappa_amplitudes));
        put("gbm.lambda", fl(self.gbm.lambda));
        put("gbm.rho", fl(self.gbm.rho));
        put("gbm.t", fl(self.gbm.t));
        put("gbm.paths", int(self.gbm.paths));
        if let Some(k) = self.gbm.exponent {
            put("gbm.exponent", fl(k));
        }
        put("converge.dt_ladder", floats(&self.converge.dt_ladder));
        put("converge.paths", int(self.converge.paths));
        put(
            "converge.n_ladder",
            Value::Array(self.converge.n_ladder.iter().map(|n| int(*n)).collect()),
        );
        put("converge.r", fl(self.converge.r));
        f
    }

    /// The echo as nested TOML text.
    pub fn echo_toml(&self) -> String {
        toml::to_string(&unflatten(&self.echo())).expect("echo tables serialize")
    }
}

/// Theory constants with `C̃` filled in, plus the κ estimate when one was needed.
#[derive(Debug, Clone)]
pub struct ResolvedTheory {
    pub params: TheoryParams,
    pub kappa: Option<KappaEstimate>,
    pub embedding: Option<f64>,
}

pub fn resolve_theory(cfg: &RunConfig) -> Result<Option<ResolvedTheory>, StudyError> {
    let Some(t) = cfg.theory else {
        return Ok(None);
    };
    let (c_tilde, kappa, embedding) = match t.c_tilde {
        Some(c) => (c, None, None),
        None => {
            let grid = &cfg.solver.grid;
            let est = estimate_kappa(grid, cfg.solver.s, cfg.kappa_samples, &cfg.kappa_amplitudes, cfg.seed)?;
            let d = embedding_constant(grid, cfg.solver.s);
            if !(est.kappa_hat > 0.0) {
                return Err(StudyError::InvalidInput(
                    "κ estimate is zero; set theory.c_tilde explicitly".into(),
                ));
            }
            (est.kappa_hat * d, Some(est), Some(d))
        }
    };
    Ok(Some(ResolvedTheory {
        params: TheoryParams {
            r: t.r,
            rho: t.rho,
            c_tilde,
        },
        kappa,
        embedding,
    }))
}

fn scale_initial(ic: &InitialCondition, factor: f64) -> InitialCondition {
    match ic.clone() {
        InitialCondition::Constant { c } => InitialCondition::Constant { c: c * factor },
        InitialCondition::SingleMode {
            offset,
            amplitude,
            wavevector,
        } => InitialCondition::SingleMode {
            offset: offset * factor,
            amplitude: amplitude * factor,
            wavevector,
        },
        InitialCondition::RandomSobolev {
            target_norm,
            decay,
            seed,
        } => InitialCondition::RandomSobolev {
            target_norm: target_norm * factor,
            decay,
            seed,
        },
        InitialCondition::PowerLaw { amplitude, decay } => InitialCondition::PowerLaw {
            amplitude: amplitude * factor,
            decay,
        },
    }
}

/// The solver config, with `u_0` rescaled to `ic.bound_fraction` of `λ²/(2RρC̃)` when requested.
pub fn effective_solver(cfg: &RunConfig, theory: Option<&ResolvedTheory>) -> Result<SolverConfig, StudyError> {
    let mut solver = cfg.solver.clone();
    let (Some(frac), Some(theory), NoiseModel::Linear { lambda }) =
        (cfg.ic_bound_fraction, theory, solver.noise)
    else {
        return Ok(solver);
    };
    let target = frac * theory.params.data_bound(lambda);
    let norm = solver.initial_field(cfg.seed, 0)?.sobolev_norm(solver.s);
    if !(norm > 0.0) {
        return Err(StudyError::InvalidInput(
            "cannot rescale a zero initial condition to the data bound".into(),
        ));
    }
    solver.initial = scale_initial(&solver.initial, target / norm);
    Ok(solver)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_default_table() {
        let c = RunConfig::from_flat(&Flat::new()).unwrap();
        assert_eq!(c.solver.grid.dimension(), 1);
        assert_eq!(c.solver.grid.points(), 128);
        assert_eq!(c.solver.s, 2.0);
        assert_eq!(c.solver.dt, 1e-3);
        assert_eq!(c.solver.t_final, 1.0);
        assert_eq!(c.solver.noise, NoiseModel::Zero);
        assert_eq!(c.solver.stop_threshold, 1e3);
        assert_eq!(c.solver.galerkin_n, 64);
        assert_eq!(c.seed, 0);
    }

    #[test]
    fn nested_and_dotted_spellings_agree() {
        let a = parse_str("[noise]\ntype = \"linear\"\nlambda = 0.5\n").unwrap();
        let b = parse_str("\"noise.type\" = \"linear\"\n\"noise.lambda\" = 0.5\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(
            RunConfig::from_flat(&a).unwrap().solver.noise,
            NoiseModel::Linear { lambda: 0.5 }
        );
    }

    #[test]
    fn odd_grid_is_rejected_by_name() {
        let f = parse_str("grid.m = 15").unwrap();
        match RunConfig::from_flat(&f) {
            Err(ConfigFileError::Invalid { field, .. }) => assert_eq!(field, "grid.m"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_fields_are_named() {
        for (text, field) in [
            ("dt = -1.0", "dt"),
            ("s = 0", "s"),
            ("t_final = 0", "t_final"),
            ("mc.paths = 0", "mc.paths"),
            ("noise.type = \"cubic\"", "noise.type"),
            ("theory.rho = 2", "theory.rho"),
            ("ic.wavevector = [1, 2]", "ic.wavevector"),
        ] {
            match RunConfig::from_flat(&parse_str(text).unwrap()) {
                Err(ConfigFileError::Invalid { field: f, .. }) => assert_eq!(f, field, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn unknown_keys_are_all_listed() {
        let f = parse_str("foo = 1\n[noise]\nkind = \"x\"\n").unwrap();
        assert_eq!(
            RunConfig::from_flat(&f),
            Err(ConfigFileError::UnknownKeys(vec!["foo".into(), "noise.kind".into()]))
        );
    }

    #[test]
    fn overrides_win() {
        let file = parse_str("dt = 0.01\nt_final = 2.0").unwrap();
        let (k, v) = parse_override("dt=0.002").unwrap();
        let over: Flat = [(k, v)].into_iter().collect();
        let c = RunConfig::load(&file, &over).unwrap();
        assert_eq!(c.solver.dt, 0.002);
        assert_eq!(c.solver.t_final, 2.0);
    }

    #[test]
    fn override_values_parse_as_literals() {
        assert_eq!(parse_override("a=3").unwrap().1, Value::Integer(3));
        assert_eq!(parse_override("a = linear").unwrap().1, Value::String("linear".into()));
        assert_eq!(
            parse_override("a=[1, 2.5]").unwrap().1,
            Value::Array(vec![Value::Integer(1), Value::Float(2.5)])
        );
        assert!(parse_override("novalue").is_err());
        assert!(parse_override("=3").is_err());
    }

    #[test]
    fn echo_round_trips() {
        let texts = [
            "",
            "grid.dim = 2\ngrid.m = 16\nnoise.type = \"nonlinear\"\nnoise.c_eff = 3.5\ncutoff.radius = 20.0",
            "noise.type = \"linear\"\nnoise.lambda = 0.1\nic.kind = \"random_sobolev\"\nic.target_norm = 0.3\nic.seed = 9\ntheory.r = 100\nic.bound_fraction = 0.1\ndt = 0.0007",
            "ic.kind = \"power_law\"\nic.decay = 3.51\nconverge.dt_ladder = [0.1, 0.05]\ngbm.exponent = 1.0",
        ];
        for text in texts {
            let c = RunConfig::from_flat(&parse_str(text).unwrap()).unwrap();
            let again = RunConfig::from_flat(&parse_str(&c.echo_toml()).unwrap()).unwrap();
            assert_eq!(c, again, "{text}");
            assert_eq!(c.echo(), again.echo());
        }
    }

    #[test]
    fn bound_fraction_rescales_initial_norm() {
        let text = "noise.type = \"linear\"\ngrid.m = 32\ntheory.c_tilde = 2.0\nic.bound_fraction = 0.1";
        let cfg = RunConfig::from_flat(&parse_str(text).unwrap()).unwrap();
        let theory = resolve_theory(&cfg).unwrap().unwrap();
        // λ²/(2RρC̃) = 1/(2·100·4·2)
        assert!((theory.params.data_bound(1.0) - 1.0 / 1600.0).abs() < 1e-18);
        let solver = effective_solver(&cfg, Some(&theory)).unwrap();
        let hs = solver.initial_field(0, 0).unwrap().sobolev_norm(solver.s);
        assert!((hs - 0.1 / 1600.0).abs() < 1e-15);
    }
}
