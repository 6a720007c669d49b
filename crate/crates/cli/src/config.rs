//! Strict flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use unilab_core::experiments::{Protocol, ProtocolKind};
use unilab_core::hamiltonian::{ParamRanges, QeAxis, DEFAULT_PARAM_SEED};
use unilab_core::{Error, Result, C64};

pub const KNOWN_KEYS: &[&str] = &[
    "protocol",
    "n_env",
    "omega0",
    "omega_env",
    "omega_env_min",
    "omega_env_max",
    "g_env",
    "g_env_min",
    "g_env_max",
    "kappa_eo",
    "kappa_eo_min",
    "kappa_eo_max",
    "param_seed",
    "lambda_qo",
    "mass",
    "a_well",
    "b_well",
    "grid_points",
    "grid_half_width",
    "qe_axis",
    "qubit_alpha",
    "qubit_beta",
    "dt",
    "krylov_dim",
    "tolerance",
    "t_final",
    "record_stride",
    "fragment_samples",
    "seed",
    "output_dir",
    "emit_svg",
    "checkpoint_interval",
];

pub const DEFAULT_OUTPUT_DIR: &str = "unilab_out";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub protocol: Protocol,
    pub param_seed: u64,
    pub output_dir: PathBuf,
    pub emit_svg: bool,
    /// Snapshots between checkpoints; 0 disables checkpointing.
    pub checkpoint_interval: usize,
    /// Echo of the explicitly set keys, in file order.
    pub entries: Vec<(String, String)>,
}

impl RunConfig {
    pub fn seed(&self) -> u64 {
        self.protocol.env_seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.protocol.env_seed = seed;
        self
    }

    pub fn echo(&self) -> ConfigEcho {
        let p = &self.protocol;
        ConfigEcho {
            protocol: p.kind.name().to_string(),
            n_env: p.params.n_env(),
            omega0: p.params.omega0,
            omega_env: p.params.omega_env.clone(),
            g_env: p.params.g_env.clone(),
            kappa_eo: p.params.kappa_eo.clone(),
            param_seed: self.param_seed,
            lambda_qo: p.params.lambda_qo,
            mass: p.params.mass,
            a_well: p.params.a_well,
            b_well: p.params.b_well,
            grid_points: p.params.grid_points,
            grid_half_width: p.params.grid_half_width,
            qe_axis: p.params.qe_axis.to_string(),
            qubit_alpha: [p.qubit_init[0].re, p.qubit_init[0].im],
            qubit_beta: [p.qubit_init[1].re, p.qubit_init[1].im],
            dt: p.prop.dt,
            krylov_dim: p.prop.krylov_dim,
            tolerance: p.prop.tolerance,
            t_final: p.prop.t_final,
            record_stride: p.prop.record_stride,
            fragment_samples: p.fragment_samples,
            seed: p.env_seed,
            output_dir: self.output_dir.display().to_string(),
            emit_svg: self.emit_svg,
            checkpoint_interval: self.checkpoint_interval,
        }
    }
}

/// Fully resolved configuration as recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub protocol: String,
    pub n_env: usize,
    pub omega0: f64,
    pub omega_env: Vec<f64>,
    pub g_env: Vec<f64>,
    pub kappa_eo: Vec<f64>,
    pub param_seed: u64,
    pub lambda_qo: f64,
    pub mass: f64,
    pub a_well: f64,
    pub b_well: f64,
    pub grid_points: usize,
    pub grid_half_width: f64,
    pub qe_axis: String,
    pub qubit_alpha: [f64; 2],
    pub qubit_beta: [f64; 2],
    pub dt: f64,
    pub krylov_dim: usize,
    pub tolerance: f64,
    pub t_final: f64,
    pub record_stride: usize,
    pub fragment_samples: usize,
    pub seed: u64,
    pub output_dir: String,
    pub emit_svg: bool,
    pub checkpoint_interval: usize,
}

struct Entry {
    line: usize,
    value: String,
}

struct Entries(BTreeMap<String, Entry>);

fn err(line: usize, key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("line {line}, key `{key}`: {msg}"))
}

impl Entries {
    fn get<T>(&self, key: &str, parse: impl Fn(&str) -> std::result::Result<T, String>) -> Result<Option<(usize, T)>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(e) => parse(&e.value).map(|v| Some((e.line, v))).map_err(|m| err(e.line, key, m)),
        }
    }

    fn f64(&self, key: &str) -> Result<Option<(usize, f64)>> {
        self.get(key, parse_f64)
    }

    fn usize(&self, key: &str) -> Result<Option<(usize, usize)>> {
        self.get(key, |s| s.parse::<usize>().map_err(|_| format!("expected a non-negative integer, got {s:?}")))
    }

    fn u64(&self, key: &str) -> Result<Option<(usize, u64)>> {
        self.get(key, |s| s.parse::<u64>().map_err(|_| format!("expected a non-negative integer, got {s:?}")))
    }

    fn list(&self, key: &str) -> Result<Option<(usize, Vec<f64>)>> {
        self.get(key, |s| s.split(',').map(|v| parse_f64(v.trim())).collect())
    }

    fn line_of(&self, key: &str) -> Option<usize> {
        self.0.get(key).map(|e| e.line)
    }
}

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("expected a finite number, got {s:?}")),
    }
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got {s:?}")),
    }
}

/// Complex amplitude written as `re` or `re,im`.
fn parse_amplitude(s: &str) -> std::result::Result<C64, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [re] => Ok(C64::new(parse_f64(re)?, 0.0)),
        [re, im] => Ok(C64::new(parse_f64(re)?, parse_f64(im)?)),
        _ => Err(format!("expected `re` or `re, im`, got {s:?}")),
    }
}

fn strip_quotes(v: &str) -> &str {
    v.strip_prefix('"').and_then(|v| v.strip_suffix('"')).unwrap_or(v)
}

fn tokenize(text: &str) -> Result<(Entries, Vec<(String, String)>)> {
    let mut map = BTreeMap::new();
    let mut order = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::Config(format!("line {line}: expected `key = value`, got {content:?}")));
        };
        let key = key.trim();
        let value = strip_quotes(value.trim()).to_string();
        if !KNOWN_KEYS.contains(&key) {
            return Err(err(line, key, "unknown key"));
        }
        if value.is_empty() {
            return Err(err(line, key, "missing value"));
        }
        if let Some(prev) = map.get::<str>(key) {
            let prev: &Entry = prev;
            return Err(err(line, key, format!("duplicate key (first set on line {})", prev.line)));
        }
        order.push((key.to_string(), value.clone()));
        map.insert(key.to_string(), Entry { line, value });
    }
    Ok((Entries(map), order))
}

fn range_override(
    e: &Entries,
    base: (f64, f64),
    min_key: &str,
    max_key: &str,
) -> Result<(f64, f64)> {
    let lo = e.f64(min_key)?.map_or(base.0, |(_, v)| v);
    let hi = e.f64(max_key)?.map_or(base.1, |(_, v)| v);
    if lo > hi {
        let line = e.line_of(max_key).or(e.line_of(min_key)).unwrap_or(0);
        return Err(err(line, max_key, format!("range minimum {lo} exceeds maximum {hi}")));
    }
    Ok((lo, hi))
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let (e, entries) = tokenize(text)?;

    let kind = match e.get("protocol", |s| s.parse::<ProtocolKind>().map_err(|x| x.to_string()))? {
        Some((_, k)) => k,
        None => ProtocolKind::FullModel,
    };
    let n_env = match e.usize("n_env")? {
        Some((line, 0)) => return Err(err(line, "n_env", "must be >= 1")),
        Some((_, n)) => n,
        None => kind.default_n_env(),
    };
    let defaults = ParamRanges::default();
    let ranges = ParamRanges {
        omega_env: range_override(&e, defaults.omega_env, "omega_env_min", "omega_env_max")?,
        g_env: range_override(&e, defaults.g_env, "g_env_min", "g_env_max")?,
        kappa_eo: range_override(&e, defaults.kappa_eo, "kappa_eo_min", "kappa_eo_max")?,
    };
    let param_seed = e.u64("param_seed")?.map_or(DEFAULT_PARAM_SEED, |(_, v)| v);
    let mut protocol = Protocol::preset_with(kind, n_env, &ranges, param_seed);
    let params = &mut protocol.params;

    for (key, target) in [
        ("omega_env", &mut params.omega_env),
        ("g_env", &mut params.g_env),
        ("kappa_eo", &mut params.kappa_eo),
    ] {
        if let Some((line, list)) = e.list(key)? {
            if list.len() != n_env {
                return Err(err(line, key, format!("expected {n_env} entries (one per environment spin), got {}", list.len())));
            }
            if e.line_of(&format!("{key}_min")).is_some() || e.line_of(&format!("{key}_max")).is_some() {
                return Err(err(line, key, format!("explicit list conflicts with {key}_min/{key}_max")));
            }
            *target = list;
        }
    }
    for (key, target) in [
        ("omega0", &mut params.omega0),
        ("lambda_qo", &mut params.lambda_qo),
        ("mass", &mut params.mass),
        ("a_well", &mut params.a_well),
        ("b_well", &mut params.b_well),
        ("grid_half_width", &mut params.grid_half_width),
    ] {
        if let Some((_, v)) = e.f64(key)? {
            *target = v;
        }
    }
    for key in ["a_well", "b_well"] {
        if let Some((line, v)) = e.f64(key)? {
            if v <= 0.0 {
                return Err(err(line, key, format!("double well requires a, b > 0 (got {v})")));
            }
        }
    }
    for key in ["mass", "grid_half_width"] {
        if let Some((line, v)) = e.f64(key)? {
            if v <= 0.0 {
                return Err(err(line, key, format!("must be > 0, got {v}")));
            }
        }
    }
    if let Some((line, n)) = e.usize("grid_points")? {
        if n < 32 {
            return Err(err(line, "grid_points", format!("must be >= 32, got {n}")));
        }
        params.grid_points = n;
    }
    if let Some((_, axis)) = e.get("qe_axis", |s| s.parse::<QeAxis>().map_err(|x| x.to_string()))? {
        params.qe_axis = axis;
    }

    let alpha = e.get("qubit_alpha", parse_amplitude)?;
    let beta = e.get("qubit_beta", parse_amplitude)?;
    match (alpha, beta) {
        (None, None) => {}
        (Some((_, a)), Some((line, b))) => {
            let norm = a.norm_sqr() + b.norm_sqr();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(err(line, "qubit_beta", format!("|α|² + |β|² = {norm}, must be 1 within 1e-12")));
            }
            protocol.qubit_init = [a, b];
        }
        (Some((line, _)), None) => return Err(err(line, "qubit_alpha", "qubit_beta must be set as well")),
        (None, Some((line, _))) => return Err(err(line, "qubit_beta", "qubit_alpha must be set as well")),
    }

    let prop = &mut protocol.prop;
    for (key, target) in [("dt", &mut prop.dt), ("tolerance", &mut prop.tolerance), ("t_final", &mut prop.t_final)] {
        if let Some((_, v)) = e.f64(key)? {
            *target = v;
        }
    }
    if let Some((_, v)) = e.usize("krylov_dim")? {
        prop.krylov_dim = v;
    }
    if let Some((line, v)) = e.usize("record_stride")? {
        if v == 0 {
            return Err(err(line, "record_stride", "must be >= 1"));
        }
        prop.record_stride = v;
    }
    if let Err(Error::Config(msg)) = prop.validate() {
        let key = ["t_final", "dt", "krylov_dim", "tolerance"]
            .into_iter()
            .find(|k| msg.contains(k))
            .unwrap_or("dt");
        return Err(err(e.line_of(key).unwrap_or(0), key, msg));
    }
    if let Some((line, v)) = e.usize("fragment_samples")? {
        if v == 0 {
            return Err(err(line, "fragment_samples", "must be >= 1"));
        }
        protocol.fragment_samples = v;
    }
    if let Some((_, seed)) = e.u64("seed")? {
        protocol.env_seed = seed;
    }

    let output_dir = e
        .get("output_dir", |s| Ok::<_, String>(PathBuf::from(s)))?
        .map_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR), |(_, p)| p);
    let emit_svg = e.get("emit_svg", parse_bool)?.is_none_or(|(_, v)| v);
    let checkpoint_interval = e.usize("checkpoint_interval")?.map_or(0, |(_, v)| v);

    protocol
        .validate()
        .map_err(|x| Error::Config(format!("invalid configuration: {}", strip_kind(&x))))?;
    Ok(RunConfig {
        protocol,
        param_seed,
        output_dir,
        emit_svg,
        checkpoint_interval,
        entries,
    })
}

fn strip_kind(e: &Error) -> String {
    match e {
        Error::Config(m) | Error::Resource(m) | Error::NumericalBreakdown(m) | Error::InvalidState(m) | Error::Usage(m) => {
            m.clone()
        }
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_str(&text)
}
