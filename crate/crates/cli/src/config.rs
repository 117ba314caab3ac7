//! Experiment configuration: flat `section.key = value` text (diff friendly)
//! with JSON accepted as an alternative input. Unknown keys are rejected, and
//! every validation error names the offending dotted key.

use homlab_core::{
    Epsilon, Load, MicroGeometry, PhaseParams, Region, SolverSettings, StudySettings, Vec2,
};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

type CResult<T> = Result<T, ConfigError>;

fn err(key: &str, reason: impl std::fmt::Display) -> ConfigError {
    ConfigError(format!("{key}: {reason}"))
}

/// Fully validated experiment configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: PhaseParams,
    pub geom: MicroGeometry,
    pub load: Load,
    pub solver: SolverSettings,
    pub macro_mesh_n: usize,
    pub elems_per_cell: usize,
    pub table_r: f64,
    pub table_h: f64,
    pub xi: Option<Vec2>,
    pub eps: Option<u32>,
    pub eps_list: Vec<u32>,
    pub q: f64,
    pub domain: Region,
    pub n_samples: usize,
    pub xi_step: f64,
    pub xi_step_corrector: f64,
    pub slack: f64,
    pub seed: u64,
}

impl RunConfig {
    pub fn study(&self) -> StudySettings {
        StudySettings {
            solver: self.solver.clone(),
            macro_mesh_n: self.macro_mesh_n,
            elems_per_cell: self.elems_per_cell,
            table_r: self.table_r,
            table_h: self.table_h,
            xi_step_corrector: self.xi_step_corrector,
            xi_step_amplification: self.xi_step,
            slack: self.slack,
        }
    }

    pub fn eps_list(&self) -> CResult<Vec<Epsilon>> {
        self.eps_list
            .iter()
            .map(|&k| Epsilon::one_over(k).map_err(|e| err("experiment.eps_list", e)))
            .collect()
    }

    /// Hash of the effective configuration (defaults applied, seed included);
    /// embedded in file names and every CSV row.
    pub fn hash(&self) -> String {
        let canonical = format!(
            "sigma1={};sigma2={};p1={};p2={};kind={:?};theta1={};load={:?};tol={};max_iter={};grid_n={};\
             macro_n={};epc={};table_r={};table_h={};xi={:?};eps={:?};eps_list={:?};q={};domain={};\
             n_samples={};xi_step={};xi_step_corrector={};slack={};seed={}",
            self.params.sigma1(),
            self.params.sigma2(),
            self.params.p1(),
            self.params.p2(),
            self.geom.kind(),
            self.geom.theta1(),
            self.load,
            self.solver.tol,
            self.solver.max_iter,
            self.solver.grid_n,
            self.macro_mesh_n,
            self.elems_per_cell,
            self.table_r,
            self.table_h,
            self.xi.map(|v| (v.x, v.y)),
            self.eps,
            self.eps_list,
            self.q,
            self.domain.label(),
            self.n_samples,
            self.xi_step,
            self.xi_step_corrector,
            self.slack,
            self.seed,
        );
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(&digest[..6])
    }
}

/// Reads the file into a flat dotted-key map; JSON bodies are flattened.
pub fn read_to_map(path: &Path) -> Result<BTreeMap<String, String>, std::io::Error> {
    let text = std::fs::read_to_string(path)?;
    Ok(if text.trim_start().starts_with('{') {
        flatten_json_text(&text)
    } else {
        parse_flat(&text)
    }
    .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.0))?)
}

fn parse_flat(text: &str) -> CResult<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("line {}: expected key = value", lineno + 1)))?;
        let key = key.trim().to_string();
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(ConfigError(format!("{key}: duplicate key")));
        }
    }
    Ok(map)
}

fn flatten_json_text(text: &str) -> CResult<BTreeMap<String, String>> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ConfigError(format!("invalid JSON: {e}")))?;
    let mut map = BTreeMap::new();
    flatten_json("", &value, &mut map)?;
    Ok(map)
}

fn flatten_json(
    prefix: &str,
    value: &serde_json::Value,
    out: &mut BTreeMap<String, String>,
) -> CResult<()> {
    use serde_json::Value;
    match value {
        Value::Object(obj) => {
            for (k, v) in obj {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten_json(&key, v, out)?;
            }
        }
        Value::Array(items) => {
            let parts: Vec<String> = items
                .iter()
                .map(|v| match v {
                    Value::Number(n) => Ok(n.to_string()),
                    Value::String(s) => Ok(s.clone()),
                    _ => Err(err(prefix, "arrays may hold only numbers or strings")),
                })
                .collect::<CResult<_>>()?;
            out.insert(prefix.to_string(), parts.join(","));
        }
        Value::String(s) => {
            out.insert(prefix.to_string(), s.clone());
        }
        Value::Number(n) => {
            out.insert(prefix.to_string(), n.to_string());
        }
        Value::Bool(b) => {
            out.insert(prefix.to_string(), b.to_string());
        }
        Value::Null => return Err(err(prefix, "null is not a valid value")),
    }
    Ok(())
}

struct KeyMap(BTreeMap<String, String>);

impl KeyMap {
    fn take(&mut self, key: &str) -> Option<String> {
        self.0.remove(key)
    }

    fn require(&mut self, key: &str) -> CResult<String> {
        self.take(key)
            .ok_or_else(|| err(key, "missing required key"))
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str, default: T) -> CResult<T> {
        match self.take(key) {
            None => Ok(default),
            Some(s) => s
                .parse::<T>()
                .map_err(|_| err(key, format!("cannot parse '{s}'"))),
        }
    }

    fn parse_required<T: std::str::FromStr>(&mut self, key: &str) -> CResult<T> {
        let s = self.require(key)?;
        s.parse::<T>()
            .map_err(|_| err(key, format!("cannot parse '{s}'")))
    }
}

fn parse_list(key: &str, s: &str) -> CResult<Vec<u32>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| err(key, format!("cannot parse '{t}'")))
        })
        .collect()
}

fn parse_vec2(key: &str, s: &str) -> CResult<Vec2> {
    let parts: Vec<&str> = s.split(',').map(|t| t.trim()).collect();
    if parts.len() != 2 {
        return Err(err(key, "expected two comma-separated components"));
    }
    let x = parts[0]
        .parse::<f64>()
        .map_err(|_| err(key, format!("cannot parse '{}'", parts[0])))?;
    let y = parts[1]
        .parse::<f64>()
        .map_err(|_| err(key, format!("cannot parse '{}'", parts[1])))?;
    Ok(Vec2::new(x, y))
}

/// Builds and validates the configuration, rejecting unknown keys.
pub fn build(map: BTreeMap<String, String>, seed_override: Option<u64>) -> CResult<RunConfig> {
    let mut m = KeyMap(map);

    let sigma1: f64 = m.parse_required("params.sigma1")?;
    let sigma2: f64 = m.parse_required("params.sigma2")?;
    let p1: f64 = m.parse_required("params.p1")?;
    let p2: f64 = m.parse_required("params.p2")?;
    let params =
        PhaseParams::new(sigma1, sigma2, p1, p2).map_err(|e| ConfigError(e.to_string()))?;

    let kind = m.require("geometry.kind")?;
    let theta1: f64 = m.parse_required("geometry.theta1")?;
    let geom = match kind.as_str() {
        "laminate" => MicroGeometry::laminate(theta1),
        "disk" => MicroGeometry::disk(theta1),
        other => {
            return Err(err(
                "geometry.kind",
                format!("expected laminate or disk, got '{other}'"),
            ))
        }
    }
    .map_err(|e| ConfigError(e.to_string()))?;

    let load_kind = m.take("load.kind").unwrap_or_else(|| "constant".into());
    let load_value: f64 = m.parse("load.value", 1.0)?;
    let load = match load_kind.as_str() {
        "constant" => Load::Constant(load_value),
        "trig" => Load::Trig(load_value),
        other => {
            return Err(err(
                "load.kind",
                format!("expected constant or trig, got '{other}'"),
            ))
        }
    };

    let solver = SolverSettings {
        tol: m.parse("solver.tol", 1e-7)?,
        max_iter: m.parse("solver.max_iter", 200)?,
        grid_n: m.parse("solver.grid_n", 64)?,
        ..SolverSettings::default()
    };
    solver.validate().map_err(|e| ConfigError(e.to_string()))?;

    let macro_mesh_n: usize = m.parse("mesh.macro_n", 64)?;
    let elems_per_cell: usize = m.parse("mesh.elems_per_cell", 16)?;
    let table_r: f64 = m.parse("table.r", 4.0)?;
    let table_h: f64 = m.parse("table.h_xi", 0.25)?;

    let xi = m
        .take("experiment.xi")
        .map(|s| parse_vec2("experiment.xi", &s))
        .transpose()?;
    let eps: Option<u32> = m
        .take("experiment.eps")
        .map(|s| {
            s.parse::<u32>()
                .map_err(|_| err("experiment.eps", format!("cannot parse '{s}'")))
        })
        .transpose()?;
    let eps_list = match m.take("experiment.eps_list") {
        Some(s) => parse_list("experiment.eps_list", &s)?,
        None => vec![4, 8, 16],
    };
    let q: f64 = m.parse("experiment.q", 2.0)?;
    if !(q > 1.0) {
        return Err(err("experiment.q", format!("must exceed 1, got {q}")));
    }
    let domain = match m.take("experiment.domain").as_deref().unwrap_or("full") {
        "full" => Region::Full,
        "left_half" => Region::LeftHalf,
        other => {
            return Err(err(
                "experiment.domain",
                format!("expected full or left_half, got '{other}'"),
            ))
        }
    };
    let n_samples: usize = m.parse("experiment.n_samples", 500)?;
    if n_samples == 0 {
        return Err(err("experiment.n_samples", "must be at least 1"));
    }
    let xi_step: f64 = m.parse("experiment.xi_step", 0.05)?;
    let xi_step_corrector: f64 = m.parse("experiment.xi_step_corrector", 1e-3)?;
    let slack: f64 = m.parse("experiment.slack", 0.05)?;
    let seed: u64 = m.parse("seed", 1234)?;

    if let Some((key, _)) = m.0.iter().next() {
        return Err(err(key, "unknown key"));
    }

    let config = RunConfig {
        params,
        geom,
        load,
        solver,
        macro_mesh_n,
        elems_per_cell,
        table_r,
        table_h,
        xi,
        eps,
        eps_list,
        q,
        domain,
        n_samples,
        xi_step,
        xi_step_corrector,
        slack,
        seed: seed_override.unwrap_or(seed),
    };
    config
        .study()
        .validate()
        .map_err(|e| ConfigError(e.to_string()))?;
    Ok(config)
}
