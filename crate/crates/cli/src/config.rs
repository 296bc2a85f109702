//! Run configuration: a TOML document with one table per section.
//!
//! Every key is optional; missing keys take the defaults listed in the
//! README. Unknown keys, type mismatches and invariant violations are all
//! collected before the configuration is rejected.

use std::fmt;
use std::path::PathBuf;

use qcrystal::grr::{GrrParams, NuMethod};
use qcrystal::model::{LatticeBox, ModelParams, PotentialSpec};
use qcrystal::sampler::McParams;
use qcrystal::scan::{Direction, SweepPlan};
use serde::Serialize;
use sha2::{Digest, Sha256};
use toml::{Table, Value};

pub const SECTIONS: [&str; 7] = ["model", "mc", "oracle", "grr", "scan", "observables", "output"];

#[derive(Clone, Debug, Serialize)]
pub struct ModelSection {
    pub m: f64,
    pub a: f64,
    #[serde(rename = "J")]
    pub coupling: f64,
    #[serde(rename = "V0")]
    pub v0: Vec<f64>,
    pub h: f64,
    pub d: usize,
    #[serde(rename = "L")]
    pub half_side: usize,
    #[serde(rename = "P")]
    pub slices: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct McSection {
    pub sweeps: u64,
    pub thermalization: u64,
    pub measure_every: u64,
    pub proposal_width: f64,
    pub chains: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleSection {
    #[serde(rename = "N")]
    pub basis: usize,
    pub tolerance: f64,
    pub tau_points: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct GrrSection {
    pub p: u32,
    pub alpha: f64,
    pub theta: f64,
    pub n: usize,
    pub c: f64,
    pub epsilon: f64,
    pub varsigma: f64,
    pub samples: usize,
    pub method: String,
    #[serde(rename = "P")]
    pub slices: usize,
    pub m0: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanSection {
    pub h_grid: Vec<f64>,
    pub direction: String,
    #[serde(rename = "L_list")]
    pub sizes: Vec<usize>,
    pub warm_start: bool,
    pub h_plus: Option<f64>,
    pub h_minus: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ObservablesSection {
    pub epsilon: Option<f64>,
    pub delta: f64,
    pub m_star: Option<f64>,
    #[serde(rename = "J_grid")]
    pub coupling_grid: Vec<f64>,
    pub green_resolution: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub measurements: bool,
    pub checkpoint: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub model: ModelSection,
    pub mc: McSection,
    pub oracle: OracleSection,
    pub grr: GrrSection,
    pub scan: ScanSection,
    pub observables: ObservablesSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mc = McParams::default();
        let grr = GrrParams::default();
        Self {
            model: ModelSection {
                m: 1.0,
                a: 1.0,
                coupling: 0.0,
                v0: vec![-1.0, 0.3, 1.0],
                h: 0.0,
                d: 3,
                half_side: 2,
                slices: 64,
            },
            mc: McSection {
                sweeps: mc.sweeps,
                thermalization: mc.thermalization,
                measure_every: mc.measure_every,
                proposal_width: mc.proposal_width,
                chains: mc.chains,
                seed: mc.seed,
            },
            oracle: OracleSection {
                basis: qcrystal::oracle::DEFAULT_BASIS,
                tolerance: qcrystal::oracle::DEFAULT_TOLERANCE,
                tau_points: 21,
            },
            grr: GrrSection {
                p: grr.p,
                alpha: grr.alpha,
                theta: grr.theta,
                n: grr.n,
                c: grr.c,
                epsilon: grr.epsilon,
                varsigma: grr.varsigma,
                samples: 10_000,
                method: "importance".into(),
                slices: 64,
                m0: 1.0,
            },
            scan: ScanSection {
                h_grid: (0..=8).map(|i| -1.0 + 0.25 * i as f64).collect(),
                direction: "both".into(),
                sizes: vec![2],
                warm_start: true,
                h_plus: None,
                h_minus: None,
            },
            observables: ObservablesSection {
                epsilon: None,
                delta: 0.1,
                m_star: None,
                coupling_grid: vec![0.0, 0.05, 0.1],
                green_resolution: qcrystal::observables::DEFAULT_GREEN_RESOLUTION,
            },
            output: OutputSection {
                dir: PathBuf::from("out"),
                measurements: true,
                checkpoint: true,
            },
        }
    }
}

/// Every problem found in a configuration.
#[derive(Debug, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

struct Reader {
    errors: Vec<String>,
}

impl Reader {
    fn mismatch(&mut self, key: &str, expected: &str, got: &Value) {
        self.errors
            .push(format!("{key}: expected {expected}, found {}", got.type_str()));
    }

    fn float(&mut self, key: &str, v: &Value, slot: &mut f64) {
        match v {
            Value::Float(x) => *slot = *x,
            Value::Integer(i) => *slot = *i as f64,
            _ => self.mismatch(key, "a number", v),
        }
    }

    fn opt_float(&mut self, key: &str, v: &Value, slot: &mut Option<f64>) {
        let mut x = 0.0;
        let before = self.errors.len();
        self.float(key, v, &mut x);
        if self.errors.len() == before {
            *slot = Some(x);
        }
    }

    fn uint<T: TryFrom<i64>>(&mut self, key: &str, v: &Value, slot: &mut T) {
        match v {
            Value::Integer(i) => match T::try_from(*i) {
                Ok(x) if *i >= 0 => *slot = x,
                _ => self.errors.push(format!("{key}: {i} is out of range")),
            },
            _ => self.mismatch(key, "a nonnegative integer", v),
        }
    }

    fn boolean(&mut self, key: &str, v: &Value, slot: &mut bool) {
        match v {
            Value::Boolean(b) => *slot = *b,
            _ => self.mismatch(key, "a boolean", v),
        }
    }

    fn string(&mut self, key: &str, v: &Value, slot: &mut String) {
        match v {
            Value::String(s) => *slot = s.clone(),
            _ => self.mismatch(key, "a string", v),
        }
    }

    fn floats(&mut self, key: &str, v: &Value, slot: &mut Vec<f64>) {
        let Value::Array(items) = v else {
            return self.mismatch(key, "an array of numbers", v);
        };
        let mut out = Vec::with_capacity(items.len());
        for item in items {
            match item {
                Value::Float(x) => out.push(*x),
                Value::Integer(i) => out.push(*i as f64),
                _ => return self.mismatch(key, "an array of numbers", v),
            }
        }
        *slot = out;
    }

    fn uints(&mut self, key: &str, v: &Value, slot: &mut Vec<usize>) {
        let Value::Array(items) = v else {
            return self.mismatch(key, "an array of integers", v);
        };
        let mut out = Vec::with_capacity(items.len());
        for item in items {
            match item {
                Value::Integer(i) if *i >= 0 => out.push(*i as usize),
                _ => return self.mismatch(key, "an array of nonnegative integers", v),
            }
        }
        *slot = out;
    }
}

fn read_section(r: &mut Reader, cfg: &mut RunConfig, section: &str, table: &Table) {
    for (key, v) in table {
        let k = format!("{section}.{key}");
        match (section, key.as_str()) {
            ("model", "m") => r.float(&k, v, &mut cfg.model.m),
            ("model", "a") => r.float(&k, v, &mut cfg.model.a),
            ("model", "J") => r.float(&k, v, &mut cfg.model.coupling),
            ("model", "V0") => r.floats(&k, v, &mut cfg.model.v0),
            ("model", "h") => r.float(&k, v, &mut cfg.model.h),
            ("model", "d") => r.uint(&k, v, &mut cfg.model.d),
            ("model", "L") => r.uint(&k, v, &mut cfg.model.half_side),
            ("model", "P") => r.uint(&k, v, &mut cfg.model.slices),
            ("mc", "sweeps") => r.uint(&k, v, &mut cfg.mc.sweeps),
            ("mc", "thermalization") => r.uint(&k, v, &mut cfg.mc.thermalization),
            ("mc", "measure_every") => r.uint(&k, v, &mut cfg.mc.measure_every),
            ("mc", "proposal_width") => r.float(&k, v, &mut cfg.mc.proposal_width),
            ("mc", "chains") => r.uint(&k, v, &mut cfg.mc.chains),
            ("mc", "seed") => r.uint(&k, v, &mut cfg.mc.seed),
            ("oracle", "N") => r.uint(&k, v, &mut cfg.oracle.basis),
            ("oracle", "tolerance") => r.float(&k, v, &mut cfg.oracle.tolerance),
            ("oracle", "tau_points") => r.uint(&k, v, &mut cfg.oracle.tau_points),
            ("grr", "p") => r.uint(&k, v, &mut cfg.grr.p),
            ("grr", "alpha") => r.float(&k, v, &mut cfg.grr.alpha),
            ("grr", "theta") => r.float(&k, v, &mut cfg.grr.theta),
            ("grr", "n") => r.uint(&k, v, &mut cfg.grr.n),
            ("grr", "c") => r.float(&k, v, &mut cfg.grr.c),
            ("grr", "epsilon") => r.float(&k, v, &mut cfg.grr.epsilon),
            ("grr", "varsigma") => r.float(&k, v, &mut cfg.grr.varsigma),
            ("grr", "samples") => r.uint(&k, v, &mut cfg.grr.samples),
            ("grr", "method") => r.string(&k, v, &mut cfg.grr.method),
            ("grr", "P") => r.uint(&k, v, &mut cfg.grr.slices),
            ("grr", "m0") => r.float(&k, v, &mut cfg.grr.m0),
            ("scan", "h_grid") => r.floats(&k, v, &mut cfg.scan.h_grid),
            ("scan", "direction") => r.string(&k, v, &mut cfg.scan.direction),
            ("scan", "L_list") => r.uints(&k, v, &mut cfg.scan.sizes),
            ("scan", "warm_start") => r.boolean(&k, v, &mut cfg.scan.warm_start),
            ("scan", "h_plus") => r.opt_float(&k, v, &mut cfg.scan.h_plus),
            ("scan", "h_minus") => r.opt_float(&k, v, &mut cfg.scan.h_minus),
            ("observables", "epsilon") => r.opt_float(&k, v, &mut cfg.observables.epsilon),
            ("observables", "delta") => r.float(&k, v, &mut cfg.observables.delta),
            ("observables", "m_star") => r.opt_float(&k, v, &mut cfg.observables.m_star),
            ("observables", "J_grid") => r.floats(&k, v, &mut cfg.observables.coupling_grid),
            ("observables", "green_resolution") => {
                r.uint(&k, v, &mut cfg.observables.green_resolution)
            }
            ("output", "dir") => {
                let mut s = String::new();
                r.string(&k, v, &mut s);
                cfg.output.dir = PathBuf::from(s);
            }
            ("output", "measurements") => r.boolean(&k, v, &mut cfg.output.measurements),
            ("output", "checkpoint") => r.boolean(&k, v, &mut cfg.output.checkpoint),
            _ => r.errors.push(format!("{k}: unknown key")),
        }
    }
}

/// Applies `key=value` overrides. A bare key must name exactly one section's
/// key; `section.key` is always accepted.
pub fn apply_overrides(doc: &mut Table, overrides: &[String]) -> Result<(), ConfigErrors> {
    let mut errors = Vec::new();
    for raw in overrides {
        let Some((key, value)) = raw.split_once('=') else {
            errors.push(format!("override `{raw}`: expected key=value"));
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        let parsed: Value = match format!("v = {value}").parse::<Table>() {
            Ok(mut t) => t.remove("v").expect("parsed key"),
            Err(_) => Value::String(value.to_string()),
        };
        let (section, name) = match key.split_once('.') {
            Some((s, n)) => (s.to_string(), n.to_string()),
            None => {
                let owners: Vec<&str> = SECTIONS
                    .iter()
                    .copied()
                    .filter(|s| known_key(s, key))
                    .collect();
                match owners.as_slice() {
                    [one] => (one.to_string(), key.to_string()),
                    [] => {
                        errors.push(format!("override `{key}`: unknown key"));
                        continue;
                    }
                    many => {
                        errors.push(format!(
                            "override `{key}`: ambiguous, qualify it with one of {many:?}"
                        ));
                        continue;
                    }
                }
            }
        };
        let entry = doc
            .entry(section.clone())
            .or_insert_with(|| Value::Table(Table::new()));
        match entry {
            Value::Table(t) => {
                t.insert(name, parsed);
            }
            _ => errors.push(format!("{section}: expected a table")),
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(ConfigErrors(errors))
    }
}

fn known_key(section: &str, key: &str) -> bool {
    let mut probe = Table::new();
    probe.insert(key.to_string(), Value::Boolean(false));
    let mut r = Reader { errors: Vec::new() };
    read_section(&mut r, &mut RunConfig::default(), section, &probe);
    !r.errors.iter().any(|e| e.ends_with("unknown key"))
}

/// Parses the document text (without overrides).
pub fn parse_document(text: &str) -> Result<Table, ConfigErrors> {
    text.parse::<Table>()
        .map_err(|e| ConfigErrors(vec![format!("syntax: {}", e.message())]))
}

/// Validated configuration from a parsed document.
pub fn from_document(doc: &Table) -> Result<RunConfig, ConfigErrors> {
    let mut cfg = RunConfig::default();
    let mut r = Reader { errors: Vec::new() };
    for (section, value) in doc {
        if !SECTIONS.contains(&section.as_str()) {
            r.errors.push(format!("[{section}]: unknown section"));
            continue;
        }
        match value {
            Value::Table(t) => read_section(&mut r, &mut cfg, section, t),
            other => r.mismatch(section, "a table", other),
        }
    }
    cfg.validate(&mut r.errors);
    if r.errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(r.errors))
    }
}

#[cfg(test)]
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    from_document(&parse_document(text)?)
}

fn qualify(section: &str, e: qcrystal::Error) -> String {
    match e {
        qcrystal::Error::InvalidParameter { name, reason } => format!("{section}.{name}: {reason}"),
        qcrystal::Error::InvalidPotential(reason) => format!("{section}.V0: {reason}"),
        other => format!("{section}: {other}"),
    }
}

impl RunConfig {
    fn validate(&self, errors: &mut Vec<String>) {
        if let Err(e) = self.model_params() {
            errors.push(qualify("model", e));
        }
        if let Err(e) = self.mc_params().validate() {
            errors.push(qualify("mc", e));
        }
        if self.mc.sweeps == 0 {
            errors.push("mc.sweeps: must be positive".into());
        }
        if self.oracle.basis < 8 {
            errors.push("oracle.N: basis needs at least 8 states".into());
        }
        if !(self.oracle.tolerance > 0.0) {
            errors.push("oracle.tolerance: must be positive".into());
        }
        if self.oracle.tau_points < 2 {
            errors.push("oracle.tau_points: need at least 2 points".into());
        }
        if let Err(e) = self.grr_params().validate() {
            errors.push(qualify("grr", e));
        }
        if self.nu_method().is_none() {
            errors.push(format!(
                "grr.method: expected \"importance\" or \"metropolis\", found \"{}\"",
                self.grr.method
            ));
        }
        if self.grr.samples < 2 {
            errors.push("grr.samples: need at least 2 samples".into());
        }
        if self.grr.slices < 2 || self.grr.slices % self.grr.n != 0 {
            errors.push(format!("grr.P: must be at least 2 and a multiple of grr.n = {}", self.grr.n));
        }
        if !(self.grr.m0 > 0.0) {
            errors.push("grr.m0: must be positive".into());
        }
        match self.direction() {
            None => errors.push(format!(
                "scan.direction: expected \"up\", \"down\" or \"both\", found \"{}\"",
                self.scan.direction
            )),
            Some(_) => {
                if let Ok(plan) = self.sweep_plan() {
                    if let Err(e) = plan.validate() {
                        errors.push(qualify("scan", e));
                    }
                }
            }
        }
        if let Some(eps) = self.observables.epsilon {
            if !(eps > 0.0) {
                errors.push("observables.epsilon: must be positive".into());
            }
        }
        if !(self.observables.delta >= 0.0) {
            errors.push("observables.delta: must be nonnegative".into());
        }
        if let Some(m) = self.observables.m_star {
            if !(m > 0.0) {
                errors.push("observables.m_star: must be positive".into());
            }
        }
        let grid = &self.observables.coupling_grid;
        if grid.len() < 3 || grid[0] != 0.0 || grid.windows(2).any(|w| !(w[1] > w[0])) {
            errors.push("observables.J_grid: need at least 3 ascending values starting at 0".into());
        }
        if self.observables.green_resolution < 2 {
            errors.push("observables.green_resolution: need at least 2 points".into());
        }
    }

    pub fn potential(&self) -> qcrystal::Result<PotentialSpec> {
        if self.model.v0.is_empty() {
            Ok(PotentialSpec::harmonic(self.model.h))
        } else {
            PotentialSpec::new(self.model.v0.clone(), self.model.h)
        }
    }

    pub fn model_params(&self) -> qcrystal::Result<ModelParams> {
        ModelParams::new(
            self.model.m,
            self.model.a,
            self.model.coupling,
            self.potential()?,
            LatticeBox::new(self.model.d, self.model.half_side)?,
            self.model.slices,
        )
    }

    pub fn mc_params(&self) -> McParams {
        McParams {
            sweeps: self.mc.sweeps,
            thermalization: self.mc.thermalization,
            measure_every: self.mc.measure_every,
            proposal_width: self.mc.proposal_width,
            chains: self.mc.chains,
            seed: self.mc.seed,
        }
    }

    pub fn grr_params(&self) -> GrrParams {
        GrrParams {
            p: self.grr.p,
            alpha: self.grr.alpha,
            theta: self.grr.theta,
            n: self.grr.n,
            c: self.grr.c,
            epsilon: self.grr.epsilon,
            varsigma: self.grr.varsigma,
        }
    }

    pub fn nu_method(&self) -> Option<NuMethod> {
        match self.grr.method.as_str() {
            "importance" => Some(NuMethod::Importance),
            "metropolis" => Some(NuMethod::Metropolis),
            _ => None,
        }
    }

    pub fn direction(&self) -> Option<Direction> {
        match self.scan.direction.as_str() {
            "up" => Some(Direction::Up),
            "down" => Some(Direction::Down),
            "both" => Some(Direction::Both),
            _ => None,
        }
    }

    pub fn sweep_plan(&self) -> qcrystal::Result<SweepPlan> {
        Ok(SweepPlan {
            model: self.model_params()?,
            h_grid: self.scan.h_grid.clone(),
            direction: self.direction().unwrap_or(Direction::Both),
            sizes: self.scan.sizes.clone(),
            mc: self.mc_params(),
            warm_start: self.scan.warm_start,
        })
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration,
    /// excluding the output location.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output.dir = PathBuf::new();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
