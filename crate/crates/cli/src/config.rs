//! Run configuration: a JSON document with `problem`, `numerics` and `output`
//! blocks (plus an optional `input` block), overridden key by key from flags.

use std::path::{Path, PathBuf};

use choquard_core::nonlinearity::NonlinearitySpec;
use choquard_core::solver::{Sign, SolveConfig, VerifyTolerances};
use choquard_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "CHOQUARD_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "choquard-output";

pub const SCHEMA_HELP: &str = "\
CONFIGURATION (JSON; every key optional unless marked)
  problem:
    dimension     integer >= 3                  [3]
    alpha         real in (0, dimension)        [2]
    nonlinearity  {name, params}                [{\"name\": \"power\", \"params\": {\"p\": 3}}]
                  families: power {p}, log_example {}
    mass          positive real                 required by solve and fiber-scan
    masses        ascending positive reals      required by sweep (at least 3)
    field         {width [1], sign [positive], mass [problem.mass]}
                  Gaussian probe for fiber-scan
  numerics:
    radius [20]  nodes [512]  tol_grad [1e-8]  max_iters [5000]
    s_max [30]  projection_tol [1e-10]  init_width [1]  init_sign [positive]
    initial_step [1]  armijo_factor [0.5]  sufficient_decrease [1e-4]
    strategy [lbfgs | steepest]  memory [8]  warm_start [true]
    multi_start [false]  force [false]  kernel_file [none]
    scan        {from [-10], to [10], points [401]}
    crosscheck  {extent [12], side [64], width [1]}
    verify      {mass [1e-8], pohozaev [1e-6], el_residual [1e-3],
                 mu_gap [1e-3], maximality [1e-12]}
    asymptotics {decay_fraction [0.2], jump_factor [3], min_span [64]}
  output:
    directory     [$CHOQUARD_OUTPUT_DIR, else ./choquard-output]
    formats       subset of [\"json\", \"csv\"]   [both]
    kernel_dump   write kernel.bin after building the kernel [false]
  input:
    result        result JSON for verify, or the field of fiber-scan

OVERRIDES
  --set key.path=value    any key above; value parsed as JSON, else taken as a string
  --mass, --masses, --nodes, --radius, --out and --result are shorthands.

EXIT CODES
  0 success, 1 numerical failure, 2 configuration or input error.
  Failures also write error.json with a stable `kind`.";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemBlock,
    pub numerics: NumericsBlock,
    pub output: OutputBlock,
    pub input: InputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemBlock {
    pub dimension: u32,
    pub alpha: f64,
    pub nonlinearity: NonlinearitySpec,
    pub mass: Option<f64>,
    pub masses: Option<Vec<f64>>,
    pub field: FieldBlock,
}

impl Default for ProblemBlock {
    fn default() -> Self {
        Self {
            dimension: 3,
            alpha: 2.0,
            nonlinearity: NonlinearitySpec::power(3.0),
            mass: None,
            masses: None,
            field: FieldBlock::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldBlock {
    pub width: f64,
    pub sign: Sign,
    pub mass: Option<f64>,
}

impl Default for FieldBlock {
    fn default() -> Self {
        Self { width: 1.0, sign: Sign::Positive, mass: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsBlock {
    pub radius: f64,
    pub nodes: usize,
    pub tol_grad: f64,
    pub max_iters: usize,
    pub s_max: f64,
    pub projection_tol: f64,
    pub init_width: f64,
    pub init_sign: Sign,
    pub initial_step: f64,
    pub armijo_factor: f64,
    pub sufficient_decrease: f64,
    pub strategy: String,
    pub memory: usize,
    pub warm_start: bool,
    pub multi_start: bool,
    pub force: bool,
    pub kernel_file: Option<PathBuf>,
    pub scan: ScanBlock,
    pub crosscheck: CrosscheckBlock,
    pub verify: VerifyTolerances,
    pub asymptotics: AsymptoticsBlock,
}

impl Default for NumericsBlock {
    fn default() -> Self {
        let d = SolveConfig::default();
        Self {
            radius: d.radius,
            nodes: d.nodes,
            tol_grad: d.tol_grad,
            max_iters: d.max_iters,
            s_max: d.s_max,
            projection_tol: d.projection_tol,
            init_width: d.init_width,
            init_sign: d.init_sign,
            initial_step: d.initial_step,
            armijo_factor: d.armijo_factor,
            sufficient_decrease: d.sufficient_decrease,
            strategy: d.strategy,
            memory: d.memory,
            warm_start: true,
            multi_start: d.multi_start,
            force: d.force,
            kernel_file: None,
            scan: ScanBlock::default(),
            crosscheck: CrosscheckBlock::default(),
            verify: VerifyTolerances::default(),
            asymptotics: AsymptoticsBlock::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanBlock {
    pub from: f64,
    pub to: f64,
    pub points: usize,
}

impl Default for ScanBlock {
    fn default() -> Self {
        Self { from: -10.0, to: 10.0, points: 401 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrosscheckBlock {
    pub extent: f64,
    pub side: usize,
    pub width: f64,
}

impl Default for CrosscheckBlock {
    fn default() -> Self {
        Self { extent: 12.0, side: 64, width: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsymptoticsBlock {
    pub decay_fraction: f64,
    pub jump_factor: f64,
    pub min_span: f64,
}

impl Default for AsymptoticsBlock {
    fn default() -> Self {
        let d = choquard_core::sweep::AsymptoticOptions::default();
        Self { decay_fraction: d.decay_fraction, jump_factor: d.jump_factor, min_span: d.min_span }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub directory: Option<PathBuf>,
    pub formats: Vec<Format>,
    pub kernel_dump: bool,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { directory: None, formats: vec![Format::Json, Format::Csv], kernel_dump: false }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputBlock {
    pub result: Option<PathBuf>,
}

impl RunConfig {
    /// Reads `path` (if any), applies `key=value` overrides in order, and
    /// deserializes the merged document.
    pub fn load(path: Option<&Path>, overrides: &[(String, Value)]) -> Result<Self> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str::<Value>(&text)
                    .map_err(|e| Error::Config(format!("config {} is not valid JSON: {e}", p.display())))?
            }
            None => Value::Object(Default::default()),
        };
        if !doc.is_object() {
            return Err(Error::Config("config must be a JSON object".into()));
        }
        let defaults = serde_json::to_value(RunConfig::default()).map_err(|e| Error::Format(e.to_string()))?;
        for (key, value) in overrides {
            set_path(&mut doc, &defaults, key, value.clone())?;
        }
        from_value(doc)
    }

    pub fn output_enabled(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }

    pub fn mass(&self) -> Result<f64> {
        self.problem.mass.ok_or_else(|| Error::MissingField("problem.mass".into()))
    }

    pub fn masses(&self) -> Result<Vec<f64>> {
        self.problem.masses.clone().ok_or_else(|| Error::MissingField("problem.masses".into()))
    }

    /// Solver configuration at mass `m`.
    pub fn solve_config(&self, m: f64) -> SolveConfig {
        let n = &self.numerics;
        SolveConfig {
            mass: m,
            dimension: self.problem.dimension,
            alpha: self.problem.alpha,
            nonlinearity: self.problem.nonlinearity.clone(),
            radius: n.radius,
            nodes: n.nodes,
            tol_grad: n.tol_grad,
            max_iters: n.max_iters,
            init_width: n.init_width,
            init_sign: n.init_sign,
            initial_step: n.initial_step,
            armijo_factor: n.armijo_factor,
            sufficient_decrease: n.sufficient_decrease,
            projection_tol: n.projection_tol,
            s_max: n.s_max,
            strategy: n.strategy.clone(),
            memory: n.memory,
            multi_start: n.multi_start,
            force: n.force,
        }
    }
}

fn from_value(doc: Value) -> Result<RunConfig> {
    serde_path_to_error::deserialize(doc).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let msg = inner.to_string();
        match msg.strip_prefix("missing field `").and_then(|rest| rest.split('`').next()) {
            Some(field) if path == "." => Error::MissingField(field.to_string()),
            Some(field) => Error::MissingField(format!("{path}.{field}")),
            None => Error::Config(format!("{path}: {msg}")),
        }
    })
}

/// Sets `a.b.c` in `doc`. A missing parent object starts from its entry in
/// `defaults`, so overriding one nested key keeps the other defaults.
pub fn set_path(doc: &mut Value, defaults: &Value, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed override key '{key}'")));
    }
    let descend = || Error::Config(format!("override '{key}' descends into a non-object"));
    let mut node = doc;
    let mut fallback = Some(defaults);
    for part in &parts[..parts.len() - 1] {
        fallback = fallback.and_then(|d| d.get(part));
        let seed = fallback.filter(|d| d.is_object()).cloned().unwrap_or_else(|| Value::Object(Default::default()));
        let obj = node.as_object_mut().ok_or_else(descend)?;
        node = obj.entry(part.to_string()).or_insert(seed);
    }
    let obj = node.as_object_mut().ok_or_else(descend)?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Parses `key=value`; the value is JSON when it parses as JSON, a string otherwise.
pub fn parse_override(raw: &str) -> Result<(String, Value)> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{raw}' is not of the form key=value")))?;
    let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    Ok((key.trim().to_string(), value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn defaults_without_file() {
        let c = RunConfig::load(None, &[]).unwrap();
        assert_eq!(c.numerics.nodes, 512);
        assert_eq!(c.mass().unwrap_err().kind(), "config.missing_field");
    }

    #[test]
    fn overrides_apply_key_by_key() {
        let o = vec![
            parse_override("problem.mass=2.5").unwrap(),
            parse_override("numerics.strategy=steepest").unwrap(),
            parse_override("problem.nonlinearity.params.p=4").unwrap(),
        ];
        let c = RunConfig::load(None, &o).unwrap();
        assert_eq!(c.mass().unwrap(), 2.5);
        assert_eq!(c.numerics.strategy, "steepest");
        assert_eq!(c.problem.nonlinearity.params["p"], 4.0);
    }

    #[test]
    fn nested_override_keeps_sibling_defaults() {
        let o = vec![parse_override("problem.nonlinearity.params.p=6").unwrap()];
        let c = RunConfig::load(None, &o).unwrap();
        assert_eq!(c.problem.nonlinearity, NonlinearitySpec::power(6.0));
    }

    #[test]
    fn file_blocks_replace_defaults_whole() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"problem": {"mass": 1, "nonlinearity": {"name": "log_example"}}}"#).unwrap();
        let c = RunConfig::load(Some(&path), &[]).unwrap();
        assert_eq!(c.problem.nonlinearity, NonlinearitySpec::log_example());
        assert_eq!(c.numerics.radius, 20.0);
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let o = vec![("numerics.nodez".to_string(), json!(3))];
        let err = RunConfig::load(None, &o).unwrap_err();
        assert_eq!(err.kind(), "config.invalid");
        assert!(err.to_string().contains("numerics"), "{err}");
    }

    #[test]
    fn missing_nested_field_is_named() {
        let o = vec![("problem.nonlinearity".to_string(), json!({"params": {"p": 3}}))];
        let err = RunConfig::load(None, &o).unwrap_err();
        assert_eq!(err.kind(), "config.missing_field");
        assert!(err.to_string().contains("problem.nonlinearity.name"), "{err}");
    }

    #[test]
    fn malformed_overrides() {
        assert!(parse_override("novalue").is_err());
        let mut doc = json!({"a": 1});
        assert!(set_path(&mut doc, &json!({}), "a.b", json!(2)).is_err());
        assert!(set_path(&mut doc, &json!({}), "a..b", json!(2)).is_err());
    }
}
