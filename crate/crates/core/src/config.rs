//! JSON run configuration.
//!
//! ```json
//! {
//!   "system": {
//!     "n": 1, "m": 1,
//!     "params": {"s": 0.3, "nu": 0.5},
//!     "b1": ["0"], "sigma1": [["cos(y0)"]],
//!     "b2": ["s - y0/2"], "sigma2": [["nu"]],
//!     "operator": {"kind": "zero"},
//!     "x0": [0.0], "y0": [0.6]
//!   },
//!   "scales": {"epsilon": [0.4, 0.2, 0.1], "gamma_exponent": 2},
//!   "seed": 7
//! }
//! ```
//!
//! Task sections (`sim`, `averaging`, `kappa`, `rate`, `laplace`, `hjb`,
//! `tightness`, `check`, `validate`) are optional and fall back to defaults.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::averaging::{AveragedCoeffs, AveragingConfig, KappaConfig};
use crate::expr::{CoeffField, Dims, ExprError, Params};
use crate::monotone::{MonotoneOp, OperatorDesc};
use crate::simulate::{ScaleParams, SimConfig, SimError, SystemSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema error at {pointer}: {message}")]
    Schema { pointer: String, message: String },
    #[error("expression error at {pointer}: {source}")]
    Expr { pointer: String, source: ExprError },
    #[error("scale violation: {0}")]
    Scale(String),
    #[error("invalid override {0:?}; expected KEY=VALUE with a dotted key")]
    Override(String),
    #[error("invalid system: {0}")]
    System(#[from] SimError),
}

fn schema(pointer: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Schema {
        pointer: pointer.to_string(),
        message: message.into(),
    }
}

/// Read access to a JSON object that remembers its pointer.
struct Node<'a> {
    map: &'a Map<String, Value>,
    ptr: String,
}

impl<'a> Node<'a> {
    fn new(v: &'a Value, ptr: &str) -> Result<Self, ConfigError> {
        match v.as_object() {
            Some(map) => Ok(Node { map, ptr: ptr.to_string() }),
            None => Err(schema(ptr, "expected an object")),
        }
    }

    fn at(&self, key: &str) -> String {
        format!("{}/{}", self.ptr, key)
    }

    fn req(&self, key: &str) -> Result<&'a Value, ConfigError> {
        self.map.get(key).ok_or_else(|| schema(&self.at(key), "missing required field"))
    }

    fn usize(&self, key: &str) -> Result<usize, ConfigError> {
        self.req(key)?
            .as_u64()
            .map(|v| v as usize)
            .ok_or_else(|| schema(&self.at(key), "expected a nonnegative integer"))
    }

    fn f64_vec(&self, key: &str, len: usize) -> Result<Vec<f64>, ConfigError> {
        let p = self.at(key);
        let arr = self.req(key)?.as_array().ok_or_else(|| schema(&p, "expected an array of numbers"))?;
        if arr.len() != len {
            return Err(schema(&p, format!("expected {len} entries, got {}", arr.len())));
        }
        arr.iter()
            .enumerate()
            .map(|(i, v)| v.as_f64().ok_or_else(|| schema(&format!("{p}/{i}"), "expected a number")))
            .collect()
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        for k in self.map.keys() {
            if !allowed.contains(&k.as_str()) {
                return Err(schema(&self.at(k), "unknown field"));
            }
        }
        Ok(())
    }
}

fn expr_strings(v: &Value, ptr: &str, len: usize) -> Result<Vec<String>, ConfigError> {
    let arr = v.as_array().ok_or_else(|| schema(ptr, "expected an array of expression strings"))?;
    if arr.len() != len {
        return Err(schema(ptr, format!("expected {len} entries, got {}", arr.len())));
    }
    arr.iter()
        .enumerate()
        .map(|(i, e)| match e {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            _ => Err(schema(&format!("{ptr}/{i}"), "expected an expression string")),
        })
        .collect()
}

fn vector_field(node: &Node, key: &str, len: usize, dims: Dims, params: &Params) -> Result<CoeffField, ConfigError> {
    let ptr = node.at(key);
    let src = expr_strings(node.req(key)?, &ptr, len)?;
    CoeffField::vector(&src, dims, params).map_err(|e| expr_error(&ptr, e, false))
}

fn matrix_field(node: &Node, key: &str, rows: usize, dims: Dims, params: &Params) -> Result<(CoeffField, usize), ConfigError> {
    let ptr = node.at(key);
    let arr = node.req(key)?.as_array().ok_or_else(|| schema(&ptr, "expected an array of rows"))?;
    if arr.len() != rows {
        return Err(schema(&ptr, format!("expected {rows} rows, got {}", arr.len())));
    }
    let cols = arr
        .first()
        .and_then(Value::as_array)
        .map(Vec::len)
        .ok_or_else(|| schema(&format!("{ptr}/0"), "expected a row array"))?;
    if cols == 0 {
        return Err(schema(&format!("{ptr}/0"), "rows must be nonempty"));
    }
    let src: Vec<Vec<String>> = arr
        .iter()
        .enumerate()
        .map(|(i, r)| expr_strings(r, &format!("{ptr}/{i}"), cols))
        .collect::<Result<_, _>>()?;
    let field = CoeffField::matrix(&src, dims, params).map_err(|e| expr_error(&ptr, e, true))?;
    Ok((field, cols))
}

/// Points entry errors at the offending element.
fn expr_error(ptr: &str, e: ExprError, matrix: bool) -> ConfigError {
    match e {
        ExprError::Entry { row, col, source } => {
            let pointer = if matrix {
                format!("{ptr}/{row}/{col}")
            } else {
                format!("{ptr}/{row}")
            };
            ConfigError::Expr { pointer, source: *source }
        }
        other => ConfigError::Expr {
            pointer: ptr.to_string(),
            source: other,
        },
    }
}

/// Parsed `system` block.
pub fn parse_system(v: &Value, ptr: &str) -> Result<(SystemSpec, Params), ConfigError> {
    let node = Node::new(v, ptr)?;
    node.check_keys(&["n", "m", "params", "b1", "sigma1", "b2", "sigma2", "operator", "x0", "y0"])?;
    let n = node.usize("n")?;
    let m = node.usize("m")?;
    if n == 0 || m == 0 {
        return Err(schema(&node.at(if n == 0 { "n" } else { "m" }), "dimension must be positive"));
    }
    let mut params = Params::new();
    if let Some(p) = node.map.get("params") {
        let pn = Node::new(p, &node.at("params"))?;
        for (k, val) in pn.map {
            let num = val.as_f64().ok_or_else(|| schema(&pn.at(k), "parameter must be a number"))?;
            params.insert(k.clone(), num);
        }
    }
    let dims = Dims::new(n, m);
    let b1 = vector_field(&node, "b1", n, dims, &params)?;
    let (sigma1, _) = matrix_field(&node, "sigma1", n, dims, &params)?;
    let b2 = vector_field(&node, "b2", m, dims, &params)?;
    let (sigma2, _) = matrix_field(&node, "sigma2", m, dims, &params)?;
    let op = match node.map.get("operator") {
        None => MonotoneOp::Zero,
        Some(o) => {
            let desc: OperatorDesc = serde_json::from_value(o.clone()).map_err(|e| schema(&node.at("operator"), e.to_string()))?;
            MonotoneOp::try_from(&desc).map_err(|e| schema(&node.at("operator"), e.to_string()))?
        }
    };
    let x0 = node.f64_vec("x0", n)?;
    let y0 = node.f64_vec("y0", m)?;
    let spec = SystemSpec::new(b1, sigma1, b2, sigma2, op, x0, y0)?;
    Ok((spec, params))
}

/// Scale pairs `(ε, γ)`, either listed directly or as `γ = ε^exponent`.
pub fn parse_scales(v: Option<&Value>) -> Result<Vec<ScaleParams>, ConfigError> {
    let Some(v) = v else {
        return Ok(vec![ScaleParams { epsilon: 0.2, gamma: 0.04 }]);
    };
    let node = Node::new(v, "/scales")?;
    node.check_keys(&["epsilon", "gamma", "gamma_exponent"])?;
    let eps: Vec<f64> = match node.req("epsilon")? {
        Value::Number(x) => vec![x.as_f64().unwrap_or(f64::NAN)],
        Value::Array(a) => a
            .iter()
            .enumerate()
            .map(|(i, x)| x.as_f64().ok_or_else(|| schema(&format!("/scales/epsilon/{i}"), "expected a number")))
            .collect::<Result<_, _>>()?,
        _ => return Err(schema("/scales/epsilon", "expected a number or an array")),
    };
    if eps.is_empty() {
        return Err(schema("/scales/epsilon", "at least one value is required"));
    }
    let gammas: Vec<f64> = match (node.map.get("gamma"), node.map.get("gamma_exponent")) {
        (Some(_), Some(_)) => return Err(schema("/scales", "give either gamma or gamma_exponent, not both")),
        (Some(g), None) => {
            let g = g.as_f64().ok_or_else(|| schema("/scales/gamma", "expected a number"))?;
            vec![g; eps.len()]
        }
        (None, Some(k)) => {
            let k = k.as_f64().ok_or_else(|| schema("/scales/gamma_exponent", "expected a number"))?;
            eps.iter().map(|e| e.powf(k)).collect()
        }
        (None, None) => eps.iter().map(|e| e * e).collect(),
    };
    eps.iter()
        .zip(&gammas)
        .map(|(&e, &g)| {
            let s = ScaleParams::new(e, g).map_err(|err| ConfigError::Scale(err.to_string()))?;
            if !(g / e < 1.0) {
                return Err(ConfigError::Scale(format!("gamma/epsilon = {} must be < 1 (epsilon = {e}, gamma = {g})", g / e)));
            }
            Ok(s)
        })
        .collect()
}

fn section<T: DeserializeOwned + Default>(root: &Map<String, Value>, key: &str) -> Result<T, ConfigError> {
    match root.get(key) {
        None => Ok(T::default()),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| schema(&format!("/{key}"), e.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    /// Step size; `None` means `γ / 50` rounded to divide the horizon.
    pub dt: Option<f64>,
    pub horizon: f64,
    pub paths: usize,
    pub stability_factor: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            dt: None,
            horizon: 1.0,
            paths: 1,
            stability_factor: crate::simulate::DEFAULT_STABILITY_FACTOR,
        }
    }
}

/// Largest step `≤ gamma/ratio` dividing `horizon`.
pub fn fitted_dt(gamma: f64, ratio: f64, horizon: f64) -> f64 {
    let steps = (horizon * ratio / gamma).ceil().max(1.0);
    horizon / steps
}

impl SimSection {
    pub fn resolve(&self, scales: ScaleParams, seed: u64) -> SimConfig {
        SimConfig {
            dt: self.dt.unwrap_or_else(|| fitted_dt(scales.gamma, 50.0, self.horizon)),
            horizon: self.horizon,
            seed,
            paths: self.paths,
            stability_factor: self.stability_factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AveragingSection {
    pub dt: f64,
    pub burn_in: Option<f64>,
    pub horizon: f64,
    pub thin: usize,
    pub batches: usize,
    pub allow_non_dissipative: bool,
    /// Slow-state nodes for x-dependent coefficients (one-dimensional).
    pub grid: Option<Vec<f64>>,
    /// Skip estimation and use these values (`abar` row-major).
    pub bbar: Option<Vec<f64>>,
    pub abar: Option<Vec<f64>>,
}

impl Default for AveragingSection {
    fn default() -> Self {
        let d = AveragingConfig::default();
        AveragingSection {
            dt: d.dt,
            burn_in: d.burn_in,
            horizon: d.horizon,
            thin: d.thin,
            batches: d.batches,
            allow_non_dissipative: false,
            grid: None,
            bbar: None,
            abar: None,
        }
    }
}

impl AveragingSection {
    pub fn resolve(&self, seed: u64) -> AveragingConfig {
        AveragingConfig {
            dt: self.dt,
            burn_in: self.burn_in,
            horizon: self.horizon,
            thin: self.thin,
            batches: self.batches,
            seed,
            allow_non_dissipative: self.allow_non_dissipative,
        }
    }

    /// Fixed coefficients when given, otherwise estimated from `spec`.
    pub fn coefficients(&self, spec: &SystemSpec, seed: u64) -> Result<AveragedCoeffs, crate::averaging::AveragingError> {
        match (&self.bbar, &self.abar) {
            (Some(b), Some(a)) => AveragedCoeffs::constant(b.clone(), a.clone()),
            _ => AveragedCoeffs::estimate(spec, &self.resolve(seed), self.grid.as_deref()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KappaSection {
    pub dt: f64,
    pub t_max: Option<f64>,
    pub tol: f64,
    pub n_paths: usize,
    /// Finite-difference step for the generator residual.
    pub h: f64,
    pub y_grid: Vec<f64>,
    pub p_values: Vec<f64>,
}

impl Default for KappaSection {
    fn default() -> Self {
        let d = KappaConfig::default();
        KappaSection {
            dt: d.dt,
            t_max: d.t_max,
            tol: d.tol,
            n_paths: d.n_paths,
            h: 0.05,
            y_grid: (0..21).map(|i| -0.4 + 0.1 * i as f64).collect(),
            p_values: vec![0.5, 1.0],
        }
    }
}

impl KappaSection {
    pub fn resolve(&self, seed: u64) -> KappaConfig {
        KappaConfig {
            dt: self.dt,
            t_max: self.t_max,
            tol: self.tol,
            n_paths: self.n_paths,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateSection {
    pub target: Option<Vec<f64>>,
    pub t: f64,
    pub steps: usize,
    pub tol_gap: f64,
    pub random_starts: usize,
    pub refine: bool,
}

impl Default for RateSection {
    fn default() -> Self {
        RateSection {
            target: None,
            t: 1.0,
            steps: 32,
            tol_gap: 1e-3,
            random_starts: 0,
            refine: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaplaceSection {
    pub h: String,
    pub t: f64,
    pub paths: usize,
    /// Step size is `γ / dt_ratio`.
    pub dt_ratio: f64,
}

impl Default for LaplaceSection {
    fn default() -> Self {
        LaplaceSection {
            h: "min(1, abs(x0 - 0.4))".into(),
            t: 0.5,
            paths: 20_000,
            dt_ratio: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HjbSection {
    pub h: String,
    pub dx: f64,
    pub dt: Option<f64>,
    pub t: f64,
    pub window: (f64, f64),
    pub snapshots: usize,
}

impl Default for HjbSection {
    fn default() -> Self {
        HjbSection {
            h: "min(1, abs(x0 - 0.4))".into(),
            dx: 0.01,
            dt: None,
            t: 0.5,
            window: (-3.0, 3.8),
            snapshots: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TightnessSection {
    pub thresholds: Vec<f64>,
    pub t: f64,
    pub paths: usize,
    /// Scale index into the schedule; defaults to the value closest to 0.2.
    pub epsilon: Option<f64>,
}

impl Default for TightnessSection {
    fn default() -> Self {
        TightnessSection {
            thresholds: vec![1.5, 2.0, 3.0],
            t: 5.0,
            paths: 4000,
            epsilon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSection {
    /// Lyapunov function of the fast variable.
    pub zeta: Option<String>,
    pub l1: f64,
    pub l2: f64,
    pub ball_center: Option<Vec<f64>>,
    pub ball_radius: f64,
    /// Fast-variable grid `(lo, hi, count)` along every coordinate.
    pub y_grid: (f64, f64, usize),
    pub dissipativity_samples: usize,
    pub vi_paths: usize,
    pub vi_samples: usize,
}

impl Default for CheckSection {
    fn default() -> Self {
        CheckSection {
            zeta: None,
            l1: 0.5,
            l2: 0.5,
            ball_center: None,
            ball_radius: 2.0,
            y_grid: (-4.0, 4.0, 161),
            dissipativity_samples: 2000,
            vi_paths: 100,
            vi_samples: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Budget {
    #[default]
    Full,
    Quick,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSection {
    pub budget: Budget,
}

/// Fully validated configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Resolved JSON after overrides; hashed into the manifest.
    pub resolved: Value,
    pub system: SystemSpec,
    pub params: Params,
    pub scales: Vec<ScaleParams>,
    pub seed: u64,
    pub sim: SimSection,
    pub averaging: AveragingSection,
    pub kappa: KappaSection,
    pub rate: RateSection,
    pub laplace: LaplaceSection,
    pub hjb: HjbSection,
    pub tightness: TightnessSection,
    pub check: CheckSection,
    pub validate: ValidateSection,
}

const TOP_KEYS: [&str; 12] = [
    "system", "scales", "seed", "sim", "averaging", "kappa", "rate", "laplace", "hjb", "tightness", "check", "validate",
];

impl RunConfig {
    pub fn from_value(v: Value) -> Result<Self, ConfigError> {
        let root = Node::new(&v, "")?;
        root.check_keys(&TOP_KEYS)?;
        let (system, params) = parse_system(root.req("system")?, "/system")?;
        let scales = parse_scales(root.map.get("scales"))?;
        let seed = match root.map.get("seed") {
            None => 0,
            Some(s) => s.as_u64().ok_or_else(|| schema("/seed", "expected a nonnegative integer"))?,
        };
        let map = root.map;
        Ok(RunConfig {
            system,
            params,
            scales,
            seed,
            sim: section(map, "sim")?,
            averaging: section(map, "averaging")?,
            kappa: section(map, "kappa")?,
            rate: section(map, "rate")?,
            laplace: section(map, "laplace")?,
            hjb: section(map, "hjb")?,
            tightness: section(map, "tightness")?,
            check: section(map, "check")?,
            validate: section(map, "validate")?,
            resolved: v,
        })
    }

    /// SHA-256 of the compact serialisation of the resolved configuration.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.resolved.to_string().as_bytes()))
    }
}

/// Applies `a.b.c=VALUE`; the value is read as JSON when possible and as a
/// string otherwise. Missing intermediate objects are created.
pub fn apply_override(v: &mut Value, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| ConfigError::Override(spec.into()))?;
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(ConfigError::Override(spec.into()));
    }
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = v;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur.as_object_mut().ok_or_else(|| ConfigError::Override(spec.into()))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("loop returns on the last key")
}

/// Name of the bundled golden scenario.
pub const BUILTIN_EXAMPLE: &str = "example5";

/// The bundled mean-reverting stochastic-volatility scenario with the slow
/// drift removed (it vanishes in the limit dynamics).
pub fn builtin_example() -> Value {
    serde_json::from_str(include_str!("../configs/example5.json")).expect("bundled config is valid JSON")
}

/// Reads a configuration file, a manifest written by a previous run, or the
/// built-in scenario name, then applies overrides.
pub fn load_config(path: &str, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut v = if path == BUILTIN_EXAMPLE {
        builtin_example()
    } else {
        let text = std::fs::read_to_string(Path::new(path)).map_err(|source| ConfigError::Io {
            path: path.to_string(),
            source,
        })?;
        serde_json::from_str(&text)?
    };
    // a manifest embeds the resolved configuration
    if let Some(cfg) = v.get("config").filter(|_| v.get("config_sha256").is_some()) {
        v = cfg.clone();
    }
    for o in overrides {
        apply_override(&mut v, o)?;
    }
    RunConfig::from_value(v)
}
