use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::commutator::{EngineKind, DEFAULT_SCAN_TOL};
use crate::domain::{BatchConfig, QuadraticDomain, SyntheticConfig};
use crate::error::{Error, Result};
use crate::flow::{GdConfig, IntegratorConfig};
use crate::linalg::{DenseMatrix, ParamVec};
use crate::schedule::{WeightSchedule, SIMPLEX_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    QuadCommutation,
    FieldScan,
    LossDynamics,
    MlpIntervention,
    OptimalityScan,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::QuadCommutation,
        ExperimentKind::FieldScan,
        ExperimentKind::LossDynamics,
        ExperimentKind::MlpIntervention,
        ExperimentKind::OptimalityScan,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::QuadCommutation => "quad_commutation",
            ExperimentKind::FieldScan => "field_scan",
            ExperimentKind::LossDynamics => "loss_dynamics",
            ExperimentKind::MlpIntervention => "mlp_intervention",
            ExperimentKind::OptimalityScan => "optimality_scan",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            ExperimentKind::QuadCommutation => {
                "observed vs predicted excess loss of full swaps on random quadratic pairs"
            }
            ExperimentKind::FieldScan => "sign regions of <R, grad L1> and <R, grad L2> on a 2-D grid",
            ExperimentKind::LossDynamics => "per-domain loss curves under a constant mixture",
            ExperimentKind::MlpIntervention => "swap interventions during gradient descent on two MLP tasks",
            ExperimentKind::OptimalityScan => "integrate a schedule and flag provably improvable reorderings",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn names() -> Vec<&'static str> {
        Self::ALL.iter().map(|k| k.name()).collect()
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `L(θ) = ½ (θ − b)ᵀ A (θ − b)` given explicitly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticSpec {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl QuadraticSpec {
    pub fn build(&self) -> Result<QuadraticDomain> {
        QuadraticDomain::new(DenseMatrix::from_rows(&self.a)?, ParamVec::new(self.b.clone())?)
    }
}

/// Axis-aligned grid `[x_min, x_max] × [y_min, y_max]` with `resolution`
/// points per side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub resolution: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            x_min: -3.0,
            x_max: 3.0,
            y_min: -3.0,
            y_max: 3.0,
            resolution: 101,
        }
    }
}

impl GridConfig {
    pub fn points(&self) -> Vec<(f64, f64)> {
        let n = self.resolution;
        let at = |lo: f64, hi: f64, k: usize| lo + (hi - lo) * k as f64 / (n - 1) as f64;
        (0..n)
            .flat_map(|iy| (0..n).map(move |ix| (ix, iy)))
            .map(|(ix, iy)| (at(self.x_min, self.x_max, ix), at(self.y_min, self.y_max, iy)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpSettings {
    pub n_hidden: usize,
    pub data: SyntheticConfig,
    pub init_scale: f64,
    /// Gradient-descent steps at which interventions start.
    pub checkpoints: Vec<usize>,
    /// Length `N` of each intervention window, in steps.
    pub intervention_steps: usize,
    pub batching: Option<BatchConfig>,
}

impl Default for MlpSettings {
    fn default() -> Self {
        MlpSettings {
            n_hidden: 16,
            data: SyntheticConfig::default(),
            init_scale: 1.0,
            checkpoints: vec![500, 2000, 5000, 10000],
            intervention_steps: 200,
            batching: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub dim: usize,
    pub spectrum_decay: f64,
    pub num_seeds: usize,
    pub t_values: Vec<f64>,
    pub eps_values: Vec<f64>,
    pub delta_values: Vec<f64>,
    pub base_weights: Vec<f64>,
    /// Piecewise-constant schedule; overrides `base_weights` where used.
    pub schedule: Option<WeightSchedule>,
    /// Weights of the target loss `Σ cₖLₖ` (default: uniform).
    pub target_weights: Option<Vec<f64>>,
    pub engine: EngineKind,
    pub integrator: IntegratorConfig,
    pub gd: GdConfig,
    pub horizon: f64,
    /// Standard deviation of Gaussian starting points.
    pub start_scale: f64,
    pub grid: GridConfig,
    /// Explicit quadratic domains; random ones are sampled when absent.
    pub domains: Option<Vec<QuadraticSpec>>,
    pub mlp: MlpSettings,
    pub scan_tol: f64,
    /// Excess-loss coefficient; the calibrated value when absent.
    pub coefficient: Option<f64>,
    /// Worker threads (default: available processors).
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: ExperimentKind::QuadCommutation,
            seed: 0,
            dim: 100,
            spectrum_decay: 0.7,
            num_seeds: 100,
            t_values: vec![0.1, 0.3, 1.0],
            eps_values: vec![1e-3, 1e-2, 1e-1],
            delta_values: vec![0.5],
            base_weights: vec![0.5, 0.5],
            schedule: None,
            target_weights: None,
            engine: EngineKind::ClosedForm,
            integrator: IntegratorConfig::default(),
            gd: GdConfig::default(),
            horizon: 1.0,
            start_scale: 1.0,
            grid: GridConfig::default(),
            domains: None,
            mlp: MlpSettings::default(),
            scan_tol: DEFAULT_SCAN_TOL,
            coefficient: None,
            workers: None,
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates a config, reporting an unknown experiment name
    /// together with the valid ones.
    pub fn from_value(value: Value) -> Result<Self> {
        if let Some(name) = value.get("experiment").and_then(Value::as_str) {
            if ExperimentKind::from_name(name).is_none() {
                return Err(Error::Config(format!(
                    "unknown experiment '{name}'; valid experiments: {}",
                    ExperimentKind::names().join(", ")
                )));
            }
        }
        let cfg: ExperimentConfig =
            serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        let problems = cfg.validate();
        if !problems.is_empty() {
            return Err(Error::Config(problems.join("; ")));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        Self::from_value(load_value(path, overrides)?)
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn num_domains(&self) -> usize {
        match &self.schedule {
            Some(s) => s.num_domains(),
            None => self.base_weights.len(),
        }
    }

    /// Every problem with the config, empty when it is usable.
    pub fn validate(&self) -> Vec<String> {
        let mut p = Vec::new();
        for (name, len) in [
            ("t_values", self.t_values.len()),
            ("eps_values", self.eps_values.len()),
            ("delta_values", self.delta_values.len()),
            ("base_weights", self.base_weights.len()),
        ] {
            if len == 0 {
                p.push(format!("{name} must not be empty"));
            }
        }
        if self.dim == 0 {
            p.push("dim must be at least 1".into());
        }
        if self.num_seeds == 0 {
            p.push("num_seeds must be at least 1".into());
        }
        if !(self.spectrum_decay > 0.0 && self.spectrum_decay <= 1.0) {
            p.push(format!("spectrum_decay must lie in (0, 1], got {}", self.spectrum_decay));
        }
        if self.t_values.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            p.push("t_values must be finite and non-negative".into());
        }
        if self.eps_values.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            p.push("eps_values must be finite and positive".into());
        }
        if self.delta_values.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            p.push("delta_values must be finite and non-negative".into());
        }
        for v in simplex_problems(&self.base_weights) {
            p.push(format!("base_weights: {v}"));
        }
        if let Some(s) = &self.schedule {
            for v in s.validate() {
                p.push(format!("schedule: {v}"));
            }
        }
        if let Some(tw) = &self.target_weights {
            if tw.len() != self.num_domains() {
                p.push(format!(
                    "target_weights has {} entries for {} domains",
                    tw.len(),
                    self.num_domains()
                ));
            }
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            p.push(format!("horizon must be positive, got {}", self.horizon));
        }
        if !(self.start_scale > 0.0 && self.start_scale.is_finite()) {
            p.push(format!("start_scale must be positive, got {}", self.start_scale));
        }
        if !(self.scan_tol > 0.0) {
            p.push(format!("scan_tol must be positive, got {}", self.scan_tol));
        }
        if let Some(c) = self.coefficient {
            if !(c > 0.0 && c.is_finite()) {
                p.push(format!("coefficient must be positive, got {c}"));
            }
        }
        if self.workers == Some(0) {
            p.push("workers must be at least 1".into());
        }
        if !(self.integrator.h > 0.0) || self.integrator.record_every == 0 {
            p.push("integrator needs h > 0 and record_every >= 1".into());
        }
        if !(self.gd.learning_rate > 0.0) || self.gd.record_every == 0 {
            p.push("gd needs learning_rate > 0 and record_every >= 1".into());
        }
        if let Some(ds) = &self.domains {
            if ds.is_empty() {
                p.push("domains must not be empty when given".into());
            }
            for (k, d) in ds.iter().enumerate() {
                if d.a.len() != d.b.len() || d.a.iter().any(|r| r.len() != d.b.len()) {
                    p.push(format!("domain {}: a must be {n}×{n} for b of length {n}", k + 1, n = d.b.len()));
                }
            }
            if ds.len() != self.num_domains() {
                p.push(format!(
                    "{} domains given but the weights describe {}",
                    ds.len(),
                    self.num_domains()
                ));
            }
        }
        self.validate_specific(&mut p);
        p
    }

    fn validate_specific(&self, p: &mut Vec<String>) {
        let k = self.num_domains();
        match self.experiment {
            ExperimentKind::QuadCommutation => {
                if k != 2 {
                    p.push("quad_commutation needs exactly two domains".into());
                }
                if self.delta_values.len() != 1 {
                    p.push("quad_commutation takes exactly one delta value".into());
                }
                let min_w = self.base_weights.iter().cloned().fold(f64::INFINITY, f64::min);
                if self.delta_values.iter().any(|d| *d > min_w) {
                    p.push(format!("delta must not exceed the smallest base weight {min_w}"));
                }
            }
            ExperimentKind::FieldScan => {
                if k != 2 {
                    p.push("field_scan needs exactly two domains".into());
                }
                if self.grid.resolution < 2 {
                    p.push("grid.resolution must be at least 2".into());
                }
                if !(self.grid.x_max > self.grid.x_min && self.grid.y_max > self.grid.y_min) {
                    p.push("grid ranges must be increasing".into());
                }
                if let Some(ds) = &self.domains {
                    if ds.iter().any(|d| d.b.len() != 2) {
                        p.push("field_scan domains must be 2-dimensional".into());
                    }
                }
            }
            ExperimentKind::LossDynamics => {}
            ExperimentKind::MlpIntervention => {
                if k != 2 {
                    p.push("mlp_intervention needs exactly two domains".into());
                }
                if self.mlp.checkpoints.is_empty() {
                    p.push("mlp.checkpoints must not be empty".into());
                }
                if self.mlp.intervention_steps == 0 {
                    p.push("mlp.intervention_steps must be at least 1".into());
                }
                if self.mlp.n_hidden == 0 {
                    p.push("mlp.n_hidden must be at least 1".into());
                }
                let min_w = self.base_weights.iter().cloned().fold(f64::INFINITY, f64::min);
                if self.delta_values.iter().any(|d| *d > min_w) {
                    p.push(format!("delta must not exceed the smallest base weight {min_w}"));
                }
            }
            ExperimentKind::OptimalityScan => {
                if self.integrator.record_every == 0 {
                    p.push("integrator.record_every must be at least 1".into());
                }
            }
        }
    }
}

fn simplex_problems(w: &[f64]) -> Vec<String> {
    let mut p = Vec::new();
    for (k, v) in w.iter().enumerate() {
        if !v.is_finite() {
            p.push(format!("weight {} is not finite", k + 1));
        } else if *v < 0.0 {
            p.push(format!("weight {} is negative ({v})", k + 1));
        }
    }
    let sum: f64 = w.iter().sum();
    if !w.is_empty() && (sum - 1.0).abs() > SIMPLEX_TOL {
        p.push(format!("weights sum to {sum}, not 1"));
    }
    p
}

/// Reads a JSON config and applies `key.path=value` overrides.
pub fn load_value(path: &Path, overrides: &[String]) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    Ok(value)
}

/// Sets a dotted key; the right-hand side is parsed as JSON when possible
/// and taken as a string otherwise.
pub fn apply_override(value: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{assignment}' is not key=value")))?;
    let new: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = value;
    let parts: Vec<&str> = key.split('.').collect();
    for (n, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::Config(format!("override key '{key}' has an empty component")));
        }
        if !node.is_object() {
            if node.is_null() {
                *node = Value::Object(Default::default());
            } else {
                return Err(Error::Config(format!("override '{key}': '{part}' is inside a non-object")));
            }
        }
        let map = node.as_object_mut().expect("checked above");
        if n + 1 == parts.len() {
            map.insert(part.to_string(), new);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("split always yields one part")
}
