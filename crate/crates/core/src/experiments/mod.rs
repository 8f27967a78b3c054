//! Reproducible experiment harness. Each experiment writes plot-ready CSVs
//! and a `manifest.json` with the config echo and content hashes.

mod config;
mod dynamics;
mod field;
mod mlp;
mod quad;
mod trajectory;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde_json::Value;

pub use config::{
    apply_override, load_value, ExperimentConfig, ExperimentKind, GridConfig, MlpSettings, QuadraticSpec,
};
pub use dynamics::{loss_dynamics_run, mixture_minimizer, run_loss_dynamics, DynamicsReport, MONOTONE_TOL};
pub use field::{field_point, run_field_scan, FieldPoint, Region, FIELD_COLUMNS};
pub use mlp::{build_mlp_domains, run_mlp_intervention, sign_agreement, MlpRow, MLP_COLUMNS, PREDICTION_FLOOR};
pub use quad::{run_quad_commutation, AggregateCell, SweepResult, SweepRow, AGGREGATE_COLUMNS};
pub use trajectory::{
    run_optimality_scan, scan_problem, scan_stored_trajectory, ScanSummary, TRAJECTORY_CSV, TRAJECTORY_SIDECAR,
    VIOLATIONS_CSV,
};

use crate::commutator::{Engine, EngineKind, CALIBRATED_COEFFICIENT};
use crate::domain::{make_quadratic_domain, QuadraticDomain};
use crate::error::{Error, Result};
use crate::linalg::{gaussian_vector, mix_seed, power_law_spectrum, DenseMatrix, ParamVec, Prng};
use crate::report::{Manifest, MANIFEST_FILE};
use crate::schedule::{constant_schedule, WeightSchedule};

/// Files written by one experiment plus scalar results for the manifest.
#[derive(Clone, Debug, Default)]
pub struct ExperimentOutput {
    pub files: Vec<String>,
    pub summary: BTreeMap<String, Value>,
}

impl ExperimentOutput {
    fn note(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.to_string(), value.into());
    }
}

/// Runs `cfg` into `out_dir` (created if absent). Refuses to overwrite an
/// existing manifest unless `force`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path, force: bool) -> Result<Manifest> {
    let problems = cfg.validate();
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")));
    }
    let manifest_path = out_dir.join(MANIFEST_FILE);
    if manifest_path.exists() && !force {
        return Err(Error::Config(format!(
            "{} already exists; pass --force to overwrite",
            manifest_path.display()
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let out = with_workers(cfg.workers, || match cfg.experiment {
        ExperimentKind::QuadCommutation => run_quad_commutation(cfg, out_dir).map(|r| r.output),
        ExperimentKind::FieldScan => run_field_scan(cfg, out_dir),
        ExperimentKind::LossDynamics => run_loss_dynamics(cfg, out_dir),
        ExperimentKind::MlpIntervention => run_mlp_intervention(cfg, out_dir),
        ExperimentKind::OptimalityScan => run_optimality_scan(cfg, out_dir),
    })?;
    let manifest = Manifest {
        experiment: cfg.experiment.name().to_string(),
        config: cfg.to_value(),
        calibrated_coefficient: coefficient(cfg),
        outputs: Manifest::hash_outputs(out_dir, &out.files)?,
        summary: out.summary,
    };
    manifest.write(out_dir)?;
    Ok(manifest)
}

/// Output directory: explicit argument, then the config, then `default`.
pub fn resolve_output_dir(cli: Option<PathBuf>, cfg: &ExperimentConfig, default: PathBuf) -> PathBuf {
    cli.or_else(|| cfg.output_dir.clone()).unwrap_or(default)
}

pub(crate) fn engine(cfg: &ExperimentConfig) -> Engine {
    match cfg.engine {
        EngineKind::ClosedForm => Engine::ClosedForm,
        EngineKind::Ode => Engine::Ode(cfg.integrator),
        EngineKind::DiscreteGd => Engine::DiscreteGd {
            learning_rate: cfg.gd.learning_rate,
        },
    }
}

pub(crate) fn coefficient(cfg: &ExperimentConfig) -> f64 {
    cfg.coefficient.unwrap_or(CALIBRATED_COEFFICIENT)
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match workers {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))?
            .install(f),
    }
}

pub(crate) fn base_schedule(cfg: &ExperimentConfig) -> Result<WeightSchedule> {
    match &cfg.schedule {
        Some(s) => Ok(s.clone()),
        None => constant_schedule(&cfg.base_weights),
    }
}

pub(crate) fn target_weights(cfg: &ExperimentConfig) -> Vec<f64> {
    let k = cfg.num_domains();
    cfg.target_weights.clone().unwrap_or_else(|| vec![1.0 / k as f64; k])
}

/// Linearly interpolated percentile (`q` in `[0, 100]`) of unsorted data.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Random quadratic domains sharing one spectrum `λⱼ = decay^j`, plus a
/// Gaussian start, drawn from the stream `mix_seed(seed, index)`.
pub fn sample_quadratic_problem(
    seed: u64,
    index: u64,
    dim: usize,
    decay: f64,
    num_domains: usize,
) -> Result<(Vec<QuadraticDomain>, ParamVec)> {
    let spectrum = power_law_spectrum(dim, decay)?;
    let mut rng = Prng::new(mix_seed(seed, index));
    let domains = (0..num_domains)
        .map(|_| make_quadratic_domain(&spectrum, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok((domains, gaussian_vector(dim, &mut rng)))
}

/// Two anisotropic planar quadratics with principal axes 60° apart:
/// `A₁ = diag(3, 0.5)`, `b₁ = (1, 0)`; `A₂ = R₆₀ diag(2, 0.3) R₆₀ᵀ`, `b₂ = (−1, 1)`.
pub fn default_planar_pair() -> Vec<QuadraticSpec> {
    let (s, c) = (PI / 3.0).sin_cos();
    let rot = DenseMatrix::from_rows(&[vec![c, -s], vec![s, c]]).expect("2x2");
    let a2 = crate::linalg::mat_mul(
        &crate::linalg::mat_mul(&rot, &DenseMatrix::diag(&[2.0, 0.3])).expect("2x2"),
        &rot.transpose(),
    )
    .expect("2x2")
    .symmetrized();
    vec![
        QuadraticSpec {
            a: vec![vec![3.0, 0.0], vec![0.0, 0.5]],
            b: vec![1.0, 0.0],
        },
        QuadraticSpec {
            a: a2.rows(),
            b: vec![-1.0, 1.0],
        },
    ]
}

/// Explicit domains from the config, or the default planar pair.
pub(crate) fn explicit_or_planar(cfg: &ExperimentConfig) -> Result<Vec<QuadraticDomain>> {
    let specs = cfg.domains.clone().unwrap_or_else(default_planar_pair);
    specs.iter().map(QuadraticSpec::build).collect()
}
