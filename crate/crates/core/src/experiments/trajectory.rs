use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use super::{base_schedule, coefficient, sample_quadratic_problem, target_weights, ExperimentConfig, ExperimentOutput};
use crate::commutator::{
    measure_from_state, optimality_scan, write_violations_csv, ClosedFormFlow, EngineKind, OptimalityViolation,
};
use crate::domain::{combine_domains, HvpConfig, LossDomain, QuadraticDomain};
use crate::error::Result;
use crate::flow::{integrate_ode, Trajectory};
use crate::linalg::ParamVec;
use crate::schedule::{SwapOrder, WeightSchedule};

pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const TRAJECTORY_SIDECAR: &str = "trajectory.gcm";
pub const VIOLATIONS_CSV: &str = "violations.csv";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub records: usize,
    pub violations: usize,
    /// Violations whose recommended intervention was checked by exact flow.
    pub checked: usize,
    /// Checked violations whose recommendation lowered the target.
    pub improving: usize,
}

/// The domains, start and schedule an optimality-scan config describes.
pub fn scan_problem(cfg: &ExperimentConfig) -> Result<(Vec<QuadraticDomain>, ParamVec, WeightSchedule)> {
    let k = cfg.num_domains();
    let (doms, theta0) = match &cfg.domains {
        Some(specs) => {
            let doms = specs.iter().map(|s| s.build()).collect::<Result<Vec<_>>>()?;
            let (_, theta0) = sample_quadratic_problem(cfg.seed, 0, doms[0].dim(), cfg.spectrum_decay, 0)?;
            (doms, theta0)
        }
        None => sample_quadratic_problem(cfg.seed, 0, cfg.dim, cfg.spectrum_decay, k)?,
    };
    Ok((doms, theta0.scale(cfg.start_scale), base_schedule(cfg)?))
}

/// Scans `traj` and, since all domains are quadratic, checks each
/// recommendation with an exact intervention of length `eps`.
fn scan_and_check(
    cfg: &ExperimentConfig,
    doms: &[QuadraticDomain],
    traj: &Trajectory,
    out_dir: &Path,
) -> Result<(Vec<OptimalityViolation>, ScanSummary)> {
    let refs: Vec<&dyn LossDomain> = doms.iter().map(|d| d as &dyn LossDomain).collect();
    let target = combine_domains(&target_weights(cfg), &refs)?;
    let hvp_cfg = HvpConfig::exact();
    let found = optimality_scan(traj, &refs, &target, cfg.scan_tol, &hvp_cfg)?;
    write_violations_csv(&out_dir.join(VIOLATIONS_CSV), &found)?;

    let flow = ClosedFormFlow::new(&refs)?;
    let eps = cfg.eps_values[0];
    let mut summary = ScanSummary {
        records: traj.len(),
        violations: found.len(),
        ..Default::default()
    };
    let by_time = |t: f64| traj.times.iter().position(|x| *x == t).expect("violation times come from records");
    for v in &found {
        let spec = v.improving_intervention(eps);
        // Interventions must fit before the next breakpoint of the base.
        let Ok((_, _, t2)) = spec.window() else { continue };
        if traj.schedule.next_breakpoint(v.t).is_some_and(|b| t2 > b) {
            continue;
        }
        let theta = &traj.checkpoints[by_time(v.t)];
        let rep = measure_from_state(
            &flow,
            EngineKind::ClosedForm,
            &refs,
            &traj.schedule,
            &spec,
            &[&target],
            theta,
            None,
            coefficient(cfg),
            &hvp_cfg,
        )?;
        let change = match spec.order {
            SwapOrder::IjFirst => rep.targets[0].observed_12,
            SwapOrder::JiFirst => rep.targets[0].observed_21,
        };
        summary.checked += 1;
        if change < 0.0 {
            summary.improving += 1;
        }
    }
    Ok((found, summary))
}

fn note_summary(out: &mut ExperimentOutput, s: &ScanSummary) {
    out.note("records", s.records);
    out.note("violations", s.violations);
    out.note("checked_violations", s.checked);
    out.note("improving_violations", s.improving);
}

/// Integrates the configured schedule from a Gaussian start, stores the
/// trajectory (CSV + checkpoint sidecar) and scans it.
pub fn run_optimality_scan(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutput> {
    let (doms, theta0, schedule) = scan_problem(cfg)?;
    let refs: Vec<&dyn LossDomain> = doms.iter().map(|d| d as &dyn LossDomain).collect();
    let traj = integrate_ode(&refs, &schedule, &theta0, cfg.horizon, &cfg.integrator)?;
    traj.write_csv(&out_dir.join(TRAJECTORY_CSV))?;
    traj.write_checkpoints(&out_dir.join(TRAJECTORY_SIDECAR))?;
    let (_, summary) = scan_and_check(cfg, &doms, &traj, out_dir)?;
    info!("optimality scan: {summary:?}");
    let mut out = ExperimentOutput {
        files: vec![TRAJECTORY_CSV.into(), TRAJECTORY_SIDECAR.into(), VIOLATIONS_CSV.into()],
        ..Default::default()
    };
    note_summary(&mut out, &summary);
    Ok(out)
}

/// Rescans a trajectory stored by [`run_optimality_scan`] in `traj_dir`,
/// writing `violations.csv` to `out_dir`.
pub fn scan_stored_trajectory(
    cfg: &ExperimentConfig,
    traj_dir: &Path,
    out_dir: &Path,
) -> Result<(Vec<OptimalityViolation>, ScanSummary)> {
    let (doms, _, schedule) = scan_problem(cfg)?;
    let traj = Trajectory::read(
        &traj_dir.join(TRAJECTORY_CSV),
        &traj_dir.join(TRAJECTORY_SIDECAR),
        schedule,
    )?;
    std::fs::create_dir_all(out_dir).map_err(|e| crate::error::Error::io(out_dir, e))?;
    scan_and_check(cfg, &doms, &traj, out_dir)
}
