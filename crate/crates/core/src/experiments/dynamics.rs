use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{base_schedule, explicit_or_planar, ExperimentConfig, ExperimentOutput};
use crate::domain::{LossDomain, QuadraticDomain};
use crate::error::{Error, Result};
use crate::flow::{integrate_ode, Trajectory};
use crate::linalg::{gaussian_vector, mix_seed, sym_solve, DenseMatrix, ParamVec, Prng};
use crate::report::{fmt_f64, write_csv_report};
use crate::schedule::WeightSchedule;

/// An increase of a per-domain loss above this between consecutive records
/// marks the curve non-monotone.
pub const MONOTONE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsReport {
    pub theta0: Vec<f64>,
    /// `monotone[k]`: loss `k` never rose by more than [`MONOTONE_TOL`].
    pub monotone: Vec<bool>,
    /// Largest increase per unit time of the scheduled mixture loss.
    pub max_mixture_increase_rate: f64,
    /// `‖θ(T) − θ*‖` for the minimizer `θ*` of the mixture.
    pub endpoint_distance: f64,
    #[serde(skip)]
    pub trajectory: Option<Trajectory>,
}

/// `(Σ wₖAₖ)⁻¹ Σ wₖAₖbₖ`.
pub fn mixture_minimizer(domains: &[QuadraticDomain], weights: &[f64]) -> Result<ParamVec> {
    let n = domains[0].dim();
    let mut a = DenseMatrix::zeros(n);
    let mut rhs = ParamVec::zeros(n);
    for (d, w) in domains.iter().zip(weights) {
        a = a.add(&d.a().scale(*w))?;
        rhs.axpy(*w, &crate::linalg::mat_vec(d.a(), d.b())?);
    }
    sym_solve(&a, &rhs)
}

/// Integrates one trajectory under a constant schedule and summarizes its
/// per-domain monotonicity.
pub fn loss_dynamics_run(
    domains: &[QuadraticDomain],
    schedule: &WeightSchedule,
    theta0: &ParamVec,
    cfg: &ExperimentConfig,
) -> Result<DynamicsReport> {
    let refs: Vec<&dyn LossDomain> = domains.iter().map(|d| d as &dyn LossDomain).collect();
    let traj = integrate_ode(&refs, schedule, theta0, cfg.horizon, &cfg.integrator)?;
    let k = domains.len();
    let monotone = (0..k)
        .map(|d| {
            traj.per_domain_losses
                .windows(2)
                .all(|w| w[1][d] - w[0][d] <= MONOTONE_TOL)
        })
        .collect();
    let end_weights = schedule.weights_at(cfg.horizon)?;
    let star = mixture_minimizer(domains, end_weights)?;
    Ok(DynamicsReport {
        theta0: theta0.as_slice().to_vec(),
        monotone,
        max_mixture_increase_rate: traj.max_mixture_increase_rate()?,
        endpoint_distance: traj.final_theta().sub(&star).norm(),
        trajectory: Some(traj),
    })
}

/// `num_seeds` Gaussian starts (std `start_scale`) under the base weights;
/// writes `loss_dynamics.csv` (curves) and `loss_dynamics_summary.csv`.
pub fn run_loss_dynamics(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutput> {
    let doms = explicit_or_planar(cfg)?;
    if doms.len() != cfg.num_domains() {
        return Err(Error::arg("one base weight per domain is required"));
    }
    let schedule = base_schedule(cfg)?;
    let dim = doms[0].dim();
    let reports: Vec<DynamicsReport> = (0..cfg.num_seeds)
        .into_par_iter()
        .map(|s| {
            let mut rng = Prng::new(mix_seed(cfg.seed, s as u64));
            let theta0 = gaussian_vector(dim, &mut rng).scale(cfg.start_scale);
            loss_dynamics_run(&doms, &schedule, &theta0, cfg)
        })
        .collect::<Result<_>>()?;

    let k = doms.len();
    let mut curve_header = vec!["start".to_string(), "t".to_string()];
    curve_header.extend((1..=k).map(|d| format!("loss_{d}")));
    curve_header.push("loss_mix".into());
    let mut curve_rows = Vec::new();
    for (s, r) in reports.iter().enumerate() {
        let traj = r.trajectory.as_ref().expect("set by loss_dynamics_run");
        let mix = traj.mixture_losses()?;
        for (rec, t) in traj.times.iter().enumerate() {
            let mut row = vec![(s + 1).to_string(), fmt_f64(*t)];
            row.extend(traj.per_domain_losses[rec].iter().map(|v| fmt_f64(*v)));
            row.push(fmt_f64(mix[rec]));
            curve_rows.push(row);
        }
    }
    let curves = "loss_dynamics.csv";
    let header: Vec<&str> = curve_header.iter().map(String::as_str).collect();
    write_csv_report(&out_dir.join(curves), &header, curve_rows)?;

    let mut sum_header = vec!["start".to_string()];
    sum_header.extend((1..=dim).map(|d| format!("theta0_{d}")));
    sum_header.extend((1..=k).map(|d| format!("monotone_{d}")));
    sum_header.push("max_mixture_increase_rate".into());
    sum_header.push("endpoint_distance".into());
    let sum_rows = reports.iter().enumerate().map(|(s, r)| {
        let mut row = vec![(s + 1).to_string()];
        row.extend(r.theta0.iter().map(|v| fmt_f64(*v)));
        row.extend(r.monotone.iter().map(|m| m.to_string()));
        row.push(fmt_f64(r.max_mixture_increase_rate));
        row.push(fmt_f64(r.endpoint_distance));
        row
    });
    let summary = "loss_dynamics_summary.csv";
    let header: Vec<&str> = sum_header.iter().map(String::as_str).collect();
    write_csv_report(&out_dir.join(summary), &header, sum_rows)?;

    let mut out = ExperimentOutput {
        files: vec![curves.into(), summary.into()],
        ..Default::default()
    };
    let non_monotone = reports.iter().filter(|r| r.monotone.iter().any(|m| !m)).count();
    out.note("non_monotone_trajectories", non_monotone);
    out.note(
        "max_mixture_increase_rate",
        reports.iter().map(|r| r.max_mixture_increase_rate).fold(f64::NEG_INFINITY, f64::max),
    );
    out.note(
        "max_endpoint_distance",
        reports.iter().map(|r| r.endpoint_distance).fold(0.0, f64::max),
    );
    Ok(out)
}
