use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::swap_p_value;
use crate::domain::{combine_domains, HvpConfig, LossDomain};
use crate::error::{check_dim, Error, Result};
use crate::flow::Trajectory;
use crate::report::{fmt_f64, write_csv_report};
use crate::schedule::{InterventionSpec, SwapOrder};

/// Relative tolerance: a pair is flagged when
/// `|p| > tol·‖∇target‖·‖∇(Lᵢ − Lⱼ)‖`.
pub const DEFAULT_SCAN_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recommendation {
    /// Move weight of domain `i` later (domain `j` earlier).
    ShiftILate,
    /// Move weight of domain `j` later.
    ShiftJLate,
}

impl Recommendation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Recommendation::ShiftILate => "shift-i-late",
            Recommendation::ShiftJLate => "shift-j-late",
        }
    }
}

/// A record at which mixing domains `i` and `j` is provably not locally
/// optimal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalityViolation {
    pub t: f64,
    /// 1-based domain indices, `i < j`.
    pub i: usize,
    pub j: usize,
    pub p_value: f64,
    pub w_i: f64,
    pub w_j: f64,
    pub recommendation: Recommendation,
}

impl OptimalityViolation {
    /// The budget-conserving perturbation at `t` that lowers the target to
    /// second order, with `δ = min(wᵢ, wⱼ)/2`.
    pub fn improving_intervention(&self, eps: f64) -> InterventionSpec {
        InterventionSpec {
            t0: self.t,
            eps,
            delta: self.w_i.min(self.w_j) / 2.0,
            i: self.i - 1,
            j: self.j - 1,
            order: match self.recommendation {
                Recommendation::ShiftJLate => SwapOrder::IjFirst,
                Recommendation::ShiftILate => SwapOrder::JiFirst,
            },
        }
    }
}

/// Checks every recorded state of `traj` and every pair `i < j` with both
/// weights positive for a nonzero `P(Lᵢ − Lⱼ, Σₖ wₖLₖ; target)`.
pub fn optimality_scan(
    traj: &Trajectory,
    domains: &[&dyn LossDomain],
    target: &dyn LossDomain,
    tol: f64,
    cfg: &HvpConfig,
) -> Result<Vec<OptimalityViolation>> {
    if !(tol > 0.0) {
        return Err(Error::arg(format!("scan tolerance must be positive, got {tol}")));
    }
    check_dim("scan: domains vs schedule", traj.schedule.num_domains(), domains.len())?;
    if traj.times.len() != traj.checkpoints.len() {
        return Err(Error::arg("trajectory has mismatched times and checkpoints"));
    }
    for c in &traj.checkpoints {
        check_dim("scan: checkpoint dimension", target.dim(), c.len())?;
    }
    let k = domains.len();
    let per_record: Vec<Vec<OptimalityViolation>> = (0..traj.len())
        .into_par_iter()
        .map(|r| {
            let t = traj.times[r];
            let theta = &traj.checkpoints[r];
            let w = traj.schedule.weights_at(t)?;
            let grad_target = target.grad(theta)?.norm();
            let mut found = Vec::new();
            for i in 0..k {
                for j in i + 1..k {
                    if w[i].min(w[j]) <= 0.0 {
                        continue;
                    }
                    let diff = combine_domains(&[1.0, -1.0], &[domains[i], domains[j]])?;
                    let threshold = tol * grad_target * diff.grad(theta)?.norm();
                    let p = swap_p_value(domains, w, i, j, target, theta, cfg)?;
                    if p.abs() > threshold {
                        found.push(OptimalityViolation {
                            t,
                            i: i + 1,
                            j: j + 1,
                            p_value: p,
                            w_i: w[i],
                            w_j: w[j],
                            recommendation: if p < 0.0 {
                                Recommendation::ShiftJLate
                            } else {
                                Recommendation::ShiftILate
                            },
                        });
                    }
                }
            }
            Ok(found)
        })
        .collect::<Result<_>>()?;
    Ok(per_record.into_iter().flatten().collect())
}

pub const VIOLATION_COLUMNS: [&str; 7] = ["t", "i", "j", "p_value", "w_i", "w_j", "recommendation"];

pub fn write_violations_csv(path: &Path, violations: &[OptimalityViolation]) -> Result<()> {
    let rows = violations.iter().map(|v| {
        vec![
            fmt_f64(v.t),
            v.i.to_string(),
            v.j.to_string(),
            fmt_f64(v.p_value),
            fmt_f64(v.w_i),
            fmt_f64(v.w_j),
            v.recommendation.as_str().to_string(),
        ]
    });
    write_csv_report(path, &VIOLATION_COLUMNS, rows)
}
