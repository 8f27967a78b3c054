use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{explicit_or_planar, ExperimentConfig, ExperimentOutput};
use crate::commutator::lie_bracket_r;
use crate::domain::{HvpConfig, LossDomain};
use crate::error::{check_dim, Error, Result};
use crate::linalg::ParamVec;
use crate::report::{fmt_f64, write_csv_report};

/// Sign pattern of `(⟨R, ∇L₁⟩, ⟨R, ∇L₂⟩)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    /// Training on domain 2 first, then 1, lowers both losses.
    BothPositive,
    /// Training on domain 1 first, then 2, lowers both losses.
    BothNegative,
    Mixed,
    /// `R = 0`: the flows commute here.
    MixedDegenerate,
}

impl Region {
    pub fn as_str(&self) -> &'static str {
        match self {
            Region::BothPositive => "both-positive",
            Region::BothNegative => "both-negative",
            Region::Mixed => "mixed",
            Region::MixedDegenerate => "mixed-degenerate",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldPoint {
    pub x: f64,
    pub y: f64,
    pub grad1: [f64; 2],
    pub grad2: [f64; 2],
    pub r: [f64; 2],
    pub dot_grad1: f64,
    pub dot_grad2: f64,
    pub region: Region,
}

pub const FIELD_COLUMNS: [&str; 11] = [
    "x", "y", "g1_x", "g1_y", "g2_x", "g2_y", "r_x", "r_y", "dot_grad1", "dot_grad2", "region",
];

/// Gradients, bracket and region label of a planar pair at `(x, y)`.
pub fn field_point(d1: &dyn LossDomain, d2: &dyn LossDomain, x: f64, y: f64, cfg: &HvpConfig) -> Result<FieldPoint> {
    check_dim("field scan (domain 1)", 2, d1.dim())?;
    check_dim("field scan (domain 2)", 2, d2.dim())?;
    let theta = ParamVec::new(vec![x, y])?;
    let g1 = d1.grad(&theta)?;
    let g2 = d2.grad(&theta)?;
    let b = lie_bracket_r(d1, d2, &theta, cfg)?;
    let (p1, p2) = (b.dot_grad1, b.dot_grad2);
    let region = if b.r.norm() == 0.0 {
        Region::MixedDegenerate
    } else if p1 > 0.0 && p2 > 0.0 {
        Region::BothPositive
    } else if p1 < 0.0 && p2 < 0.0 {
        Region::BothNegative
    } else {
        Region::Mixed
    };
    let pair = |v: &ParamVec| [v.as_slice()[0], v.as_slice()[1]];
    Ok(FieldPoint {
        x,
        y,
        grad1: pair(&g1),
        grad2: pair(&g2),
        r: pair(&b.r),
        dot_grad1: p1,
        dot_grad2: p2,
        region,
    })
}

/// Evaluates [`field_point`] on the configured grid and writes
/// `field_scan.csv`.
pub fn run_field_scan(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutput> {
    let doms = explicit_or_planar(cfg)?;
    if doms.len() != 2 || doms.iter().any(|d| d.dim() != 2) {
        return Err(Error::arg("field scan needs two 2-dimensional domains"));
    }
    let hvp_cfg = HvpConfig::exact();
    let points: Vec<FieldPoint> = cfg
        .grid
        .points()
        .into_par_iter()
        .map(|(x, y)| field_point(&doms[0], &doms[1], x, y, &hvp_cfg))
        .collect::<Result<_>>()?;
    let file = "field_scan.csv";
    write_csv_report(
        &out_dir.join(file),
        &FIELD_COLUMNS,
        points.iter().map(|p| {
            let mut row: Vec<String> = [p.x, p.y, p.grad1[0], p.grad1[1], p.grad2[0], p.grad2[1], p.r[0], p.r[1]]
                .into_iter()
                .chain([p.dot_grad1, p.dot_grad2])
                .map(fmt_f64)
                .collect();
            row.push(p.region.as_str().to_string());
            row
        }),
    )?;
    let mut out = ExperimentOutput {
        files: vec![file.into()],
        ..Default::default()
    };
    for region in [Region::BothPositive, Region::BothNegative, Region::Mixed, Region::MixedDegenerate] {
        let n = points.iter().filter(|p| p.region == region).count();
        out.note(&format!("points[{}]", region.as_str()), n);
    }
    Ok(out)
}
