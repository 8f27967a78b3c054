//! Loss domains: loss, gradient and Hessian-vector products at a point.

mod combined;
mod dataset;
mod mlp;
mod quadratic;

pub use combined::{combine_domains, CombinedDomain};
pub use dataset::{gen_synthetic_datasets, Dataset, SyntheticConfig, TargetFn};
pub use mlp::{make_mlp_domain, BatchConfig, LayerSizes, MlpDomain};
pub use quadratic::{make_quadratic_domain, quadratic_closed_flow, QuadraticDomain};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::ParamVec;

/// One training domain `L_k` over a shared parameter space.
///
/// Implementations may assume `theta` has length [`LossDomain::dim`]; the
/// free functions [`eval_loss_grad`] and [`hvp`] check it.
pub trait LossDomain: Send + Sync {
    fn dim(&self) -> usize;

    fn loss(&self, theta: &ParamVec) -> Result<f64>;

    fn loss_grad(&self, theta: &ParamVec) -> Result<(f64, ParamVec)>;

    fn grad(&self, theta: &ParamVec) -> Result<ParamVec> {
        Ok(self.loss_grad(theta)?.1)
    }

    fn supports_exact_hvp(&self) -> bool {
        false
    }

    /// Analytic `Hess L(θ) · v`.
    fn hvp_exact(&self, _theta: &ParamVec, _v: &ParamVec) -> Result<ParamVec> {
        Err(Error::Unsupported(
            "exact Hessian-vector products are not available for this domain".into(),
        ))
    }

    fn as_quadratic(&self) -> Option<&QuadraticDomain> {
        None
    }

    /// True when the loss is a quadratic polynomial in `θ`.
    fn is_quadratic(&self) -> bool {
        self.as_quadratic().is_some()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HvpMode {
    Exact,
    FiniteDifference,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HvpConfig {
    pub mode: HvpMode,
    /// Base step of the central difference; scaled by `max(1, ‖θ‖∞)/max(1, ‖v‖∞)`.
    pub fd_step: f64,
}

pub const DEFAULT_FD_STEP: f64 = 1e-4;

impl Default for HvpConfig {
    fn default() -> Self {
        HvpConfig::exact()
    }
}

impl HvpConfig {
    pub fn exact() -> Self {
        HvpConfig {
            mode: HvpMode::Exact,
            fd_step: DEFAULT_FD_STEP,
        }
    }

    pub fn finite_difference() -> Self {
        HvpConfig {
            mode: HvpMode::FiniteDifference,
            fd_step: DEFAULT_FD_STEP,
        }
    }

    /// Exact when every domain supports it, finite differences otherwise.
    pub fn for_domains(domains: &[&dyn LossDomain]) -> Self {
        if domains.iter().all(|d| d.supports_exact_hvp()) {
            HvpConfig::exact()
        } else {
            HvpConfig::finite_difference()
        }
    }
}

pub fn eval_loss_grad(d: &dyn LossDomain, theta: &ParamVec) -> Result<(f64, ParamVec)> {
    check_dim("eval_loss_grad", d.dim(), theta.len())?;
    let (loss, grad) = d.loss_grad(theta)?;
    if !loss.is_finite() || !grad.is_finite() {
        return Err(Error::numeric("non-finite loss or gradient"));
    }
    Ok((loss, grad))
}

pub fn hvp(d: &dyn LossDomain, theta: &ParamVec, v: &ParamVec, cfg: &HvpConfig) -> Result<ParamVec> {
    check_dim("hvp (theta)", d.dim(), theta.len())?;
    check_dim("hvp (v)", d.dim(), v.len())?;
    let out = match cfg.mode {
        HvpMode::Exact => {
            if !d.supports_exact_hvp() {
                return Err(Error::Unsupported(
                    "exact HVP requested for a domain without an analytic Hessian".into(),
                ));
            }
            d.hvp_exact(theta, v)?
        }
        HvpMode::FiniteDifference => fd_hvp(d, theta, v, cfg.fd_step)?,
    };
    if !out.is_finite() {
        return Err(Error::numeric("non-finite Hessian-vector product"));
    }
    Ok(out)
}

/// `(∇L(θ + h v) − ∇L(θ − h v)) / 2h`.
fn fd_hvp(d: &dyn LossDomain, theta: &ParamVec, v: &ParamVec, fd_step: f64) -> Result<ParamVec> {
    if !(fd_step > 0.0 && fd_step.is_finite()) {
        return Err(Error::arg(format!("finite-difference step must be positive, got {fd_step}")));
    }
    let vmax = v.norm_inf();
    if vmax == 0.0 {
        return Ok(ParamVec::zeros(v.len()));
    }
    let h = fd_step * theta.norm_inf().max(1.0) / vmax.max(1.0);
    if !(h >= f64::MIN_POSITIVE) || h * vmax < f64::EPSILON * theta.norm_inf() {
        return Err(Error::arg(format!(
            "finite-difference step underflows (h = {h:e})"
        )));
    }
    let mut plus = theta.clone();
    plus.axpy(h, v);
    let mut minus = theta.clone();
    minus.axpy(-h, v);
    let gp = d.grad(&plus)?;
    let gm = d.grad(&minus)?;
    Ok(gp.sub(&gm).scale(0.5 / h))
}
