//! Lie brackets of gradient fields, the scalar `P(X, Y; Z)`, excess-loss
//! prediction and the local-optimality scan.
//!
//! All flows are descent flows `θ̇ = −∇L`. With that convention, training
//! on domain 1 for time `t` and then on domain 2 for time `t`, minus the
//! reverse order, equals `t²·R(L₁, L₂) + O(t³)`, where
//! `R(L₁, L₂) = Hess L₂ ∇L₁ − Hess L₁ ∇L₂`.

mod calibrate;
mod engine;
mod scan;

pub use calibrate::{calibrate_coefficient, CalibrationConfig, CalibrationReport};
pub use engine::{
    measure_excess_loss, measure_from_state, ClosedFormFlow, Engine, EngineKind, ExcessLossReport, Propagator,
    TargetExcess,
};
pub use scan::{optimality_scan, write_violations_csv, OptimalityViolation, Recommendation, DEFAULT_SCAN_TOL};

use serde::{Deserialize, Serialize};

use crate::domain::{combine_domains, hvp, HvpConfig, HvpMode, LossDomain, QuadraticDomain};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{mat_mul, mat_vec, ParamVec};

/// Coefficient `c` in `EL ≈ c·δ·ε²·P(Lᵢ − Lⱼ, Σₖ wₖLₖ; L)`, fixed by
/// [`calibrate_coefficient`] (Richardson extrapolation of closed-form
/// quadratic interventions to `ε → 0`).
pub const CALIBRATED_COEFFICIENT: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BracketResult {
    pub r: ParamVec,
    /// `⟨R, ∇L₁⟩`.
    pub dot_grad1: f64,
    /// `⟨R, ∇L₂⟩`.
    pub dot_grad2: f64,
    pub method: HvpMode,
}

/// `R(L₁, L₂)(θ) = Hess L₂ ∇L₁ − Hess L₁ ∇L₂`.
pub fn lie_bracket_r(
    d1: &dyn LossDomain,
    d2: &dyn LossDomain,
    theta: &ParamVec,
    cfg: &HvpConfig,
) -> Result<BracketResult> {
    check_dim("lie_bracket_r", d1.dim(), d2.dim())?;
    let g1 = d1.grad(theta)?;
    let g2 = d2.grad(theta)?;
    let r = hvp(d2, theta, &g1, cfg)?.sub(&hvp(d1, theta, &g2, cfg)?);
    Ok(BracketResult {
        dot_grad1: r.dot(&g1),
        dot_grad2: r.dot(&g2),
        r,
        method: cfg.mode,
    })
}

/// The bracket of two quadratic domains in closed form, through matrix
/// products: `(A₂A₁ − A₁A₂)θ − A₂A₁b₁ + A₁A₂b₂`.
pub fn quadratic_r_closed_form(
    d1: &QuadraticDomain,
    d2: &QuadraticDomain,
    theta: &ParamVec,
) -> Result<ParamVec> {
    check_dim("quadratic_r_closed_form", d1.dim(), d2.dim())?;
    check_dim("quadratic_r_closed_form (theta)", d1.dim(), theta.len())?;
    let a21 = mat_mul(d2.a(), d1.a())?;
    let a12 = mat_mul(d1.a(), d2.a())?;
    let commutator = mat_vec(&a21.sub(&a12)?, theta)?;
    Ok(commutator.sub(&mat_vec(&a21, d1.b())?).add(&mat_vec(&a12, d2.b())?))
}

/// `P(X, Y; Z)(θ) = ⟨R(X, Y)(θ), ∇Z(θ)⟩`.
pub fn p_value(
    x: &dyn LossDomain,
    y: &dyn LossDomain,
    z: &dyn LossDomain,
    theta: &ParamVec,
    cfg: &HvpConfig,
) -> Result<f64> {
    check_dim("p_value", x.dim(), z.dim())?;
    let r = lie_bracket_r(x, y, theta, cfg)?.r;
    Ok(r.dot(&z.grad(theta)?))
}

/// `P(Lᵢ − Lⱼ, Σₖ wₖLₖ; target)(θ)`.
pub fn swap_p_value(
    domains: &[&dyn LossDomain],
    weights: &[f64],
    i: usize,
    j: usize,
    target: &dyn LossDomain,
    theta: &ParamVec,
    cfg: &HvpConfig,
) -> Result<f64> {
    check_dim("swap_p_value (weights)", domains.len(), weights.len())?;
    if i >= domains.len() || j >= domains.len() {
        return Err(Error::arg(format!(
            "domain pair ({}, {}) out of range for {} domains",
            i + 1,
            j + 1,
            domains.len()
        )));
    }
    if i == j {
        return Ok(0.0);
    }
    let diff = combine_domains(&[1.0, -1.0], &[domains[i], domains[j]])?;
    let mix = combine_domains(weights, domains)?;
    p_value(&diff, &mix, target, theta, cfg)
}

/// `c·δ·(ε·γ)²·p`: the excess-loss prediction for the ij-first intervention,
/// with `ε` measured in units of `time_scale` (1 for continuous time, the
/// learning rate for `ε` counted in gradient steps).
pub fn excess_loss_from_p(coefficient: f64, delta: f64, eps: f64, time_scale: f64, p: f64) -> f64 {
    let e = eps * time_scale;
    coefficient * delta * e * e * p
}

/// Predicted `L(θ^ε(t₀+2ε)) − L(θ(t₀+2ε))` for shifting `delta` of weight
/// from `j` to `i` on `[t₀, t₀+ε)` and back on `[t₀+ε, t₀+2ε)`.
///
/// `weights_at_t0` are the base weights on the window; the shift must keep
/// both `wᵢ − δ` and `wⱼ − δ` non-negative.
#[allow(clippy::too_many_arguments)]
pub fn predict_excess_loss(
    domains: &[&dyn LossDomain],
    weights_at_t0: &[f64],
    i: usize,
    j: usize,
    target: &dyn LossDomain,
    theta_at_t0: &ParamVec,
    eps: f64,
    delta: f64,
    coefficient: f64,
    time_scale: f64,
    cfg: &HvpConfig,
) -> Result<f64> {
    if !(coefficient > 0.0) || !(time_scale > 0.0) || !(eps > 0.0) || !(delta >= 0.0) {
        return Err(Error::arg(format!(
            "prediction needs c > 0, γ > 0, ε > 0 and δ ≥ 0 (got c={coefficient}, γ={time_scale}, ε={eps}, δ={delta})"
        )));
    }
    check_dim("predict_excess_loss (weights)", domains.len(), weights_at_t0.len())?;
    if i < domains.len() && j < domains.len() && i != j {
        for k in [i, j] {
            if weights_at_t0[k] - delta < 0.0 {
                return Err(Error::arg(format!(
                    "shift δ = {delta} makes the weight of domain {} negative ({})",
                    k + 1,
                    weights_at_t0[k] - delta
                )));
            }
        }
    }
    if delta == 0.0 {
        return Ok(0.0);
    }
    let p = swap_p_value(domains, weights_at_t0, i, j, target, theta_at_t0, cfg)?;
    Ok(excess_loss_from_p(coefficient, delta, eps, time_scale, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{make_quadratic_domain, quadratic_closed_flow};
    use crate::linalg::{gaussian_vector, power_law_spectrum, DenseMatrix, Prng};

    pub(crate) fn quad_pair(seed: u64, n: usize, decay: f64) -> (QuadraticDomain, QuadraticDomain, ParamVec) {
        let mut rng = Prng::new(seed);
        let spec = power_law_spectrum(n, decay).unwrap();
        let d1 = make_quadratic_domain(&spec, &mut rng).unwrap();
        let d2 = make_quadratic_domain(&spec, &mut rng).unwrap();
        let theta = gaussian_vector(n, &mut rng);
        (d1, d2, theta)
    }

    fn rel(a: &ParamVec, b: &ParamVec) -> f64 {
        a.sub(b).norm() / a.norm().max(b.norm()).max(1e-300)
    }

    #[test]
    fn self_bracket_vanishes() {
        let (d1, _, theta) = quad_pair(1, 5, 0.7);
        let b = lie_bracket_r(&d1, &d1, &theta, &HvpConfig::exact()).unwrap();
        assert_eq!(b.r.norm_inf(), 0.0);
    }

    #[test]
    fn identity_curvatures_give_offset_difference() {
        let b1 = ParamVec::from(vec![1.0, -2.0, 0.5]);
        let b2 = ParamVec::from(vec![0.0, 3.0, 1.0]);
        let d1 = QuadraticDomain::new(DenseMatrix::identity(3), b1.clone()).unwrap();
        let d2 = QuadraticDomain::new(DenseMatrix::identity(3), b2.clone()).unwrap();
        let theta = ParamVec::from(vec![0.3, 0.1, -0.7]);
        let want = b2.sub(&b1);
        let exact = lie_bracket_r(&d1, &d2, &theta, &HvpConfig::exact()).unwrap().r;
        assert!(exact.sub(&want).norm_inf() < 1e-15);
        assert!(quadratic_r_closed_form(&d1, &d2, &theta).unwrap().sub(&want).norm_inf() < 1e-15);
    }

    #[test]
    fn closed_form_special_cases() {
        let d1 = QuadraticDomain::new(DenseMatrix::diag(&[2.0, 1.0]), ParamVec::zeros(2)).unwrap();
        let d2 = QuadraticDomain::new(DenseMatrix::diag(&[0.5, 3.0]), ParamVec::zeros(2)).unwrap();
        let theta = ParamVec::from(vec![1.3, -0.4]);
        assert_eq!(quadratic_r_closed_form(&d1, &d2, &theta).unwrap().norm_inf(), 0.0);
        // θ = 0 and A₁ = A₂ = A: A²(b₂ − b₁).
        let a = DenseMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let b1 = ParamVec::from(vec![1.0, 2.0]);
        let b2 = ParamVec::from(vec![-1.0, 0.5]);
        let e1 = QuadraticDomain::new(a.clone(), b1.clone()).unwrap();
        let e2 = QuadraticDomain::new(a.clone(), b2.clone()).unwrap();
        let want = mat_vec(&a, &mat_vec(&a, &b2.sub(&b1)).unwrap()).unwrap();
        let got = quadratic_r_closed_form(&e1, &e2, &ParamVec::zeros(2)).unwrap();
        assert!(got.sub(&want).norm_inf() < 1e-14);
    }

    #[test]
    fn exact_bracket_matches_closed_form() {
        for seed in 0..10 {
            let (d1, d2, theta) = quad_pair(100 + seed, 8, 0.7);
            let exact = lie_bracket_r(&d1, &d2, &theta, &HvpConfig::exact()).unwrap();
            let closed = quadratic_r_closed_form(&d1, &d2, &theta).unwrap();
            assert!(rel(&exact.r, &closed) < 1e-9);
            assert!((exact.dot_grad1 - exact.r.dot(&d1.grad(&theta).unwrap())).abs() < 1e-15);
        }
    }

    #[test]
    fn closed_form_matches_flow_commutator() {
        let mut rng = Prng::new(7);
        let spec = crate::linalg::Spectrum::new(vec![1.0, 0.6, 0.3]).unwrap();
        let d1 = make_quadratic_domain(&spec, &mut rng).unwrap();
        let d2 = make_quadratic_domain(&spec, &mut rng).unwrap();
        let theta = gaussian_vector(3, &mut rng);
        let t = 1e-4;
        let one_then_two = quadratic_closed_flow(&d2, t, &quadratic_closed_flow(&d1, t, &theta).unwrap()).unwrap();
        let two_then_one = quadratic_closed_flow(&d1, t, &quadratic_closed_flow(&d2, t, &theta).unwrap()).unwrap();
        let numeric = one_then_two.sub(&two_then_one).scale(1.0 / (t * t));
        let closed = quadratic_r_closed_form(&d1, &d2, &theta).unwrap();
        assert!(rel(&numeric, &closed) < 1e-3, "{}", rel(&numeric, &closed));
    }

    #[test]
    fn bracket_antisymmetry() {
        let (d1, d2, theta) = quad_pair(3, 6, 0.8);
        let exact = HvpConfig::exact();
        let ab = lie_bracket_r(&d1, &d2, &theta, &exact).unwrap().r;
        let ba = lie_bracket_r(&d2, &d1, &theta, &exact).unwrap().r;
        assert!(ab.add(&ba).norm_inf() <= 1e-12 * ab.norm_inf());
        let fd = HvpConfig::finite_difference();
        let ab = lie_bracket_r(&d1, &d2, &theta, &fd).unwrap().r;
        let ba = lie_bracket_r(&d2, &d1, &theta, &fd).unwrap().r;
        assert!(ab.add(&ba).norm() <= 1e-6 * ab.norm());
    }

    #[test]
    fn p_antisymmetry_and_bilinearity() {
        let exact = HvpConfig::exact();
        for seed in 0..10 {
            let (d1, d2, theta) = quad_pair(200 + seed, 6, 0.7);
            let l = combine_domains(&[0.5, 0.5], &[&d1, &d2]).unwrap();
            assert_eq!(p_value(&d1, &d1, &l, &theta, &exact).unwrap(), 0.0);
            let p12 = p_value(&d1, &d2, &l, &theta, &exact).unwrap();
            let p21 = p_value(&d2, &d1, &l, &theta, &exact).unwrap();
            assert!((p12 + p21).abs() <= 1e-9 * p12.abs().max(1.0));
            let diff = combine_domains(&[1.0, -1.0], &[&d1, &d2]).unwrap();
            let p_swap = p_value(&diff, &l, &l, &theta, &exact).unwrap();
            assert!((p_swap - p12).abs() <= 1e-9 * p12.abs().max(1.0), "{p_swap} vs {p12}");
        }
    }

    #[test]
    fn trivial_predictions() {
        let (d1, d2, theta) = quad_pair(5, 4, 0.7);
        let doms: [&dyn LossDomain; 2] = [&d1, &d2];
        let l = combine_domains(&[0.5, 0.5], &doms).unwrap();
        let cfg = HvpConfig::exact();
        let w = [0.5, 0.5];
        let p = |i, j, delta| predict_excess_loss(&doms, &w, i, j, &l, &theta, 1e-3, delta, 1.0, 1.0, &cfg);
        assert_eq!(p(0, 1, 0.0).unwrap(), 0.0);
        assert_eq!(p(0, 0, 0.25).unwrap(), 0.0);
        assert!(p(0, 1, 0.6).is_err());
        // Full swap from (½, ½): δ = ½ reduces to ½ε²·P(L₁, L₂; L).
        let want = 0.5 * 1e-6 * p_value(&d1, &d2, &l, &theta, &cfg).unwrap();
        let got = p(0, 1, 0.5).unwrap();
        assert!((got - want).abs() <= 1e-9 * want.abs());
        assert!((p(1, 0, 0.5).unwrap() + got).abs() <= 1e-9 * want.abs());
    }
}
