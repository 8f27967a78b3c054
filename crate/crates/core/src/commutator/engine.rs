use std::cell::RefCell;
use std::rc::Rc;

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use super::{excess_loss_from_p, swap_p_value};
use crate::domain::{HvpConfig, LossDomain, QuadraticDomain};
use crate::error::{check_dim, Error, Result};
use crate::flow::{gd_span, integrate_span, GdConfig, IntegratorConfig};
use crate::linalg::{sym_eigh, DenseMatrix, ParamVec, SymEigen};
use crate::schedule::{swap_intervention, InterventionSpec, SwapOrder, WeightSchedule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineKind {
    ClosedForm,
    Ode,
    DiscreteGd,
}

/// How trajectories are produced when measuring excess losses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Engine {
    /// Exact affine flows; all domains must be quadratic.
    ClosedForm,
    Ode(IntegratorConfig),
    /// Step `k` happens at time `k·learning_rate`.
    DiscreteGd { learning_rate: f64 },
}

impl Engine {
    pub fn kind(&self) -> EngineKind {
        match self {
            Engine::ClosedForm => EngineKind::ClosedForm,
            Engine::Ode(_) => EngineKind::Ode,
            Engine::DiscreteGd { .. } => EngineKind::DiscreteGd,
        }
    }

    pub fn propagator<'a>(&self, domains: &'a [&'a dyn LossDomain]) -> Result<Box<dyn Propagator + 'a>> {
        Ok(match *self {
            Engine::ClosedForm => Box::new(ClosedFormFlow::new(domains)?),
            Engine::Ode(cfg) => Box::new(OdeFlow { domains, cfg }),
            Engine::DiscreteGd { learning_rate } => Box::new(GdFlow {
                domains,
                cfg: GdConfig {
                    learning_rate,
                    steps: 0,
                    record_every: 1,
                },
            }),
        })
    }
}

/// Advances a state along a scheduled training run.
pub trait Propagator {
    fn span(&self, schedule: &WeightSchedule, theta: &ParamVec, t_start: f64, t_end: f64) -> Result<ParamVec>;
}

struct OdeFlow<'a> {
    domains: &'a [&'a dyn LossDomain],
    cfg: IntegratorConfig,
}

impl Propagator for OdeFlow<'_> {
    fn span(&self, schedule: &WeightSchedule, theta: &ParamVec, t_start: f64, t_end: f64) -> Result<ParamVec> {
        integrate_span(self.domains, schedule, theta, t_start, t_end, &self.cfg)
    }
}

struct GdFlow<'a> {
    domains: &'a [&'a dyn LossDomain],
    cfg: GdConfig,
}

impl GdFlow<'_> {
    fn step_index(&self, t: f64) -> Result<usize> {
        let k = (t / self.cfg.learning_rate).round();
        if (k * self.cfg.learning_rate - t).abs() > 1e-6 * self.cfg.learning_rate {
            return Err(Error::arg(format!(
                "time {t} is not a whole number of gradient steps of size {}",
                self.cfg.learning_rate
            )));
        }
        Ok(k as usize)
    }
}

impl Propagator for GdFlow<'_> {
    fn span(&self, schedule: &WeightSchedule, theta: &ParamVec, t_start: f64, t_end: f64) -> Result<ParamVec> {
        let (first, last) = (self.step_index(t_start)?, self.step_index(t_end)?);
        gd_span(self.domains, schedule, theta, first, last, &self.cfg)
    }
}

/// Exact scheduled flows for quadratic domains. On a segment with weights `w`
/// the field is affine, `−Σₖ wₖAₖ(θ − bₖ)`, and its time-`τ` flow is
/// `θ − ψ_τ(A_w)·g` with `g = Σₖ wₖ∇Lₖ(θ)` and `ψ_τ(λ) = (1 − e^{−τλ})/λ`,
/// evaluated in the eigenbasis of `A_w` without inverting it.
///
/// Eigendecompositions are cached per weight vector; not thread-safe, so
/// build one per worker.
pub struct ClosedFormFlow<'a> {
    quads: Vec<&'a QuadraticDomain>,
    cache: RefCell<Vec<(Vec<f64>, Rc<SymEigen>)>>,
}

impl<'a> ClosedFormFlow<'a> {
    pub fn new(domains: &[&'a dyn LossDomain]) -> Result<Self> {
        let quads = domains
            .iter()
            .map(|d| {
                d.as_quadratic().ok_or_else(|| {
                    Error::Unsupported("the closed-form engine needs quadratic domains".into())
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if quads.is_empty() {
            return Err(Error::arg("closed-form engine needs at least one domain"));
        }
        Ok(ClosedFormFlow {
            quads,
            cache: RefCell::new(Vec::new()),
        })
    }

    fn eigen_for(&self, weights: &[f64]) -> Result<Rc<SymEigen>> {
        if let Some((_, e)) = self.cache.borrow().iter().find(|(w, _)| w == weights) {
            return Ok(e.clone());
        }
        let eigen = match weights.iter().position(|w| *w == 1.0) {
            Some(k) if weights.iter().filter(|w| **w != 0.0).count() == 1 => self.quads[k].eigen().clone(),
            _ => {
                let n = self.quads[0].dim();
                let mut a = DenseMatrix::zeros(n);
                for (q, w) in self.quads.iter().zip(weights) {
                    if *w != 0.0 {
                        a = a.add(&q.a().scale(*w))?;
                    }
                }
                sym_eigh(&a)?
            }
        };
        let eigen = Rc::new(eigen);
        self.cache.borrow_mut().push((weights.to_vec(), eigen.clone()));
        Ok(eigen)
    }

    /// Time-`tau` flow of `−Σₖ wₖ∇Lₖ`.
    pub fn advance(&self, weights: &[f64], theta: &ParamVec, tau: f64) -> Result<ParamVec> {
        check_dim("closed-form flow (weights)", self.quads.len(), weights.len())?;
        if tau == 0.0 {
            return Ok(theta.clone());
        }
        let mut g = ParamVec::zeros(theta.len());
        for (q, w) in self.quads.iter().zip(weights) {
            if *w != 0.0 {
                g.axpy(*w, &q.grad(theta)?);
            }
        }
        let eigen = self.eigen_for(weights)?;
        if let Some(lam) = eigen.values.last() {
            if -tau * lam > 709.0 {
                return Err(Error::numeric(format!("closed-form flow overflows at τ = {tau}")));
            }
        }
        let step = eigen.apply_fn(&g, |lam| {
            if lam * tau == 0.0 {
                tau
            } else {
                -(-tau * lam).exp_m1() / lam
            }
        });
        let out = theta.sub(&step);
        if !out.is_finite() {
            return Err(Error::numeric("closed-form flow produced non-finite values"));
        }
        Ok(out)
    }
}

impl Propagator for ClosedFormFlow<'_> {
    fn span(&self, schedule: &WeightSchedule, theta: &ParamVec, t_start: f64, t_end: f64) -> Result<ParamVec> {
        if !(t_start >= 0.0 && t_end >= t_start) {
            return Err(Error::arg(format!("bad span [{t_start}, {t_end}]")));
        }
        let mut x = theta.clone();
        let mut t = t_start;
        while t < t_end {
            let seg_end = schedule.next_breakpoint(t).map_or(t_end, |b| b.min(t_end));
            x = self.advance(schedule.weights_at(t)?, &x, seg_end - t)?;
            t = seg_end;
        }
        Ok(x)
    }
}

/// Excess losses of one target under both orders of a swap intervention.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetExcess {
    /// `L(θ₁₂) − L(θ_base)`, i-up window first.
    pub observed_12: f64,
    /// `L(θ₂₁) − L(θ_base)`.
    pub observed_21: f64,
    /// `P(Lᵢ − Lⱼ, Σₖ wₖ(t₀)Lₖ; L)` at `θ(t₀)`.
    pub p_value: f64,
    /// Prediction for `observed_12`; the ji-first prediction is its negative.
    pub predicted: f64,
    /// `observed_12 / predicted`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcessLossReport {
    pub t0: f64,
    pub eps: f64,
    pub delta: f64,
    /// 1-based domain indices.
    pub i: usize,
    pub j: usize,
    pub t_eval: f64,
    pub engine: EngineKind,
    pub calibrated_coefficient: f64,
    /// Per-domain data totals at `t_eval`, identical for all three runs.
    pub total_data: Vec<f64>,
    pub targets: Vec<TargetExcess>,
}

/// Difference `L(x) − L(y)`; exact trapezoid form for quadratic targets,
/// which avoids cancelling two large losses.
fn loss_difference(target: &dyn LossDomain, x: &ParamVec, y: &ParamVec) -> Result<f64> {
    if target.is_quadratic() {
        let gx = target.grad(x)?;
        let gy = target.grad(y)?;
        Ok(0.5 * gx.add(&gy).dot(&x.sub(y)))
    } else {
        Ok(target.loss(x)? - target.loss(y)?)
    }
}

/// Runs the base schedule and both orders of the intervention from `θ0`
/// (at time 0) and compares target losses at `t_eval` (default: the end of
/// the intervention window).
#[allow(clippy::too_many_arguments)]
pub fn measure_excess_loss(
    domains: &[&dyn LossDomain],
    base: &WeightSchedule,
    spec: &InterventionSpec,
    targets: &[&dyn LossDomain],
    theta0: &ParamVec,
    t_eval: Option<f64>,
    engine: &Engine,
    coefficient: f64,
    hvp_cfg: &HvpConfig,
) -> Result<ExcessLossReport> {
    let prop = engine.propagator(domains)?;
    let (t0, _, _) = spec.window()?;
    let theta_t0 = prop.span(base, theta0, 0.0, t0)?;
    measure_from_state(
        prop.as_ref(),
        engine.kind(),
        domains,
        base,
        spec,
        targets,
        &theta_t0,
        t_eval,
        coefficient,
        hvp_cfg,
    )
}

/// As [`measure_excess_loss`], starting from a known state at the window
/// start. `spec.order` is ignored: both orders are measured.
#[allow(clippy::too_many_arguments)]
pub fn measure_from_state(
    prop: &dyn Propagator,
    engine: EngineKind,
    domains: &[&dyn LossDomain],
    base: &WeightSchedule,
    spec: &InterventionSpec,
    targets: &[&dyn LossDomain],
    theta_t0: &ParamVec,
    t_eval: Option<f64>,
    coefficient: f64,
    hvp_cfg: &HvpConfig,
) -> Result<ExcessLossReport> {
    let (t0, t1, t2) = spec.window()?;
    let t_eval = match t_eval {
        None => t2,
        Some(t) if t >= t2 => t,
        Some(t) if t >= t2 - 1e-12 * t2.max(1.0) => t2,
        Some(t) => {
            return Err(Error::arg(format!(
                "evaluation time {t} precedes the end of the intervention window {t2}"
            )))
        }
    };
    let ij = swap_intervention(
        base,
        &InterventionSpec {
            order: SwapOrder::IjFirst,
            ..*spec
        },
    )?;
    let ji = swap_intervention(
        base,
        &InterventionSpec {
            order: SwapOrder::JiFirst,
            ..*spec
        },
    )?;
    let totals: Vec<Vec<BigRational>> = [base, &ij, &ji]
        .iter()
        .map(|s| s.total_data_exact(t_eval))
        .collect::<Result<_>>()?;
    if totals[0] != totals[1] || totals[0] != totals[2] {
        return Err(Error::Internal(
            "intervention changed the per-domain data totals".into(),
        ));
    }

    let theta_base = prop.span(base, theta_t0, t0, t_eval)?;
    let theta_12 = prop.span(&ij, theta_t0, t0, t_eval)?;
    let theta_21 = prop.span(&ji, theta_t0, t0, t_eval)?;
    let weights = base.weights_at(t0)?;
    let eps = t1 - t0;

    let mut out = Vec::with_capacity(targets.len());
    for target in targets {
        let p = swap_p_value(domains, weights, spec.i, spec.j, *target, theta_t0, hvp_cfg)?;
        let predicted = excess_loss_from_p(coefficient, spec.delta, eps, 1.0, p);
        let observed_12 = loss_difference(*target, &theta_12, &theta_base)?;
        let observed_21 = loss_difference(*target, &theta_21, &theta_base)?;
        out.push(TargetExcess {
            observed_12,
            observed_21,
            p_value: p,
            predicted,
            ratio: observed_12 / predicted,
        });
    }
    Ok(ExcessLossReport {
        t0,
        eps,
        delta: spec.delta,
        i: spec.i + 1,
        j: spec.j + 1,
        t_eval,
        engine,
        calibrated_coefficient: coefficient,
        total_data: base.total_data(t_eval)?,
        targets: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::commutator::CALIBRATED_COEFFICIENT;
    use crate::domain::{combine_domains, make_quadratic_domain, quadratic_closed_flow};
    use crate::flow::Method;
    use crate::linalg::{gaussian_vector, power_law_spectrum, Prng};
    use crate::schedule::constant_schedule;

    fn setup(seed: u64, n: usize) -> (QuadraticDomain, QuadraticDomain, ParamVec) {
        let mut rng = Prng::new(seed);
        let spec = power_law_spectrum(n, 0.7).unwrap();
        let d1 = make_quadratic_domain(&spec, &mut rng).unwrap();
        let d2 = make_quadratic_domain(&spec, &mut rng).unwrap();
        (d1, d2, gaussian_vector(n, &mut rng))
    }

    fn swap(t0: f64, eps: f64, delta: f64) -> InterventionSpec {
        InterventionSpec {
            t0,
            eps,
            delta,
            i: 0,
            j: 1,
            order: SwapOrder::IjFirst,
        }
    }

    #[test]
    fn one_hot_flow_matches_member_flow() {
        let (d1, d2, theta) = setup(1, 6);
        let doms: [&dyn LossDomain; 2] = [&d1, &d2];
        let f = ClosedFormFlow::new(&doms).unwrap();
        let got = f.advance(&[1.0, 0.0], &theta, 0.7).unwrap();
        let want = quadratic_closed_flow(&d1, 0.7, &theta).unwrap();
        assert!(got.sub(&want).norm_inf() < 1e-13);
    }

    #[test]
    fn mixed_flow_matches_rk4() {
        let (d1, d2, theta) = setup(2, 6);
        let doms: [&dyn LossDomain; 2] = [&d1, &d2];
        let s = constant_schedule(&[0.3, 0.7]).unwrap();
        let closed = ClosedFormFlow::new(&doms).unwrap().span(&s, &theta, 0.0, 0.9).unwrap();
        let cfg = IntegratorConfig {
            method: Method::Rk4,
            h: 1e-3,
            record_every: 1,
        };
        let ode = integrate_span(&doms, &s, &theta, 0.0, 0.9, &cfg).unwrap();
        assert!(closed.sub(&ode).norm_inf() < 1e-10);
    }

    #[test]
    fn null_and_commuting_interventions() {
        let (d1, d2, theta) = setup(3, 5);
        let doms: [&dyn LossDomain; 2] = [&d1, &d2];
        let l = combine_domains(&[0.5, 0.5], &doms).unwrap();
        let base = constant_schedule(&[0.5, 0.5]).unwrap();
        let cfg = HvpConfig::exact();
        let r = measure_excess_loss(&doms, &base, &swap(0.2, 0.01, 0.0), &[&l], &theta, None, &Engine::ClosedForm, 1.0, &cfg)
            .unwrap();
        assert_eq!(r.targets[0].observed_12, 0.0);
        assert_eq!(r.targets[0].observed_21, 0.0);

        let same: [&dyn LossDomain; 2] = [&d1, &d1];
        let r = measure_excess_loss(&same, &base, &swap(0.2, 0.01, 0.5), &[&d1], &theta, None, &Engine::ClosedForm, 1.0, &cfg)
            .unwrap();
        assert!(r.targets[0].observed_12.abs() < 1e-12 && r.targets[0].observed_21.abs() < 1e-12);
    }

    #[test]
    fn small_window_ratio_is_near_one() {
        let (d1, d2, theta) = setup(4, 20);
        let doms: [&dyn LossDomain; 2] = [&d1, &d2];
        let l = combine_domains(&[0.5, 0.5], &doms).unwrap();
        let base = constant_schedule(&[0.5, 0.5]).unwrap();
        let r = measure_excess_loss(
            &doms,
            &base,
            &swap(0.3, 1e-3, 0.5),
            &[&l, &d1, &d2],
            &theta,
            None,
            &Engine::ClosedForm,
            CALIBRATED_COEFFICIENT,
            &HvpConfig::exact(),
        )
        .unwrap();
        let t = &r.targets[0];
        assert!((t.ratio - 1.0).abs() < 5e-3, "ratio {}", t.ratio);
        assert!(((t.observed_21 / -t.predicted) - 1.0).abs() < 5e-3);
        assert!(r.total_data.iter().all(|v| (v - 0.151).abs() < 1e-15));
    }

    #[test]
    fn engines_agree() {
        let (d1, d2, theta) = setup(5, 4);
        let doms: [&dyn LossDomain; 2] = [&d1, &d2];
        let base = constant_schedule(&[0.5, 0.5]).unwrap();
        let spec = swap(0.25, 0.125, 0.5);
        let cfg = HvpConfig::exact();
        let run = |e: &Engine| {
            measure_excess_loss(&doms, &base, &spec, &[&d1], &theta, Some(0.75), e, 1.0, &cfg)
                .unwrap()
                .targets[0]
                .observed_12
        };
        let closed = run(&Engine::ClosedForm);
        let ode = run(&Engine::Ode(IntegratorConfig::default()));
        assert!((closed - ode).abs() < 1e-10 * closed.abs().max(1.0));
        let gd = run(&Engine::DiscreteGd { learning_rate: 1.0 / 1024.0 });
        assert!((closed - gd).abs() < 2e-2 * closed.abs(), "{closed} vs {gd}");
    }

    #[test]
    fn closed_form_rejects_non_quadratic() {
        let (d1, d2, _) = setup(6, 3);
        let c = combine_domains(&[1.0], &[&d1]).unwrap();
        let doms: [&dyn LossDomain; 2] = [&c, &d2];
        assert!(matches!(ClosedFormFlow::new(&doms), Err(Error::Unsupported(_))));
    }
}
