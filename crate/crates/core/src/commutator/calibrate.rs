use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::engine::{measure_from_state, ClosedFormFlow, EngineKind, Propagator};
use crate::domain::{combine_domains, make_quadratic_domain, HvpConfig, LossDomain};
use crate::error::{Error, Result};
use crate::linalg::{gaussian_vector, mix_seed, power_law_spectrum, Prng};
use crate::schedule::{constant_schedule, InterventionSpec, SwapOrder};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub seed: u64,
    pub num_seeds: usize,
    pub dim: usize,
    pub spectrum_decay: f64,
    /// Time at which the full swap starts.
    pub t: f64,
    /// Two window lengths; the ratio is extrapolated linearly to zero.
    pub eps_values: [f64; 2],
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            seed: 7,
            num_seeds: 20,
            dim: 100,
            spectrum_decay: 0.7,
            t: 0.3,
            eps_values: [1e-4, 1e-3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub eps_values: [f64; 2],
    /// Median over seeds of `EL¹² / (δ·ε²·P)` at each window length.
    pub median_ratios: [f64; 2],
    /// Median over seeds of the per-seed Richardson extrapolation to `ε = 0`.
    pub extrapolated: f64,
    /// `extrapolated` rounded to three decimals.
    pub coefficient: f64,
    pub num_seeds: usize,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Measures `EL¹²/(δ·ε²·P)` for full swaps on random quadratic pairs at two
/// window lengths and extrapolates to `ε → 0`. The result is the coefficient
/// that makes the prediction exact in the small-window limit.
pub fn calibrate_coefficient(cfg: &CalibrationConfig) -> Result<CalibrationReport> {
    let [e1, e2] = cfg.eps_values;
    if cfg.num_seeds == 0 || !(e1 > 0.0 && e2 > e1) {
        return Err(Error::arg("calibration needs num_seeds >= 1 and 0 < eps_1 < eps_2"));
    }
    let spectrum = power_law_spectrum(cfg.dim, cfg.spectrum_decay)?;
    let per_seed: Vec<[f64; 2]> = (0..cfg.num_seeds)
        .into_par_iter()
        .map(|k| {
            let mut rng = Prng::new(mix_seed(cfg.seed, k as u64));
            let d1 = make_quadratic_domain(&spectrum, &mut rng)?;
            let d2 = make_quadratic_domain(&spectrum, &mut rng)?;
            let theta0 = gaussian_vector(cfg.dim, &mut rng);
            let doms: [&dyn LossDomain; 2] = [&d1, &d2];
            let target = combine_domains(&[0.5, 0.5], &doms)?;
            let base = constant_schedule(&[0.5, 0.5])?;
            let flow = ClosedFormFlow::new(&doms)?;
            let theta_t = flow.span(&base, &theta0, 0.0, cfg.t)?;
            let mut ratios = [0.0; 2];
            for (r, eps) in ratios.iter_mut().zip(cfg.eps_values) {
                let spec = InterventionSpec {
                    t0: cfg.t,
                    eps,
                    delta: 0.5,
                    i: 0,
                    j: 1,
                    order: SwapOrder::IjFirst,
                };
                let rep = measure_from_state(
                    &flow,
                    EngineKind::ClosedForm,
                    &doms,
                    &base,
                    &spec,
                    &[&target],
                    &theta_t,
                    None,
                    1.0,
                    &HvpConfig::exact(),
                )?;
                *r = rep.targets[0].ratio;
            }
            Ok(ratios)
        })
        .collect::<Result<_>>()?;
    let extrapolated = median(
        per_seed
            .iter()
            .map(|[r1, r2]| (e2 * r1 - e1 * r2) / (e2 - e1))
            .collect(),
    );
    Ok(CalibrationReport {
        eps_values: cfg.eps_values,
        median_ratios: [
            median(per_seed.iter().map(|r| r[0]).collect()),
            median(per_seed.iter().map(|r| r[1]).collect()),
        ],
        extrapolated,
        coefficient: (extrapolated * 1000.0).round() / 1000.0,
        num_seeds: cfg.num_seeds,
    })
}
