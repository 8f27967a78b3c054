use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use super::{base_schedule, coefficient, ExperimentConfig, ExperimentOutput};
use crate::commutator::{measure_from_state, Engine};
use crate::domain::{gen_synthetic_datasets, make_mlp_domain, HvpConfig, LayerSizes, LossDomain, MlpDomain};
use crate::error::{Error, Result};
use crate::linalg::{mix_seed, ParamVec, Prng};
use crate::report::{fmt_f64, write_csv_report};
use crate::schedule::{InterventionSpec, SwapOrder};

/// Predictions with magnitude at or below this are not scored for sign.
pub const PREDICTION_FLOOR: f64 = 1e-8;

pub const MLP_COLUMNS: [&str; 15] = [
    "step", "t", "delta", "loss_1", "loss_2", "el12_1", "el12_2", "el21_1", "el21_2", "pred12_1", "pred12_2",
    "pred21_1", "pred21_2", "p_1", "p_2",
];

/// One checkpoint of the MLP intervention table; per-domain vectors are
/// indexed by the evaluated loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpRow {
    pub step: usize,
    pub t: f64,
    pub delta: f64,
    pub losses: [f64; 2],
    pub el12: [f64; 2],
    pub el21: [f64; 2],
    pub pred12: [f64; 2],
    pub p: [f64; 2],
}

/// The two MLP domains and the shared initialization of a config.
pub fn build_mlp_domains(cfg: &ExperimentConfig) -> Result<(MlpDomain, MlpDomain, ParamVec)> {
    let m = &cfg.mlp;
    let (a, b) = gen_synthetic_datasets(mix_seed(cfg.seed, 0), &m.data)?;
    let sizes = LayerSizes {
        n_in: m.data.n_in,
        n_hidden: m.n_hidden,
        n_out: 1,
    };
    let d1 = make_mlp_domain(sizes, a, m.batching)?;
    let d2 = make_mlp_domain(sizes, b, m.batching)?;
    let theta0 = d1.init_params(&mut Prng::new(mix_seed(cfg.seed, 1)), m.init_scale);
    Ok((d1, d2, theta0))
}

/// Fraction of scored cells whose observed excess loss has the sign of the
/// prediction, and the number of scored cells.
pub fn sign_agreement(rows: &[MlpRow]) -> (f64, usize) {
    let mut scored = 0;
    let mut agree = 0;
    for r in rows {
        for d in 0..2 {
            if r.pred12[d].abs() > PREDICTION_FLOOR {
                scored += 1;
                if r.pred12[d].signum() == r.el12[d].signum() {
                    agree += 1;
                }
            }
        }
    }
    (if scored == 0 { f64::NAN } else { agree as f64 / scored as f64 }, scored)
}

/// Trains the baseline by gradient descent; at every checkpoint step runs
/// both orders of an `N`-step swap and compares per-domain excess losses
/// with `c·δ·(Nγ)²·P`.
pub fn run_mlp_intervention(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutput> {
    let (d1, d2, theta0) = build_mlp_domains(cfg)?;
    let doms: [&dyn LossDomain; 2] = [&d1, &d2];
    let gamma = cfg.gd.learning_rate;
    let engine = Engine::DiscreteGd { learning_rate: gamma };
    let prop = engine.propagator(&doms)?;
    let base = base_schedule(cfg)?;
    let hvp_cfg = HvpConfig::for_domains(&doms);
    let n = cfg.mlp.intervention_steps;

    let mut steps = cfg.mlp.checkpoints.clone();
    steps.sort_unstable();
    steps.dedup();
    let mut rows = Vec::new();
    let (mut theta, mut at) = (theta0, 0usize);
    for step in steps {
        theta = prop.span(&base, &theta, at as f64 * gamma, step as f64 * gamma)?;
        at = step;
        let losses = [d1.loss(&theta)?, d2.loss(&theta)?];
        info!("step {step}: losses {:.6e} {:.6e}", losses[0], losses[1]);
        for &delta in &cfg.delta_values {
            let spec = InterventionSpec {
                t0: step as f64 * gamma,
                eps: n as f64 * gamma,
                delta,
                i: 0,
                j: 1,
                order: SwapOrder::IjFirst,
            };
            let rep = measure_from_state(
                prop.as_ref(),
                engine.kind(),
                &doms,
                &base,
                &spec,
                &doms,
                &theta,
                None,
                coefficient(cfg),
                &hvp_cfg,
            )
            .map_err(|e| match e {
                Error::Numeric { message, last_valid } => Error::Numeric {
                    message: format!("intervention at step {step}: {message}"),
                    last_valid,
                },
                other => other,
            })?;
            let t = &rep.targets;
            rows.push(MlpRow {
                step,
                t: step as f64 * gamma,
                delta,
                losses,
                el12: [t[0].observed_12, t[1].observed_12],
                el21: [t[0].observed_21, t[1].observed_21],
                pred12: [t[0].predicted, t[1].predicted],
                p: [t[0].p_value, t[1].p_value],
            });
        }
    }

    let file = "mlp_intervention.csv";
    write_csv_report(
        &out_dir.join(file),
        &MLP_COLUMNS,
        rows.iter().map(|r| {
            let mut row = vec![r.step.to_string()];
            row.extend(
                [r.t, r.delta]
                    .into_iter()
                    .chain(r.losses)
                    .chain(r.el12)
                    .chain(r.el21)
                    .chain(r.pred12)
                    .chain(r.pred12.map(|p| -p))
                    .chain(r.p)
                    .map(fmt_f64),
            );
            row
        }),
    )?;
    let (agreement, scored) = sign_agreement(&rows);
    let mut out = ExperimentOutput {
        files: vec![file.into()],
        ..Default::default()
    };
    out.note("sign_agreement", agreement);
    out.note("scored_cells", scored);
    out.note("conservation_audits_passed", rows.len());
    Ok(out)
}
