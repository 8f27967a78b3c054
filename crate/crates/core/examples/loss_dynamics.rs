//! A constant 50/50 mixture always lowers the mixture loss, yet individual
//! domain losses can rise on the way to the common minimizer.

use mixflow::experiments::{default_planar_pair, loss_dynamics_run, ExperimentConfig, ExperimentKind};
use mixflow::flow::IntegratorConfig;
use mixflow::linalg::{gaussian_vector, Prng};
use mixflow::schedule::constant_schedule;

fn main() -> mixflow::Result<()> {
    let doms = default_planar_pair()
        .iter()
        .map(|s| s.build())
        .collect::<mixflow::Result<Vec<_>>>()?;
    let cfg = ExperimentConfig {
        experiment: ExperimentKind::LossDynamics,
        horizon: 40.0,
        integrator: IntegratorConfig {
            h: 1e-2,
            record_every: 20,
            ..Default::default()
        },
        ..Default::default()
    };
    let schedule = constant_schedule(&[0.5, 0.5])?;
    let mut rng = Prng::new(11);
    for start in 1..=4 {
        let theta0 = gaussian_vector(2, &mut rng).scale(2.0);
        let r = loss_dynamics_run(&doms, &schedule, &theta0, &cfg)?;
        println!(
            "start {start}: L1 monotone {:<5} L2 monotone {:<5} mixture rise rate {:.1e}  |θ(T) − θ*| {:.1e}",
            r.monotone[0], r.monotone[1], r.max_mixture_increase_rate, r.endpoint_distance
        );
    }
    Ok(())
}
