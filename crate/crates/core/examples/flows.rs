//! Scheduled gradient flow (RK4) against gradient descent on the same
//! schedule, and the exact flow for reference.

use mixflow::commutator::{ClosedFormFlow, Propagator};
use mixflow::domain::LossDomain;
use mixflow::experiments::sample_quadratic_problem;
use mixflow::flow::{discrete_gd, integrate_ode, GdConfig, IntegratorConfig};
use mixflow::schedule::WeightSchedule;

fn main() -> mixflow::Result<()> {
    let (doms, theta0) = sample_quadratic_problem(1, 0, 8, 0.7, 2)?;
    let refs: Vec<&dyn LossDomain> = doms.iter().map(|d| d as &dyn LossDomain).collect();
    let schedule = WeightSchedule::new(vec![0.0, 0.5], vec![vec![1.0, 0.0], vec![0.0, 1.0]])?;

    let ode = integrate_ode(&refs, &schedule, &theta0, 1.0, &IntegratorConfig::default())?;
    let exact = ClosedFormFlow::new(&refs)?.span(&schedule, &theta0, 0.0, 1.0)?;
    println!("RK4 vs exact endpoint: {:.2e}", ode.final_theta().sub(&exact).norm());
    for lr in [1e-1, 1e-2, 1e-3] {
        let gd = GdConfig {
            learning_rate: lr,
            steps: (1.0 / lr).round() as usize,
            record_every: usize::MAX,
        };
        let traj = discrete_gd(&refs, &schedule, &theta0, &gd)?;
        println!("GD γ = {lr:e}: distance to flow {:.2e}", traj.final_theta().sub(&exact).norm());
    }
    let losses = ode.per_domain_losses.last().expect("records");
    println!("final losses {losses:?}");
    Ok(())
}
