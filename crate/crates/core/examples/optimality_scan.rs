//! Scan a three-domain schedule for moments where reordering provably helps,
//! then confirm each recommendation with an exact intervention.

use mixflow::commutator::{measure_from_state, optimality_scan, ClosedFormFlow, EngineKind, DEFAULT_SCAN_TOL};
use mixflow::domain::{combine_domains, HvpConfig, LossDomain};
use mixflow::experiments::sample_quadratic_problem;
use mixflow::flow::{integrate_ode, IntegratorConfig};
use mixflow::schedule::{SwapOrder, WeightSchedule};

fn main() -> mixflow::Result<()> {
    let (doms, theta0) = sample_quadratic_problem(5, 0, 12, 0.7, 3)?;
    let refs: Vec<&dyn LossDomain> = doms.iter().map(|d| d as &dyn LossDomain).collect();
    let schedule = WeightSchedule::new(vec![0.0, 0.5], vec![vec![0.6, 0.3, 0.1], vec![0.1, 0.1, 0.8]])?;
    let cfg = IntegratorConfig {
        record_every: 250,
        ..Default::default()
    };
    let traj = integrate_ode(&refs, &schedule, &theta0, 1.0, &cfg)?;
    let target = combine_domains(&[1.0 / 3.0; 3], &refs)?;
    let exact = HvpConfig::exact();
    let flow = ClosedFormFlow::new(&refs)?;
    for v in optimality_scan(&traj, &refs, &target, DEFAULT_SCAN_TOL, &exact)? {
        let spec = v.improving_intervention(1e-3);
        let rec = traj.times.iter().position(|t| *t == v.t).expect("record");
        let rep = measure_from_state(
            &flow,
            EngineKind::ClosedForm,
            &refs,
            &schedule,
            &spec,
            &[&target],
            &traj.checkpoints[rec],
            None,
            1.0,
            &exact,
        )?;
        let change = match spec.order {
            SwapOrder::IjFirst => rep.targets[0].observed_12,
            SwapOrder::JiFirst => rep.targets[0].observed_21,
        };
        println!(
            "t = {:.2}  pair ({}, {})  P = {:+.3e}  {:<13} target change {:+.3e}",
            v.t,
            v.i,
            v.j,
            v.p_value,
            v.recommendation.as_str(),
            change
        );
    }
    Ok(())
}
