//! Weight schedules, swap interventions and exact data accounting.

use mixflow::schedule::{swap_intervention, InterventionSpec, SwapOrder, WeightSchedule};

fn main() -> mixflow::Result<()> {
    let base = WeightSchedule::new(vec![0.0, 1.0], vec![vec![0.7, 0.3], vec![0.4, 0.6]])?;
    let spec = InterventionSpec {
        t0: 0.25,
        eps: 0.125,
        delta: 0.2,
        i: 0,
        j: 1,
        order: SwapOrder::IjFirst,
    };
    let swapped = swap_intervention(&base, &spec)?;
    for (t, w) in swapped.breakpoints().iter().zip(swapped.segment_weights()) {
        println!("from t = {t:<6} weights {w:?}");
    }
    let horizon = 2.0;
    println!("base totals    {:?}", base.total_data(horizon)?);
    println!("swapped totals {:?}", swapped.total_data(horizon)?);
    assert_eq!(base.total_data_exact(horizon)?, swapped.total_data_exact(horizon)?);

    // Deserialized schedules are checked on demand rather than rejected.
    let bad: WeightSchedule =
        serde_json::from_str(r#"{"breakpoints": [0.0, 0.5], "weights": [[0.5, 0.5], [0.6, 0.6]]}"#).unwrap();
    for v in bad.validate() {
        println!("invalid: {v}");
    }
    Ok(())
}
