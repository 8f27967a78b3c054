//! Fit the excess-loss coefficient by extrapolating observed/predicted
//! ratios of exact quadratic interventions to zero window length.

use mixflow::commutator::{calibrate_coefficient, CalibrationConfig, CALIBRATED_COEFFICIENT};

fn main() -> mixflow::Result<()> {
    let rep = calibrate_coefficient(&CalibrationConfig::default())?;
    for (eps, r) in rep.eps_values.iter().zip(rep.median_ratios) {
        println!("eps = {eps:e}: median ratio {r:.6}");
    }
    println!("extrapolated {:.6}, fitted c = {:.3} (shipped {CALIBRATED_COEFFICIENT})", rep.extrapolated, rep.coefficient);
    Ok(())
}
