//! Observed vs predicted excess loss of full domain swaps on random
//! quadratic pairs. Pass a seed count to shorten the run.

use mixflow::experiments::{run_quad_commutation, ExperimentConfig, ExperimentKind};

fn main() -> mixflow::Result<()> {
    let num_seeds = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let cfg = ExperimentConfig {
        experiment: ExperimentKind::QuadCommutation,
        num_seeds,
        ..Default::default()
    };
    let dir = std::env::temp_dir().join("mixflow-table1");
    std::fs::create_dir_all(&dir).map_err(|e| mixflow::Error::Io { path: dir.clone(), source: e })?;
    let r = run_quad_commutation(&cfg, &dir)?;
    println!("median EL/prediction (10-90 percentile), target (L1+L2)/2, {num_seeds} seeds");
    print!("{:>8}", "Δt \\ t");
    for t in &cfg.t_values {
        print!("{t:>24}");
    }
    println!();
    for &eps in &cfg.eps_values {
        print!("{eps:>8}");
        for &t in &cfg.t_values {
            let c = r.cell("mix", t, eps).expect("cell");
            print!("{:>24}", format!("{:.3} ({:.3}-{:.3})", c.median_ratio, c.p10_ratio, c.p90_ratio));
        }
        println!();
    }
    println!("CSVs in {}", dir.display());
    Ok(())
}
