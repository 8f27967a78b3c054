//! Swap interventions during gradient descent on two MLP regression tasks,
//! with the bracket-based prediction of each domain's loss change.

use mixflow::experiments::{run_mlp_intervention, ExperimentConfig, ExperimentKind, MlpSettings};
use mixflow::report::read_csv_report;

fn main() -> mixflow::Result<()> {
    let cfg = ExperimentConfig {
        experiment: ExperimentKind::MlpIntervention,
        delta_values: vec![0.25],
        mlp: MlpSettings {
            checkpoints: vec![500, 2000],
            ..Default::default()
        },
        seed: 3,
        ..Default::default()
    };
    let dir = std::env::temp_dir().join("mixflow-mlp");
    std::fs::create_dir_all(&dir).map_err(|e| mixflow::Error::Io { path: dir.clone(), source: e })?;
    let out = run_mlp_intervention(&cfg, &dir)?;
    let (header, rows) = read_csv_report(&dir.join("mlp_intervention.csv"))?;
    for row in rows {
        for (h, v) in header.iter().zip(&row) {
            if ["step", "el12_1", "el12_2", "pred12_1", "pred12_2"].contains(&h.as_str()) {
                print!("{h} = {v}  ");
            }
        }
        println!();
    }
    println!("sign agreement: {}", out.summary["sign_agreement"]);
    Ok(())
}
