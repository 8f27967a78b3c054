use std::path::PathBuf;

use mixflow::commutator::p_value;
use mixflow::domain::{
    combine_domains, gen_synthetic_datasets, make_mlp_domain, HvpConfig, LayerSizes, LossDomain, SyntheticConfig,
    TargetFn,
};
use mixflow::experiments::{build_mlp_domains, ExperimentConfig};
use mixflow::linalg::{gaussian_vector, Prng};

fn shipped() -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/mlp_intervention.json");
    ExperimentConfig::load(&path, &[]).unwrap()
}

#[test]
fn initial_losses_are_pinned() {
    let (a, b, theta) = build_mlp_domains(&shipped()).unwrap();
    let (la, lb) = (a.loss(&theta).unwrap(), b.loss(&theta).unwrap());
    // Golden values for seed 3, n_in 4, n_hidden 16, 256 samples per domain.
    assert!((la - 7.184968455314606e-1).abs() < 1e-12, "{la:e}");
    assert!((lb - 7.205686238887817e-1).abs() < 1e-12, "{lb:e}");
    let (a2, b2, theta2) = build_mlp_domains(&shipped()).unwrap();
    assert_eq!(theta, theta2);
    assert_eq!(la.to_bits(), a2.loss(&theta2).unwrap().to_bits());
    assert_eq!(lb.to_bits(), b2.loss(&theta2).unwrap().to_bits());
}

#[test]
fn identical_datasets_commute() {
    let cfg = SyntheticConfig {
        targets: [TargetFn::Sine, TargetFn::Sine],
        shared_inputs: true,
        ..Default::default()
    };
    let (d1, d2) = gen_synthetic_datasets(17, &cfg).unwrap();
    let sizes = LayerSizes {
        n_in: 4,
        n_hidden: 16,
        n_out: 1,
    };
    let m1 = make_mlp_domain(sizes, d1, None).unwrap();
    let m2 = make_mlp_domain(sizes, d2, None).unwrap();
    let doms: [&dyn LossDomain; 2] = [&m1, &m2];
    let mix = combine_domains(&[0.5, 0.5], &doms).unwrap();
    let mut rng = Prng::new(5);
    for _ in 0..5 {
        let theta = gaussian_vector(sizes.param_dim(), &mut rng);
        let p = p_value(&m1, &m2, &mix, &theta, &HvpConfig::finite_difference()).unwrap();
        assert!(p.abs() < 1e-8, "{p:e}");
    }
}
