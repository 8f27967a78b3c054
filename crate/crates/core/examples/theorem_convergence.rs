//! Flow commutator vs `t²R`: the gap shrinks like `t³`.

use mixflow::commutator::lie_bracket_r;
use mixflow::domain::{make_quadratic_domain, HvpConfig};
use mixflow::flow::{flow_map_numeric, IntegratorConfig};
use mixflow::linalg::{gaussian_vector, power_law_spectrum, Prng};

fn main() -> mixflow::Result<()> {
    let mut rng = Prng::new(4);
    let spectrum = power_law_spectrum(10, 0.7)?;
    let l1 = make_quadratic_domain(&spectrum, &mut rng)?;
    let l2 = make_quadratic_domain(&spectrum, &mut rng)?;
    let theta = gaussian_vector(10, &mut rng);
    let r = lie_bracket_r(&l1, &l2, &theta, &HvpConfig::exact())?.r;

    println!("{:>8} {:>14} {:>10}", "t", "error", "error/t^3");
    for t in [1e-1, 1e-2, 1e-3, 1e-4] {
        let cfg = IntegratorConfig {
            h: t / 8.0,
            ..Default::default()
        };
        // Domain 1 for time t then domain 2, minus the reverse order.
        let a = flow_map_numeric(&l2, t, &flow_map_numeric(&l1, t, &theta, &cfg)?, &cfg)?;
        let b = flow_map_numeric(&l1, t, &flow_map_numeric(&l2, t, &theta, &cfg)?, &cfg)?;
        let err = a.sub(&b).sub(&r.scale(t * t)).norm();
        println!("{t:>8.0e} {err:>14.4e} {:>10.4}", err / t.powi(3));
    }
    Ok(())
}
