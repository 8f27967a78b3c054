//! The Lie bracket of two quadratic losses three ways: exact Hessian-vector
//! products, finite differences, and the matrix closed form.

use mixflow::commutator::{lie_bracket_r, p_value, quadratic_r_closed_form};
use mixflow::domain::{combine_domains, make_quadratic_domain, HvpConfig, LossDomain};
use mixflow::linalg::{gaussian_vector, power_law_spectrum, Prng};

fn main() -> mixflow::Result<()> {
    let mut rng = Prng::new(1);
    let spectrum = power_law_spectrum(10, 0.7)?;
    let l1 = make_quadratic_domain(&spectrum, &mut rng)?;
    let l2 = make_quadratic_domain(&spectrum, &mut rng)?;
    let theta = gaussian_vector(10, &mut rng);

    let exact = lie_bracket_r(&l1, &l2, &theta, &HvpConfig::exact())?;
    let fd = lie_bracket_r(&l1, &l2, &theta, &HvpConfig::finite_difference())?;
    let closed = quadratic_r_closed_form(&l1, &l2, &theta)?;
    println!("|R|                      = {:.6e}", exact.r.norm());
    println!("|R_fd - R| / |R|         = {:.2e}", fd.r.sub(&exact.r).norm() / exact.r.norm());
    println!("|R_closed - R| / |R|     = {:.2e}", closed.sub(&exact.r).norm() / exact.r.norm());
    println!("<R, grad L1>, <R, grad L2> = {:.6e}, {:.6e}", exact.dot_grad1, exact.dot_grad2);

    let doms: [&dyn LossDomain; 2] = [&l1, &l2];
    let mix = combine_domains(&[0.5, 0.5], &doms)?;
    let p = p_value(&l1, &l2, &mix, &theta, &HvpConfig::exact())?;
    println!("P(L1, L2; (L1+L2)/2)     = {p:.6e}");
    Ok(())
}
