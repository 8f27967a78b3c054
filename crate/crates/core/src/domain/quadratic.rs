use std::sync::OnceLock;

use super::LossDomain;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{
    gaussian_vector, mat_mul, mat_vec_unchecked, random_orthogonal, sym_eigh, DenseMatrix,
    ParamVec, Prng, Spectrum, SymEigen,
};

/// `L(θ) = ½ (θ − b)ᵀ A (θ − b)` with symmetric positive-definite `A`.
#[derive(Debug)]
pub struct QuadraticDomain {
    a: DenseMatrix,
    b: ParamVec,
    eigen: OnceLock<SymEigen>,
}

impl Clone for QuadraticDomain {
    fn clone(&self) -> Self {
        let eigen = OnceLock::new();
        if let Some(e) = self.eigen.get() {
            let _ = eigen.set(e.clone());
        }
        QuadraticDomain {
            a: self.a.clone(),
            b: self.b.clone(),
            eigen,
        }
    }
}

impl QuadraticDomain {
    /// Validates symmetry and positive-definiteness (one eigendecomposition,
    /// cached for later flow evaluations).
    pub fn new(a: DenseMatrix, b: ParamVec) -> Result<Self> {
        check_dim("quadratic domain", a.n(), b.len())?;
        if !b.is_finite() {
            return Err(Error::arg("quadratic minimizer has non-finite entries"));
        }
        let eigen = sym_eigh(&a)?;
        if let Some(min) = eigen.values.last() {
            if *min <= 0.0 {
                return Err(Error::arg(format!(
                    "quadratic curvature must be positive definite (smallest eigenvalue {min:e})"
                )));
            }
        }
        let d = QuadraticDomain {
            a: a.symmetrized(),
            b,
            eigen: OnceLock::new(),
        };
        let _ = d.eigen.set(eigen);
        Ok(d)
    }

    /// Builds `A = Q diag(λ) Qᵀ` from a known orthonormal `Q`, keeping the
    /// exact spectrum for flow evaluation.
    pub fn from_eigen(values: &[f64], q: DenseMatrix, b: ParamVec) -> Result<Self> {
        check_dim("quadratic domain", q.n(), b.len())?;
        if values.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::arg("quadratic curvature must be positive definite"));
        }
        let eigen = SymEigen::from_parts(values.to_vec(), q)?;
        let a = eigen.reconstruct();
        let d = QuadraticDomain {
            a,
            b,
            eigen: OnceLock::new(),
        };
        let _ = d.eigen.set(eigen);
        Ok(d)
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn b(&self) -> &ParamVec {
        &self.b
    }

    pub fn eigen(&self) -> &SymEigen {
        self.eigen
            .get_or_init(|| sym_eigh(&self.a).expect("curvature validated at construction"))
    }

    fn residual(&self, theta: &ParamVec) -> ParamVec {
        theta.sub(&self.b)
    }
}

impl LossDomain for QuadraticDomain {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn loss(&self, theta: &ParamVec) -> Result<f64> {
        Ok(self.loss_grad(theta)?.0)
    }

    fn loss_grad(&self, theta: &ParamVec) -> Result<(f64, ParamVec)> {
        check_dim("quadratic loss", self.dim(), theta.len())?;
        let r = self.residual(theta);
        let g = mat_vec_unchecked(&self.a, &r);
        Ok((0.5 * r.dot(&g), g))
    }

    fn supports_exact_hvp(&self) -> bool {
        true
    }

    fn hvp_exact(&self, _theta: &ParamVec, v: &ParamVec) -> Result<ParamVec> {
        check_dim("quadratic hvp", self.dim(), v.len())?;
        Ok(mat_vec_unchecked(&self.a, v))
    }

    fn as_quadratic(&self) -> Option<&QuadraticDomain> {
        Some(self)
    }
}

/// Samples `A = Cᵀ diag(Λ) C` with `C` Haar-orthogonal and `b ~ N(0, I)`.
///
/// The curvature is conjugated by the sampled `C` on both sides, so `A` is
/// symmetric positive definite with spectrum exactly `Λ`.
pub fn make_quadratic_domain(spec: &Spectrum, rng: &mut Prng) -> Result<QuadraticDomain> {
    let n = spec.len();
    let c = random_orthogonal(n, rng);
    let b = gaussian_vector(n, rng);
    // A = Cᵀ Λ C, so the eigenvectors are the columns of Cᵀ.
    QuadraticDomain::from_eigen(spec.values(), c.transpose(), b)
}

/// Time-`tau` flow of the descent field `−∇L`: `b + e^{−τA}(θ − b)`.
pub fn quadratic_closed_flow(d: &QuadraticDomain, tau: f64, theta: &ParamVec) -> Result<ParamVec> {
    check_dim("quadratic_closed_flow", d.dim(), theta.len())?;
    if tau == 0.0 {
        return Ok(theta.clone());
    }
    let eigen = d.eigen();
    eigen.check_exp(-tau)?;
    Ok(eigen.apply_exp(-tau, &d.residual(theta)).add(&d.b))
}

/// `Cᵀ diag(Λ) C` through explicit products; used only to cross-check the
/// eigen-based construction.
#[allow(dead_code)]
pub(crate) fn conjugate_explicit(values: &[f64], c: &DenseMatrix) -> DenseMatrix {
    let lam = DenseMatrix::diag(values);
    mat_mul(&mat_mul(&c.transpose(), &lam).unwrap(), c).unwrap()
}

#[cfg(test)]
mod tests {
    use super::super::testutil::{fd_partial, rel_err};
    use super::super::{eval_loss_grad, hvp, HvpConfig};
    use super::*;
    use crate::linalg::power_law_spectrum;

    fn diag_domain() -> QuadraticDomain {
        QuadraticDomain::new(DenseMatrix::diag(&[2.0, 1.0]), ParamVec::zeros(2)).unwrap()
    }

    #[test]
    fn loss_and_grad_hand_case() {
        let d = diag_domain();
        let (l, g) = eval_loss_grad(&d, &ParamVec::from(vec![1.0, 1.0])).unwrap();
        assert_eq!(l, 1.5);
        assert_eq!(g.as_slice(), &[2.0, 1.0]);
        let (l0, g0) = eval_loss_grad(&d, &ParamVec::zeros(2)).unwrap();
        assert_eq!(l0, 0.0);
        assert_eq!(g0.as_slice(), &[0.0, 0.0]);
        assert!(eval_loss_grad(&d, &ParamVec::zeros(3)).is_err());
    }

    #[test]
    fn exact_hvp_is_constant() {
        let d = diag_domain();
        let cfg = HvpConfig::exact();
        for theta in [vec![0.0, 0.0], vec![5.0, -3.0]] {
            let hv = hvp(&d, &theta.into(), &ParamVec::from(vec![1.0, 0.0]), &cfg).unwrap();
            assert_eq!(hv.as_slice(), &[2.0, 0.0]);
        }
        let z = hvp(&d, &ParamVec::from(vec![1.0, 2.0]), &ParamVec::zeros(2), &cfg).unwrap();
        assert_eq!(z.as_slice(), &[0.0, 0.0]);
        let zf = hvp(
            &d,
            &ParamVec::from(vec![1.0, 2.0]),
            &ParamVec::zeros(2),
            &HvpConfig::finite_difference(),
        )
        .unwrap();
        assert_eq!(zf.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn fd_hvp_matches_exact() {
        let mut rng = Prng::new(100);
        let d = make_quadratic_domain(&power_law_spectrum(20, 0.8).unwrap(), &mut rng).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let theta = gaussian_vector(20, &mut rng).scale(3.0);
            let v = gaussian_vector(20, &mut rng);
            let ex = hvp(&d, &theta, &v, &HvpConfig::exact()).unwrap();
            let fd = hvp(&d, &theta, &v, &HvpConfig::finite_difference()).unwrap();
            worst = worst.max(ex.sub(&fd).norm_inf() / ex.norm_inf());
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn sampled_spectrum_is_preserved() {
        let mut rng = Prng::new(7);
        let spec = power_law_spectrum(100, 0.7).unwrap();
        let d = make_quadratic_domain(&spec, &mut rng).unwrap();
        assert!(d.a().max_asymmetry() <= 1e-15);
        // Independent route: Jacobi on the assembled matrix.
        let e = sym_eigh(d.a()).unwrap();
        for (got, want) in e.values.iter().zip(spec.values()) {
            assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        }
        assert!((e.values[0] - 1.0).abs() < 1e-12);
        // The smallest eigenvalue (0.7^99 ≈ 4.6e-16) sits at the rounding
        // floor of the assembled matrix, so the condition number is only
        // determined up to that floor.
        let smallest = *e.values.last().unwrap();
        assert!((smallest - 0.7f64.powi(99)).abs() < 1e-14);
    }

    #[test]
    fn explicit_conjugation_agrees() {
        let mut rng = Prng::new(12);
        let spec = power_law_spectrum(8, 0.6).unwrap();
        let c = random_orthogonal(8, &mut rng);
        let b = gaussian_vector(8, &mut rng);
        let d = QuadraticDomain::from_eigen(spec.values(), c.transpose(), b).unwrap();
        let explicit = conjugate_explicit(spec.values(), &c);
        assert!(d.a().sub(&explicit).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn isotropic_spectrum_gives_identity() {
        let mut rng = Prng::new(5);
        let d = make_quadratic_domain(&power_law_spectrum(6, 1.0).unwrap(), &mut rng).unwrap();
        assert!(d.a().sub(&DenseMatrix::identity(6)).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn closed_flow_limits() {
        let mut rng = Prng::new(21);
        let d = make_quadratic_domain(&power_law_spectrum(10, 0.7).unwrap(), &mut rng).unwrap();
        let theta = gaussian_vector(10, &mut rng);
        assert_eq!(quadratic_closed_flow(&d, 0.0, &theta).unwrap(), theta);
        // Slowest rate is 0.7^9 ≈ 0.04, so τ = 1000 contracts by e^{-40}.
        let far = quadratic_closed_flow(&d, 1e3, &theta).unwrap();
        assert!(far.sub(d.b()).norm_inf() < 1e-6);
        assert!(quadratic_closed_flow(&d, -1e6, &theta).unwrap_err().is_numeric());
    }

    fn rk4_quadratic(d: &QuadraticDomain, theta: &ParamVec, tau: f64, h: f64) -> ParamVec {
        let field = |x: &ParamVec| d.grad(x).unwrap().scale(-1.0);
        let steps = (tau / h).round() as usize;
        let mut x = theta.clone();
        for _ in 0..steps {
            let k1 = field(&x);
            let k2 = field(&x.add(&k1.scale(h / 2.0)));
            let k3 = field(&x.add(&k2.scale(h / 2.0)));
            let k4 = field(&x.add(&k3.scale(h)));
            let incr = k1.add(&k2.scale(2.0)).add(&k3.scale(2.0)).add(&k4).scale(h / 6.0);
            x = x.add(&incr);
        }
        x
    }

    #[test]
    fn closed_flow_matches_rk4() {
        let mut rng = Prng::new(33);
        let d = make_quadratic_domain(&power_law_spectrum(5, 0.7).unwrap(), &mut rng).unwrap();
        let theta = gaussian_vector(5, &mut rng);
        let closed = quadratic_closed_flow(&d, 0.5, &theta).unwrap();
        let rk = rk4_quadratic(&d, &theta, 0.5, 1e-4);
        assert!(closed.sub(&rk).norm_inf() < 1e-8);
    }

    #[test]
    fn loss_non_increasing_along_flow() {
        let mut rng = Prng::new(40);
        let d = make_quadratic_domain(&power_law_spectrum(12, 0.75).unwrap(), &mut rng).unwrap();
        let theta = gaussian_vector(12, &mut rng).scale(2.0);
        let mut prev = f64::INFINITY;
        for k in 0..200 {
            let l = d.loss(&quadratic_closed_flow(&d, k as f64 * 0.05, &theta).unwrap()).unwrap();
            assert!(l <= prev + 1e-15);
            assert!(l >= 0.0);
            prev = l;
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = Prng::new(44);
        let d = make_quadratic_domain(&power_law_spectrum(30, 0.8).unwrap(), &mut rng).unwrap();
        for _ in 0..10 {
            let theta = gaussian_vector(30, &mut rng);
            let g = d.grad(&theta).unwrap();
            let floor = 1e-3 * g.norm_inf();
            for _ in 0..20 {
                let i = rng.next_index(30);
                let fd = fd_partial(&d, &theta, i, 1e-5);
                assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs().max(floor), "{}", rel_err(fd, g[i]));
            }
        }
    }

    #[test]
    fn rejects_indefinite_or_asymmetric() {
        assert!(QuadraticDomain::new(DenseMatrix::diag(&[1.0, -1.0]), ParamVec::zeros(2)).is_err());
        let asym = DenseMatrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(QuadraticDomain::new(asym, ParamVec::zeros(2)).is_err());
    }
}
