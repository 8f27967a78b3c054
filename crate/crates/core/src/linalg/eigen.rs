//! Cyclic Jacobi eigensolver for symmetric matrices and the spectral
//! functions built on top of it.

use super::{DenseMatrix, ParamVec};
use crate::error::{check_dim, Error, Result};

pub const JACOBI_MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-10;
const OFF_DIAGONAL_TOL: f64 = 1e-12;
/// `ln(f64::MAX)`, beyond which `exp` overflows.
const EXP_LIMIT: f64 = 709.78;

/// `A = Q · diag(values) · Qᵀ` with eigenvalues sorted descending and the
/// eigenvectors stored as the columns of `q`.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub q: DenseMatrix,
}

impl SymEigen {
    /// Wraps an eigendecomposition known by construction. Columns of `q` must
    /// be orthonormal; values are re-sorted descending together with `q`.
    pub fn from_parts(values: Vec<f64>, q: DenseMatrix) -> Result<Self> {
        check_dim("eigendecomposition", q.n(), values.len())?;
        Ok(sorted(values, q))
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// `Q · diag(f(λ)) · Qᵀ · v` without forming the matrix.
    pub fn apply_fn(&self, v: &[f64], f: impl Fn(f64) -> f64) -> ParamVec {
        let n = self.n();
        assert_eq!(v.len(), n, "apply_fn: length mismatch");
        let mut coeffs = vec![0.0; n];
        for i in 0..n {
            let row = self.q.row(i);
            let vi = v[i];
            for (c, qij) in coeffs.iter_mut().zip(row) {
                *c += qij * vi;
            }
        }
        for (c, lam) in coeffs.iter_mut().zip(&self.values) {
            *c *= f(*lam);
        }
        (0..n)
            .map(|i| self.q.row(i).iter().zip(&coeffs).map(|(a, b)| a * b).sum())
            .collect::<Vec<f64>>()
            .into()
    }

    /// `e^{tA} v`.
    pub fn apply_exp(&self, t: f64, v: &[f64]) -> ParamVec {
        self.apply_fn(v, |lam| (t * lam).exp())
    }

    pub fn matrix_fn(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        let n = self.n();
        let fv: Vec<f64> = self.values.iter().map(|l| f(*l)).collect();
        let mut out = DenseMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += self.q.get(i, k) * fv[k] * self.q.get(j, k);
                }
                out.set(i, j, acc);
                out.set(j, i, acc);
            }
        }
        out
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        self.matrix_fn(|l| l)
    }

    pub fn exp_matrix(&self, t: f64) -> Result<DenseMatrix> {
        self.check_exp(t)?;
        Ok(self.matrix_fn(|l| (t * l).exp()))
    }

    pub(crate) fn check_exp(&self, t: f64) -> Result<()> {
        if !t.is_finite() {
            return Err(Error::arg(format!("exponential time must be finite, got {t}")));
        }
        let worst = self
            .values
            .iter()
            .map(|l| t * l)
            .fold(f64::NEG_INFINITY, f64::max);
        if worst > EXP_LIMIT {
            return Err(Error::numeric(format!(
                "matrix exponential overflows: t·λ reaches {worst:.3e}"
            )));
        }
        Ok(())
    }
}

fn sorted(values: Vec<f64>, q: DenseMatrix) -> SymEigen {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut q_sorted = DenseMatrix::zeros(n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..n {
            q_sorted.set(r, new_col, q.get(r, old_col));
        }
    }
    SymEigen {
        values: order.iter().map(|&i| values[i]).collect(),
        q: q_sorted,
    }
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += a[i * n + j] * a[i * n + j];
            }
        }
    }
    acc.sqrt()
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Converges once the off-diagonal Frobenius norm drops below
/// `1e-12 · ‖A‖_F`; gives up after [`JACOBI_MAX_SWEEPS`] sweeps.
pub fn sym_eigh(a: &DenseMatrix) -> Result<SymEigen> {
    let asym = a.max_asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(Error::arg(format!(
            "matrix is not symmetric (max |a_ij - a_ji| = {asym:.3e})"
        )));
    }
    let n = a.n();
    let mut w = a.symmetrized().entries().to_vec();
    let mut v = DenseMatrix::identity(n).entries().to_vec();
    let norm = a.frobenius();
    let target = OFF_DIAGONAL_TOL * norm;

    let mut converged = norm == 0.0;
    let mut sweeps = 0;
    while !converged {
        if off_diagonal_norm(&w, n) < target {
            converged = true;
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            break;
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut w, &mut v, n, p, q);
            }
        }
    }
    if !converged {
        let residual = off_diagonal_norm(&w, n);
        return Err(Error::numeric(format!(
            "Jacobi eigensolver did not converge after {JACOBI_MAX_SWEEPS} sweeps \
             (off-diagonal residual {residual:.3e}, target {target:.3e})"
        )));
    }
    let values = (0..n).map(|i| w[i * n + i]).collect();
    Ok(sorted(values, DenseMatrix::new(n, v)?))
}

/// Annihilates `w[p][q]` with a plane rotation and accumulates it into `v`.
fn rotate(w: &mut [f64], v: &mut [f64], n: usize, p: usize, q: usize) {
    let apq = w[p * n + q];
    if apq == 0.0 {
        return;
    }
    let app = w[p * n + p];
    let aqq = w[q * n + q];
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let tau = s / (1.0 + c);

    w[p * n + p] = app - t * apq;
    w[q * n + q] = aqq + t * apq;
    w[p * n + q] = 0.0;
    w[q * n + p] = 0.0;
    for r in 0..n {
        if r == p || r == q {
            continue;
        }
        let g = w[r * n + p];
        let h = w[r * n + q];
        let rp = g - s * (h + g * tau);
        let rq = h + s * (g - h * tau);
        w[r * n + p] = rp;
        w[p * n + r] = rp;
        w[r * n + q] = rq;
        w[q * n + r] = rq;
    }
    for r in 0..n {
        let g = v[r * n + p];
        let h = v[r * n + q];
        v[r * n + p] = g - s * (h + g * tau);
        v[r * n + q] = h + s * (g - h * tau);
    }
}

/// `e^{tA}` for symmetric `A`, via its eigendecomposition.
pub fn mat_exp_sym(a: &DenseMatrix, t: f64) -> Result<DenseMatrix> {
    if !t.is_finite() {
        return Err(Error::arg(format!("exponential time must be finite, got {t}")));
    }
    sym_eigh(a)?.exp_matrix(t)
}

/// Solves `A x = b` for symmetric nonsingular `A`.
pub fn sym_solve(a: &DenseMatrix, b: &ParamVec) -> Result<ParamVec> {
    check_dim("sym_solve", a.n(), b.len())?;
    let eig = sym_eigh(a)?;
    let scale = eig.values.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    if eig
        .values
        .iter()
        .any(|l| l.abs() <= f64::EPSILON * scale * a.n() as f64)
    {
        return Err(Error::numeric("sym_solve: matrix is numerically singular"));
    }
    Ok(eig.apply_fn(b, |l| 1.0 / l))
}

#[cfg(test)]
mod tests {
    use super::super::{gaussian_vector, mat_mul, mat_vec, Prng};
    use super::*;

    fn random_symmetric(n: usize, rng: &mut Prng) -> DenseMatrix {
        let g = DenseMatrix::new(n, gaussian_vector(n * n, rng).into_inner()).unwrap();
        g.add(&g.transpose()).unwrap().scale(0.5)
    }

    fn orthogonality_error(q: &DenseMatrix) -> f64 {
        let qtq = mat_mul(&q.transpose(), q).unwrap();
        qtq.sub(&DenseMatrix::identity(q.n())).unwrap().max_abs()
    }

    #[test]
    fn diagonal_input() {
        let e = sym_eigh(&DenseMatrix::diag(&[3.0, 1.0])).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_eq!(e.q.get(i, j).abs(), expect);
            }
        }
        let swapped = sym_eigh(&DenseMatrix::diag(&[1.0, 3.0])).unwrap();
        assert_eq!(swapped.values, vec![3.0, 1.0]);
        assert_eq!(swapped.q.get(1, 0).abs(), 1.0);
    }

    #[test]
    fn symmetry_forced_pair() {
        let a = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let e = sym_eigh(&a).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-15);
        assert!((e.values[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn eigen_residual_random_5x5() {
        let mut rng = Prng::new(2024);
        let a = random_symmetric(5, &mut rng);
        let e = sym_eigh(&a).unwrap();
        for k in 0..5 {
            let col: ParamVec = (0..5).map(|r| e.q.get(r, k)).collect::<Vec<_>>().into();
            let av = mat_vec(&a, &col).unwrap();
            let resid = av.sub(&col.scale(e.values[k])).norm();
            assert!(resid < 1e-9, "eigenpair {k} residual {resid}");
        }
    }

    #[test]
    fn rejects_asymmetric() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eigh(&a), Err(Error::Argument(_))));
    }

    #[test]
    fn zero_matrix() {
        let e = sym_eigh(&DenseMatrix::zeros(3)).unwrap();
        assert_eq!(e.values, vec![0.0; 3]);
        assert_eq!(orthogonality_error(&e.q), 0.0);
    }

    #[test]
    fn reconstruction_and_orthogonality_bounds() {
        let mut rng = Prng::new(77);
        for &(n, count) in &[(2usize, 100usize), (5, 100), (10, 100), (100, 3)] {
            for _ in 0..count {
                let a = random_symmetric(n, &mut rng);
                let e = sym_eigh(&a).unwrap();
                let recon = e.reconstruct().sub(&a).unwrap().frobenius();
                assert!(recon <= 1e-9 * a.frobenius(), "n={n} recon {recon}");
                assert!(orthogonality_error(&e.q) <= 1e-10, "n={n}");
                assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
            }
        }
    }

    fn taylor_exp(a: &DenseMatrix, t: f64, terms: usize) -> DenseMatrix {
        let n = a.n();
        let ta = a.scale(t);
        let mut term = DenseMatrix::identity(n);
        let mut acc = DenseMatrix::identity(n);
        for k in 1..=terms {
            term = mat_mul(&term, &ta).unwrap().scale(1.0 / k as f64);
            acc = acc.add(&term).unwrap();
        }
        acc
    }

    #[test]
    fn exp_cases() {
        let mut rng = Prng::new(4);
        let a = random_symmetric(4, &mut rng);
        let e0 = mat_exp_sym(&a, 0.0).unwrap();
        assert!(e0.sub(&DenseMatrix::identity(4)).unwrap().max_abs() < 1e-14);

        let d = mat_exp_sym(&DenseMatrix::diag(&[1.0, 2.0]), 1.0).unwrap();
        assert!((d.get(0, 0) - 1f64.exp()).abs() < 1e-14);
        assert!((d.get(1, 1) - 2f64.exp()).abs() < 1e-13);
        assert!(d.get(0, 1).abs() < 1e-15);

        let got = mat_exp_sym(&a, 0.3).unwrap();
        let want = taylor_exp(&a, 0.3, 30);
        assert!(got.sub(&want).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn exp_overflow_is_numeric_error() {
        let err = mat_exp_sym(&DenseMatrix::diag(&[1.0]), 1000.0).unwrap_err();
        assert!(err.is_numeric());
        assert!(mat_exp_sym(&DenseMatrix::diag(&[1.0]), f64::NAN).is_err());
    }

    #[test]
    fn exp_group_property() {
        let mut rng = Prng::new(19);
        for _ in 0..10 {
            let a = random_symmetric(6, &mut rng);
            let s = rng.next_f64() - 0.5;
            let t = rng.next_f64() - 0.5;
            let lhs = mat_mul(&mat_exp_sym(&a, s).unwrap(), &mat_exp_sym(&a, t).unwrap()).unwrap();
            let rhs = mat_exp_sym(&a, s + t).unwrap();
            let diff = lhs.sub(&rhs).unwrap().frobenius();
            assert!(diff <= 1e-9 * rhs.frobenius());
        }
    }

    #[test]
    fn solve_spd() {
        let a = DenseMatrix::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let x = sym_solve(&a, &ParamVec::from(vec![1.0, 2.0])).unwrap();
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-14);
        assert!((x[1] - 7.0 / 11.0).abs() < 1e-14);
        assert!(sym_solve(&DenseMatrix::zeros(2), &ParamVec::zeros(2)).is_err());
    }
}
