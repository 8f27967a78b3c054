//! Dense linear algebra kernel.
//!
//! Everything here is sized for the problems this crate studies: matrices of
//! order up to a few hundred, stored row-major in a flat `Vec<f64>`. Only the
//! symmetric eigenproblem is supported, which is all the quadratic domains
//! need (their curvature matrices are symmetric by construction).

mod eigen;
mod random;

pub use eigen::{mat_exp_sym, sym_eigh, sym_solve, SymEigen, JACOBI_MAX_SWEEPS};
pub use random::{gaussian_vector, mix_seed, random_orthogonal, Prng};

use std::ops::{Deref, Index};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// A point in parameter space. Also used for gradients and bracket vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVec(Vec<f64>);

impl ParamVec {
    /// Builds a vector, rejecting non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!("non-finite parameter at index {i}")));
        }
        Ok(ParamVec(values))
    }

    pub fn zeros(n: usize) -> Self {
        ParamVec(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &ParamVec) -> f64 {
        assert_eq!(self.len(), other.len(), "dot: length mismatch");
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn add(&self, other: &ParamVec) -> ParamVec {
        assert_eq!(self.len(), other.len(), "add: length mismatch");
        ParamVec(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &ParamVec) -> ParamVec {
        assert_eq!(self.len(), other.len(), "sub: length mismatch");
        ParamVec(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, s: f64) -> ParamVec {
        ParamVec(self.0.iter().map(|a| a * s).collect())
    }

    /// `self += s * x`
    pub fn axpy(&mut self, s: f64, x: &ParamVec) {
        assert_eq!(self.len(), x.len(), "axpy: length mismatch");
        for (a, b) in self.0.iter_mut().zip(&x.0) {
            *a += s * b;
        }
    }
}

impl From<Vec<f64>> for ParamVec {
    fn from(v: Vec<f64>) -> Self {
        ParamVec(v)
    }
}

impl Deref for ParamVec {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Square matrix, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("matrix dimension must be positive"));
        }
        if entries.len() != n * n {
            return Err(Error::arg(format!(
                "matrix of order {n} needs {} entries, got {}",
                n * n,
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("matrix has non-finite entries"));
        }
        Ok(DenseMatrix { n, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::arg("matrix rows must all have length equal to the row count"));
        }
        DenseMatrix::new(n, rows.concat())
    }

    pub fn zeros(n: usize) -> Self {
        DenseMatrix {
            n,
            entries: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DenseMatrix::zeros(n);
        for i in 0..n {
            m.entries[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = DenseMatrix::zeros(n);
        for (i, v) in values.iter().enumerate() {
            m.entries[i * n + i] = *v;
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.entries[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> DenseMatrix {
        let n = self.n;
        let mut t = DenseMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t.entries[j * n + i] = self.entries[i * n + j];
            }
        }
        t
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        check_dim("matrix add", self.n, other.n)?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        check_dim("matrix sub", self.n, other.n)?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        DenseMatrix {
            n: self.n,
            entries: self.entries.iter().map(|v| v * s).collect(),
        }
    }

    fn zip_with(&self, other: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> DenseMatrix {
        DenseMatrix {
            n: self.n,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }

    /// `(A + Aᵀ)/2`; removes rounding asymmetry left by products like `CᵀΛC`.
    pub fn symmetrized(&self) -> DenseMatrix {
        let n = self.n;
        let mut s = self.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (self.get(i, j) + self.get(j, i));
                s.set(i, j, v);
                s.set(j, i, v);
            }
        }
        s
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn frobenius(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.entries[i * self.n + j]
    }
}

/// Eigenvalues λ₀ ≥ λ₁ ≥ … > 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum(Vec<f64>);

impl Spectrum {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::arg("spectrum must be nonempty"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::arg("spectrum values must be finite and strictly positive"));
        }
        if values.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::arg("spectrum must be non-increasing"));
        }
        Ok(Spectrum(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn mat_vec(a: &DenseMatrix, v: &ParamVec) -> Result<ParamVec> {
    check_dim("mat_vec", a.n(), v.len())?;
    Ok(mat_vec_unchecked(a, v))
}

pub(crate) fn mat_vec_unchecked(a: &DenseMatrix, v: &[f64]) -> ParamVec {
    let n = a.n();
    (0..n)
        .map(|i| a.row(i).iter().zip(v).map(|(x, y)| x * y).sum())
        .collect::<Vec<f64>>()
        .into()
}

pub fn mat_mul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    check_dim("mat_mul", a.n(), b.n())?;
    let n = a.n();
    let mut out = vec![0.0; n * n];
    // i-k-j order keeps the inner loop contiguous in both `b` and `out`.
    for i in 0..n {
        let orow = &mut out[i * n..(i + 1) * n];
        for k in 0..n {
            let aik = a.get(i, k);
            if aik == 0.0 {
                continue;
            }
            for (o, bkj) in orow.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    Ok(DenseMatrix { n, entries: out })
}

/// λⱼ = decayʲ for j = 0..n−1.
pub fn power_law_spectrum(n: usize, decay: f64) -> Result<Spectrum> {
    if n == 0 {
        return Err(Error::arg("spectrum length must be at least 1"));
    }
    if !(decay > 0.0 && decay <= 1.0) {
        return Err(Error::arg(format!("spectrum decay must lie in (0, 1], got {decay}")));
    }
    let values: Vec<f64> = (0..n).map(|j| decay.powi(j as i32)).collect();
    Spectrum::new(values)
}
