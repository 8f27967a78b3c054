//! Seeded randomness: a xoshiro256** stream seeded through splitmix64, with
//! Box–Muller Gaussian variates.
//!
//! Streams are reproducible per seed within this implementation only.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

use super::{DenseMatrix, ParamVec};

#[derive(Clone, Debug)]
pub struct Prng {
    inner: Xoshiro256StarStar,
    spare: Option<f64>,
}

impl Prng {
    pub fn new(seed: u64) -> Self {
        Prng {
            inner: Xoshiro256StarStar::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal variate (Box–Muller, both outputs used).
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - u lies in (0, 1], so the logarithm is finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let phi = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * phi.sin());
        r * phi.cos()
    }

    /// Uniform index in `0..n`.
    pub fn next_index(&mut self, n: usize) -> usize {
        assert!(n > 0);
        ((self.next_f64() * n as f64) as usize).min(n - 1)
    }
}

/// Derives an independent stream seed for `(base, index)` pairs, so that
/// parallel workers can each own a stream without coordination.
pub fn mix_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn gaussian_vector(n: usize, rng: &mut Prng) -> ParamVec {
    (0..n).map(|_| rng.next_gaussian()).collect::<Vec<f64>>().into()
}

/// Haar-distributed orthogonal matrix: Householder QR of a standard-Gaussian
/// matrix, with the columns of Q flipped so that diag(R) is positive.
pub fn random_orthogonal(n: usize, rng: &mut Prng) -> DenseMatrix {
    assert!(n >= 1, "random_orthogonal needs n >= 1");
    let mut a: Vec<f64> = gaussian_vector(n * n, rng).into_inner();
    let mut reflectors: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);

    for k in 0..n {
        let norm = (k..n).map(|i| a[i * n + k].powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 || k == n - 1 {
            reflectors.push(None);
            continue;
        }
        let x0 = a[k * n + k];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..n).map(|i| a[i * n + k]).collect();
        v[0] -= alpha;
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            reflectors.push(None);
            continue;
        }
        v.iter_mut().for_each(|x| *x /= vnorm);
        apply_reflector(&mut a, n, k, &v);
        reflectors.push(Some(v));
    }

    let mut q = DenseMatrix::identity(n).entries().to_vec();
    for k in (0..n).rev() {
        if let Some(v) = &reflectors[k] {
            apply_reflector(&mut q, n, k, v);
        }
    }
    for j in 0..n {
        if a[j * n + j] < 0.0 {
            for i in 0..n {
                q[i * n + j] = -q[i * n + j];
            }
        }
    }
    DenseMatrix::new(n, q).expect("orthogonal factor is finite")
}

/// `M[k.., :] -= 2 v (vᵀ M[k.., :])`
fn apply_reflector(m: &mut [f64], n: usize, k: usize, v: &[f64]) {
    for col in 0..n {
        let dot: f64 = v.iter().enumerate().map(|(r, vr)| vr * m[(k + r) * n + col]).sum();
        if dot == 0.0 {
            continue;
        }
        for (r, vr) in v.iter().enumerate() {
            m[(k + r) * n + col] -= 2.0 * vr * dot;
        }
    }
}
