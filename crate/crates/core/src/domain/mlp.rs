use serde::{Deserialize, Serialize};

use super::{Dataset, LossDomain};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{ParamVec, Prng};

/// `(n_in, n_hidden, n_out)` of a one-hidden-layer tanh network with linear
/// output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSizes {
    pub n_in: usize,
    pub n_hidden: usize,
    pub n_out: usize,
}

impl LayerSizes {
    /// Flattened parameter order: `W1` (n_hidden × n_in, row-major), `b1`,
    /// `W2` (n_out × n_hidden, row-major), `b2`.
    pub fn param_dim(&self) -> usize {
        (self.n_in + 1) * self.n_hidden + (self.n_hidden + 1) * self.n_out
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.n_in * self.n_hidden;
        let w2 = b1 + self.n_hidden;
        let b2 = w2 + self.n_out * self.n_hidden;
        (b1, w2, b2)
    }
}

/// Evaluates losses over a fixed multiset of sample indices drawn once at
/// construction, instead of the full dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub batch_size: usize,
    pub num_batches: usize,
    pub seed: u64,
}

/// Mean squared error of a tanh MLP over a regression dataset.
#[derive(Clone, Debug)]
pub struct MlpDomain {
    sizes: LayerSizes,
    data: Dataset,
    samples: Vec<usize>,
}

pub fn make_mlp_domain(
    sizes: LayerSizes,
    data: Dataset,
    batching: Option<BatchConfig>,
) -> Result<MlpDomain> {
    if sizes.n_hidden == 0 {
        return Err(Error::arg("MLP needs at least one hidden unit"));
    }
    if data.is_empty() {
        return Err(Error::arg("MLP dataset is empty"));
    }
    check_dim("MLP input width", sizes.n_in, data.n_in())?;
    check_dim("MLP output width", sizes.n_out, data.n_out())?;
    let samples = match batching {
        None => (0..data.len()).collect(),
        Some(b) => {
            if b.batch_size == 0 || b.num_batches == 0 {
                return Err(Error::arg("batch_size and num_batches must be positive"));
            }
            let mut rng = Prng::new(b.seed);
            (0..b.batch_size * b.num_batches)
                .map(|_| rng.next_index(data.len()))
                .collect()
        }
    };
    Ok(MlpDomain {
        sizes,
        data,
        samples,
    })
}

impl MlpDomain {
    pub fn sizes(&self) -> LayerSizes {
        self.sizes
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    /// Gaussian initialization scaled by `scale / sqrt(fan_in)`; biases start at zero.
    pub fn init_params(&self, rng: &mut Prng, scale: f64) -> ParamVec {
        let s = self.sizes;
        let (b1, w2, b2) = s.offsets();
        let mut theta = vec![0.0; s.param_dim()];
        let w1_scale = scale / (s.n_in as f64).sqrt();
        let w2_scale = scale / (s.n_hidden as f64).sqrt();
        for v in &mut theta[..b1] {
            *v = w1_scale * rng.next_gaussian();
        }
        for v in &mut theta[w2..b2] {
            *v = w2_scale * rng.next_gaussian();
        }
        theta.into()
    }

    /// Forward pass plus backpropagation. Returns the loss and, when
    /// requested, its gradient.
    fn evaluate(&self, theta: &[f64], want_grad: bool) -> (f64, Option<Vec<f64>>) {
        let LayerSizes {
            n_in,
            n_hidden,
            n_out,
        } = self.sizes;
        let (b1_off, w2_off, b2_off) = self.sizes.offsets();
        let w1 = &theta[..b1_off];
        let b1 = &theta[b1_off..w2_off];
        let w2 = &theta[w2_off..b2_off];
        let b2 = &theta[b2_off..];

        let norm = 1.0 / (self.samples.len() * n_out) as f64;
        let mut loss = 0.0;
        let mut grad = want_grad.then(|| vec![0.0; theta.len()]);
        let mut hidden = vec![0.0; n_hidden];
        let mut d_hidden = vec![0.0; n_hidden];
        let mut residual = vec![0.0; n_out];

        for &s in &self.samples {
            let x = self.data.input(s);
            let y = self.data.target(s);
            for (h, (row, bias)) in hidden.iter_mut().zip(w1.chunks(n_in).zip(b1)) {
                *h = (row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + bias).tanh();
            }
            for o in 0..n_out {
                let row = &w2[o * n_hidden..(o + 1) * n_hidden];
                let out = row.iter().zip(&hidden).map(|(a, b)| a * b).sum::<f64>() + b2[o];
                residual[o] = out - y[o];
                loss += residual[o] * residual[o];
            }
            let Some(g) = grad.as_mut() else { continue };
            d_hidden.iter_mut().for_each(|v| *v = 0.0);
            for o in 0..n_out {
                let d_out = 2.0 * norm * residual[o];
                let row = &w2[o * n_hidden..(o + 1) * n_hidden];
                for j in 0..n_hidden {
                    g[w2_off + o * n_hidden + j] += d_out * hidden[j];
                    d_hidden[j] += d_out * row[j];
                }
                g[b2_off + o] += d_out;
            }
            for j in 0..n_hidden {
                let dz = d_hidden[j] * (1.0 - hidden[j] * hidden[j]);
                for (i, xi) in x.iter().enumerate() {
                    g[j * n_in + i] += dz * xi;
                }
                g[b1_off + j] += dz;
            }
        }
        (loss * norm, grad)
    }
}

impl LossDomain for MlpDomain {
    fn dim(&self) -> usize {
        self.sizes.param_dim()
    }

    fn loss(&self, theta: &ParamVec) -> Result<f64> {
        check_dim("MLP loss", self.dim(), theta.len())?;
        Ok(self.evaluate(theta, false).0)
    }

    fn loss_grad(&self, theta: &ParamVec) -> Result<(f64, ParamVec)> {
        check_dim("MLP gradient", self.dim(), theta.len())?;
        let (loss, grad) = self.evaluate(theta, true);
        Ok((loss, grad.expect("gradient requested").into()))
    }
}
