use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gaussian_vector, Prng};

/// Regression samples stored row-major: `inputs[s * n_in + i]`,
/// `targets[s * n_out + o]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    n_in: usize,
    n_out: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl Dataset {
    pub fn new(n_in: usize, n_out: usize, inputs: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(Error::arg("dataset needs at least one input and one output column"));
        }
        if inputs.len() % n_in != 0 || targets.len() % n_out != 0 {
            return Err(Error::arg("dataset buffers are not whole rows"));
        }
        if inputs.len() / n_in != targets.len() / n_out {
            return Err(Error::arg("dataset inputs and targets have different sample counts"));
        }
        if inputs.is_empty() {
            return Err(Error::arg("dataset is empty"));
        }
        if inputs.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::arg("dataset contains non-finite values"));
        }
        Ok(Dataset {
            n_in,
            n_out,
            inputs,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.n_in
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn input(&self, s: usize) -> &[f64] {
        &self.inputs[s * self.n_in..(s + 1) * self.n_in]
    }

    pub fn target(&self, s: usize) -> &[f64] {
        &self.targets[s * self.n_out..(s + 1) * self.n_out]
    }

    /// One row per sample: inputs `x1..`, then targets `y1..`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .from_path(path)
            .map_err(|e| csv_err(path, e))?;
        let header: Vec<String> = (1..=self.n_in)
            .map(|i| format!("x{i}"))
            .chain((1..=self.n_out).map(|o| format!("y{o}")))
            .collect();
        w.write_record(&header).map_err(|e| csv_err(path, e))?;
        for s in 0..self.len() {
            let row: Vec<String> = self
                .input(s)
                .iter()
                .chain(self.target(s))
                .map(|v| crate::report::fmt_f64(*v))
                .collect();
            w.write_record(&row).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
        let n_in = header.iter().filter(|h| h.starts_with('x')).count();
        let n_out = header.iter().filter(|h| h.starts_with('y')).count();
        if n_in + n_out != header.len() {
            return Err(Error::arg(format!(
                "{}: dataset header must contain only x*/y* columns",
                path.display()
            )));
        }
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            for (k, field) in rec.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::arg(format!("{}: cannot parse '{field}' as a number", path.display()))
                })?;
                if k < n_in {
                    inputs.push(v);
                } else {
                    targets.push(v);
                }
            }
        }
        Dataset::new(n_in, n_out, inputs, targets)
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::arg(format!("{}: malformed csv ({other:?})", path.display())),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetFn {
    /// `sin(wᵀx)` for a random projection `w` drawn from the dataset seed.
    Sine,
    /// `½ (x₀x₁ − ½x₂² + ½x₃)` (indices taken modulo the input dimension).
    Polynomial,
}

impl TargetFn {
    fn eval(self, x: &[f64], projection: &[f64]) -> f64 {
        let n = x.len();
        match self {
            TargetFn::Sine => x.iter().zip(projection).map(|(a, b)| a * b).sum::<f64>().sin(),
            TargetFn::Polynomial => {
                0.5 * (x[0] * x[1 % n] - 0.5 * x[2 % n].powi(2) + 0.5 * x[3 % n])
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_in: usize,
    pub samples: usize,
    pub targets: [TargetFn; 2],
    /// Reuse the first domain's inputs for the second domain.
    pub shared_inputs: bool,
    pub noise_std: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_in: 4,
            samples: 256,
            targets: [TargetFn::Sine, TargetFn::Polynomial],
            shared_inputs: false,
            noise_std: 0.0,
        }
    }
}

/// Two single-output regression datasets over standard-Gaussian inputs,
/// differing in their target functions. Deterministic per seed.
pub fn gen_synthetic_datasets(seed: u64, cfg: &SyntheticConfig) -> Result<(Dataset, Dataset)> {
    if cfg.n_in == 0 || cfg.samples == 0 {
        return Err(Error::arg("synthetic datasets need n_in >= 1 and samples >= 1"));
    }
    if !(cfg.noise_std >= 0.0 && cfg.noise_std.is_finite()) {
        return Err(Error::arg("noise_std must be a non-negative finite number"));
    }
    let mut rng = Prng::new(seed);
    let projection = gaussian_vector(cfg.n_in, &mut rng);
    let inputs_1 = gaussian_vector(cfg.n_in * cfg.samples, &mut rng).into_inner();
    let inputs_2 = if cfg.shared_inputs {
        inputs_1.clone()
    } else {
        gaussian_vector(cfg.n_in * cfg.samples, &mut rng).into_inner()
    };
    let build = |inputs: Vec<f64>, target: TargetFn, rng: &mut Prng| {
        let targets = inputs
            .chunks(cfg.n_in)
            .map(|x| target.eval(x, &projection))
            .collect::<Vec<f64>>();
        let targets = if cfg.noise_std > 0.0 {
            targets
                .into_iter()
                .map(|y| y + cfg.noise_std * rng.next_gaussian())
                .collect()
        } else {
            targets
        };
        Dataset::new(cfg.n_in, 1, inputs, targets)
    };
    let d1 = build(inputs_1, cfg.targets[0], &mut rng)?;
    let mut noise_rng = Prng::new(seed ^ 0x5eed);
    let d2 = if cfg.shared_inputs && cfg.noise_std == 0.0 && cfg.targets[0] == cfg.targets[1] {
        d1.clone()
    } else {
        build(inputs_2, cfg.targets[1], &mut noise_rng)?
    };
    Ok((d1, d2))
}
