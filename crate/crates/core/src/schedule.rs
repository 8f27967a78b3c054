//! Piecewise-constant domain weight schedules.

use std::fmt;

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `Σₖ wₖ = 1`.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// `w(t)` on `[0, ∞)`: segment `s` covers `[breakpoints[s], breakpoints[s+1])`
/// and the last weight vector holds from the final breakpoint onwards.
///
/// Deserialization does not validate; call [`WeightSchedule::validate`] (or
/// build through [`WeightSchedule::new`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSchedule {
    breakpoints: Vec<f64>,
    weights: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
/// Segment indices are 0-based; messages print them 1-based.
pub enum Violation {
    Empty,
    LengthMismatch { breakpoints: usize, weights: usize },
    FirstBreakpoint { value: f64 },
    NotIncreasing { segment: usize, start: f64, previous: f64 },
    DomainCount { segment: usize, expected: usize, got: usize },
    NonFinite { segment: usize },
    Negative { segment: usize, domain: usize, value: f64 },
    Sum { segment: usize, sum: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "schedule has no segments"),
            Violation::LengthMismatch { breakpoints, weights } => write!(
                f,
                "{breakpoints} breakpoints but {weights} weight vectors (need one per breakpoint)"
            ),
            Violation::FirstBreakpoint { value } => {
                write!(f, "first breakpoint must be 0, got {value}")
            }
            Violation::NotIncreasing {
                segment,
                start,
                previous,
            } => write!(
                f,
                "segment {}: breakpoint {start} does not exceed previous breakpoint {previous}",
                segment + 1
            ),
            Violation::DomainCount {
                segment,
                expected,
                got,
            } => write!(f, "segment {}: {got} weights, expected {expected}", segment + 1),
            Violation::NonFinite { segment } => write!(f, "segment {}: non-finite weight", segment + 1),
            Violation::Negative {
                segment,
                domain,
                value,
            } => write!(
                f,
                "segment {}: weight of domain {} is negative ({value})",
                segment + 1,
                domain + 1
            ),
            Violation::Sum { segment, sum } => {
                write!(f, "segment {}: weights sum to {sum}, not 1", segment + 1)
            }
        }
    }
}

fn check_simplex(segment: usize, w: &[f64], out: &mut Vec<Violation>) {
    if w.iter().any(|v| !v.is_finite()) {
        out.push(Violation::NonFinite { segment });
        return;
    }
    for (domain, &value) in w.iter().enumerate() {
        if value < 0.0 {
            out.push(Violation::Negative {
                segment,
                domain,
                value,
            });
        }
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        out.push(Violation::Sum { segment, sum });
    }
}

fn violations_error(v: &[Violation]) -> Error {
    let msgs: Vec<String> = v.iter().map(|v| v.to_string()).collect();
    Error::arg(format!("invalid weight schedule: {}", msgs.join("; ")))
}

impl WeightSchedule {
    /// Validated construction. Weight vectors whose sum is within
    /// [`SIMPLEX_TOL`] of 1 are renormalized; anything further off is rejected.
    pub fn new(breakpoints: Vec<f64>, weights: Vec<Vec<f64>>) -> Result<Self> {
        let mut s = WeightSchedule {
            breakpoints,
            weights,
        };
        let v = s.validate();
        if !v.is_empty() {
            return Err(violations_error(&v));
        }
        for w in &mut s.weights {
            let sum: f64 = w.iter().sum();
            if sum != 1.0 {
                w.iter_mut().for_each(|x| *x /= sum);
            }
        }
        Ok(s)
    }

    /// Every violated invariant, in segment order. Empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.breakpoints.is_empty() || self.weights.is_empty() {
            out.push(Violation::Empty);
            return out;
        }
        if self.breakpoints.len() != self.weights.len() {
            out.push(Violation::LengthMismatch {
                breakpoints: self.breakpoints.len(),
                weights: self.weights.len(),
            });
        }
        if self.breakpoints[0] != 0.0 {
            out.push(Violation::FirstBreakpoint {
                value: self.breakpoints[0],
            });
        }
        for (s, pair) in self.breakpoints.windows(2).enumerate() {
            if !(pair[1] > pair[0]) || !pair[1].is_finite() {
                out.push(Violation::NotIncreasing {
                    segment: s + 1,
                    start: pair[1],
                    previous: pair[0],
                });
            }
        }
        let k = self.weights[0].len();
        for (s, w) in self.weights.iter().enumerate() {
            if w.len() != k || k == 0 {
                out.push(Violation::DomainCount {
                    segment: s,
                    expected: k.max(1),
                    got: w.len(),
                });
                continue;
            }
            check_simplex(s, w, &mut out);
        }
        out
    }

    pub fn num_domains(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn segment_weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// Index of the segment containing `t` (a breakpoint belongs to the
    /// segment on its right).
    pub fn segment_index(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0) {
            return Err(Error::arg(format!("schedule queried at negative or NaN time {t}")));
        }
        Ok(self.breakpoints.partition_point(|b| *b <= t).saturating_sub(1))
    }

    pub fn weights_at(&self, t: f64) -> Result<&[f64]> {
        Ok(&self.weights[self.segment_index(t)?])
    }

    /// First breakpoint strictly after `t`, if any.
    pub fn next_breakpoint(&self, t: f64) -> Option<f64> {
        let k = self.breakpoints.partition_point(|b| *b <= t);
        self.breakpoints.get(k).copied()
    }

    /// `∫₀ᵀ wₖ(t) dt` for every domain, summed exactly in rational arithmetic.
    pub fn total_data_exact(&self, horizon: f64) -> Result<Vec<BigRational>> {
        if !(horizon >= 0.0) || !horizon.is_finite() {
            return Err(Error::arg(format!("horizon must be finite and non-negative, got {horizon}")));
        }
        let rat = |x: f64| BigRational::from_float(x).expect("finite value");
        let end = rat(horizon);
        let mut totals = vec![BigRational::zero(); self.num_domains()];
        for (s, w) in self.weights.iter().enumerate() {
            let start = self.breakpoints[s];
            if start >= horizon {
                break;
            }
            let stop = match self.breakpoints.get(s + 1) {
                Some(&b) if b < horizon => rat(b),
                _ => end.clone(),
            };
            let len = stop - rat(start);
            for (acc, wk) in totals.iter_mut().zip(w) {
                *acc += &len * rat(*wk);
            }
        }
        Ok(totals)
    }

    /// [`WeightSchedule::total_data_exact`] rounded to the nearest doubles.
    pub fn total_data(&self, horizon: f64) -> Result<Vec<f64>> {
        Ok(self
            .total_data_exact(horizon)?
            .iter()
            .map(|r| r.to_f64().unwrap_or(f64::NAN))
            .collect())
    }
}

pub fn constant_schedule(w: &[f64]) -> Result<WeightSchedule> {
    WeightSchedule::new(vec![0.0], vec![w.to_vec()])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwapOrder {
    /// Domain `i` up on the first window, domain `j` up on the second.
    IjFirst,
    JiFirst,
}

/// Shift `delta` of weight between domains `i` and `j` (0-based) over the
/// two adjacent windows `[t0, t0+eps)` and `[t0+eps, t0+2eps)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterventionSpec {
    pub t0: f64,
    pub eps: f64,
    pub delta: f64,
    pub i: usize,
    pub j: usize,
    pub order: SwapOrder,
}

impl InterventionSpec {
    /// `(t0, t0+eps, t0+2eps)` after snapping `t0` and `eps` onto a common
    /// binary grid, so both window lengths are exactly equal doubles and
    /// all three times are exact.
    pub fn window(&self) -> Result<(f64, f64, f64)> {
        if !(self.t0 >= 0.0 && self.t0.is_finite()) {
            return Err(Error::arg(format!("intervention t0 must be finite and >= 0, got {}", self.t0)));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::arg(format!("intervention eps must be positive, got {}", self.eps)));
        }
        let end = 2.0 * (self.t0 + 2.0 * self.eps);
        let unit = ulp(end);
        // Rounding t0 up keeps it inside the segment it was placed in.
        let t0 = (self.t0 / unit).ceil() * unit;
        let eps = ((self.eps / unit).round() * unit).max(unit);
        Ok((t0, t0 + eps, t0 + 2.0 * eps))
    }

    fn check(&self, k: usize) -> Result<()> {
        if self.i == self.j {
            return Err(Error::arg("intervention needs two distinct domains"));
        }
        if self.i >= k || self.j >= k {
            return Err(Error::arg(format!(
                "intervention domains ({}, {}) out of range for {k} domains",
                self.i + 1,
                self.j + 1
            )));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::arg(format!("intervention delta must be >= 0, got {}", self.delta)));
        }
        Ok(())
    }
}

fn ulp(x: f64) -> f64 {
    let x = x.abs();
    if x < f64::MIN_POSITIVE {
        return f64::from_bits(1);
    }
    let next = f64::from_bits(x.to_bits() + 1);
    next - x
}

/// Applies the two-window swap. Outside the window the result equals `base`;
/// per-domain totals over any horizon `≥ t0 + 2eps` are exactly preserved.
///
/// The base schedule must be constant over the whole window.
pub fn swap_intervention(base: &WeightSchedule, spec: &InterventionSpec) -> Result<WeightSchedule> {
    let v = base.validate();
    if !v.is_empty() {
        return Err(violations_error(&v));
    }
    spec.check(base.num_domains())?;
    let (t0, t1, t2) = spec.window()?;
    if spec.delta == 0.0 {
        return Ok(base.clone());
    }
    let seg = base.segment_index(t0)?;
    if let Some(next) = base.next_breakpoint(t0) {
        if next < t2 {
            return Err(Error::arg(format!(
                "base schedule changes at t = {next} inside the intervention window [{t0}, {t2})"
            )));
        }
    }
    let w = &base.weights[seg];
    let (wi, wj) = (w[spec.i], w[spec.j]);
    // a + b = 2wᵢ and c + d = 2wⱼ hold exactly (Sterbenz), which is what makes
    // the budget conservation bit-exact.
    let a = wi + spec.delta;
    let b = 2.0 * wi - a;
    let d = wj + spec.delta;
    let c = 2.0 * wj - d;
    let mut up_i = w.clone();
    up_i[spec.i] = a;
    up_i[spec.j] = c;
    let mut up_j = w.clone();
    up_j[spec.i] = b;
    up_j[spec.j] = d;
    let (first, second) = match spec.order {
        SwapOrder::IjFirst => (up_i, up_j),
        SwapOrder::JiFirst => (up_j, up_i),
    };
    let mut out = Vec::new();
    for (label, ws) in [("first", &first), ("second", &second)] {
        check_simplex(0, ws, &mut out);
        if !out.is_empty() {
            let msgs: Vec<String> = out.iter().map(|v| v.to_string()).collect();
            return Err(Error::arg(format!(
                "intervention leaves the simplex on the {label} window [base segment {seg}, domains {}/{}, delta {}]: {}",
                spec.i + 1,
                spec.j + 1,
                spec.delta,
                msgs.join("; ")
            )));
        }
    }

    let mut breakpoints = Vec::new();
    let mut weights = Vec::new();
    for (s, &b) in base.breakpoints.iter().enumerate() {
        if b < t0 {
            breakpoints.push(b);
            weights.push(base.weights[s].clone());
        }
    }
    breakpoints.extend([t0, t1, t2]);
    weights.extend([first, second, w.clone()]);
    for (s, &b) in base.breakpoints.iter().enumerate() {
        if b > t2 {
            breakpoints.push(b);
            weights.push(base.weights[s].clone());
        }
    }
    Ok(WeightSchedule {
        breakpoints,
        weights,
    })
}
