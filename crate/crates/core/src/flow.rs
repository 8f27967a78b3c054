//! Schedule-aware gradient-flow integration and discrete gradient descent.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::LossDomain;
use crate::error::{check_dim, Error, Result};
use crate::linalg::ParamVec;
use crate::report::{fmt_f64, read_csv_report, write_csv_report};
use crate::schedule::WeightSchedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euler,
    Rk4,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    pub h: f64,
    /// Record a checkpoint every this many steps (plus the start and end).
    pub record_every: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::Rk4,
            h: 1e-3,
            record_every: 1,
        }
    }
}

impl IntegratorConfig {
    fn check(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::arg(format!("integrator step must be positive, got {}", self.h)));
        }
        if self.record_every == 0 {
            return Err(Error::arg("record_every must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GdConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub record_every: usize,
}

impl Default for GdConfig {
    fn default() -> Self {
        GdConfig {
            learning_rate: 1e-2,
            steps: 1000,
            record_every: 1,
        }
    }
}

/// Loss above which gradient descent is declared divergent.
pub const DIVERGENCE_LOSS: f64 = 1e12;

/// Checkpoints of one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub checkpoints: Vec<ParamVec>,
    /// `per_domain_losses[r][k] = L_k(θ(times[r]))`.
    pub per_domain_losses: Vec<Vec<f64>>,
    pub schedule: WeightSchedule,
}

impl Trajectory {
    fn start(domains: &[&dyn LossDomain], schedule: &WeightSchedule, theta0: &ParamVec) -> Result<Self> {
        let mut t = Trajectory {
            times: Vec::new(),
            checkpoints: Vec::new(),
            per_domain_losses: Vec::new(),
            schedule: schedule.clone(),
        };
        t.record(domains, 0.0, theta0)?;
        Ok(t)
    }

    fn record(&mut self, domains: &[&dyn LossDomain], t: f64, theta: &ParamVec) -> Result<()> {
        let losses = domain_losses(domains, theta)?;
        self.times.push(t);
        self.checkpoints.push(theta.clone());
        self.per_domain_losses.push(losses);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_theta(&self) -> &ParamVec {
        self.checkpoints.last().expect("trajectories always hold θ0")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectories always hold θ0")
    }

    /// `Σₖ wₖ(t) Lₖ(θ(t))` at every record, using the right-continuous weights.
    pub fn mixture_losses(&self) -> Result<Vec<f64>> {
        self.times
            .iter()
            .zip(&self.per_domain_losses)
            .map(|(t, l)| Ok(dot(self.schedule.weights_at(*t)?, l)))
            .collect()
    }

    /// Largest increase of the scheduled mixture loss per unit time between
    /// consecutive records that lie in the same schedule segment, using that
    /// segment's weights at both ends. Non-positive means monotone descent.
    pub fn max_mixture_increase_rate(&self) -> Result<f64> {
        let mut worst = f64::NEG_INFINITY;
        for r in 1..self.len() {
            let (t0, t1) = (self.times[r - 1], self.times[r]);
            if self.schedule.next_breakpoint(t0).is_some_and(|b| b < t1) {
                continue;
            }
            let w = self.schedule.weights_at(t0)?;
            let rise = dot(w, &self.per_domain_losses[r]) - dot(w, &self.per_domain_losses[r - 1]);
            worst = worst.max(rise / (t1 - t0));
        }
        Ok(worst)
    }

    /// CSV with columns `time, loss_1, …, loss_K`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let k = self.per_domain_losses.first().map_or(0, Vec::len);
        let names: Vec<String> = std::iter::once("time".to_string())
            .chain((1..=k).map(|i| format!("loss_{i}")))
            .collect();
        let header: Vec<&str> = names.iter().map(String::as_str).collect();
        let rows = self.times.iter().zip(&self.per_domain_losses).map(|(t, l)| {
            std::iter::once(fmt_f64(*t))
                .chain(l.iter().map(|v| fmt_f64(*v)))
                .collect::<Vec<_>>()
        });
        write_csv_report(path, &header, rows)
    }

    /// Binary sidecar: `GCM1`, u32 dimension, then the checkpoints as
    /// row-major little-endian f64.
    pub fn write_checkpoints(&self, path: &Path) -> Result<()> {
        let dim = self.checkpoints.first().map_or(0, |c| c.len());
        let mut buf = Vec::with_capacity(8 + 8 * dim * self.len());
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&(dim as u32).to_le_bytes());
        for c in &self.checkpoints {
            for v in c.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    /// Rebuilds a trajectory from [`Trajectory::write_csv`] and
    /// [`Trajectory::write_checkpoints`] output.
    pub fn read(csv: &Path, sidecar: &Path, schedule: WeightSchedule) -> Result<Self> {
        let (header, rows) = read_csv_report(csv)?;
        if header.first().map(String::as_str) != Some("time") {
            return Err(Error::arg(format!("{}: first column must be 'time'", csv.display())));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::arg(format!("{}: bad number '{s}'", csv.display())))
        };
        let mut times = Vec::with_capacity(rows.len());
        let mut losses = Vec::with_capacity(rows.len());
        for row in &rows {
            times.push(parse(&row[0])?);
            losses.push(row[1..].iter().map(|s| parse(s)).collect::<Result<Vec<_>>>()?);
        }
        let checkpoints = read_checkpoints(sidecar)?;
        if checkpoints.len() != times.len() {
            return Err(Error::arg(format!(
                "{} holds {} checkpoints but {} has {} rows",
                sidecar.display(),
                checkpoints.len(),
                csv.display(),
                times.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::arg(format!("{}: times are not strictly increasing", csv.display())));
        }
        Ok(Trajectory {
            times,
            checkpoints,
            per_domain_losses: losses,
            schedule,
        })
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GCM1";

pub fn read_checkpoints(path: &Path) -> Result<Vec<ParamVec>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::arg(format!("{}: not a GCM1 checkpoint file", path.display())));
    }
    let dim = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let body = &bytes[8..];
    if dim == 0 || body.len() % (8 * dim) != 0 {
        return Err(Error::arg(format!(
            "{}: payload of {} bytes is not a whole number of {dim}-dimensional rows",
            path.display(),
            body.len()
        )));
    }
    body.chunks(8 * dim)
        .map(|row| {
            let v: Vec<f64> = row
                .chunks(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            ParamVec::new(v)
        })
        .collect()
}

fn dot(w: &[f64], l: &[f64]) -> f64 {
    w.iter().zip(l).map(|(a, b)| a * b).sum()
}

fn domain_losses(domains: &[&dyn LossDomain], theta: &ParamVec) -> Result<Vec<f64>> {
    domains.iter().map(|d| d.loss(theta)).collect()
}

fn check_inputs(domains: &[&dyn LossDomain], schedule: &WeightSchedule, theta0: &ParamVec) -> Result<()> {
    let v = schedule.validate();
    if !v.is_empty() {
        let msgs: Vec<String> = v.iter().map(|v| v.to_string()).collect();
        return Err(Error::arg(format!("invalid weight schedule: {}", msgs.join("; "))));
    }
    check_dim("number of domains vs schedule", schedule.num_domains(), domains.len())?;
    for d in domains {
        check_dim("domain parameter dimension", d.dim(), theta0.len())?;
    }
    if !theta0.is_finite() {
        return Err(Error::arg("initial parameters are not finite"));
    }
    Ok(())
}

/// `−Σₖ wₖ ∇Lₖ(θ)`; zero-weight domains are skipped.
pub fn descent_field(domains: &[&dyn LossDomain], weights: &[f64], theta: &ParamVec) -> Result<ParamVec> {
    let mut out = ParamVec::zeros(theta.len());
    for (d, &w) in domains.iter().zip(weights) {
        if w != 0.0 {
            out.axpy(-w, &d.grad(theta)?);
        }
    }
    Ok(out)
}

fn step(
    domains: &[&dyn LossDomain],
    weights: &[f64],
    theta: &ParamVec,
    dt: f64,
    method: Method,
) -> Result<ParamVec> {
    let f = |x: &ParamVec| descent_field(domains, weights, x);
    let next = match method {
        Method::Euler => {
            let mut x = theta.clone();
            x.axpy(dt, &f(theta)?);
            x
        }
        Method::Rk4 => {
            let k1 = f(theta)?;
            let mut y = theta.clone();
            y.axpy(0.5 * dt, &k1);
            let k2 = f(&y)?;
            let mut y = theta.clone();
            y.axpy(0.5 * dt, &k2);
            let k3 = f(&y)?;
            let mut y = theta.clone();
            y.axpy(dt, &k3);
            let k4 = f(&y)?;
            let mut x = theta.clone();
            x.axpy(dt / 6.0, &k1);
            x.axpy(dt / 3.0, &k2);
            x.axpy(dt / 3.0, &k3);
            x.axpy(dt / 6.0, &k4);
            x
        }
    };
    Ok(next)
}

/// Step times inside `[start, end)`: `start + k·h`, with the final step clamped
/// to `end` (a remainder below `1e-9·h` is absorbed into the previous step).
fn segment_steps(start: f64, end: f64, h: f64) -> impl Iterator<Item = f64> {
    let mut k = 0u64;
    let mut done = start >= end;
    std::iter::from_fn(move || {
        if done {
            return None;
        }
        k += 1;
        let mut t = start + k as f64 * h;
        if t >= end || end - t < 1e-9 * h {
            t = end;
            done = true;
        }
        Some(t)
    })
}

/// Integrates `θ̇ = −Σₖ wₖ(t)∇Lₖ(θ)` from `t_start` to `t_end`, calling
/// `visit(t, θ, step_index)` after every step.
fn integrate_with(
    domains: &[&dyn LossDomain],
    schedule: &WeightSchedule,
    theta0: &ParamVec,
    t_start: f64,
    t_end: f64,
    cfg: &IntegratorConfig,
    mut visit: impl FnMut(f64, &ParamVec, usize) -> Result<()>,
) -> Result<ParamVec> {
    let mut theta = theta0.clone();
    let mut t = t_start;
    let mut count = 0usize;
    while t < t_end {
        let seg_end = schedule.next_breakpoint(t).map_or(t_end, |b| b.min(t_end));
        let weights = schedule.weights_at(t)?.to_vec();
        let seg_start = t;
        for t_next in segment_steps(seg_start, seg_end, cfg.h) {
            let next = step(domains, &weights, &theta, t_next - t, cfg.method)?;
            if !next.is_finite() {
                return Err(Error::numeric_at(
                    format!("state became non-finite while integrating to t = {t_next}"),
                    t,
                ));
            }
            theta = next;
            t = t_next;
            count += 1;
            visit(t, &theta, count)?;
        }
        t = seg_end;
    }
    Ok(theta)
}

/// Endpoint of the scheduled flow started at `theta` at time `t_start`.
pub fn integrate_span(
    domains: &[&dyn LossDomain],
    schedule: &WeightSchedule,
    theta: &ParamVec,
    t_start: f64,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<ParamVec> {
    cfg.check()?;
    check_inputs(domains, schedule, theta)?;
    if !(t_start >= 0.0 && t_end >= t_start) {
        return Err(Error::arg(format!("bad integration span [{t_start}, {t_end}]")));
    }
    integrate_with(domains, schedule, theta, t_start, t_end, cfg, |_, _, _| Ok(()))
}

/// Integrates the scheduled gradient flow on `[0, horizon]`.
pub fn integrate_ode(
    domains: &[&dyn LossDomain],
    schedule: &WeightSchedule,
    theta0: &ParamVec,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.check()?;
    check_inputs(domains, schedule, theta0)?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::arg(format!("horizon must be positive, got {horizon}")));
    }
    let mut traj = Trajectory::start(domains, schedule, theta0)?;
    let every = cfg.record_every;
    integrate_with(domains, schedule, theta0, 0.0, horizon, cfg, |t, theta, count| {
        if count % every == 0 || t == horizon {
            traj.record(domains, t, theta)?;
        }
        Ok(())
    })?;
    Ok(traj)
}

/// Time-`tau` descent flow of a single domain.
pub fn flow_map_numeric(
    d: &dyn LossDomain,
    tau: f64,
    theta: &ParamVec,
    cfg: &IntegratorConfig,
) -> Result<ParamVec> {
    if !(tau >= 0.0) {
        return Err(Error::arg(format!("flow time must be non-negative, got {tau}")));
    }
    let single = WeightSchedule::new(vec![0.0], vec![vec![1.0]])?;
    integrate_span(&[d], &single, theta, 0.0, tau, cfg)
}

/// Full-gradient descent `θ ← θ − γ Σₖ wₖ ∇Lₖ(θ)` with step `i` stamped at
/// time `i·γ`. The weights for step `i` are read at `(i + ½)γ`, the middle of
/// the interval the step represents.
pub fn discrete_gd(
    domains: &[&dyn LossDomain],
    schedule: &WeightSchedule,
    theta0: &ParamVec,
    cfg: &GdConfig,
) -> Result<Trajectory> {
    check_inputs(domains, schedule, theta0)?;
    gd_checked(cfg)?;
    let mut traj = Trajectory {
        times: Vec::new(),
        checkpoints: Vec::new(),
        per_domain_losses: Vec::new(),
        schedule: schedule.clone(),
    };
    gd_run(domains, schedule, theta0, 0, cfg.steps, cfg, |step, theta, losses| {
        if step % cfg.record_every == 0 || step == cfg.steps {
            traj.times.push(step as f64 * cfg.learning_rate);
            traj.checkpoints.push(theta.clone());
            traj.per_domain_losses.push(losses.to_vec());
        }
    })?;
    Ok(traj)
}

/// Runs gradient-descent steps `first..last` from `theta` and returns the
/// final state.
pub fn gd_span(
    domains: &[&dyn LossDomain],
    schedule: &WeightSchedule,
    theta: &ParamVec,
    first: usize,
    last: usize,
    cfg: &GdConfig,
) -> Result<ParamVec> {
    check_inputs(domains, schedule, theta)?;
    gd_checked(cfg)?;
    gd_run(domains, schedule, theta, first, last, cfg, |_, _, _| ())
}

fn gd_checked(cfg: &GdConfig) -> Result<()> {
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(Error::arg(format!("learning rate must be positive, got {}", cfg.learning_rate)));
    }
    if cfg.record_every == 0 {
        return Err(Error::arg("record_every must be at least 1"));
    }
    Ok(())
}

/// Calls `visit(step, θ, losses)` for every step in `first..=last`, before
/// the update that leaves it.
fn gd_run(
    domains: &[&dyn LossDomain],
    schedule: &WeightSchedule,
    theta0: &ParamVec,
    first: usize,
    last: usize,
    cfg: &GdConfig,
    mut visit: impl FnMut(usize, &ParamVec, &[f64]),
) -> Result<ParamVec> {
    let gamma = cfg.learning_rate;
    let mut theta = theta0.clone();
    let mut losses = vec![0.0; domains.len()];
    for i in first..last {
        let weights = schedule.weights_at((i as f64 + 0.5) * gamma)?;
        let mut update = ParamVec::zeros(theta.len());
        for (k, d) in domains.iter().enumerate() {
            let (l, g) = d.loss_grad(&theta)?;
            losses[k] = l;
            if weights[k] != 0.0 {
                update.axpy(-gamma * weights[k], &g);
            }
        }
        check_divergence(&losses, i)?;
        visit(i, &theta, &losses);
        theta.axpy(1.0, &update);
        if !theta.is_finite() {
            return Err(Error::numeric_at(format!("gradient descent diverged at step {}", i + 1), i as f64));
        }
    }
    let losses = domain_losses(domains, &theta)?;
    check_divergence(&losses, last)?;
    visit(last, &theta, &losses);
    Ok(theta)
}

fn check_divergence(losses: &[f64], step: usize) -> Result<()> {
    if losses.iter().any(|l| !(l.abs() <= DIVERGENCE_LOSS)) {
        return Err(Error::numeric_at(
            format!("gradient descent diverged at step {step} (loss {:?})", losses),
            step as f64,
        ));
    }
    Ok(())
}
