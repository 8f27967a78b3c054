//! Acceptance criteria, run in order; prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::path::PathBuf;
use std::process::ExitCode;

use mixflow::commutator::{
    lie_bracket_r, measure_from_state, optimality_scan, quadratic_r_closed_form, ClosedFormFlow, EngineKind,
    DEFAULT_SCAN_TOL,
};
use mixflow::domain::{
    combine_domains, hvp, make_quadratic_domain, quadratic_closed_flow, HvpConfig, LossDomain, QuadraticDomain,
};
use mixflow::experiments::{
    build_mlp_domains, run_loss_dynamics, run_mlp_intervention, run_quad_commutation, scan_problem, ExperimentConfig,
    ExperimentKind,
};
use mixflow::flow::{flow_map_numeric, integrate_ode, IntegratorConfig, Method};
use mixflow::linalg::{gaussian_vector, mix_seed, power_law_spectrum, ParamVec, Prng};
use mixflow::schedule::{constant_schedule, swap_intervention, InterventionSpec, SwapOrder, WeightSchedule};

type Outcome = Result<String, String>;

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&configs_dir().join(name), &[]).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn quad_pair(seed: u64, n: usize, decay: f64) -> (QuadraticDomain, QuadraticDomain, ParamVec) {
    let mut rng = Prng::new(seed);
    let spec = power_law_spectrum(n, decay).unwrap();
    let d1 = make_quadratic_domain(&spec, &mut rng).unwrap();
    let d2 = make_quadratic_domain(&spec, &mut rng).unwrap();
    let theta = gaussian_vector(n, &mut rng);
    (d1, d2, theta)
}

fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// 1. Median observed/predicted ratios of the shipped sweep fall in the
/// windows for each window length.
fn table1() -> Outcome {
    let cfg = load("table1.json");
    let dir = tempfile::tempdir().unwrap();
    let r = run_quad_commutation(&cfg, dir.path()).map_err(|e| e.to_string())?;
    let windows = [(1e-3, 0.99, 1.005), (1e-2, 0.95, 0.99), (1e-1, 0.60, 0.90)];
    let mut ok = r.failed_seeds.is_empty();
    let mut detail = Vec::new();
    for &t in &cfg.t_values {
        for &(eps, lo, hi) in &windows {
            let c = r.cell("mix", t, eps).ok_or(format!("missing cell t={t} eps={eps}"))?;
            ok &= (lo..=hi).contains(&c.median_ratio) && c.n_seeds == cfg.num_seeds;
            if eps == 1e-3 {
                ok &= c.p90_ratio - c.p10_ratio <= 0.01;
            }
            detail.push(format!("t={t} Δt={eps}: {:.4}", c.median_ratio));
        }
    }
    check(ok, detail.join(", "))
}

/// 2. `‖Φ₂(t)Φ₁(t)θ − Φ₁(t)Φ₂(t)θ − t²R‖ = O(t³)` with numeric flows.
fn theorem_convergence() -> Outcome {
    let ts = [1e-1, 1e-2, 1e-3, 1e-4];
    let mut worst = f64::INFINITY;
    for k in 0..20 {
        let (d1, d2, theta) = quad_pair(mix_seed(2, k), 10, 0.7);
        let r = lie_bracket_r(&d1, &d2, &theta, &HvpConfig::exact()).unwrap().r;
        let pts: Vec<(f64, f64)> = ts
            .iter()
            .map(|&t| {
                let cfg = IntegratorConfig {
                    method: Method::Rk4,
                    h: t / 8.0,
                    record_every: 1,
                };
                let f = |d: &QuadraticDomain, x: &ParamVec| flow_map_numeric(d, t, x, &cfg).unwrap();
                let one_then_two = f(&d2, &f(&d1, &theta));
                let two_then_one = f(&d1, &f(&d2, &theta));
                let err = one_then_two.sub(&two_then_one).sub(&r.scale(t * t)).norm();
                (t, err)
            })
            .collect();
        worst = worst.min(fit_slope(&pts));
    }
    check(worst >= 2.7, format!("smallest fitted slope over 20 pairs: {worst:.3}"))
}

/// 3. Exact-HVP bracket vs closed form, and finite-difference vs exact.
fn oracle_equivalence() -> Outcome {
    let (mut closed, mut fd) = (0.0f64, 0.0f64);
    for k in 0..50 {
        let (d1, d2, theta) = quad_pair(mix_seed(3, k), 10, 0.7);
        let exact = lie_bracket_r(&d1, &d2, &theta, &HvpConfig::exact()).unwrap().r;
        let formula = quadratic_r_closed_form(&d1, &d2, &theta).unwrap();
        let numeric = lie_bracket_r(&d1, &d2, &theta, &HvpConfig::finite_difference()).unwrap().r;
        closed = closed.max(exact.sub(&formula).norm() / exact.norm());
        fd = fd.max(exact.sub(&numeric).norm() / exact.norm());
    }
    check(
        closed <= 1e-9 && fd <= 1e-6,
        format!("max relative error: closed form {closed:.2e}, finite difference {fd:.2e}"),
    )
}

/// 4. Every intervention the shipped configs perform keeps the per-domain
/// data totals exactly equal.
fn conservation() -> Outcome {
    let mut checked = 0;
    let mut audit = |base: &WeightSchedule, spec: InterventionSpec, horizon: f64| -> Result<(), String> {
        let (_, _, t2) = spec.window().map_err(|e| e.to_string())?;
        let horizon = horizon.max(t2);
        let want = base.total_data_exact(horizon).map_err(|e| e.to_string())?;
        for order in [SwapOrder::IjFirst, SwapOrder::JiFirst] {
            let s = swap_intervention(base, &InterventionSpec { order, ..spec }).map_err(|e| e.to_string())?;
            if s.total_data_exact(horizon).map_err(|e| e.to_string())? != want {
                return Err(format!("totals differ for {spec:?}"));
            }
        }
        checked += 1;
        Ok(())
    };
    let t1 = load("table1.json");
    let base = constant_schedule(&t1.base_weights).unwrap();
    for &t0 in &t1.t_values {
        for &eps in &t1.eps_values {
            let spec = InterventionSpec {
                t0,
                eps,
                delta: t1.delta_values[0],
                i: 0,
                j: 1,
                order: SwapOrder::IjFirst,
            };
            audit(&base, spec, 2.0)?;
        }
    }
    for name in ["mlp_intervention.json", "mlp_imbalance.json"] {
        let cfg = load(name);
        let base = constant_schedule(&cfg.base_weights).unwrap();
        let g = cfg.gd.learning_rate;
        for &step in &cfg.mlp.checkpoints {
            for &delta in &cfg.delta_values {
                let spec = InterventionSpec {
                    t0: step as f64 * g,
                    eps: cfg.mlp.intervention_steps as f64 * g,
                    delta,
                    i: 0,
                    j: 1,
                    order: SwapOrder::IjFirst,
                };
                audit(&base, spec, 0.0)?;
            }
        }
    }
    let cfg = load("optimality_scan.json");
    let (doms, theta0, schedule) = scan_problem(&cfg).unwrap();
    let refs: Vec<&dyn LossDomain> = doms.iter().map(|d| d as &dyn LossDomain).collect();
    let traj = integrate_ode(&refs, &schedule, &theta0, cfg.horizon, &cfg.integrator).unwrap();
    let target = combine_domains(&vec![1.0 / refs.len() as f64; refs.len()], &refs).unwrap();
    for v in optimality_scan(&traj, &refs, &target, cfg.scan_tol, &HvpConfig::exact()).unwrap() {
        let spec = v.improving_intervention(cfg.eps_values[0]);
        let (_, _, t2) = spec.window().unwrap();
        if schedule.next_breakpoint(v.t).is_some_and(|b| t2 > b) {
            continue;
        }
        audit(&schedule, spec, cfg.horizon)?;
    }
    check(checked > 0, format!("{checked} interventions, all three totals bit-identical"))
}

/// 5. Mixture loss never rises along continuous-time runs; the shipped
/// loss-dynamics config shows a non-monotone per-domain curve.
fn descent_monotonicity() -> Outcome {
    let mut worst: f64 = f64::NEG_INFINITY;
    let cfg = load("optimality_scan.json");
    let (doms, theta0, schedule) = scan_problem(&cfg).unwrap();
    let refs: Vec<&dyn LossDomain> = doms.iter().map(|d| d as &dyn LossDomain).collect();
    let traj = integrate_ode(&refs, &schedule, &theta0, cfg.horizon, &cfg.integrator).unwrap();
    worst = worst.max(traj.max_mixture_increase_rate().unwrap());
    for k in 0..10 {
        let (d1, d2, theta) = quad_pair(mix_seed(5, k), 8, 0.7);
        let doms: [&dyn LossDomain; 2] = [&d1, &d2];
        let s = WeightSchedule::new(vec![0.0, 0.4, 1.1], vec![vec![0.9, 0.1], vec![0.3, 0.7], vec![0.5, 0.5]]).unwrap();
        let cfg = IntegratorConfig {
            record_every: 10,
            ..Default::default()
        };
        let traj = integrate_ode(&doms, &s, &theta, 2.0, &cfg).unwrap();
        worst = worst.max(traj.max_mixture_increase_rate().unwrap());
    }
    let dir = tempfile::tempdir().unwrap();
    let out = run_loss_dynamics(&load("loss_dynamics.json"), dir.path()).map_err(|e| e.to_string())?;
    worst = worst.max(out.summary["max_mixture_increase_rate"].as_f64().unwrap());
    let flagged = out.summary["non_monotone_trajectories"].as_u64().unwrap();
    let dist = out.summary["max_endpoint_distance"].as_f64().unwrap();
    check(
        worst <= 1e-8 && flagged >= 1 && dist <= 1e-6,
        format!(
            "max mixture increase rate {worst:.2e}; {flagged} of 8 loss-dynamics trajectories non-monotone; endpoint distance {dist:.1e}"
        ),
    )
}

/// 6. Every violation's recommended perturbation lowers the target; no
/// violations for single or identical domains.
fn scanner_soundness() -> Outcome {
    let exact = HvpConfig::exact();
    let icfg = IntegratorConfig {
        record_every: 100,
        ..Default::default()
    };
    let (mut violations, mut improving) = (0, 0);
    for k in 0..20 {
        let (d1, d2, theta0) = quad_pair(mix_seed(6, k), 6, 0.7);
        let mut rng = Prng::new(mix_seed(60, k));
        let w = 0.1 + 0.8 * rng.next_f64();
        let c = rng.next_f64();
        let doms: [&dyn LossDomain; 2] = [&d1, &d2];
        let target = combine_domains(&[c, 1.0 - c], &doms).unwrap();
        let s = constant_schedule(&[w, 1.0 - w]).unwrap();
        let traj = integrate_ode(&doms, &s, &theta0, 1.0, &icfg).unwrap();
        let flow = ClosedFormFlow::new(&doms).unwrap();
        for v in optimality_scan(&traj, &doms, &target, DEFAULT_SCAN_TOL, &exact).unwrap() {
            violations += 1;
            let spec = v.improving_intervention(1e-3);
            let rec = traj.times.iter().position(|t| *t == v.t).unwrap();
            let rep = measure_from_state(
                &flow,
                EngineKind::ClosedForm,
                &doms,
                &s,
                &spec,
                &[&target],
                &traj.checkpoints[rec],
                None,
                1.0,
                &exact,
            )
            .unwrap();
            let change = match spec.order {
                SwapOrder::IjFirst => rep.targets[0].observed_12,
                SwapOrder::JiFirst => rep.targets[0].observed_21,
            };
            if change < 0.0 {
                improving += 1;
            }
        }
        let single = integrate_ode(&doms, &constant_schedule(&[1.0, 0.0]).unwrap(), &theta0, 1.0, &icfg).unwrap();
        let same: [&dyn LossDomain; 2] = [&d1, &d1];
        let twin = integrate_ode(&same, &s, &theta0, 1.0, &icfg).unwrap();
        let spurious = optimality_scan(&single, &doms, &target, DEFAULT_SCAN_TOL, &exact).unwrap().len()
            + optimality_scan(&twin, &same, &d1, 1e-8, &exact).unwrap().len();
        if spurious > 0 {
            return Err(format!("config {}: {spurious} violations on single/identical domains", k + 1));
        }
    }
    check(
        violations > 0 && improving == violations,
        format!("{improving} of {violations} recommended perturbations lower the target; none on single/identical domains"),
    )
}

/// 7. Sign of the γ²-adjusted prediction matches the observed excess loss.
fn mlp_direction() -> Outcome {
    let cfg = load("mlp_intervention.json");
    assert_eq!(cfg.experiment, ExperimentKind::MlpIntervention);
    let dir = tempfile::tempdir().unwrap();
    let out = run_mlp_intervention(&cfg, dir.path()).map_err(|e| e.to_string())?;
    let agreement = out.summary["sign_agreement"].as_f64().unwrap();
    let scored = out.summary["scored_cells"].as_u64().unwrap();
    check(
        scored > 0 && agreement >= 0.8,
        format!("sign agreement {:.0}% over {scored} cells", 100.0 * agreement),
    )
}

/// 8. Gradient and HVP-symmetry checks for all domain types, and
/// integrator order fits.
fn numerical_hygiene() -> Outcome {
    let cfg = load("mlp_intervention.json");
    let (m1, m2, mlp_theta) = build_mlp_domains(&cfg).unwrap();
    let (q1, q2, _) = quad_pair(8, 30, 0.7);
    let quad_combo = combine_domains(&[0.7, -0.4], &[&q1 as &dyn LossDomain, &q2]).unwrap();
    let mlp_combo = combine_domains(&[0.5, 0.5], &[&m1 as &dyn LossDomain, &m2]).unwrap();
    let cases: [(&str, &dyn LossDomain, f64); 4] = [
        ("quadratic", &q1, 1.0),
        ("mlp", &m1, 0.5),
        ("combined quadratic", &quad_combo, 1.0),
        ("combined mlp", &mlp_combo, 0.5),
    ];
    let (mut grad_err, mut sym_err) = (0.0f64, 0.0f64);
    for (c, (_, d, scale)) in cases.iter().enumerate() {
        let n = d.dim();
        let mut rng = Prng::new(mix_seed(80, c as u64));
        for _ in 0..10 {
            let theta = if n == mlp_theta.len() {
                mlp_theta.add(&gaussian_vector(n, &mut rng).scale(0.3 * scale))
            } else {
                gaussian_vector(n, &mut rng)
            };
            let g = d.grad(&theta).unwrap();
            let floor = 1e-3 * g.norm_inf();
            for _ in 0..20 {
                let i = rng.next_index(n);
                let h = 1e-5 * theta.as_slice()[i].abs().max(1.0);
                let mut plus = theta.clone();
                plus.as_mut_slice()[i] += h;
                let mut minus = theta.clone();
                minus.as_mut_slice()[i] -= h;
                let fd = (d.loss(&plus).unwrap() - d.loss(&minus).unwrap()) / (2.0 * h);
                grad_err = grad_err.max(rel(g.as_slice()[i], fd, floor));
            }
            let (u, v) = (gaussian_vector(n, &mut rng), gaussian_vector(n, &mut rng));
            let mut modes = vec![HvpConfig::finite_difference()];
            if d.supports_exact_hvp() {
                modes.push(HvpConfig::exact());
            }
            for m in modes {
                let hu = hvp(*d, &theta, &u, &m).unwrap();
                let hv = hvp(*d, &theta, &v, &m).unwrap();
                let floor = 1e-6 * hu.norm() * v.norm();
                sym_err = sym_err.max(rel(hu.dot(&v), hv.dot(&u), floor));
            }
        }
    }

    let (d, _, theta) = quad_pair(9, 5, 0.7);
    let exact = quadratic_closed_flow(&d, 1.0, &theta).unwrap();
    let slope = |method: Method| {
        let pts: Vec<(f64, f64)> = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]
            .iter()
            .map(|&h| {
                let c = IntegratorConfig {
                    method,
                    h,
                    record_every: 1,
                };
                (h, flow_map_numeric(&d, 1.0, &theta, &c).unwrap().sub(&exact).norm())
            })
            .collect();
        fit_slope(&pts)
    };
    let (rk4, euler) = (slope(Method::Rk4), slope(Method::Euler));
    check(
        grad_err <= 1e-5 && sym_err <= 1e-5 && (3.7..=4.3).contains(&rk4) && (0.8..=1.2).contains(&euler),
        format!(
            "gradient rel err {grad_err:.1e}, HVP symmetry rel err {sym_err:.1e}, RK4 slope {rk4:.2}, Euler slope {euler:.2}"
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("table-1 reproduction", table1),
        ("theorem-1 convergence", theorem_convergence),
        ("oracle equivalence", oracle_equivalence),
        ("conservation", conservation),
        ("descent monotonicity", descent_monotonicity),
        ("scanner soundness", scanner_soundness),
        ("mlp direction prediction", mlp_direction),
        ("numerical hygiene", numerical_hygiene),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(d) => println!("criterion {} ({name}): PASS - {d}", k + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL - {d}", k + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
