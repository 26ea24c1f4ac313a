//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Every reference value is recomputed here by an oracle that does
//! not share code with the implementation under test.

use std::path::Path;
use std::time::Instant;

use drivestack::cli::dispatch;
use drivestack::formats;
use drivestack_core::clock::FrozenClock;
use drivestack_core::milp_stage::{build_milp, extract_seed, solve_milp, MilpConfig, MilpOptions, MilpProblem, MilpStatus, Relation};
use drivestack_core::nlp_stage::{build_nlp, eval_constraints, eval_objective, solve_nlp, NlpBudget, NlpProblem, NlpStatus, NlpWeights};
use drivestack_core::pem::{apply_pem, fit_pem, logistic, Detection, DetectionLogFrame, ObjectObservation, PemParams, SalientVars};
use drivestack_core::planner::{plan_cycle, PlanSource, PlannerConfig};
use drivestack_core::prediction::{
    extract_goals, goal_posterior, grit_infer, grit_train, grit_verify, posterior_from_costs, GoalTree, InverseConfig, TreeNode,
    TreeProperty, Verification,
};
use drivestack_core::rng::seeded;
use drivestack_core::rules::{robustness, Cmp, Predicate, SignalTrace, StlFormula};
use drivestack_core::simulator::{evaluate, exit_ramp_scenario, nominal_scenarios, run_sim, scripted_driver_samples, Perception, SimConfig};
use drivestack_core::world::{bicycle_step, AgentState, ObstaclePrediction, RoadCorridor, Scenario, Trajectory, Vec2, VehicleParams};
use rand::Rng;
use rand_distr::{Distribution, Normal};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("MILP matches binary enumeration", c1_milp),
        ("warm start beats cold start", c2_warm_start),
        ("derivatives match finite differences", c3_derivatives),
        ("converged plans are feasible", c4_feasibility),
        ("rule encoding is sound", c5_stl),
        ("inverse-planning posterior", c6_posterior),
        ("goal trees", c7_grit),
        ("PEM recovery", c8_pem),
        ("closed loop", c9_closed_loop),
        ("determinism", c10_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let r = f();
        let secs = t.elapsed().as_secs_f64();
        match r {
            Ok(d) => println!("criterion {:>2} PASS  {name}: {d} [{secs:.1}s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {d} [{secs:.1}s]", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}

// ---------------------------------------------------------------- scenarios

fn straight_scenario(width: f64, speed: f64, n: f64, steps: usize, dt: f64) -> Scenario {
    let c = RoadCorridor::straight(Vec2::new(0.0, 0.0), 0.0, 400.0, width).unwrap();
    let ego = AgentState {
        y: n,
        speed,
        ..Default::default()
    };
    Scenario::new(c, ego, dt, steps, 10.0).unwrap()
}

fn curved_scenario(radius: f64, width: f64, speed: f64, n: f64, steps: usize, dt: f64) -> Scenario {
    let pts: Vec<Vec2> = (0..=300)
        .map(|i| {
            let t = i as f64 / 300.0 * 1.4;
            Vec2::new(radius * t.sin(), radius * (1.0 - t.cos()))
        })
        .collect();
    let c = RoadCorridor::new(pts, width).unwrap();
    let p = c.point_at(0.0, n);
    let ego = AgentState {
        x: p.x,
        y: p.y,
        speed,
        ..Default::default()
    };
    Scenario::new(c, ego, dt, steps, 10.0).unwrap()
}

/// Obstacle driving along the corridor at constant speed and offset.
fn along(sc: &Scenario, id: &str, s: f64, n: f64, speed: f64) -> ObstaclePrediction {
    let c = &sc.corridor;
    let states = (0..=sc.horizon_steps)
        .map(|k| {
            let sk = s + speed * sc.dt * k as f64;
            let p = c.point_at(sk, n);
            AgentState {
                x: p.x,
                y: p.y,
                heading: c.heading(sk),
                speed,
                ..Default::default()
            }
        })
        .collect();
    ObstaclePrediction {
        id: id.into(),
        half_length: 2.2,
        half_width: 0.9,
        states,
    }
}

fn random_planning_scenario(rng: &mut impl Rng, steps: usize) -> (Scenario, Vec<ObstaclePrediction>) {
    let speed = rng.random_range(6.0..12.0);
    let sc = if rng.random_bool(0.5) {
        straight_scenario(rng.random_range(7.0..9.0), speed, -1.75, steps, 0.2)
    } else {
        curved_scenario(rng.random_range(90.0..200.0), rng.random_range(7.0..9.0), speed, -1.75, steps, 0.2)
    };
    let count = rng.random_range(0..=2);
    let preds = (0..count)
        .map(|i| {
            let s = rng.random_range(18.0..45.0);
            let n = if rng.random_bool(0.7) { rng.random_range(-2.2..-1.0) } else { rng.random_range(1.0..2.2) };
            let v = if rng.random_bool(0.7) { 0.0 } else { rng.random_range(2.0..5.0) };
            along(&sc, &format!("o{i}"), s, n, v)
        })
        .collect();
    (sc, preds)
}

fn constant_velocity_seed(sc: &Scenario, wheelbase: f64) -> Trajectory {
    let mut states = vec![sc.ego];
    for _ in 0..sc.horizon_steps {
        states.push(bicycle_step(states.last().unwrap(), 0.0, 0.0, wheelbase, sc.dt));
    }
    Trajectory::with_derived_controls(states, sc.dt)
}

// ------------------------------------------------------------- criterion 1

/// Brute force over all binary assignments, each LP solved by microlp.
fn enumerate_binaries(p: &MilpProblem) -> Result<Option<f64>, String> {
    use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOutcome};
    let bins: Vec<usize> = (0..p.binary.len()).filter(|&j| p.binary[j]).collect();
    let lp = &p.lp;
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << bins.len()) {
        let mut q = Problem::new(OptimizationDirection::Minimize);
        let vars: Vec<_> = (0..lp.num_vars())
            .map(|j| {
                let (lo, hi) = match bins.iter().position(|&b| b == j) {
                    Some(i) => {
                        let v = f64::from((mask >> i) & 1);
                        (v, v)
                    }
                    None => (lp.lower[j], lp.upper[j]),
                };
                q.add_var(lp.cost[j], (lo, hi))
            })
            .collect();
        for (r, row) in lp.rows.iter().enumerate() {
            let terms: Vec<_> = row.iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(j, a)| (vars[j], *a)).collect();
            let op = match lp.relations[r] {
                Relation::Le => ComparisonOp::Le,
                Relation::Ge => ComparisonOp::Ge,
                Relation::Eq => ComparisonOp::Eq,
            };
            q.add_constraint(terms.as_slice(), op, lp.rhs[r]);
        }
        match q.solve() {
            Ok(SolveOutcome::Solution(s)) => {
                let v = s.objective();
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
            Err(microlp::Error::Infeasible) => {}
            other => return Err(format!("oracle LP failed: {other:?}")),
        }
    }
    Ok(best)
}

fn c1_milp() -> Check {
    let mut rng = seeded(101);
    let opts = MilpOptions {
        gap_tol: 0.0,
        ..MilpOptions::default()
    };
    let (mut done, mut feasible, mut worst_err, mut worst_time, mut max_bins) = (0, 0, 0.0f64, 0.0f64, 0);
    let mut attempts = 0;
    while done < 50 {
        attempts += 1;
        ensure(attempts < 5000, || format!("only {done} instances with 1..=12 binaries"))?;
        let steps = rng.random_range(3..=5);
        let (sc, mut preds) = random_planning_scenario(&mut rng, steps);
        if preds.is_empty() {
            let s = sc.ego.speed * sc.dt * rng.random_range(2.0..6.0) + rng.random_range(-2.0..4.0);
            preds.push(along(&sc, "p", s.max(6.0), rng.random_range(-2.5..2.5), 0.0));
        }
        let p = build_milp(&sc, &preds, &MilpConfig::default(), &[]).map_err(|e| e.to_string())?;
        let nb = p.num_binaries();
        if !(1..=12).contains(&nb) {
            continue;
        }
        done += 1;
        max_bins = max_bins.max(nb);
        let t = Instant::now();
        let out = solve_milp(&p, &opts, &FrozenClock).map_err(|e| e.to_string())?;
        let secs = t.elapsed().as_secs_f64();
        worst_time = worst_time.max(secs);
        ensure(secs < 1.0, || format!("instance {done} took {secs:.3}s"))?;
        match (out.status, enumerate_binaries(&p)?) {
            (MilpStatus::Optimal, Some(v)) => {
                feasible += 1;
                let err = (out.objective - v).abs();
                worst_err = worst_err.max(err);
                ensure(err <= 1e-6, || format!("instance {done}: B&B {} vs oracle {v}", out.objective))?;
            }
            (MilpStatus::Infeasible, None) => {}
            (st, o) => return Err(format!("instance {done}: B&B {st:?}, oracle {o:?}")),
        }
    }
    Ok(format!(
        "50 instances ({feasible} feasible, up to {max_bins} binaries), max |error| {worst_err:.1e}, slowest {worst_time:.3}s"
    ))
}

// ------------------------------------------------------------- criterion 2

fn c2_warm_start() -> Check {
    let t0 = Instant::now();
    let mut rng = seeded(202);
    let ego = VehicleParams::default();
    let budget = NlpBudget::default();
    let (mut warm_ok, mut cold_ok) = (0, 0);
    let (mut warm_inner, mut cold_inner) = (Vec::new(), Vec::new());
    let mut common = 0;
    for i in 0..20 {
        let (sc, preds) = random_planning_scenario(&mut rng, 20);
        let nlp = build_nlp(&sc, &preds, &NlpWeights::default(), &ego).map_err(|e| e.to_string())?;
        let cold_seed = constant_velocity_seed(&sc, ego.wheelbase);
        let milp = build_milp(&sc, &preds, &MilpConfig::default(), &[]).map_err(|e| e.to_string())?;
        let mo = solve_milp(&milp, &MilpOptions::default(), &FrozenClock).map_err(|e| e.to_string())?;
        let warm_seed = extract_seed(&mo, &milp, &sc, ego.wheelbase).unwrap_or_else(|_| cold_seed.clone());
        let warm = solve_nlp(&nlp, &warm_seed, &budget, &FrozenClock).map_err(|e| e.to_string())?;
        let cold = solve_nlp(&nlp, &cold_seed, &budget, &FrozenClock).map_err(|e| e.to_string())?;
        warm_inner.push(warm.inner_iterations);
        cold_inner.push(cold.inner_iterations);
        let (w, c) = (warm.status == NlpStatus::Converged, cold.status == NlpStatus::Converged);
        warm_ok += usize::from(w);
        cold_ok += usize::from(c);
        if w && c {
            common += 1;
            ensure(warm.objective <= cold.objective + 1e-6, || {
                format!("scenario {i}: warm objective {} > cold {}", warm.objective, cold.objective)
            })?;
        }
    }
    let median = |v: &mut Vec<usize>| {
        v.sort_unstable();
        let n = v.len();
        (v[(n - 1) / 2] + v[n / 2]) as f64 / 2.0
    };
    let (mw, mc) = (median(&mut warm_inner), median(&mut cold_inner));
    let secs = t0.elapsed().as_secs_f64();
    let summary = format!(
        "converged warm {warm_ok}/20 vs cold {cold_ok}/20, median inner iterations {mw} vs {mc}, {common} compared, {secs:.1}s"
    );
    ensure(warm_ok >= cold_ok, || format!("convergence rate: {summary}"))?;
    ensure(mw < mc, || format!("median iterations: {summary}"))?;
    ensure(secs < 60.0, || format!("too slow: {summary}"))?;
    Ok(summary)
}

// ------------------------------------------------------------- criterion 3

fn random_point(p: &NlpProblem, sc: &Scenario, rng: &mut impl Rng) -> Vec<f64> {
    let mut z = vec![0.0; p.num_vars()];
    for k in 0..=p.steps {
        let q = sc.corridor.point_at(rng.random_range(0.0..sc.corridor.length() * 0.8), rng.random_range(-3.0..3.0));
        let i = p.state(k);
        z[i] = q.x;
        z[i + 1] = q.y;
        z[i + 2] = rng.random_range(-3.0..3.0);
        z[i + 3] = rng.random_range(0.0..20.0);
    }
    for k in 0..p.steps {
        let c = p.control(k);
        z[c] = rng.random_range(-6.0..3.0);
        z[c + 1] = rng.random_range(-0.5..0.5);
    }
    z
}

fn c3_derivatives() -> Check {
    let families: Vec<(&str, Scenario, Vec<ObstaclePrediction>)> = {
        let a = straight_scenario(7.0, 10.0, 0.0, 6, 0.1);
        let b = straight_scenario(7.0, 10.0, 0.0, 6, 0.1);
        let pb = vec![along(&b, "a", 30.0, 1.0, 0.0)];
        let c = curved_scenario(60.0, 8.0, 8.0, 0.0, 5, 0.1);
        let pc = vec![along(&c, "a", 20.0, 1.0, 3.0), along(&c, "b", 40.0, -1.5, 0.0)];
        vec![("straight", a, vec![]), ("straight+obstacle", b, pb), ("curved+obstacles", c, pc)]
    };
    let h = 1e-6;
    let mut worst = 0.0f64;
    for (fi, (name, sc, preds)) in families.iter().enumerate() {
        let p = build_nlp(sc, preds, &NlpWeights::default(), &VehicleParams::default()).map_err(|e| e.to_string())?;
        let mut rng = seeded(300 + fi as u64);
        for _ in 0..100 {
            let z = random_point(&p, sc, &mut rng);
            let (_, g) = eval_objective(&p, &z).map_err(|e| e.to_string())?;
            let jac = eval_constraints(&p, &z).map_err(|e| e.to_string())?.jacobian.to_dense();
            let mut zp = z.clone();
            for j in 0..z.len() {
                zp[j] = z[j] + h;
                let fp = eval_objective(&p, &zp).map_err(|e| e.to_string())?.0;
                let cp = eval_constraints(&p, &zp).map_err(|e| e.to_string())?.values;
                zp[j] = z[j] - h;
                let fm = eval_objective(&p, &zp).map_err(|e| e.to_string())?.0;
                let cm = eval_constraints(&p, &zp).map_err(|e| e.to_string())?.values;
                zp[j] = z[j];
                let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
                let e = rel(g[j], (fp - fm) / (2.0 * h));
                ensure(e < 1e-5, || format!("{name}: gradient entry {j} error {e:.2e}"))?;
                worst = worst.max(e);
                for r in 0..cp.len() {
                    let e = rel(jac[r][j], (cp[r] - cm[r]) / (2.0 * h));
                    ensure(e < 1e-5, || format!("{name}: jacobian ({r},{j}) error {e:.2e}"))?;
                    worst = worst.max(e);
                }
            }
        }
    }
    Ok(format!("3 families x 100 points, worst relative error {worst:.2e}"))
}

// ------------------------------------------------------------- criterion 4

fn c4_feasibility() -> Check {
    let mut rng = seeded(404);
    let config = PlannerConfig::default();
    let (mut converged, mut worst_res, mut worst_ineq) = (0, 0.0f64, f64::INFINITY);
    let runs = 40;
    for i in 0..runs {
        let steps = rng.random_range(10..=20);
        let (sc, preds) = random_planning_scenario(&mut rng, steps);
        let plan = plan_cycle(&sc, &preds, &config, None, &FrozenClock).map_err(|e| e.to_string())?;
        if plan.source != PlanSource::NlpConverged {
            continue;
        }
        converged += 1;
        let l = config.ego.wheelbase;
        let st = &plan.trajectory.states;
        for k in 0..st.len() - 1 {
            let next = bicycle_step(&st[k], st[k + 1].accel, st[k + 1].steer, l, sc.dt);
            let r = [next.x - st[k + 1].x, next.y - st[k + 1].y, next.heading - st[k + 1].heading, next.speed - st[k + 1].speed]
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            worst_res = worst_res.max(r);
        }
        let p = build_nlp(&sc, &preds, &config.nlp_weights, &config.ego).map_err(|e| e.to_string())?;
        let c = eval_constraints(&p, &p.seed_vector(&plan.trajectory)).map_err(|e| e.to_string())?;
        let m = c.values[c.num_eq..].iter().fold(f64::INFINITY, |m, &v| m.min(v));
        worst_ineq = worst_ineq.min(m);
        ensure(worst_res < 1e-6, || format!("scenario {i}: dynamics residual {worst_res:.2e}"))?;
        ensure(m >= -1e-6, || format!("scenario {i}: inequality {m:.2e}"))?;
    }
    ensure(converged >= runs / 2, || format!("only {converged}/{runs} plans converged"))?;
    Ok(format!(
        "{converged}/{runs} converged plans, max residual {worst_res:.1e}, min inequality {worst_ineq:.2e}"
    ))
}

// ------------------------------------------------------------- criterion 5

fn random_formula(rng: &mut impl Rng, depth: usize, horizon: usize) -> StlFormula {
    if depth == 0 || horizon == 0 && rng.random_bool(0.5) {
        let (sig, lo, hi) = match rng.random_range(0..4) {
            0 => ("n", -2.5, 2.5),
            1 => ("vs", 5.0, 13.0),
            2 => ("vn", -1.5, 1.5),
            _ => ("s", 0.0, 40.0),
        };
        let cmp = if rng.random_bool(0.5) { Cmp::Le } else { Cmp::Ge };
        return StlFormula::Pred(Predicate {
            terms: vec![(1.0, sig.into())],
            cmp,
            rhs: (rng.random_range(lo..hi) * 100.0f64).round() / 100.0,
        });
    }
    match rng.random_range(0..4) {
        0 => StlFormula::And((0..2).map(|_| random_formula(rng, depth - 1, horizon)).collect()),
        1 => StlFormula::Or((0..2).map(|_| random_formula(rng, depth - 1, horizon)).collect()),
        k => {
            let a = rng.random_range(0..=horizon / 2);
            let b = rng.random_range(a..=horizon / 2);
            let child = Box::new(random_formula(rng, depth - 1, horizon - b));
            if k == 2 {
                StlFormula::Always { a, b, child }
            } else {
                StlFormula::Eventually { a, b, child }
            }
        }
    }
}

fn c5_stl() -> Check {
    let mut rng = seeded(505);
    let steps = 8;
    let sc = straight_scenario(7.0, 9.0, -1.75, steps, 0.3);
    let preds = vec![along(&sc, "p", 22.0, -1.75, 0.0)];
    let (mut feasible, mut attempts, mut worst) = (0, 0, f64::INFINITY);
    while feasible < 100 {
        attempts += 1;
        ensure(attempts <= 2000, || format!("only {feasible} feasible formulas"))?;
        let depth = rng.random_range(0..=3);
        let f = random_formula(&mut rng, depth, steps);
        let p = build_milp(&sc, &preds, &MilpConfig::default(), std::slice::from_ref(&f)).map_err(|e| format!("{f}: {e}"))?;
        let out = solve_milp(&p, &MilpOptions::default(), &FrozenClock).map_err(|e| e.to_string())?;
        let Some(x) = out.incumbent else { continue };
        feasible += 1;
        let binding = p.layout.as_ref().ok_or("no layout")?.binding();
        let mut trace = SignalTrace::new();
        for name in ["s", "n", "vs", "vn", "as", "an"] {
            let series = binding.get(name).ok_or("missing signal")?;
            trace.insert(name.into(), series.iter().map(|terms| terms.iter().map(|&(j, c)| c * x[j]).sum()).collect());
        }
        let r = robustness(&f, &trace).map_err(|e| e.to_string())?;
        worst = worst.min(r);
        ensure(r >= -1e-4, || format!("incumbent of `{f}` has robustness {r:.3e}"))?;
    }
    Ok(format!("100 feasible formulas of {attempts} drawn, min robustness {worst:.2e}"))
}

// ------------------------------------------------------------- criterion 6

/// Trapezoidal profile without route-end braking; valid while routes are
/// long compared with the distance covered.
fn oracle_profile(v0: f64, target: f64, steps: usize, dt: f64) -> Vec<f64> {
    let mut v = vec![v0];
    for _ in 0..steps {
        let last = *v.last().unwrap();
        v.push(target.clamp(last - 3.0 * dt, last + 2.0 * dt));
    }
    v
}

fn oracle_cost(v: &[f64], target: f64, dt: f64) -> f64 {
    let track: f64 = v[1..].iter().map(|x| (x - target).powi(2)).sum();
    let acc: Vec<f64> = v.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
    let jerk: f64 = acc.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    track + 0.5 * jerk
}

fn oracle_gap(observed: &[f64], target: f64, dt: f64, completion: usize) -> f64 {
    let m = observed.len() - 1;
    let best = oracle_profile(observed[0], target, m + completion, dt);
    let mut seen = observed.to_vec();
    seen.extend(oracle_profile(observed[m], target, completion, dt).into_iter().skip(1));
    oracle_cost(&seen, target, dt) - oracle_cost(&best, target, dt)
}

fn c6_posterior() -> Check {
    let mut rng = seeded(606);
    let mut worst = 0.0f64;
    for _ in 0..2000 {
        let k = rng.random_range(2..=6);
        let ids: Vec<String> = (0..k).map(|i| format!("g{i}")).collect();
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let prior: Vec<f64> = raw.iter().map(|p| p / total).collect();
        let scale = 10f64.powf(rng.random_range(-2.0..3.0));
        let costs: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0) * scale).collect();
        let beta = 10f64.powf(rng.random_range(-3.0..3.0));
        let post = posterior_from_costs(&ids, &prior, &costs, beta).map_err(|e| e.to_string())?;
        let err = (post.total() - 1.0).abs();
        worst = worst.max(err);
        ensure(err <= 1e-9, || format!("posterior sums to {}", post.total()))?;
    }

    let sc = exit_ramp_scenario();
    let dt = sc.dt;
    let cfg0 = InverseConfig::default();
    let mut cases = 0;
    let mut max_offset = 0i64;
    for beta in [0.3, 1.0, 3.0] {
        for rate in [1.0, 1.5, 2.5] {
            let cfg = InverseConfig { beta, ..cfg0 };
            let mut states = vec![AgentState {
                x: 20.0,
                y: -1.75,
                speed: 10.0,
                ..Default::default()
            }];
            let (mut oracle_step, mut impl_step) = (None, None);
            for m in 1..=40 {
                let last = *states.last().unwrap();
                let speed = (last.speed - rate * dt).max(5.0);
                states.push(AgentState {
                    x: last.x + dt * last.speed,
                    speed,
                    ..last
                });
                let goals = extract_goals(&sc, &states[0]);
                ensure(goals.len() == 2, || format!("expected two goals, got {}", goals.len()))?;
                let post = goal_posterior(&sc, &states, &goals, None, &cfg).map_err(|e| e.to_string())?;
                let err = (post.total() - 1.0).abs();
                worst = worst.max(err);
                ensure(err <= 1e-9, || format!("scenario posterior sums to {}", post.total()))?;
                let speeds: Vec<f64> = states.iter().map(|s| s.speed).collect();
                let gap = oracle_gap(&speeds, sc.v_ref, dt, cfg.completion_steps) - oracle_gap(&speeds, 5.0, dt, cfg.completion_steps);
                if oracle_step.is_none() && gap > 9f64.ln() / beta {
                    oracle_step = Some(m as i64);
                }
                if impl_step.is_none() && post.probability("exit").unwrap_or(0.0) > 0.9 {
                    impl_step = Some(m as i64);
                }
            }
            let (Some(o), Some(i)) = (oracle_step, impl_step) else {
                return Err(format!("beta {beta}, rate {rate}: crossing oracle {oracle_step:?} vs posterior {impl_step:?}"));
            };
            ensure((o - i).abs() <= 1, || format!("beta {beta}, rate {rate}: boundary {o} vs posterior crossing {i}"))?;
            max_offset = max_offset.max((o - i).abs());
            cases += 1;
        }
    }
    Ok(format!(
        "max |sum - 1| {worst:.1e}; {cases} two-goal cases cross 0.9 within {max_offset} step(s) of ln 9 / beta"
    ))
}

// ------------------------------------------------------------- criterion 7

fn naive_score(node: &TreeNode, x: &[f64]) -> f64 {
    match node {
        TreeNode::Leaf { positive, negative } => (*positive as f64 + 1.0) / ((positive + negative) as f64 + 2.0),
        TreeNode::Split { feature, threshold, left, right } => {
            if x[*feature] <= *threshold {
                naive_score(left, x)
            } else {
                naive_score(right, x)
            }
        }
    }
}

fn naive_posterior(trees: &[GoalTree], x: &[f64]) -> Vec<(String, f64)> {
    let s: Vec<f64> = trees.iter().map(|t| naive_score(&t.root, x)).collect();
    let total: f64 = s.iter().sum();
    trees.iter().zip(s).map(|(t, v)| (t.goal.clone(), v / total)).collect()
}

fn naive_violates(trees: &[GoalTree], x: &[f64], goal: &str) -> bool {
    let post = naive_posterior(trees, x);
    let p = post.iter().find(|g| g.0 == goal).map(|g| g.1);
    match p {
        None => true,
        Some(p) => post.iter().any(|(g, q)| g != goal && *q >= p),
    }
}

fn collect_thresholds(node: &TreeNode, out: &mut Vec<Vec<f64>>) {
    if let TreeNode::Split { feature, threshold, left, right } = node {
        out[*feature].push(*threshold);
        collect_thresholds(left, out);
        collect_thresholds(right, out);
    }
}

/// Every point of the box that decides a different leaf somewhere is
/// covered by the interval ends plus the thresholds inside the box.
fn naive_verify(trees: &[GoalTree], prop: &TreeProperty) -> bool {
    let nf = prop.intervals.len();
    let mut cuts = vec![Vec::new(); nf];
    for t in trees {
        collect_thresholds(&t.root, &mut cuts);
    }
    let axes: Vec<Vec<f64>> = prop
        .intervals
        .iter()
        .zip(cuts)
        .map(|(&(lo, hi), ts)| {
            let mut v: Vec<f64> = ts.into_iter().filter(|t| *t > lo && *t < hi).collect();
            v.push(lo);
            v.push(hi);
            v
        })
        .collect();
    let total: usize = axes.iter().map(Vec::len).product();
    (0..total).all(|mut code| {
        let x: Vec<f64> = axes
            .iter()
            .map(|a| {
                let v = a[code % a.len()];
                code /= a.len();
                v
            })
            .collect();
        !naive_violates(trees, &x, &prop.goal)
    })
}

fn c7_grit() -> Check {
    let train = scripted_driver_samples(2000, 71);
    let test = scripted_driver_samples(1000, 72);
    let (x, y): (Vec<Vec<f64>>, Vec<String>) = train.iter().map(|s| (s.features.clone(), s.goal.clone())).unzip();
    let trees = grit_train(&x, &y, 4, 5).map_err(|e| e.to_string())?;
    let nf = x[0].len();
    let lo: Vec<f64> = (0..nf).map(|f| x.iter().map(|r| r[f]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..nf).map(|f| x.iter().map(|r| r[f]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let mut cuts = vec![Vec::new(); nf];
    for t in &trees {
        collect_thresholds(&t.root, &mut cuts);
    }

    let mut rng = seeded(707);
    for i in 0..1000 {
        let q: Vec<f64> = (0..nf)
            .map(|f| {
                if !cuts[f].is_empty() && rng.random_bool(0.2) {
                    cuts[f][rng.random_range(0..cuts[f].len())]
                } else {
                    rng.random_range(lo[f] - 1.0..hi[f] + 1.0)
                }
            })
            .collect();
        let got = grit_infer(&trees, &q);
        let want = naive_posterior(&trees, &q);
        ensure(got.goals == want, || format!("input {i}: {:?} vs {want:?}", got.goals))?;
    }

    let (mut verified, mut witnesses) = (0, 0);
    for i in 0..300 {
        let intervals: Vec<(f64, f64)> = (0..nf)
            .map(|f| {
                let w = (hi[f] - lo[f]) * rng.random_range(0.02..0.5);
                let a = rng.random_range(lo[f]..hi[f] - w);
                (a, a + w)
            })
            .collect();
        let goal = if rng.random_bool(0.5) { "exit" } else { "end" }.to_string();
        let prop = TreeProperty { intervals, goal };
        let v = grit_verify(&trees, &prop).map_err(|e| e.to_string())?;
        let oracle_ok = naive_verify(&trees, &prop);
        match v {
            Verification::Verified => {
                verified += 1;
                ensure(oracle_ok, || format!("property {i}: verified but the oracle finds a violation"))?;
                for _ in 0..200 {
                    let q: Vec<f64> = prop.intervals.iter().map(|&(a, b)| rng.random_range(a..=b)).collect();
                    ensure(!naive_violates(&trees, &q, &prop.goal), || format!("property {i}: verified but {q:?} violates"))?;
                }
            }
            Verification::Counterexample { features } => {
                witnesses += 1;
                let inside = features.iter().zip(&prop.intervals).all(|(v, (a, b))| a <= v && v <= b);
                ensure(inside, || format!("property {i}: witness outside the box"))?;
                ensure(naive_violates(&trees, &features, &prop.goal), || format!("property {i}: witness does not violate"))?;
                ensure(!oracle_ok, || format!("property {i}: oracle verifies what has a witness"))?;
            }
        }
    }
    ensure(verified > 0 && witnesses > 0, || format!("degenerate property mix: {verified} verified, {witnesses} witnesses"))?;

    let hits = test
        .iter()
        .filter(|s| grit_infer(&trees, &s.features).argmax() == Some(s.goal.as_str()))
        .count();
    let acc = hits as f64 / test.len() as f64;
    ensure(acc >= 0.9, || format!("held-out accuracy {acc:.3}"))?;
    Ok(format!(
        "1000 inferences match, {verified} verified / {witnesses} sound witnesses, held-out accuracy {acc:.3}"
    ))
}

// ------------------------------------------------------------- criterion 8

const PEM_TRUE: (f64, [f64; 3], f64, f64) = (-3.0, [0.05, -0.4, 2.0], 0.1, 0.004);

fn synthetic_log(frames: usize, per_frame: usize, seed: u64) -> Vec<DetectionLogFrame> {
    let (b0, w, s0, s1) = PEM_TRUE;
    let mut rng = seeded(seed);
    (0..frames)
        .map(|f| {
            let mut gt = Vec::new();
            let mut det = Vec::new();
            for i in 0..per_frame {
                let range = rng.random_range(2.0..100.0);
                let azimuth = rng.random_range(-1.5..1.5);
                let occlusion = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..1.0) };
                let state = AgentState {
                    x: 40.0 * i as f64,
                    y: 0.0,
                    ..Default::default()
                };
                let z = b0 + w[0] * range + w[1] * azimuth + w[2] * occlusion;
                if !rng.random_bool(logistic(z)) {
                    let nd = Normal::new(0.0, s0 + s1 * range).unwrap();
                    det.push(Detection {
                        x: state.x + nd.sample(&mut rng),
                        y: state.y + nd.sample(&mut rng),
                        heading: 0.0,
                        half_length: 2.0,
                        half_width: 1.0,
                    });
                }
                gt.push(ObjectObservation {
                    id: format!("o{i}"),
                    state,
                    half_length: 2.0,
                    half_width: 1.0,
                    salient: SalientVars { range, azimuth, occlusion },
                });
            }
            DetectionLogFrame {
                frame: f as u64,
                ground_truth: gt,
                detections: det,
            }
        })
        .collect()
}

fn c8_pem() -> Check {
    let log = synthetic_log(2500, 4, 808);
    let fit = fit_pem(&log, 3.0).map_err(|e| e.to_string())?;
    ensure(fit.samples == 10_000, || format!("{} samples", fit.samples))?;
    let se = fit.standard_errors.ok_or("no standard errors")?;
    let sse = fit.sigma_standard_errors.ok_or("no sigma standard errors")?;
    let (b0, w, s0, s1) = PEM_TRUE;
    let pairs = [
        ("intercept", fit.intercept, b0, se[0]),
        ("range", fit.weights[0], w[0], se[1]),
        ("azimuth", fit.weights[1], w[1], se[2]),
        ("occlusion", fit.weights[2], w[2], se[3]),
        ("sigma0", fit.sigma0, s0, sse[0]),
        ("sigma1", fit.sigma1, s1, sse[1]),
    ];
    let mut worst_z = 0.0f64;
    for (name, got, want, s) in pairs {
        let z = (got - want).abs() / s;
        worst_z = worst_z.max(z);
        ensure(z <= 3.0, || format!("{name}: fitted {got:.4} vs true {want} ({z:.2} standard errors)"))?;
    }

    let params = PemParams::new(b0, w, s0, s1);
    let mut rng = seeded(809);
    let mut bins = [(0usize, 0usize, 0.0f64); 10];
    for i in 0..100_000 {
        let salient = SalientVars {
            range: rng.random_range(0.0..100.0),
            azimuth: rng.random_range(-1.5..1.5),
            occlusion: rng.random_range(0.0..1.0),
        };
        let obj = ObjectObservation {
            id: format!("d{i}"),
            state: AgentState::default(),
            half_length: 2.0,
            half_width: 1.0,
            salient,
        };
        let seen = !apply_pem(std::slice::from_ref(&obj), &params, &mut rng).is_empty();
        let z = b0 + w[0] * salient.range + w[1] * salient.azimuth + w[2] * salient.occlusion;
        let b = &mut bins[((salient.range / 10.0) as usize).min(9)];
        b.0 += 1;
        b.1 += usize::from(seen);
        b.2 += 1.0 - 1.0 / (1.0 + (-z).exp());
    }
    let mut worst_gap = 0.0f64;
    for (k, (n, hits, analytic)) in bins.iter().enumerate() {
        let gap = (*hits as f64 / *n as f64 - analytic / *n as f64).abs();
        worst_gap = worst_gap.max(gap);
        ensure(gap <= 0.02, || format!("bin {}-{} m: recall gap {gap:.4}", 10 * k, 10 * k + 10))?;
    }
    Ok(format!("all 6 coefficients within {worst_z:.2} standard errors, max recall gap {worst_gap:.4}"))
}

// ------------------------------------------------------------- criterion 9

fn c9_closed_loop() -> Check {
    let config = SimConfig::default();
    let mut min_progress = f64::INFINITY;
    let mut lines = Vec::new();
    for (name, sc) in nominal_scenarios() {
        let m = evaluate(&run_sim(&sc, &config, &FrozenClock).map_err(|e| format!("{name}: {e}"))?);
        let need = 0.8 * sc.v_ref * sc.dt * config.steps as f64;
        ensure(!m.collision, || format!("{name}: collision at step {:?}", m.first_collision_step))?;
        ensure(m.progress >= need, || format!("{name}: progress {:.1} < {need:.1}", m.progress))?;
        min_progress = min_progress.min(m.progress / need * 0.8);
        lines.push(name);
    }
    let (name, sc) = nominal_scenarios().into_iter().find(|(n, _)| n == "parked_right").unwrap();
    let gt = evaluate(&run_sim(&sc, &config, &FrozenClock).map_err(|e| e.to_string())?);
    let surrogate = SimConfig {
        perception: Perception::Surrogate,
        pem: Some(PemParams::new(-8.0, [0.2, 0.0, 0.0], 0.05, 0.002)),
        seed: 9,
        ..config.clone()
    };
    let sm = evaluate(&run_sim(&sc, &surrogate, &FrozenClock).map_err(|e| e.to_string())?);
    let first = |m: &drivestack_core::simulator::Metrics| m.first_detection.get("parked").copied().flatten();
    let (g, s) = (first(&gt), first(&sm));
    let later = match (g, s) {
        (Some(a), Some(b)) => b > a,
        (Some(_), None) => true,
        _ => false,
    };
    ensure(later, || format!("{name}: first detection ground truth {g:?}, surrogate {s:?}"))?;
    Ok(format!(
        "{} scenarios collision-free, min progress {:.1}% of v_ref*T; {name} first detection {g:?} -> {s:?}, surrogate collision: {}",
        lines.len(),
        100.0 * min_progress,
        sm.collision
    ))
}

// ------------------------------------------------------------ criterion 10

fn run_cli(args: &[&str]) -> (i32, Vec<u8>) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["drivestack"];
    argv.extend_from_slice(args);
    let code = dispatch(argv, &mut out, &mut err);
    (code, out)
}

fn c10_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let p = |name: &str| root.join(name).to_string_lossy().into_owned();
    let (code, _) = run_cli(&["suite", "--out", &p("suite")]);
    ensure(code == 0, || "suite failed".into())?;

    let log = synthetic_log(200, 3, 1010);
    formats::write_text(&root.join("log.jsonl"), &formats::to_jsonl(&log)).map_err(|e| e.to_string())?;
    formats::write_text(&root.join("data.jsonl"), &formats::to_jsonl(&scripted_driver_samples(400, 1011))).map_err(|e| e.to_string())?;
    let (_, pem) = run_cli(&["pem-fit", &p("log.jsonl")]);
    formats::write_text(&root.join("pem.json"), &String::from_utf8_lossy(&pem)).map_err(|e| e.to_string())?;
    let (_, trees) = run_cli(&["grit-train", &p("data.jsonl")]);
    formats::write_text(&root.join("trees.json"), &String::from_utf8_lossy(&trees)).map_err(|e| e.to_string())?;
    let prop = TreeProperty {
        intervals: vec![(5.0, 40.0), (-0.05, 0.05), (4.0, 6.0), (-3.0, -2.0)],
        goal: "exit".into(),
    };
    formats::write_text(&root.join("prop.json"), &formats::to_json(&prop)).map_err(|e| e.to_string())?;
    let manifest = serde_json::json!({
        "scenarios": ["suite/parked_right.json", "suite/exit_follower.json", "suite/slalom.json", "suite/curve_parked.json"],
        "seed": 3,
        "overrides": { "steps": 12, "perception": "surrogate", "pem": "pem.json" }
    });
    formats::write_text(&root.join("manifest.json"), &manifest.to_string()).map_err(|e| e.to_string())?;
    formats::write_text(&root.join("rules.txt"), "G[0,10](n <= 3.5)\nF[0,20](s >= 30) & G[0,5](vs >= 0)\n").map_err(|e| e.to_string())?;

    let sim = |out: &str| {
        vec![
            "simulate".to_string(),
            p("suite/exit_follower.json"),
            "--seed".into(),
            "7".into(),
            "--steps".into(),
            "12".into(),
            "--perception".into(),
            "surrogate".into(),
            "--pem".into(),
            p("pem.json"),
            "--out".into(),
            p(out),
        ]
    };
    let sim_a = sim("run_a");
    let sim_b = sim("run_b");
    let (ca, _) = run_cli(&sim_a.iter().map(String::as_str).collect::<Vec<_>>());
    let (cb, _) = run_cli(&sim_b.iter().map(String::as_str).collect::<Vec<_>>());
    ensure(ca == 0 && cb == 0, || format!("simulate exit codes {ca} {cb}"))?;

    let commands: Vec<Vec<String>> = vec![
        sim("run_c"),
        vec!["plan".into(), p("suite/parked_right.json")],
        vec!["batch".into(), p("manifest.json"), "--jobs".into(), "4".into()],
        vec!["pem-fit".into(), p("log.jsonl")],
        vec!["grit-train".into(), p("data.jsonl")],
        vec!["grit-verify".into(), p("trees.json"), p("prop.json")],
        vec!["rules-check".into(), p("run_a/trace.jsonl"), "--rules".into(), p("rules.txt")],
    ];
    for c in &commands {
        let args: Vec<&str> = c.iter().map(String::as_str).collect();
        let first = run_cli(&args);
        let second = run_cli(&args);
        ensure(first == second, || format!("`{}` differs between runs", c[0]))?;
        ensure(!first.1.is_empty(), || format!("`{}` printed nothing", c[0]))?;
    }
    let batch1 = run_cli(&["batch", &p("manifest.json"), "--jobs", "1"]);
    let batch4 = run_cli(&["batch", &p("manifest.json"), "--jobs", "4"]);
    ensure(batch1 == batch4, || "batch output depends on --jobs".into())?;
    let read = |path: &Path| std::fs::read(path).map_err(|e| e.to_string());
    for f in ["metrics.csv", "trace.jsonl"] {
        ensure(read(&root.join("run_a").join(f))? == read(&root.join("run_b").join(f))?, || format!("{f} differs"))?;
    }
    Ok(format!(
        "{} subcommands byte-identical on repeat, batch identical for 1 and 4 jobs ({} CSV lines)",
        commands.len() + 1,
        String::from_utf8_lossy(&batch1.1).lines().count()
    ))
}
