//! Acceptance criteria. Run with
//! `cargo test -p bangbang-core --test acceptance -- --nocapture`
//! to see one PASS/FAIL line per criterion.

use std::cell::Cell;
use std::fs;
use std::time::{Duration, Instant};

use bangbang_core::commands;
use bangbang_core::{
    build_mesh, convergence_study, evaluate_objective, finite_difference_gradient, knapsack_step, max_node_error,
    mms_adjoint_error, paper_exact_jumps, paper_exact_nodes, predicted_reduction, solve_state_euler, solve_state_iim,
    trust_region_solve, update_radius, BinaryControl, Direction, Evaluator, GradientVector, InterfaceMode,
    OdeEvaluator, OptimizerConfig, PiecewiseField, ProblemSpec, RadiusUpdate, Result, RunConfig, TerminationReason,
    TimeMesh, TrajectorySolution,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LEVELS: [usize; 7] = [32, 64, 128, 256, 512, 1024, 2048];
const EULER_PLATEAU: f64 = 1.323;

struct Outcome {
    passed: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn check(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

fn iim_state_convergence() -> Outcome {
    let start = Instant::now();
    let spec = ProblemSpec::switching_benchmark();
    let v = BinaryControl::alternating(10).values();
    let mode = InterfaceMode::Prescribed(paper_exact_jumps(&spec, &v).unwrap());
    let report = convergence_study(&LEVELS, |n| {
        let mesh = build_mesh(&spec, n)?;
        let state = solve_state_iim(&spec, &v, &mesh, &mode)?;
        Ok(max_node_error(state.values(), &paper_exact_nodes(&spec, &v, &mesh)?))
    })
    .unwrap();
    let elapsed = start.elapsed();
    let mean = report.mean_order().unwrap();
    let errors = report.errors();
    let increases = errors.windows(2).filter(|w| w[1] >= w[0]).count();
    check(
        (0.8..=1.2).contains(&mean) && increases <= 1 && within(elapsed, 5),
        format!("mean order {mean:.3}, non-decreasing steps {increases}, errors {errors:.4?}, {elapsed:.2?}"),
    )
}

fn euler_failure() -> Outcome {
    let start = Instant::now();
    let spec = ProblemSpec::switching_benchmark();
    let v = BinaryControl::alternating(10).values();
    let report = convergence_study(&LEVELS, |n| {
        let mesh = build_mesh(&spec, n)?;
        let state = solve_state_euler(&spec, &v, &mesh)?;
        Ok(max_node_error(state.values(), &paper_exact_nodes(&spec, &v, &mesh)?))
    })
    .unwrap();
    let elapsed = start.elapsed();
    let tail = report.mean_order_last(4).unwrap();
    let last = *report.errors().last().unwrap();
    check(
        tail < 0.3 && (EULER_PLATEAU / 2.0..=EULER_PLATEAU * 2.0).contains(&last) && within(elapsed, 5),
        format!("mean order (last 4) {tail:.3}, E_2048 {last:.4} vs plateau {EULER_PLATEAU}, {elapsed:.2?}"),
    )
}

fn adjoint_convergence() -> Outcome {
    let start = Instant::now();
    let spec = ProblemSpec::switching_benchmark();
    let v = BinaryControl::alternating(10).values();
    let lm = PiecewiseField::alternating_sinusoid(spec.partition().clone());
    let report = convergence_study(&LEVELS, |n| mms_adjoint_error(&spec, &v, &lm, &build_mesh(&spec, n)?)).unwrap();
    let elapsed = start.elapsed();
    let mean = report.mean_order().unwrap();
    check(
        (0.8..=1.2).contains(&mean) && within(elapsed, 5),
        format!("mean order {mean:.3}, errors {:.4?}, {elapsed:.2?}", report.errors()),
    )
}

fn gradient_consistency() -> Outcome {
    let start = Instant::now();
    let spec = ProblemSpec::sinusoid_tracking(100).unwrap();
    let v = BinaryControl::alternating(100).values();
    let gaps: Vec<f64> = [512, 1024, 2048]
        .into_iter()
        .map(|n| {
            let eval = OdeEvaluator::iim(spec.clone(), build_mesh(&spec, n).unwrap());
            let (_, g) = eval.objective_and_gradient(&v).unwrap();
            let fd = finite_difference_gradient(&eval, &v, 1e-6).unwrap();
            max_node_error(g.values(), fd.values())
        })
        .collect();
    let elapsed = start.elapsed();
    let ratios: Vec<f64> = gaps.windows(2).map(|w| w[1] / w[0]).collect();
    check(
        ratios.iter().all(|r| (0.35..=0.65).contains(r)) && within(elapsed, 30),
        format!("gaps {gaps:.4?}, ratios {ratios:.3?}, {elapsed:.2?}"),
    )
}

/// Best model value `g^T (v_hat - v)` for every radius, by enumeration.
fn enumerate_best(g: &[f64], v: &BinaryControl) -> Vec<f64> {
    let n = g.len();
    let costs: Vec<f64> = (0..n).map(|i| if v.get(i) { -g[i] } else { g[i] }).collect();
    let mut best = vec![0.0f64; n + 1];
    for mask in 0u32..(1 << n) {
        let flips = mask.count_ones() as usize;
        let value: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| costs[i]).sum();
        best[flips] = best[flips].min(value);
    }
    for d in 1..=n {
        best[d] = best[d].min(best[d - 1]);
    }
    best
}

fn knapsack_exactness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20240501);
    let mut instances = 0usize;
    let mut failures = 0usize;
    for n in 1..=12 {
        for _ in 0..200 {
            let g: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let v = BinaryControl::new((0..n).map(|_| rng.random_bool(0.5)).collect());
            let best = enumerate_best(&g, &v);
            for (radius, &opt) in best.iter().enumerate() {
                let out = knapsack_step(&g, &v, radius);
                let value = -predicted_reduction(&g, &v, &out);
                instances += 1;
                if out.l1_distance(&v) > radius || (value - opt).abs() > 1e-9 * (1.0 + opt.abs()) {
                    failures += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    check(failures == 0 && within(elapsed, 10), format!("{instances} instances, {failures} mismatches, {elapsed:.2?}"))
}

fn trust_region_behavior() -> Outcome {
    let start = Instant::now();
    let mut cfg = RunConfig::default();
    cfg.problem.decay = 0.1;
    cfg.problem.gain = 2.0;
    cfg.problem.ambient = 0.0;
    cfg.problem.initial = 10.0;
    cfg.problem.t_final = 100.0;
    cfg.problem.intervals = 100;
    cfg.problem.target = bangbang_core::ScalarField::sinusoid(5.0, 0.5, 1.0);
    cfg.mesh.steps = 4000;
    let (res, _) = commands::optimize_run(&cfg).unwrap();
    let elapsed = start.elapsed();
    let accepted = res.trace.accepted_objectives();
    let decreasing = accepted.windows(2).all(|w| w[1] < w[0]);
    let proper =
        matches!(res.termination, TerminationReason::RadiusCollapsed | TerminationReason::ZeroPredictedReduction)
            && !res.truncated;
    let reduction = res.percent_reduction();
    check(
        decreasing && proper && reduction >= 50.0 && within(elapsed, 120),
        format!(
            "objective {:.3} -> {:.3} ({reduction:.2}%), {} iterations, {}, {elapsed:.2?}",
            res.objective_initial,
            res.objective_final,
            res.iterations,
            res.termination.as_str()
        ),
    )
}

/// Linear model that always overpredicts: every candidate is worse.
struct Uphill {
    calls: Cell<usize>,
}

impl Evaluator for Uphill {
    fn interval_count(&self) -> usize {
        4
    }
    fn objective(&self, v: &[f64]) -> Result<f64> {
        self.calls.set(self.calls.get() + 1);
        Ok(10.0 + v.iter().sum::<f64>())
    }
    fn objective_and_gradient(&self, v: &[f64]) -> Result<(f64, GradientVector)> {
        Ok((self.objective(v)?, GradientVector::new(vec![-1.0; 4])?))
    }
}

fn radius_arithmetic() -> Outcome {
    let rejected5 = update_radius(5, -0.1, 5, 0.75);
    let rejected1 = update_radius(1, 0.0, 1, 0.75);
    let doubled = update_radius(3, 0.9, 3, 0.75);
    let kept = update_radius(3, 0.9, 2, 0.75);
    let cfg = OptimizerConfig { initial_radius: Some(1), ..OptimizerConfig::default() };
    let uphill = Uphill { calls: Cell::new(0) };
    let res = trust_region_solve(&uphill, &BinaryControl::zeros(4), &cfg).unwrap();
    let loop_exit = res.termination == TerminationReason::RadiusCollapsed
        && res.final_radius == 0
        && res.iterations == 1
        && res.control == BinaryControl::zeros(4);
    check(
        rejected5 == RadiusUpdate { accepted: false, radius: 2 }
            && rejected1 == RadiusUpdate { accepted: false, radius: 0 }
            && doubled == RadiusUpdate { accepted: true, radius: 6 }
            && kept == RadiusUpdate { accepted: true, radius: 3 }
            && loop_exit,
        format!(
            "5 rejected -> {}, 1 rejected -> {} (loop exit {loop_exit}), boundary accept 3 -> {}, interior accept 3 -> {}",
            rejected5.radius, rejected1.radius, doubled.radius, kept.radius
        ),
    )
}

fn quadrature_order() -> Outcome {
    let spec = ProblemSpec::new(
        bangbang_core::PhysicalParams { decay: 1.0, gain: 1.0, ambient: 0.0, initial: 1.0 },
        bangbang_core::ControlPartition::equal(1.0, 1).unwrap(),
    )
    .unwrap();
    let exact = (1f64.exp().powi(2) - 1.0) / 4.0;
    let errors: Vec<f64> = [8, 16, 32, 64, 128]
        .into_iter()
        .map(|n| {
            let mesh = TimeMesh::new(1.0, n).unwrap();
            let values = mesh.nodes().iter().map(|t| t.exp()).collect();
            let traj = TrajectorySolution::from_nodes(mesh, values, Direction::Forward).unwrap();
            (evaluate_objective(&spec, &traj).value() - exact).abs()
        })
        .collect();
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[1] / w[0]).collect();
    check(ratios.iter().all(|r| (0.2..=0.3).contains(r)), format!("error ratios {ratios:.4?} (target 0.25 ± 20%)"))
}

fn determinism() -> Outcome {
    let overrides: Vec<String> = [
        "problem.decay=0.1",
        "problem.gain=2.0",
        "problem.ambient=0.0",
        "problem.initial=10.0",
        "problem.t_final=100.0",
        "problem.intervals=100",
        "problem.target={ kind = \"sinusoid\", offset = 5.0, amplitude = 0.5, frequency = 1.0 }",
        "mesh.steps=2000",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut identical = true;
    let mut compared = 0;
    for init in ["rounded-relaxation", "random"] {
        let mut o = overrides.clone();
        o.push(format!("optimizer.init=\"{init}\""));
        o.push("optimizer.seed=17".into());
        let cfg = RunConfig::from_toml_str("", &o).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let fa = commands::optimize(&cfg, a.path()).unwrap().files;
        let fb = commands::optimize(&cfg, b.path()).unwrap().files;
        for (x, y) in fa.iter().zip(&fb) {
            identical &= fs::read(x).unwrap() == fs::read(y).unwrap();
            compared += 1;
        }
    }
    check(identical, format!("{compared} file pairs compared, byte-identical: {identical}"))
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 9] = [
        ("1 IIM state convergence", iim_state_convergence),
        ("2 Euler failure", euler_failure),
        ("3 adjoint convergence (manufactured)", adjoint_convergence),
        ("4 gradient consistency", gradient_consistency),
        ("5 knapsack exactness", knapsack_exactness),
        ("6 trust-region behavior", trust_region_behavior),
        ("7 radius arithmetic", radius_arithmetic),
        ("8 objective quadrature order", quadrature_order),
        ("9 determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (name, run) in criteria {
        let outcome = run();
        println!("[{}] {name}: {}", if outcome.passed { "PASS" } else { "FAIL" }, outcome.detail);
        if !outcome.passed {
            failed.push(name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
