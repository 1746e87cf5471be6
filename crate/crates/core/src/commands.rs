//! The `simulate`, `adjoint`, `converge`, `gradcheck` and `optimize`
//! commands. Each writes CSV/JSON files into an output directory and
//! returns a short text summary.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::adjoint::{solve_adjoint_iim, solve_adjoint_plain};
use crate::config::{InitKind, ReferenceKind, RunConfig, SchemeKind};
use crate::error::{Error, Result};
use crate::mesh::{build_mesh, InterfaceMode, TimeMesh};
use crate::objective::{evaluate_gradient, evaluate_objective};
use crate::optimizer::{
    random_control, relaxation_solve, round_relaxation, trust_region_solve, Evaluator, OdeEvaluator, Scheme,
    TrustRegionResult,
};
use crate::problem::{control_value, BinaryControl, ProblemSpec};
use crate::state::{solve_state_euler, solve_state_iim, TrajectorySolution};
use crate::verification::{
    convergence_study, finite_difference_gradient, max_node_error, paper_exact_jumps, paper_exact_nodes,
    reference_adjoint, reference_integrator, ConvergenceReport,
};

/// Formats a number with 12 significant digits, `%g` style.
pub fn fmt_g(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent in scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_g).unwrap_or_default()
}

struct Csv(String);

impl Csv {
    fn new(header: &[&str]) -> Self {
        Csv(header.join(",") + "\n")
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, cells: I) {
        let cells: Vec<String> = cells.into_iter().collect();
        self.0.push_str(&cells.join(","));
        self.0.push('\n');
    }

    fn write(&self, dir: &Path, name: &str) -> Result<PathBuf> {
        let path = dir.join(name);
        fs::write(&path, &self.0)?;
        Ok(path)
    }
}

/// Files written by a command plus a human-readable summary.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

fn prepare(out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    Ok(())
}

fn solve_state(cfg: &RunConfig, spec: &ProblemSpec, v: &[f64], mesh: &TimeMesh) -> Result<TrajectorySolution> {
    match cfg.solver.scheme {
        SchemeKind::Euler => solve_state_euler(spec, v, mesh),
        SchemeKind::Iim => solve_state_iim(spec, v, mesh, &cfg.interface_mode(spec, v)?),
    }
}

fn solve_adjoint(
    cfg: &RunConfig,
    spec: &ProblemSpec,
    v: &[f64],
    mesh: &TimeMesh,
    state: &TrajectorySolution,
) -> Result<TrajectorySolution> {
    match cfg.solver.scheme {
        SchemeKind::Euler => solve_adjoint_plain(spec, mesh, state),
        SchemeKind::Iim => {
            let mode = match cfg.interface_mode(spec, v)? {
                InterfaceMode::Augmented => InterfaceMode::Augmented,
                _ => InterfaceMode::Continuous,
            };
            solve_adjoint_iim(spec, v, mesh, state, &mode)
        }
    }
}

fn state_csv(spec: &ProblemSpec, v: &[f64], state: &TrajectorySolution) -> Result<Csv> {
    let mut csv = Csv::new(&["t", "T", "T_hat", "w"]);
    for (&t, &temp) in state.mesh().nodes().iter().zip(state.values()) {
        let w = control_value(v, spec.partition(), t)?;
        csv.row([fmt_g(t), fmt_g(temp), fmt_g(spec.target().value(t, spec.partition())), fmt_g(w)]);
    }
    Ok(csv)
}

/// Solves the state equation and writes `state.csv` and `interfaces.csv`.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<CommandOutput> {
    let spec = cfg.spec()?;
    let v = cfg.control(&spec)?;
    let mesh = cfg.mesh(&spec)?;
    let state = solve_state(cfg, &spec, &v, &mesh)?;
    prepare(out)?;
    let mut files = vec![state_csv(&spec, &v, &state)?.write(out, "state.csv")?];

    let mut csv = Csv::new(&["i", "alpha", "q"]);
    for (i, (&alpha, &q)) in spec.partition().interfaces().iter().zip(state.augmented()).enumerate() {
        csv.row([(i + 1).to_string(), fmt_g(alpha), fmt_g(q)]);
    }
    files.push(csv.write(out, "interfaces.csv")?);
    let j = evaluate_objective(&spec, &state).value();
    Ok(CommandOutput { files, summary: format!("N_t = {}, objective = {}", mesh.steps(), fmt_g(j)) })
}

/// Solves state and adjoint and writes `adjoint.csv` and `gradient.csv`.
pub fn adjoint(cfg: &RunConfig, out: &Path) -> Result<CommandOutput> {
    let spec = cfg.spec()?;
    let v = cfg.control(&spec)?;
    let mesh = cfg.mesh(&spec)?;
    let state = solve_state(cfg, &spec, &v, &mesh)?;
    let adj = solve_adjoint(cfg, &spec, &v, &mesh, &state)?;
    let grad = evaluate_gradient(&spec, &v, &adj)?;
    prepare(out)?;

    let mut csv = Csv::new(&["t", "lambda"]);
    for (&t, &l) in mesh.nodes().iter().zip(adj.values()) {
        csv.row([fmt_g(t), fmt_g(l)]);
    }
    let mut files = vec![csv.write(out, "adjoint.csv")?];
    let mut csv = Csv::new(&["i", "g"]);
    for (i, g) in grad.values().iter().enumerate() {
        csv.row([(i + 1).to_string(), fmt_g(*g)]);
    }
    files.push(csv.write(out, "gradient.csv")?);
    let j = evaluate_objective(&spec, &state).value();
    Ok(CommandOutput { files, summary: format!("objective = {}, max |g| = {}", fmt_g(j), fmt_g(grad.max_abs())) })
}

/// IIM and plain Euler error tables against the configured reference.
pub fn convergence_reports(cfg: &RunConfig) -> Result<(ConvergenceReport, ConvergenceReport)> {
    let spec = cfg.spec()?;
    let v = cfg.control(&spec)?;
    let reference = |mesh: &TimeMesh| -> Result<Vec<f64>> {
        match cfg.solver.reference {
            ReferenceKind::PaperExact => paper_exact_nodes(&spec, &v, mesh),
            ReferenceKind::Continuous => Ok(reference_integrator(&spec, &v, mesh, cfg.solver.fine)?.into_values()),
        }
    };
    let mode = match cfg.solver.reference {
        ReferenceKind::PaperExact => InterfaceMode::Prescribed(paper_exact_jumps(&spec, &v)?),
        ReferenceKind::Continuous => InterfaceMode::Continuous,
    };
    let iim = convergence_study(&cfg.mesh.levels, |n| {
        let mesh = build_mesh(&spec, n)?;
        let state = solve_state_iim(&spec, &v, &mesh, &mode)?;
        Ok(max_node_error(state.values(), &reference(&mesh)?))
    })?;
    let euler = convergence_study(&cfg.mesh.levels, |n| {
        let mesh = build_mesh(&spec, n)?;
        let state = solve_state_euler(&spec, &v, &mesh)?;
        Ok(max_node_error(state.values(), &reference(&mesh)?))
    })?;
    Ok((iim, euler))
}

/// Writes `convergence.csv` with one row per level and a mean-order row.
pub fn converge(cfg: &RunConfig, out: &Path) -> Result<CommandOutput> {
    let (iim, euler) = convergence_reports(cfg)?;
    prepare(out)?;
    let mut csv = Csv::new(&["N_t", "E_iim", "gamma_iim", "E_euler", "gamma_euler"]);
    for (a, b) in iim.rows.iter().zip(&euler.rows) {
        csv.row([a.steps.to_string(), fmt_g(a.error), opt(a.order), fmt_g(b.error), opt(b.order)]);
    }
    csv.row(["mean".to_string(), String::new(), opt(iim.mean_order()), String::new(), opt(euler.mean_order())]);
    let files = vec![csv.write(out, "convergence.csv")?];
    Ok(CommandOutput {
        files,
        summary: format!("mean order: iim = {}, euler = {}", opt(iim.mean_order()), opt(euler.mean_order())),
    })
}

/// Per-level errors of the state, adjoint and gradient.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct GradcheckReport {
    pub state: ConvergenceReport,
    pub adjoint: ConvergenceReport,
    pub gradient: ConvergenceReport,
    pub eps: f64,
}

/// State and adjoint against the RK4 references, adjoint gradient against
/// forward differences of the discrete objective.
pub fn gradcheck_report(cfg: &RunConfig) -> Result<GradcheckReport> {
    let spec = cfg.spec()?;
    let v = cfg.control(&spec)?;
    let scheme = cfg.optimizer_scheme()?;
    let fine = cfg.solver.fine;
    let mut state_err = Vec::new();
    let mut adjoint_err = Vec::new();
    let mut gradient_err = Vec::new();
    for &n in &cfg.mesh.levels {
        let mesh = build_mesh(&spec, n)?;
        let eval = OdeEvaluator::new(spec.clone(), mesh.clone(), scheme.clone());
        let state = eval.state(&v)?;
        let adj = match &scheme {
            Scheme::Euler => solve_adjoint_plain(&spec, &mesh, &state)?,
            Scheme::Iim(InterfaceMode::Augmented) => {
                solve_adjoint_iim(&spec, &v, &mesh, &state, &InterfaceMode::Augmented)?
            }
            Scheme::Iim(_) => solve_adjoint_iim(&spec, &v, &mesh, &state, &InterfaceMode::Continuous)?,
        };
        state_err.push((n, max_node_error(state.values(), reference_integrator(&spec, &v, &mesh, fine)?.values())));
        adjoint_err.push((n, max_node_error(adj.values(), reference_adjoint(&spec, &v, &mesh, fine)?.values())));
        let (_, g) = eval.objective_and_gradient(&v)?;
        let fd = finite_difference_gradient(&eval, &v, cfg.solver.eps)?;
        gradient_err.push((n, max_node_error(g.values(), fd.values())));
    }
    Ok(GradcheckReport {
        state: ConvergenceReport::from_errors(&state_err),
        adjoint: ConvergenceReport::from_errors(&adjoint_err),
        gradient: ConvergenceReport::from_errors(&gradient_err),
        eps: cfg.solver.eps,
    })
}

/// Writes `gradcheck.csv`.
pub fn gradcheck(cfg: &RunConfig, out: &Path) -> Result<CommandOutput> {
    let r = gradcheck_report(cfg)?;
    prepare(out)?;
    let mut csv = Csv::new(&[
        "N_t",
        "E_state",
        "gamma_state",
        "E_adjoint",
        "gamma_adjoint",
        "E_gradient",
        "gamma_gradient",
        "eps",
    ]);
    for ((s, a), g) in r.state.rows.iter().zip(&r.adjoint.rows).zip(&r.gradient.rows) {
        csv.row([
            s.steps.to_string(),
            fmt_g(s.error),
            opt(s.order),
            fmt_g(a.error),
            opt(a.order),
            fmt_g(g.error),
            opt(g.order),
            fmt_g(r.eps),
        ]);
    }
    csv.row([
        "mean".to_string(),
        String::new(),
        opt(r.state.mean_order()),
        String::new(),
        opt(r.adjoint.mean_order()),
        String::new(),
        opt(r.gradient.mean_order()),
        String::new(),
    ]);
    let files = vec![csv.write(out, "gradcheck.csv")?];
    Ok(CommandOutput {
        files,
        summary: format!(
            "mean order: state = {}, adjoint = {}, gradient = {}",
            opt(r.state.mean_order()),
            opt(r.adjoint.mean_order()),
            opt(r.gradient.mean_order())
        ),
    })
}

/// Contents of `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizeReport {
    pub objective_initial: f64,
    pub objective_final: f64,
    pub percent_reduction: f64,
    pub iterations: usize,
    pub accepted_steps: usize,
    pub termination_reason: String,
    pub truncated: bool,
    /// Objective of the relaxed solution when the run started from it.
    pub relaxed_objective: Option<f64>,
    pub control: Vec<u8>,
}

fn given_control(cfg: &RunConfig, spec: &ProblemSpec) -> Result<BinaryControl> {
    let values = match &cfg.optimizer.control_path {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::config(format!("optimizer.control_path: cannot read {}: {e}", path.display())))?;
            let json: serde_json::Value = serde_json::from_str(&text)?;
            let array = json.get("control").cloned().unwrap_or(json);
            serde_json::from_value::<Vec<f64>>(array)?
        }
        None => cfg.control(spec)?,
    };
    if values.len() != spec.interval_count() {
        return Err(Error::config(format!(
            "given control has {} entries, the problem has {} intervals",
            values.len(),
            spec.interval_count()
        )));
    }
    BinaryControl::from_values(&values)
}

/// Starting point and trust-region run for a configuration.
pub fn optimize_run(cfg: &RunConfig) -> Result<(TrustRegionResult, Option<f64>)> {
    let spec = cfg.spec()?;
    let mesh = cfg.mesh(&spec)?;
    let eval = OdeEvaluator::new(spec.clone(), mesh, cfg.optimizer_scheme()?);
    let settings = cfg.optimizer.settings();
    let (v0, relaxed) = match cfg.optimizer.init {
        InitKind::RoundedRelaxation => {
            let relaxed = relaxation_solve(&eval, &settings.relaxation)?;
            (round_relaxation(&relaxed.control, settings.rounding_threshold)?, Some(relaxed.objective))
        }
        InitKind::Random => (random_control(spec.interval_count(), cfg.optimizer.seed), None),
        InitKind::Given => (given_control(cfg, &spec)?, None),
    };
    Ok((trust_region_solve(&eval, &v0, &settings)?, relaxed))
}

/// Writes `result.json`, `trace.csv` and `state.csv` (final control).
pub fn optimize(cfg: &RunConfig, out: &Path) -> Result<CommandOutput> {
    let (res, relaxed) = optimize_run(cfg)?;
    let spec = cfg.spec()?;
    let mesh = cfg.mesh(&spec)?;
    let v = res.control.values();
    let state = match cfg.optimizer_scheme()? {
        Scheme::Euler => solve_state_euler(&spec, &v, &mesh)?,
        Scheme::Iim(mode) => solve_state_iim(&spec, &v, &mesh, &mode)?,
    };
    prepare(out)?;

    let report = OptimizeReport {
        objective_initial: res.objective_initial,
        objective_final: res.objective_final,
        percent_reduction: res.percent_reduction(),
        iterations: res.iterations,
        accepted_steps: res.trace.accepted_count(),
        termination_reason: res.termination.as_str().to_string(),
        truncated: res.truncated,
        relaxed_objective: relaxed,
        control: res.control.bits().iter().map(|&b| u8::from(b)).collect(),
    };
    let path = out.join("result.json");
    fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")?;
    let mut files = vec![path];

    let mut csv = Csv::new(&["k", "delta", "objective", "rho", "accepted", "step_l1", "candidate_objective"]);
    for r in &res.trace.records {
        csv.row([
            r.k.to_string(),
            r.delta.to_string(),
            fmt_g(r.objective),
            fmt_g(r.rho),
            u8::from(r.accepted).to_string(),
            r.step_l1.to_string(),
            fmt_g(r.candidate_objective),
        ]);
    }
    files.push(csv.write(out, "trace.csv")?);
    files.push(state_csv(&spec, &v, &state)?.write(out, "state.csv")?);
    Ok(CommandOutput {
        files,
        summary: format!(
            "objective {} -> {} ({}% reduction) in {} iterations, {}",
            fmt_g(report.objective_initial),
            fmt_g(report.objective_final),
            fmt_g(report.percent_reduction),
            report.iterations,
            report.termination_reason
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_g(0.0), "0");
        assert_eq!(fmt_g(1.0), "1");
        assert_eq!(fmt_g(-2.5), "-2.5");
        assert_eq!(fmt_g(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_g(123456789.123456), "123456789.123");
        assert_eq!(fmt_g(1e-7), "1e-07");
        assert_eq!(fmt_g(6.02214076e23), "6.02214076e+23");
        assert_eq!(fmt_g(0.0001234), "0.0001234");
        assert_eq!(fmt_g(999999999999.9), "1e+12");
        assert_eq!(fmt_g(f64::NAN), "nan");
    }

    fn quick(extra: &[&str]) -> RunConfig {
        let overrides: Vec<String> = extra.iter().map(|s| s.to_string()).collect();
        RunConfig::from_toml_str("", &overrides).unwrap()
    }

    #[test]
    fn simulate_writes_one_row_per_node() {
        let dir = tempfile::tempdir().unwrap();
        let out = simulate(&quick(&["mesh.steps=64"]), dir.path()).unwrap();
        let state = fs::read_to_string(&out.files[0]).unwrap();
        assert_eq!(state.lines().count(), 66);
        assert!(state.starts_with("t,T,T_hat,w\n"));
        let interfaces = fs::read_to_string(&out.files[1]).unwrap();
        assert_eq!(interfaces.lines().count(), 10);
    }

    #[test]
    fn euler_and_iim_differ_near_interfaces() {
        let dir = tempfile::tempdir().unwrap();
        let a = simulate(&quick(&["mesh.steps=64"]), &dir.path().join("a")).unwrap();
        let b = simulate(&quick(&["mesh.steps=64", "solver.scheme=\"euler\""]), &dir.path().join("b")).unwrap();
        let a = fs::read_to_string(&a.files[0]).unwrap();
        let b = fs::read_to_string(&b.files[0]).unwrap();
        assert_eq!(a.lines().count(), b.lines().count());
        assert_ne!(a, b);
    }

    #[test]
    fn converge_single_level_has_empty_order() {
        let dir = tempfile::tempdir().unwrap();
        let out = converge(&quick(&["mesh.levels=[64]"]), dir.path()).unwrap();
        let text = fs::read_to_string(&out.files[0]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "N_t,E_iim,gamma_iim,E_euler,gamma_euler");
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1].split(',').nth(2), Some(""));
    }

    #[test]
    fn references_give_distinct_tables() {
        let a = convergence_reports(&quick(&["mesh.levels=[64, 128]"])).unwrap();
        let b = convergence_reports(&quick(&["mesh.levels=[64, 128]", "solver.reference=\"continuous\""])).unwrap();
        assert_ne!(a.0.errors(), b.0.errors());
    }

    #[test]
    fn zero_gain_gradcheck_has_no_gap() {
        let cfg = quick(&["problem.gain=0.0", "mesh.levels=[64, 128]"]);
        let r = gradcheck_report(&cfg).unwrap();
        assert!(r.gradient.errors().iter().all(|&e| e == 0.0));
    }

    #[test]
    fn given_optimum_takes_no_steps() {
        // two intervals, target reachable only with v = (1, 0)
        let cfg = quick(&[
            "problem.intervals=2",
            "problem.t_final=4.0",
            "problem.initial=50.0",
            "problem.target={ kind = \"per-interval\", values = [53.0, 50.0] }",
            "problem.control=[1.0, 0.0]",
            "mesh.steps=200",
            "optimizer.init=\"given\"",
        ]);
        let (res, _) = optimize_run(&cfg).unwrap();
        assert_eq!(res.trace.accepted_count(), 0);
        assert_eq!(res.control.bits(), &[true, false]);
    }
}
