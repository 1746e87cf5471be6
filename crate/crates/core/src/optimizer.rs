//! Steepest-descent trust region over binary controls, its exact knapsack
//! subproblem, and the relaxation-plus-rounding initializer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adjoint::{solve_adjoint_iim, solve_adjoint_plain};
use crate::error::{Error, Result};
use crate::mesh::{InterfaceMode, TimeMesh};
use crate::objective::{evaluate_gradient, evaluate_objective, GradientVector};
use crate::problem::{BinaryControl, ProblemSpec, RelaxedControl};
use crate::state::{solve_state_euler, solve_state_iim};

/// Objective and gradient oracle for the optimizers.
pub trait Evaluator {
    fn interval_count(&self) -> usize;
    fn objective(&self, v: &[f64]) -> Result<f64>;
    fn objective_and_gradient(&self, v: &[f64]) -> Result<(f64, GradientVector)>;
}

/// Time-stepping scheme used for the state/adjoint pair.
#[derive(Debug, Clone, PartialEq)]
pub enum Scheme {
    /// Interface-corrected scheme with the given state jump mode.
    Iim(InterfaceMode),
    /// Plain Euler state and plain backward adjoint.
    Euler,
}

impl Default for Scheme {
    fn default() -> Self {
        Scheme::Iim(InterfaceMode::Continuous)
    }
}

/// Evaluates the discrete objective and adjoint gradient with the ODE solvers.
#[derive(Debug, Clone)]
pub struct OdeEvaluator {
    spec: ProblemSpec,
    mesh: TimeMesh,
    scheme: Scheme,
}

impl OdeEvaluator {
    pub fn new(spec: ProblemSpec, mesh: TimeMesh, scheme: Scheme) -> Self {
        Self { spec, mesh, scheme }
    }

    /// Interface-corrected scheme with continuous jumps.
    pub fn iim(spec: ProblemSpec, mesh: TimeMesh) -> Self {
        Self::new(spec, mesh, Scheme::Iim(InterfaceMode::Continuous))
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn mesh(&self) -> &TimeMesh {
        &self.mesh
    }

    pub fn scheme(&self) -> &Scheme {
        &self.scheme
    }

    pub fn state(&self, v: &[f64]) -> Result<crate::state::TrajectorySolution> {
        match &self.scheme {
            Scheme::Iim(mode) => solve_state_iim(&self.spec, v, &self.mesh, mode),
            Scheme::Euler => solve_state_euler(&self.spec, v, &self.mesh),
        }
    }

    /// Adjoint jump mode paired with the state mode: prescribed state jumps
    /// leave the adjoint continuous.
    fn adjoint_mode(mode: &InterfaceMode) -> InterfaceMode {
        match mode {
            InterfaceMode::Augmented => InterfaceMode::Augmented,
            _ => InterfaceMode::Continuous,
        }
    }
}

impl Evaluator for OdeEvaluator {
    fn interval_count(&self) -> usize {
        self.spec.interval_count()
    }

    fn objective(&self, v: &[f64]) -> Result<f64> {
        Ok(evaluate_objective(&self.spec, &self.state(v)?).value())
    }

    fn objective_and_gradient(&self, v: &[f64]) -> Result<(f64, GradientVector)> {
        let state = self.state(v)?;
        let adjoint = match &self.scheme {
            Scheme::Iim(mode) => solve_adjoint_iim(&self.spec, v, &self.mesh, &state, &Self::adjoint_mode(mode))?,
            Scheme::Euler => solve_adjoint_plain(&self.spec, &self.mesh, &state)?,
        };
        let j = evaluate_objective(&self.spec, &state).value();
        Ok((j, evaluate_gradient(&self.spec, v, &adjoint)?))
    }
}

/// Projected-gradient settings for the relaxed problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelaxationConfig {
    /// Stop once the max-norm of the projected gradient step falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Step length tried first; doubled after every accepted step.
    pub initial_step: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
}

impl Default for RelaxationConfig {
    fn default() -> Self {
        Self { tolerance: 1e-6, max_iterations: 200, initial_step: 1e-2, armijo: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Starting trust-region radius; `None` picks `max(1, floor(N / 10))`.
    pub initial_radius: Option<usize>,
    pub acceptance_ratio: f64,
    pub max_iterations: usize,
    pub rounding_threshold: f64,
    pub relaxation: RelaxationConfig,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            initial_radius: None,
            acceptance_ratio: 0.75,
            max_iterations: 500,
            rounding_threshold: 0.5,
            relaxation: RelaxationConfig::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial_radius == Some(0) {
            return Err(Error::config("optimizer: initial_radius must be at least 1"));
        }
        if !(self.acceptance_ratio > 0.0 && self.acceptance_ratio < 1.0) {
            return Err(Error::config("optimizer: acceptance_ratio must lie in (0, 1)"));
        }
        if !(self.rounding_threshold > 0.0 && self.rounding_threshold <= 1.0) {
            return Err(Error::config("optimizer: rounding_threshold must lie in (0, 1]"));
        }
        let r = &self.relaxation;
        if !(r.tolerance >= 0.0 && r.initial_step > 0.0 && r.armijo > 0.0 && r.armijo < 1.0) {
            return Err(Error::config("optimizer: invalid relaxation settings"));
        }
        Ok(())
    }

    pub fn radius_for(&self, n: usize) -> usize {
        self.initial_radius.unwrap_or_else(|| (n / 10).max(1))
    }
}

/// Exact minimizer of `g^T (v_hat - v)` over binary `v_hat` with
/// `|v_hat - v|_1 <= radius`: take the most negative flip costs first.
pub fn knapsack_step(g: &[f64], v: &BinaryControl, radius: usize) -> BinaryControl {
    assert_eq!(g.len(), v.len(), "gradient and control lengths differ");
    let mut flips: Vec<(f64, usize)> = g
        .iter()
        .zip(v.bits())
        .enumerate()
        .map(|(i, (&gi, &bit))| (if bit { -gi } else { gi }, i))
        .filter(|(cost, _)| *cost < 0.0)
        .collect();
    flips.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out = v.clone();
    for &(_, i) in flips.iter().take(radius) {
        out.flip(i);
    }
    out
}

/// `-g^T (v_hat - v)`.
pub fn predicted_reduction(g: &[f64], v: &BinaryControl, v_hat: &BinaryControl) -> f64 {
    -g.iter()
        .zip(v.bits().iter().zip(v_hat.bits()))
        .map(|(gi, (&a, &b))| gi * (f64::from(u8::from(b)) - f64::from(u8::from(a))))
        .sum::<f64>()
}

/// Outcome of one ratio test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RadiusUpdate {
    pub accepted: bool,
    pub radius: usize,
}

/// Radius rule of the trust-region loop: a very successful step that hits
/// the boundary doubles the radius, a merely successful one keeps it, and a
/// rejected step halves it (rounding down).
pub fn update_radius(radius: usize, rho: f64, step_l1: usize, acceptance_ratio: f64) -> RadiusUpdate {
    if rho > acceptance_ratio {
        let radius = if step_l1 == radius { radius.saturating_mul(2) } else { radius };
        RadiusUpdate { accepted: true, radius }
    } else if rho > 0.0 {
        RadiusUpdate { accepted: true, radius }
    } else {
        RadiusUpdate { accepted: false, radius: radius / 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminationReason {
    /// The radius dropped below one.
    RadiusCollapsed,
    /// The subproblem returned the current iterate.
    ZeroPredictedReduction,
    /// The iteration cap was reached.
    MaxIterations,
}

impl TerminationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminationReason::RadiusCollapsed => "radius-collapsed",
            TerminationReason::ZeroPredictedReduction => "zero-predicted-reduction",
            TerminationReason::MaxIterations => "max-iterations",
        }
    }
}

/// One trust-region iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrustRegionRecord {
    pub k: usize,
    /// Radius used for this iteration's subproblem.
    pub delta: usize,
    /// Objective at the current iterate.
    pub objective: f64,
    pub candidate_objective: f64,
    pub rho: f64,
    pub accepted: bool,
    pub step_l1: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TrustRegionTrace {
    pub records: Vec<TrustRegionRecord>,
}

impl TrustRegionTrace {
    /// Objective at the start of each iteration plus the final accepted value.
    pub fn accepted_objectives(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for r in &self.records {
            if out.last() != Some(&r.objective) {
                out.push(r.objective);
            }
            if r.accepted {
                out.push(r.candidate_objective);
            }
        }
        out.dedup();
        out
    }

    pub fn accepted_count(&self) -> usize {
        self.records.iter().filter(|r| r.accepted).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrustRegionResult {
    pub control: BinaryControl,
    pub objective_initial: f64,
    pub objective_final: f64,
    pub iterations: usize,
    pub termination: TerminationReason,
    pub truncated: bool,
    pub final_radius: usize,
    pub trace: TrustRegionTrace,
}

impl TrustRegionResult {
    pub fn percent_reduction(&self) -> f64 {
        if self.objective_initial == 0.0 {
            0.0
        } else {
            100.0 * (self.objective_initial - self.objective_final) / self.objective_initial
        }
    }
}

/// Trust-region descent over binary controls starting from `v0`.
pub fn trust_region_solve<E: Evaluator + ?Sized>(
    eval: &E,
    v0: &BinaryControl,
    cfg: &OptimizerConfig,
) -> Result<TrustRegionResult> {
    cfg.validate()?;
    if v0.len() != eval.interval_count() {
        return Err(Error::Usage(format!(
            "initial control has {} entries, the problem has {} intervals",
            v0.len(),
            eval.interval_count()
        )));
    }
    let mut v = v0.clone();
    let (mut j, mut g) = eval.objective_and_gradient(&v.values())?;
    let objective_initial = j;
    let mut radius = cfg.radius_for(v.len());
    let mut trace = TrustRegionTrace::default();
    let mut k = 0;

    let termination = loop {
        if radius < 1 {
            break TerminationReason::RadiusCollapsed;
        }
        if k >= cfg.max_iterations {
            break TerminationReason::MaxIterations;
        }
        let v_hat = knapsack_step(g.values(), &v, radius);
        if v_hat == v {
            break TerminationReason::ZeroPredictedReduction;
        }
        let predicted = predicted_reduction(g.values(), &v, &v_hat);
        let j_hat = eval.objective(&v_hat.values())?;
        let rho = (j - j_hat) / predicted;
        let step_l1 = v.l1_distance(&v_hat);
        let update = update_radius(radius, rho, step_l1, cfg.acceptance_ratio);
        trace.records.push(TrustRegionRecord {
            k,
            delta: radius,
            objective: j,
            candidate_objective: j_hat,
            rho,
            accepted: update.accepted,
            step_l1,
        });
        if update.accepted {
            v = v_hat;
            (j, g) = eval.objective_and_gradient(&v.values())?;
        }
        radius = update.radius;
        k += 1;
    };

    Ok(TrustRegionResult {
        control: v,
        objective_initial,
        objective_final: j,
        iterations: k,
        termination,
        truncated: termination == TerminationReason::MaxIterations,
        final_radius: radius,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationResult {
    pub control: RelaxedControl,
    pub objective: f64,
    pub iterations: usize,
    /// Max-norm of `clip(v - g) - v` at the returned iterate.
    pub projected_gradient: f64,
}

fn project(v: &[f64], g: &[f64], step: f64) -> Vec<f64> {
    v.iter().zip(g).map(|(x, gi)| (x - step * gi).clamp(0.0, 1.0)).collect()
}

fn projected_gradient_norm(v: &[f64], g: &[f64]) -> f64 {
    project(v, g, 1.0).iter().zip(v).fold(0.0, |m, (p, x)| m.max((p - x).abs()))
}

/// Projected gradient with Armijo backtracking on the box `[0, 1]^N`,
/// started from `v = 1/2`.
pub fn relaxation_solve<E: Evaluator + ?Sized>(eval: &E, cfg: &RelaxationConfig) -> Result<RelaxationResult> {
    let mut v = vec![0.5; eval.interval_count()];
    let (mut j, mut g) = eval.objective_and_gradient(&v)?;
    let mut step = cfg.initial_step;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        if projected_gradient_norm(&v, g.values()) <= cfg.tolerance {
            break;
        }
        let mut accepted = None;
        while step > f64::EPSILON {
            let trial = project(&v, g.values(), step);
            let decrease: f64 = g.values().iter().zip(v.iter().zip(&trial)).map(|(gi, (x, y))| gi * (x - y)).sum();
            let j_trial = eval.objective(&trial)?;
            if j_trial <= j - cfg.armijo * decrease {
                accepted = Some(trial);
                break;
            }
            step *= 0.5;
        }
        let Some(trial) = accepted else { break };
        v = trial;
        (j, g) = eval.objective_and_gradient(&v)?;
        step *= 2.0;
        iterations += 1;
    }
    let projected_gradient = projected_gradient_norm(&v, g.values());
    Ok(RelaxationResult { control: RelaxedControl::new(v)?, objective: j, iterations, projected_gradient })
}

/// `v_i < theta -> 0`, otherwise 1.
pub fn round_relaxation(v: &RelaxedControl, theta: f64) -> Result<BinaryControl> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::config(format!("rounding threshold {theta} must lie in (0, 1]")));
    }
    Ok(BinaryControl::new(v.values().iter().map(|&x| x >= theta).collect()))
}

/// Uniformly random binary control, reproducible for a given seed.
pub fn random_control(n: usize, seed: u64) -> BinaryControl {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    BinaryControl::new((0..n).map(|_| rng.random_bool(0.5)).collect())
}
