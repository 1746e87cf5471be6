//! Independent references for checking the solvers: the closed-form
//! switching solution, piecewise RK4 integrators, forward-difference
//! gradients, manufactured adjoint sources and convergence studies.

use serde::Serialize;

use crate::adjoint::solve_adjoint_iim;
use crate::error::{Error, Result};
use crate::mesh::{InterfaceMode, TimeMesh};
use crate::objective::GradientVector;
use crate::optimizer::Evaluator;
use crate::problem::{control_value, field_jump, same_time, ControlPartition, ProblemSpec, ScalarField};
use crate::state::{solve_state_iim, Direction, TrajectorySolution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub steps: usize,
    pub error: f64,
    /// `log(E_prev / E) / log(N_t / N_t_prev)`; absent on the first row.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    /// Builds the report from `(N_t, error)` pairs in refinement order.
    pub fn from_errors(levels: &[(usize, f64)]) -> Self {
        let rows = levels
            .iter()
            .enumerate()
            .map(|(k, &(steps, error))| {
                let order = (k > 0).then(|| {
                    let (prev_steps, prev_error) = levels[k - 1];
                    (prev_error / error).ln() / (steps as f64 / prev_steps as f64).ln()
                });
                ConvergenceRow { steps, error, order }
            })
            .collect();
        Self { rows }
    }

    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.error).collect()
    }

    pub fn orders(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.order).collect()
    }

    /// Mean observed order over all rows that have one.
    pub fn mean_order(&self) -> Option<f64> {
        mean(&self.orders())
    }

    /// Mean observed order over the last `count` rows that have one.
    pub fn mean_order_last(&self, count: usize) -> Option<f64> {
        let orders = self.orders();
        mean(&orders[orders.len().saturating_sub(count)..])
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Runs `error_at` on every level and collects the observed orders.
pub fn convergence_study<F>(levels: &[usize], mut error_at: F) -> Result<ConvergenceReport>
where
    F: FnMut(usize) -> Result<f64>,
{
    let errors = levels.iter().map(|&n| Ok((n, error_at(n)?))).collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceReport::from_errors(&errors))
}

/// Max-norm distance between two node vectors.
pub fn max_node_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "node vectors differ in length");
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn check_exact_setting(spec: &ProblemSpec, v: &[f64]) -> Result<()> {
    if !matches!(spec.forcing(), ScalarField::Constant { value } if *value == 0.0) {
        return Err(Error::Usage("the closed-form solution needs zero forcing".into()));
    }
    if v.len() != spec.interval_count() || v.iter().any(|&x| x != 0.0 && x != 1.0) {
        return Err(Error::Usage("the closed-form solution needs a binary control on the partition".into()));
    }
    Ok(())
}

/// Closed-form solution in which every interval with `v_i = 1` carries the
/// full `(C/K)(1 - e^{-Kt})` contribution, so the solution jumps at each
/// switch. At a breakpoint the left interval's branch is used.
pub fn paper_exact_solution(spec: &ProblemSpec, v: &[f64], t: f64) -> Result<f64> {
    check_exact_setting(spec, v)?;
    let w = control_value(v, spec.partition(), t)?;
    let (k, c) = (spec.decay(), spec.gain());
    let decay = (-k * t).exp();
    Ok(spec.initial() * decay + spec.ambient() * (1.0 - decay) + w * (c / k) * (1.0 - decay))
}

/// The closed form at every mesh node.
pub fn paper_exact_nodes(spec: &ProblemSpec, v: &[f64], mesh: &TimeMesh) -> Result<Vec<f64>> {
    mesh.nodes().iter().map(|&t| paper_exact_solution(spec, v, t)).collect()
}

/// Jumps `(v_{i+1} - v_i)(C/K)(1 - e^{-K alpha_i})` of the closed form.
pub fn paper_exact_jumps(spec: &ProblemSpec, v: &[f64]) -> Result<Vec<f64>> {
    check_exact_setting(spec, v)?;
    let (k, c) = (spec.decay(), spec.gain());
    Ok(spec
        .partition()
        .interfaces()
        .iter()
        .enumerate()
        .map(|(i, &alpha)| (v[i + 1] - v[i]) * (c / k) * (1.0 - (-k * alpha).exp()))
        .collect())
}

/// Knots of the continuous reference state on one RK4 sub-step grid.
struct ReferenceSegment {
    interval: usize,
    times: Vec<f64>,
    values: Vec<f64>,
}

/// Break points of the reference integration: nodes and interfaces merged.
fn event_times(mesh: &TimeMesh, partition: &ControlPartition) -> Vec<(f64, Option<usize>)> {
    let scale = mesh.t_final();
    let mut events: Vec<(f64, Option<usize>)> = mesh.nodes().iter().enumerate().map(|(n, &t)| (t, Some(n))).collect();
    for &alpha in partition.interfaces() {
        if !events.iter().any(|(t, _)| same_time(*t, alpha, scale)) {
            events.push((alpha, None));
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    events
}

fn state_rhs(spec: &ProblemSpec, v: &[f64], interval: usize, t: f64, temp: f64) -> f64 {
    -spec.decay() * (temp - spec.ambient())
        + spec.gain() * v[interval]
        + spec.forcing().value_on(t, interval, spec.partition())
}

fn rk4<F: Fn(f64, f64) -> f64>(f: &F, t: f64, y: f64, h: f64) -> f64 {
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
    let k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
    let k4 = f(t + h, y + h * k3);
    y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

fn check_reference_inputs(spec: &ProblemSpec, v: &[f64], mesh: &TimeMesh, fine: usize) -> Result<()> {
    crate::problem::check_control_len(v, spec.partition())?;
    if fine == 0 {
        return Err(Error::config("reference: fine factor must be at least 1"));
    }
    if !same_time(mesh.t_final(), spec.t_final(), spec.t_final()) {
        return Err(Error::Usage("mesh does not span the control horizon".into()));
    }
    Ok(())
}

fn integrate_state(spec: &ProblemSpec, v: &[f64], mesh: &TimeMesh, fine: usize) -> (Vec<f64>, Vec<ReferenceSegment>) {
    let events = event_times(mesh, spec.partition());
    let mut nodes = vec![0.0; mesh.len()];
    let mut segments = Vec::with_capacity(events.len());
    let mut temp = spec.initial();
    nodes[0] = temp;
    for w in events.windows(2) {
        let ((t0, _), (t1, node)) = (w[0], w[1]);
        let interval = spec.partition().interval_of(0.5 * (t0 + t1));
        let f = |t: f64, y: f64| state_rhs(spec, v, interval, t, y);
        let h = (t1 - t0) / fine as f64;
        let mut times = vec![t0];
        let mut values = vec![temp];
        for s in 0..fine {
            let t = t0 + s as f64 * h;
            temp = rk4(&f, t, temp, h);
            times.push(if s + 1 == fine { t1 } else { t + h });
            values.push(temp);
        }
        if let Some(n) = node {
            nodes[n] = temp;
        }
        segments.push(ReferenceSegment { interval, times, values });
    }
    (nodes, segments)
}

/// Continuity-matched RK4 solution of the state equation sampled at the
/// mesh nodes. Every cell between consecutive nodes and interfaces is split
/// into `fine` classical RK4 steps.
pub fn reference_integrator(spec: &ProblemSpec, v: &[f64], mesh: &TimeMesh, fine: usize) -> Result<TrajectorySolution> {
    check_reference_inputs(spec, v, mesh, fine)?;
    let (nodes, _) = integrate_state(spec, v, mesh, fine);
    TrajectorySolution::from_nodes(mesh.clone(), nodes, Direction::Forward)
}

/// Continuous adjoint of the continuity-matched state, integrated backward
/// with RK4 on the same sub-steps. Mid-step state values come from cubic
/// Hermite interpolation of the forward knots.
pub fn reference_adjoint(spec: &ProblemSpec, v: &[f64], mesh: &TimeMesh, fine: usize) -> Result<TrajectorySolution> {
    check_reference_inputs(spec, v, mesh, fine)?;
    let (_, segments) = integrate_state(spec, v, mesh, fine);
    let events = event_times(mesh, spec.partition());
    let partition = spec.partition();
    let mut nodes = vec![0.0; mesh.len()];
    let mut lambda = 0.0;
    for (seg, w) in segments.iter().zip(events.windows(2)).rev() {
        let i = seg.interval;
        for s in (0..seg.times.len() - 1).rev() {
            let (t0, t1) = (seg.times[s], seg.times[s + 1]);
            let (y0, y1) = (seg.values[s], seg.values[s + 1]);
            let h = t1 - t0;
            let (f0, f1) = (state_rhs(spec, v, i, t0, y0), state_rhs(spec, v, i, t1, y1));
            let y_mid = 0.5 * (y0 + y1) + h * (f0 - f1) / 8.0;
            let temp = |t: f64| {
                if t == t0 {
                    y0
                } else if t == t1 {
                    y1
                } else {
                    y_mid
                }
            };
            let f = |t: f64, l: f64| {
                spec.decay() * l + (temp(t) - spec.target().value_on(t, i, partition))
                    - spec.adjoint_source().value_on(t, i, partition)
            };
            let mid = t0 + 0.5 * h;
            let k1 = f(t1, lambda);
            let k2 = f(mid, lambda - 0.5 * h * k1);
            let k3 = f(mid, lambda - 0.5 * h * k2);
            let k4 = f(t0, lambda - h * k3);
            lambda -= h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        if let (_, Some(n)) = w[0] {
            nodes[n] = lambda;
        }
    }
    nodes[mesh.steps()] = 0.0;
    TrajectorySolution::from_nodes(mesh.clone(), nodes, Direction::Backward)
}

/// Forward differences `(J(v + eps e_i) - J(v)) / eps` using `N + 1`
/// objective evaluations. The probe may leave the box `[0, 1]^N`.
pub fn finite_difference_gradient<E: Evaluator + ?Sized>(eval: &E, v: &[f64], eps: f64) -> Result<GradientVector> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::config("finite differences: eps must be positive"));
    }
    let base = eval.objective(v)?;
    let mut probe = v.to_vec();
    let mut g = Vec::with_capacity(v.len());
    for i in 0..v.len() {
        probe[i] = v[i] + eps;
        g.push((eval.objective(&probe)? - base) / eps);
        probe[i] = v[i];
    }
    GradientVector::new(g)
}

/// One smooth field per partition interval, possibly jumping at interfaces.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseField {
    partition: ControlPartition,
    pieces: Vec<ScalarField>,
}

impl PiecewiseField {
    pub fn new(partition: ControlPartition, pieces: Vec<ScalarField>) -> Result<Self> {
        if pieces.len() != partition.interval_count() {
            return Err(Error::config(format!(
                "piecewise field: expected {} pieces, got {}",
                partition.interval_count(),
                pieces.len()
            )));
        }
        for p in &pieces {
            p.validate(&partition)?;
        }
        Ok(Self { partition, pieces })
    }

    /// `a_i + sin t` on interval `i`, with offsets alternating by 1/2 and the
    /// last one chosen so the field vanishes at `t_final`.
    pub fn alternating_sinusoid(partition: ControlPartition) -> Self {
        let n = partition.interval_count();
        let end = -partition.t_final().sin();
        let pieces = (0..n).map(|i| ScalarField::sinusoid(end + 0.5 * ((n - 1 - i) % 2) as f64, 1.0, 1.0)).collect();
        Self { partition, pieces }
    }

    pub fn partition(&self) -> &ControlPartition {
        &self.partition
    }

    pub fn value_on(&self, t: f64, interval: usize) -> f64 {
        self.pieces[interval].value_on(t, interval, &self.partition)
    }

    pub fn derivative_on(&self, t: f64, interval: usize) -> f64 {
        self.pieces[interval].derivative(t)
    }

    /// Left-convention value: an interface belongs to the interval it closes.
    pub fn value(&self, t: f64) -> f64 {
        self.value_on(t, self.partition.interval_of(t))
    }

    /// Value seen from the right; differs from [`Self::value`] only at interfaces.
    pub fn right_value(&self, t: f64) -> f64 {
        match self.partition.interface_at(t) {
            Some(k) => self.value_on(t, k + 1),
            None => self.value(t),
        }
    }

    /// Right minus left limit at interface `k` (zero-based).
    pub fn jump(&self, k: usize) -> f64 {
        let alpha = self.partition.interfaces()[k];
        self.value_on(alpha, k + 1) - self.value_on(alpha, k)
    }

    pub fn derivative_jump(&self, k: usize) -> f64 {
        let alpha = self.partition.interfaces()[k];
        self.derivative_on(alpha, k + 1) - self.derivative_on(alpha, k)
    }
}

/// Adjoint source `g = -lambda_m' + K lambda_m + (T - T_hat)` for which the
/// manufactured `lambda_m` solves the adjoint equation along the given
/// discrete state. The result is tabulated at the mesh nodes, with a pair
/// of samples at each interface carrying the jump
/// `[g] = -[lambda_m'] + K [lambda_m] + q - [T_hat]`.
pub fn mms_source(spec: &ProblemSpec, lambda_m: &PiecewiseField, state: &TrajectorySolution) -> Result<ScalarField> {
    let partition = spec.partition();
    if lambda_m.partition() != partition {
        return Err(Error::Usage("manufactured adjoint uses a different partition".into()));
    }
    let n_last = partition.interval_count() - 1;
    let terminal = lambda_m.value_on(partition.t_final(), n_last);
    if terminal.abs() > 1e-12 {
        return Err(Error::Usage(format!("manufactured adjoint must vanish at t_final, found {terminal}")));
    }
    let mesh = state.mesh();
    let temps = state.values();
    let k = spec.decay();
    let g_on = |t: f64, i: usize, temp: f64| {
        -lambda_m.derivative_on(t, i) + k * lambda_m.value_on(t, i) + temp - spec.target().value_on(t, i, partition)
    };
    let g_jump = |j: usize| {
        let q = state.augmented().get(j).copied().unwrap_or(0.0);
        let alpha = partition.interfaces()[j];
        -lambda_m.derivative_jump(j) + k * lambda_m.jump(j) + q - field_jump(spec.target(), alpha, partition)
    };

    let mut times = Vec::with_capacity(mesh.len() + 2 * partition.interface_count());
    let mut values = Vec::with_capacity(times.capacity());
    let mut next_interface = 0;
    let interfaces = partition.interfaces();
    let scale = partition.t_final();
    for (n, &t) in mesh.nodes().iter().enumerate() {
        while next_interface < interfaces.len()
            && interfaces[next_interface] < t
            && !same_time(interfaces[next_interface], t, scale)
        {
            let alpha = interfaces[next_interface];
            let s = (alpha - mesh.node(n - 1)) / mesh.dt();
            let temp = temps[n - 1] + s * (temps[n] - temps[n - 1]);
            let left = g_on(alpha, next_interface, temp);
            times.extend([alpha, alpha]);
            values.extend([left, left + g_jump(next_interface)]);
            next_interface += 1;
        }
        let i = partition.interval_of(t);
        let value = g_on(t, i, temps[n]);
        times.push(t);
        values.push(value);
        if next_interface < interfaces.len() && same_time(interfaces[next_interface], t, scale) {
            times.push(t);
            values.push(value + g_jump(next_interface));
            next_interface += 1;
        }
    }
    ScalarField::tabulated(times, values)
}

/// Max-node error of the interface-corrected adjoint against the
/// manufactured solution. The state is solved with continuous jumps for
/// control `v`; the adjoint takes the manufactured jumps as prescribed.
/// At an interface sitting on a node the adjoint node value represents the
/// right limit.
pub fn mms_adjoint_error(spec: &ProblemSpec, v: &[f64], lambda_m: &PiecewiseField, mesh: &TimeMesh) -> Result<f64> {
    let state = solve_state_iim(spec, v, mesh, &InterfaceMode::Continuous)?;
    let g = mms_source(spec, lambda_m, &state)?;
    let spec = spec.clone().with_adjoint_source(g)?;
    let q_lambda: Vec<f64> = (0..spec.partition().interface_count()).map(|k| -lambda_m.jump(k)).collect();
    let adj = solve_adjoint_iim(&spec, v, mesh, &state, &InterfaceMode::Prescribed(q_lambda))?;
    let exact: Vec<f64> = mesh.nodes().iter().map(|&t| lambda_m.right_value(t)).collect();
    Ok(max_node_error(adj.values(), &exact))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;
    use crate::optimizer::OdeEvaluator;
    use crate::problem::{BinaryControl, PhysicalParams};
    use crate::state::solve_state_iim;
    use approx::assert_abs_diff_eq;

    fn alternating() -> Vec<f64> {
        BinaryControl::alternating(10).values()
    }

    #[test]
    fn report_orders() {
        let r = ConvergenceReport::from_errors(&[(32, 1.0), (64, 0.5), (128, 0.25)]);
        assert_eq!(r.rows[0].order, None);
        assert_abs_diff_eq!(r.mean_order().unwrap(), 1.0, epsilon = 1e-14);
        let single = ConvergenceReport::from_errors(&[(32, 1.0)]);
        assert_eq!(single.mean_order(), None);
        assert_eq!(r.mean_order_last(1), Some(1.0));
    }

    #[test]
    fn closed_form_values() {
        let spec = ProblemSpec::switching_benchmark();
        let v = alternating();
        assert_eq!(paper_exact_solution(&spec, &v, 0.0).unwrap(), 70.0);
        assert_abs_diff_eq!(
            paper_exact_solution(&spec, &v, 0.999_999_999).unwrap(),
            53.0 + 17.0 * (-1f64).exp(),
            epsilon = 1e-7
        );
        let q = paper_exact_jumps(&spec, &v).unwrap();
        assert_abs_diff_eq!(q[0], -1.896_361_676, epsilon = 1e-8);
        for (i, qi) in q.iter().enumerate() {
            let gap = 3.0 * (1.0 - (-(i as f64 + 1.0)).exp());
            assert_abs_diff_eq!(qi.abs(), gap, epsilon = 1e-12);
        }
        let forced = spec.clone().with_forcing(ScalarField::constant(1.0)).unwrap();
        assert!(matches!(paper_exact_solution(&forced, &v, 1.0), Err(Error::Usage(_))));
        assert!(matches!(paper_exact_solution(&spec, &[0.5; 10], 1.0), Err(Error::Usage(_))));
    }

    #[test]
    fn reference_matches_switch_free_closed_forms() {
        let spec = ProblemSpec::switching_benchmark();
        let mesh = build_mesh(&spec, 40).unwrap();
        let zero = reference_integrator(&spec, &[0.0; 10], &mesh, 64).unwrap();
        let one = reference_integrator(&spec, &[1.0; 10], &mesh, 64).unwrap();
        for (n, &t) in mesh.nodes().iter().enumerate() {
            let e = (-t).exp();
            assert_abs_diff_eq!(zero.value(n), 50.0 + 20.0 * e, epsilon = 1e-10);
            assert_abs_diff_eq!(one.value(n), 53.0 + 17.0 * e, epsilon = 1e-10);
        }
    }

    #[test]
    fn reference_alternating_is_piecewise_exponential() {
        let spec = ProblemSpec::switching_benchmark();
        let mesh = build_mesh(&spec, 20).unwrap();
        let v = alternating();
        let reference = reference_integrator(&spec, &v, &mesh, 64).unwrap();
        let mut temp: f64 = 70.0;
        for n in 1..=20 {
            let (t0, t1) = (mesh.node(n - 1), mesh.node(n));
            let eq = 50.0 + 3.0 * v[spec.partition().interval_of(0.5 * (t0 + t1))];
            temp = eq + (temp - eq) * (-(t1 - t0)).exp();
            assert_abs_diff_eq!(reference.value(n), temp, epsilon = 1e-9);
        }
    }

    #[test]
    fn reference_is_fourth_order_self_consistent() {
        let spec = ProblemSpec::switching_benchmark().with_forcing(ScalarField::sinusoid(0.0, 2.0, 3.0)).unwrap();
        let mesh = build_mesh(&spec, 20).unwrap();
        let v = alternating();
        let a = reference_integrator(&spec, &v, &mesh, 2).unwrap();
        let b = reference_integrator(&spec, &v, &mesh, 4).unwrap();
        let c = reference_integrator(&spec, &v, &mesh, 64).unwrap();
        let ratio = max_node_error(a.values(), c.values()) / max_node_error(b.values(), c.values());
        assert!((12.0..20.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn reference_adjoint_solves_switch_free_problem() {
        // K = 1, T_s = T_0 = 0, target -1, no control: T = 0 and lambda' = lambda + 1
        let p = PhysicalParams { decay: 1.0, gain: 1.0, ambient: 0.0, initial: 0.0 };
        let spec = ProblemSpec::new(p, ControlPartition::equal(2.0, 4).unwrap())
            .unwrap()
            .with_target(ScalarField::constant(-1.0))
            .unwrap();
        let mesh = build_mesh(&spec, 16).unwrap();
        let adj = reference_adjoint(&spec, &[0.0; 4], &mesh, 32).unwrap();
        for (n, &t) in mesh.nodes().iter().enumerate() {
            assert_abs_diff_eq!(adj.value(n), (t - 2.0).exp() - 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn discrete_adjoint_converges_to_reference() {
        let spec = ProblemSpec::sinusoid_tracking(10).unwrap();
        let v = alternating();
        let report = convergence_study(&[400, 800, 1600], |n| {
            let mesh = build_mesh(&spec, n)?;
            let state = solve_state_iim(&spec, &v, &mesh, &InterfaceMode::Continuous)?;
            let adj = solve_adjoint_iim(&spec, &v, &mesh, &state, &InterfaceMode::Continuous)?;
            let reference = reference_adjoint(&spec, &v, &mesh, 8)?;
            Ok(max_node_error(adj.values(), reference.values()))
        })
        .unwrap();
        let order = report.mean_order().unwrap();
        assert!((0.8..1.2).contains(&order), "{report:?}");
    }

    #[test]
    fn zero_gain_finite_differences_vanish() {
        let p = PhysicalParams { decay: 1.0, gain: 0.0, ambient: 1.0, initial: 2.0 };
        let spec = ProblemSpec::new(p, ControlPartition::equal(5.0, 5).unwrap()).unwrap();
        let mesh = build_mesh(&spec, 50).unwrap();
        let g = finite_difference_gradient(&OdeEvaluator::iim(spec, mesh), &[0.3; 5], 1e-6).unwrap();
        assert!(g.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_manufactured_adjoint_gives_misfit_source() {
        let spec = ProblemSpec::switching_benchmark().with_target(ScalarField::constant(52.0)).unwrap();
        let mesh = build_mesh(&spec, 40).unwrap();
        let v = alternating();
        let state = solve_state_iim(&spec, &v, &mesh, &InterfaceMode::Continuous).unwrap();
        let zero = PiecewiseField::new(spec.partition().clone(), vec![ScalarField::constant(0.0); 10]).unwrap();
        let g = mms_source(&spec, &zero, &state).unwrap();
        for (n, &t) in mesh.nodes().iter().enumerate() {
            assert_abs_diff_eq!(g.value(t, spec.partition()), state.value(n) - 52.0, epsilon = 1e-12);
        }
        let spec = spec.with_adjoint_source(g).unwrap();
        let adj = solve_adjoint_iim(&spec, &v, &mesh, &state, &InterfaceMode::Continuous).unwrap();
        assert!(adj.values().iter().all(|l| l.abs() < 1e-12));
    }

    #[test]
    fn ramp_manufactured_adjoint_gives_unit_source() {
        // lambda_m = t_final - t with K = 0 and T = T_hat
        let p = PhysicalParams { decay: 1e-300, gain: 1.0, ambient: 3.0, initial: 3.0 };
        let partition = ControlPartition::equal(4.0, 2).unwrap();
        let spec = ProblemSpec::new(p, partition.clone()).unwrap().with_target(ScalarField::constant(3.0)).unwrap();
        let mesh = build_mesh(&spec, 16).unwrap();
        let state = solve_state_iim(&spec, &[0.0, 0.0], &mesh, &InterfaceMode::Continuous).unwrap();
        let ramp = ScalarField::tabulated(vec![0.0, 4.0], vec![4.0, 0.0]).unwrap();
        let lm = PiecewiseField::new(partition, vec![ramp.clone(), ramp]).unwrap();
        let g = mms_source(&spec, &lm, &state).unwrap();
        for &t in mesh.nodes() {
            assert_abs_diff_eq!(g.value(t, spec.partition()), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn manufactured_adjoint_must_vanish_at_final_time() {
        let spec = ProblemSpec::switching_benchmark();
        let mesh = build_mesh(&spec, 40).unwrap();
        let state = solve_state_iim(&spec, &[0.0; 10], &mesh, &InterfaceMode::Continuous).unwrap();
        let bad = PiecewiseField::new(spec.partition().clone(), vec![ScalarField::constant(1.0); 10]).unwrap();
        assert!(matches!(mms_source(&spec, &bad, &state), Err(Error::Usage(_))));
    }

    #[test]
    fn manufactured_adjoint_is_recovered_first_order() {
        let spec = ProblemSpec::switching_benchmark();
        let lm = PiecewiseField::alternating_sinusoid(spec.partition().clone());
        assert_abs_diff_eq!(lm.value_on(10.0, 9), 0.0, epsilon = 1e-15);
        let v = alternating();
        let report = convergence_study(&[64, 128, 256, 512, 1024], |n| {
            mms_adjoint_error(&spec, &v, &lm, &build_mesh(&spec, n)?)
        })
        .unwrap();
        let order = report.mean_order().unwrap();
        assert!((0.8..1.2).contains(&order), "{report:?}");
    }
}
