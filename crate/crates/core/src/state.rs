//! Forward solvers for the state equation
//! `dT/dt = -K (T - T_s) + C w + f`, `T(0) = T_0`.
//!
//! Regular nodes take a forward Euler step. A node whose cell
//! `[t_n, t_{n+1}]` contains an interface adds the correction term built from
//! the zero-order jump `q` and the derivative jump `-K q + C [w] + [f]`.

use crate::error::{Error, Result};
use crate::mesh::{classify_forward, state_jumps, InterfaceMode, NodeClass, StateJumpData, TimeMesh};
use crate::problem::{check_control_len, ProblemSpec};
use crate::system::BlockSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Grid values of the state (forward) or adjoint (backward) plus one
/// augmented jump per interface.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySolution {
    mesh: TimeMesh,
    values: Vec<f64>,
    augmented: Vec<f64>,
    direction: Direction,
}

impl TrajectorySolution {
    pub(crate) fn new(mesh: TimeMesh, values: Vec<f64>, augmented: Vec<f64>, direction: Direction) -> Self {
        debug_assert_eq!(values.len(), mesh.len());
        Self { mesh, values, augmented, direction }
    }

    /// Wraps node values computed elsewhere (a reference solution, a
    /// synthetic profile) so they can be fed to the quadrature routines.
    pub fn from_nodes(mesh: TimeMesh, values: Vec<f64>, direction: Direction) -> Result<Self> {
        if values.len() != mesh.len() {
            return Err(Error::Usage(format!("expected {} node values, got {}", mesh.len(), values.len())));
        }
        Ok(Self { mesh, values, augmented: Vec::new(), direction })
    }

    pub fn mesh(&self) -> &TimeMesh {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, n: usize) -> f64 {
        self.values[n]
    }

    /// Zero-order jumps: `q` for the state, `q^lambda` for the adjoint.
    pub fn augmented(&self) -> &[f64] {
        &self.augmented
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Finite-difference weights of the corrected one-step schemes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeCoefficients {
    pub c1: f64,
    pub c2: f64,
}

impl SchemeCoefficients {
    /// `c1 = 1/dt`, `c2 = -1/dt`.
    pub fn state(dt: f64) -> Self {
        Self { c1: 1.0 / dt, c2: -1.0 / dt }
    }

    /// `c1 = -1/dt`, `c2 = 1/dt`.
    pub fn adjoint(dt: f64) -> Self {
        Self { c1: -1.0 / dt, c2: 1.0 / dt }
    }
}

pub(crate) fn state_correction(jumps: &StateJumpData, i: usize, q: f64, t_n: f64, dt: f64) -> f64 {
    (q + jumps.derivative_jump_with(i, q) * (t_n - jumps.alpha(i))) / dt
}

/// Correction `(q + (-K q + C [w] + [f]) (t_n - alpha)) / dt` at the forward
/// irregular node `t_n` of interface `i` (zero-based).
pub fn correction_term_state(jumps: &StateJumpData, i: usize, t_n: f64, dt: f64) -> Result<f64> {
    let q = jumps
        .q()
        .get(i)
        .ok_or_else(|| Error::Usage("state jumps are unknown; solve the augmented system first".into()))?;
    Ok(state_correction(jumps, i, q, t_n, dt))
}

/// `C w^n + f^n` at every node, with left-interval values at breakpoints.
fn node_sources(spec: &ProblemSpec, v: &[f64], mesh: &TimeMesh) -> Vec<f64> {
    let partition = spec.partition();
    mesh.nodes()
        .iter()
        .map(|&t| spec.gain() * v[partition.interval_of(t)] + spec.forcing().value(t, partition))
        .collect()
}

#[inline]
fn euler_step(spec: &ProblemSpec, temp: f64, source: f64, dt: f64) -> f64 {
    temp + dt * (-spec.decay() * (temp - spec.ambient()) + source)
}

/// Plain forward Euler with no interface corrections.
pub fn solve_state_euler(spec: &ProblemSpec, v: &[f64], mesh: &TimeMesh) -> Result<TrajectorySolution> {
    check_control_len(v, spec.partition())?;
    let sources = node_sources(spec, v, mesh);
    let dt = mesh.dt();
    let mut values = Vec::with_capacity(mesh.len());
    values.push(spec.initial());
    for n in 0..mesh.steps() {
        values.push(euler_step(spec, values[n], sources[n], dt));
    }
    let m = spec.partition().interface_count();
    Ok(TrajectorySolution::new(mesh.clone(), values, vec![0.0; m], Direction::Forward))
}

/// Interface-corrected Euler. Continuous and prescribed jumps are marched
/// directly; the augmented mode solves for the jumps with the block system.
pub fn solve_state_iim(
    spec: &ProblemSpec,
    v: &[f64],
    mesh: &TimeMesh,
    mode: &InterfaceMode,
) -> Result<TrajectorySolution> {
    let jumps = state_jumps(spec, v, mode)?;
    let classes = classify_forward(mesh, spec.partition())?;
    let sources = node_sources(spec, v, mesh);
    let dt = mesh.dt();
    let m = jumps.len();

    let step = |n: usize, temp: f64, q: f64| -> f64 {
        let base = euler_step(spec, temp, sources[n], dt);
        match classes.class(n) {
            NodeClass::Regular => base,
            NodeClass::Irregular { interface, .. } => {
                base + dt * state_correction(&jumps, interface, q, mesh.node(n), dt)
            }
        }
    };

    let mut values = Vec::with_capacity(mesh.len());
    values.push(spec.initial());

    if let Some(known) = known_jumps(&jumps) {
        for n in 0..mesh.steps() {
            let q = match classes.class(n) {
                NodeClass::Irregular { interface, .. } => known[interface],
                NodeClass::Regular => 0.0,
            };
            values.push(step(n, values[n], q));
        }
        return Ok(TrajectorySolution::new(mesh.clone(), values, known, Direction::Forward));
    }

    // Augmented: the closure for q_i only involves nodes owner-1..=owner+2, and
    // the march is affine in q_i, so each jump is fixed by one scalar equation
    // as soon as the march reaches its interface.
    check_closure_room(classes.owners(), mesh.steps(), 1, 2)?;
    let mut q = vec![0.0; m];
    for n in 0..mesh.steps() {
        if let NodeClass::Irregular { interface: i, alpha } = classes.class(n) {
            let (t_n, t_next) = (mesh.node(n), mesh.node(n + 1));
            let minus = extrapolate(values[n], values[n - 1], (alpha - t_n) / dt);
            let residual = |qi: f64| {
                let a = step(n, values[n], qi);
                let b = step(n + 1, a, 0.0);
                let plus = extrapolate(a, b, (t_next - alpha) / dt);
                qi - (plus - minus)
            };
            let (r0, r1) = (residual(0.0), residual(1.0));
            let slope = r1 - r0;
            if slope.abs() < f64::EPSILON * (1.0 + r0.abs()) {
                return Err(Error::Numerical(format!(
                    "augmented state closure is singular at interface {} (alpha = {alpha})",
                    i + 1
                )));
            }
            q[i] = -r0 / slope;
        }
        let qn = match classes.class(n) {
            NodeClass::Irregular { interface, .. } => q[interface],
            NodeClass::Regular => 0.0,
        };
        values.push(step(n, values[n], qn));
    }
    if values.iter().chain(&q).any(|x| !x.is_finite()) {
        return Err(Error::Numerical("augmented state solve produced non-finite values".into()));
    }
    Ok(TrajectorySolution::new(mesh.clone(), values, q, Direction::Forward))
}

fn known_jumps(jumps: &StateJumpData) -> Option<Vec<f64>> {
    (0..jumps.len()).map(|i| jumps.q().get(i)).collect()
}

/// Linear extrapolation from `near` (closest node) and `far` (its neighbour
/// away from the interface) over `s` cell widths toward the interface.
#[inline]
pub(crate) fn extrapolate(near: f64, far: f64, s: f64) -> f64 {
    near + s * (near - far)
}

/// The two-node extrapolation closure needs owners at least two nodes apart,
/// `before` nodes ahead of the first owner and `after` nodes past the last.
pub(crate) fn check_closure_room(owners: &[usize], steps: usize, before: usize, after: usize) -> Result<()> {
    let Some((&first, &last)) = owners.first().zip(owners.last()) else {
        return Ok(());
    };
    let spaced = owners.windows(2).all(|w| w[1] >= w[0] + 2);
    if first < before || last + after > steps || !spaced {
        return Err(Error::config(
            "mesh: the augmented closure needs two nodes on each side of every interface; increase N_t",
        ));
    }
    Ok(())
}

/// Assembles the augmented block system over `[T_0..T_{N_t}; q_1..q_{N-1}]`.
///
/// Row 0 fixes `T^0`, rows `1..=N_t` hold the corrected Euler steps (the
/// correction is affine in `q_i`, its `q` coefficient lands in `B`), and
/// each closure row states `q_i = T^+(alpha_i) - T^-(alpha_i)` with both
/// one-sided values extrapolated linearly from the two nearest nodes on
/// that side.
pub fn assemble_state_system(spec: &ProblemSpec, v: &[f64], mesh: &TimeMesh) -> Result<BlockSystem> {
    let jumps = state_jumps(spec, v, &InterfaceMode::Augmented)?;
    let classes = classify_forward(mesh, spec.partition())?;
    check_closure_room(classes.owners(), mesh.steps(), 1, 2)?;
    let sources = node_sources(spec, v, mesh);
    let dt = mesh.dt();
    let k = spec.decay();
    let grid = mesh.len();
    let mut sys = BlockSystem::new(grid, jumps.len());

    sys.add(0, 0, 1.0);
    sys.set_rhs(0, spec.initial());
    for (n, &source) in sources.iter().enumerate().take(mesh.steps()) {
        let row = n + 1;
        sys.add(row, n + 1, 1.0);
        sys.add(row, n, -(1.0 - k * dt));
        let mut rhs = dt * (k * spec.ambient() + source);
        if let NodeClass::Irregular { interface: i, alpha } = classes.class(n) {
            let lever = mesh.node(n) - alpha;
            sys.add(row, grid + i, -(1.0 - k * lever));
            rhs += (jumps.derivative_jump_with(i, 0.0)) * lever;
        }
        sys.set_rhs(row, rhs);
    }
    for (i, &m) in classes.owners().iter().enumerate() {
        let row = grid + i;
        let alpha = jumps.alpha(i);
        let s_minus = (alpha - mesh.node(m)) / dt;
        let s_plus = (mesh.node(m + 1) - alpha) / dt;
        sys.add(row, grid + i, 1.0);
        // -T^+ = -(1 + s+) T^{m+1} + s+ T^{m+2}
        sys.add(row, m + 1, -(1.0 + s_plus));
        sys.add(row, m + 2, s_plus);
        // +T^- = (1 + s-) T^m - s- T^{m-1}
        sys.add(row, m, 1.0 + s_minus);
        sys.add(row, m - 1, -s_minus);
    }
    Ok(sys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;
    use crate::problem::{BinaryControl, ControlPartition, PhysicalParams, ScalarField};
    use approx::assert_abs_diff_eq;

    fn spec_with(params: PhysicalParams, n: usize, t_final: f64) -> ProblemSpec {
        ProblemSpec::new(params, ControlPartition::equal(t_final, n).unwrap()).unwrap()
    }

    #[test]
    fn coefficients_satisfy_moment_conditions() {
        for dt in [0.1, 0.37, 2.0] {
            let s = SchemeCoefficients::state(dt);
            assert_eq!(s.c1 + s.c2, 0.0);
            let alpha = 0.3 * dt;
            assert_abs_diff_eq!(s.c1 * (dt - alpha) + s.c2 * (0.0 - alpha), 1.0, epsilon = 1e-12);
            let a = SchemeCoefficients::adjoint(dt);
            assert_eq!(a.c1 + a.c2, 0.0);
            // backward cell: t_n = dt, t_{n-1} = 0
            assert_abs_diff_eq!(a.c1 * (dt - alpha) + a.c2 * (0.0 - alpha), -1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn correction_term_examples() {
        let params = PhysicalParams { decay: 1.0, gain: 3.0, ambient: 0.0, initial: 0.0 };
        let spec = spec_with(params, 2, 2.0);
        // [w] = +1, q = 0, t_n - alpha = -0.05, dt = 0.1
        let j = state_jumps(&spec, &[0.0, 1.0], &InterfaceMode::Continuous).unwrap();
        assert_abs_diff_eq!(correction_term_state(&j, 0, 0.95, 0.1).unwrap(), -1.5, epsilon = 1e-12);

        let j = state_jumps(&spec, &[1.0, 1.0], &InterfaceMode::Continuous).unwrap();
        assert_eq!(correction_term_state(&j, 0, 0.95, 0.1).unwrap(), 0.0);

        // q = 2, K = 1, no control or forcing jump, dt = 1, t_n - alpha = -0.5
        let j = state_jumps(&spec, &[1.0, 1.0], &InterfaceMode::Prescribed(vec![2.0])).unwrap();
        assert_abs_diff_eq!(correction_term_state(&j, 0, 0.5, 1.0).unwrap(), 3.0, epsilon = 1e-12);

        let j = state_jumps(&spec, &[1.0, 1.0], &InterfaceMode::Augmented).unwrap();
        assert!(correction_term_state(&j, 0, 0.5, 1.0).is_err());
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let params = PhysicalParams { decay: 1.0, gain: 3.0, ambient: 50.0, initial: 50.0 };
        let spec = spec_with(params, 10, 10.0);
        let mesh = build_mesh(&spec, 64).unwrap();
        let v = vec![0.0; 10];
        for sol in [
            solve_state_iim(&spec, &v, &mesh, &InterfaceMode::Continuous).unwrap(),
            solve_state_euler(&spec, &v, &mesh).unwrap(),
        ] {
            assert!(sol.values().iter().all(|&t| t == 50.0));
        }
    }

    #[test]
    fn switch_free_control_matches_euler_bitwise() {
        let spec = ProblemSpec::switching_benchmark();
        let mesh = build_mesh(&spec, 100).unwrap();
        let v = vec![1.0; 10];
        let a = solve_state_iim(&spec, &v, &mesh, &InterfaceMode::Continuous).unwrap();
        let b = solve_state_euler(&spec, &v, &mesh).unwrap();
        assert_eq!(a.values(), b.values());
        assert_eq!(b.augmented(), &[0.0; 9]);
    }

    #[test]
    fn no_interfaces_iim_equals_euler() {
        let params = PhysicalParams { decay: 0.7, gain: 2.0, ambient: 1.0, initial: 4.0 };
        let spec = spec_with(params, 1, 3.0).with_forcing(ScalarField::sinusoid(0.5, 1.0, 2.0)).unwrap();
        let mesh = build_mesh(&spec, 37).unwrap();
        let a = solve_state_iim(&spec, &[1.0], &mesh, &InterfaceMode::Continuous).unwrap();
        let b = solve_state_euler(&spec, &[1.0], &mesh).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn affine_in_initial_offset() {
        let base = PhysicalParams { decay: 0.4, gain: 1.0, ambient: 3.0, initial: 5.0 };
        let doubled = PhysicalParams { initial: 7.0, ..base };
        let a = spec_with(base, 4, 4.0);
        let b = spec_with(doubled, 4, 4.0);
        let mesh = build_mesh(&a, 50).unwrap();
        let v = vec![0.0; 4];
        let sa = solve_state_iim(&a, &v, &mesh, &InterfaceMode::Continuous).unwrap();
        let sb = solve_state_iim(&b, &v, &mesh, &InterfaceMode::Continuous).unwrap();
        for (x, y) in sa.values().iter().zip(sb.values()) {
            assert_abs_diff_eq!(2.0 * (x - 3.0), y - 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn trajectory_invariants() {
        let spec = ProblemSpec::switching_benchmark();
        let mesh = build_mesh(&spec, 128).unwrap();
        let v = BinaryControl::alternating(10).values();
        let s = solve_state_iim(&spec, &v, &mesh, &InterfaceMode::Augmented).unwrap();
        assert_eq!(s.values().len(), 129);
        assert_eq!(s.augmented().len(), 9);
        assert_eq!(s.value(0), 70.0);
        assert_eq!(s.direction(), Direction::Forward);
    }

    #[test]
    fn single_interval_system_is_bidiagonal_euler() {
        let params = PhysicalParams { decay: 1.0, gain: 1.0, ambient: 2.0, initial: 3.0 };
        let spec = spec_with(params, 1, 1.0);
        let mesh = build_mesh(&spec, 8).unwrap();
        let sys = assemble_state_system(&spec, &[1.0], &mesh).unwrap();
        assert_eq!(sys.augmented_dim(), 0);
        assert_eq!(sys.dim(), 9);
        for &(r, c, _) in sys.entries() {
            assert!(c == r || c + 1 == r, "entry ({r}, {c}) off the bidiagonal");
        }
        let euler = solve_state_euler(&spec, &[1.0], &mesh).unwrap();
        assert!(sys.residual(euler.values()).iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn augmented_solution_satisfies_assembled_system() {
        let spec = ProblemSpec::switching_benchmark();
        let mesh = build_mesh(&spec, 64).unwrap();
        let v = BinaryControl::alternating(10).values();
        let sol = solve_state_iim(&spec, &v, &mesh, &InterfaceMode::Augmented).unwrap();
        let sys = assemble_state_system(&spec, &v, &mesh).unwrap();
        let mut x = sol.values().to_vec();
        x.extend_from_slice(sol.augmented());
        let r = sys.residual(&x);
        assert!(r.iter().all(|r| r.abs() < 1e-9), "max residual {:?}", r.iter().fold(0.0f64, |m, r| m.max(r.abs())));
        // one coupling entry per irregular row
        let mut rows: Vec<usize> = sys.coupling_entries().map(|e| e.0).collect();
        rows.dedup();
        assert_eq!(rows.len(), 9);
        assert_eq!(sys.coupling_entries().count(), 9);
    }

    #[test]
    fn augmented_solution_matches_dense_lu() {
        let spec = ProblemSpec::switching_benchmark();
        let mesh = build_mesh(&spec, 40).unwrap();
        let v = BinaryControl::alternating(10).values();
        let sys = assemble_state_system(&spec, &v, &mesh).unwrap();
        let n = sys.dim();
        let dense = sys.to_dense();
        let a = nalgebra::DMatrix::from_fn(n, n, |r, c| dense[r][c]);
        let b = nalgebra::DVector::from_column_slice(sys.rhs());
        let x = a.lu().solve(&b).expect("nonsingular");
        let sol = solve_state_iim(&spec, &v, &mesh, &InterfaceMode::Augmented).unwrap();
        for (i, q) in sol.augmented().iter().enumerate() {
            assert_abs_diff_eq!(*q, x[sys.grid_dim() + i], epsilon = 1e-8 * (1.0 + q.abs()));
        }
        for (t, xt) in sol.values().iter().zip(x.iter()) {
            assert_abs_diff_eq!(*t, *xt, epsilon = 1e-8 * (1.0 + t.abs()));
        }
    }

    #[test]
    fn augmented_jumps_approach_derivative_free_limit() {
        // The extrapolation closure drives the derivative jump to zero,
        // i.e. q_i -> (C [w] + [f]) / K, at first order in dt.
        let spec = ProblemSpec::switching_benchmark();
        let v = BinaryControl::alternating(10).values();
        let gap = |steps: usize| {
            let mesh = build_mesh(&spec, steps).unwrap();
            let s = solve_state_iim(&spec, &v, &mesh, &InterfaceMode::Augmented).unwrap();
            s.augmented().iter().enumerate().map(|(i, q)| (q - 3.0 * (v[i + 1] - v[i])).abs()).fold(0.0f64, f64::max)
        };
        let (g1, g2, g3) = (gap(256), gap(1024), gap(4096));
        assert!(g3 < g2 && g2 < g1, "{g1} {g2} {g3}");
        assert!(g3 < 0.02, "{g3}");
    }

    #[test]
    fn augmented_needs_room_around_interfaces() {
        let spec = ProblemSpec::switching_benchmark();
        let mesh = build_mesh(&spec, 16).unwrap();
        let v = BinaryControl::alternating(10).values();
        let err = solve_state_iim(&spec, &v, &mesh, &InterfaceMode::Augmented).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
