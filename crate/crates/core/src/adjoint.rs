//! Backward solvers for the adjoint equation
//! `-dlambda/dt = -K lambda - (T - T_hat) + g`, `lambda(t_final) = 0`.
//!
//! Marching from `t_n` to `t_{n-1}`, a regular node uses
//! `(lambda^n - lambda^{n-1}) / dt = K lambda^n + (T^n - T_hat^n) - g^n`.
//! A node with an interface in `[t_{n-1}, t_n]` adds the correction built
//! from the backward jumps `q^lambda = lambda^- - lambda^+` and
//! `[dlambda/dt]^<- = K q^lambda - q - [g]^<-`, where `q` is the state jump.

use crate::error::{Error, Result};
use crate::mesh::{adjoint_jumps, classify_backward, AdjointJumpData, InterfaceMode, JumpValues, NodeClass, TimeMesh};
use crate::problem::{check_control_len, ProblemSpec};
use crate::state::{check_closure_room, extrapolate, Direction, TrajectorySolution};
use crate::system::BlockSystem;

pub(crate) fn adjoint_correction(
    adj: &AdjointJumpData,
    i: usize,
    q_lambda: f64,
    q_state: f64,
    t_prev: f64,
    dt: f64,
) -> f64 {
    (q_lambda + adj.backward_derivative_jump_with(i, q_lambda, q_state) * (t_prev - adj.alpha(i))) / dt
}

/// Correction `(q^lambda + (K q^lambda - q - [g]^<-) (t_{n-1} - alpha)) / dt`
/// at the backward irregular node whose left neighbour is `t_prev`.
pub fn correction_term_adjoint(adj: &AdjointJumpData, q_state: f64, i: usize, t_prev: f64, dt: f64) -> Result<f64> {
    let q_lambda = adj
        .q()
        .get(i)
        .ok_or_else(|| Error::Usage("adjoint jumps are unknown; solve the augmented system first".into()))?;
    Ok(adjoint_correction(adj, i, q_lambda, q_state, t_prev, dt))
}

fn check_state(mesh: &TimeMesh, state: &TrajectorySolution, interfaces: usize) -> Result<()> {
    if state.direction() != Direction::Forward {
        return Err(Error::Usage("adjoint solve needs a forward state trajectory".into()));
    }
    if state.mesh().steps() != mesh.steps() || state.mesh().t_final() != mesh.t_final() {
        return Err(Error::Usage(format!(
            "state was solved with N_t = {}, adjoint mesh has N_t = {}",
            state.mesh().steps(),
            mesh.steps()
        )));
    }
    if state.augmented().len() != interfaces {
        return Err(Error::Usage("state jump vector does not match the partition".into()));
    }
    Ok(())
}

/// `(T^n - T_hat^n) - g^n` at every node.
fn node_sources(spec: &ProblemSpec, mesh: &TimeMesh, state: &TrajectorySolution) -> Vec<f64> {
    let partition = spec.partition();
    mesh.nodes()
        .iter()
        .zip(state.values())
        .map(|(&t, &temp)| temp - spec.target().value(t, partition) - spec.adjoint_source().value(t, partition))
        .collect()
}

#[inline]
fn backward_step(decay: f64, lambda: f64, source: f64, dt: f64) -> f64 {
    lambda - dt * (decay * lambda + source)
}

/// Backward scheme with no interface corrections.
pub fn solve_adjoint_plain(
    spec: &ProblemSpec,
    mesh: &TimeMesh,
    state: &TrajectorySolution,
) -> Result<TrajectorySolution> {
    let m = spec.partition().interface_count();
    check_state(mesh, state, m)?;
    let sources = node_sources(spec, mesh, state);
    let mut values = vec![0.0; mesh.len()];
    for n in (1..=mesh.steps()).rev() {
        values[n - 1] = backward_step(spec.decay(), values[n], sources[n], mesh.dt());
    }
    Ok(TrajectorySolution::new(mesh.clone(), values, vec![0.0; m], Direction::Backward))
}

/// Interface-corrected backward march. The state jumps `q` are read from
/// `state.augmented()`; `mode` decides the adjoint jumps `q^lambda`.
pub fn solve_adjoint_iim(
    spec: &ProblemSpec,
    v: &[f64],
    mesh: &TimeMesh,
    state: &TrajectorySolution,
    mode: &InterfaceMode,
) -> Result<TrajectorySolution> {
    check_control_len(v, spec.partition())?;
    let adj = adjoint_jumps(spec, mode)?;
    check_state(mesh, state, adj.len())?;
    let classes = classify_backward(mesh, spec.partition())?;
    let sources = node_sources(spec, mesh, state);
    let q_state = state.augmented();
    let dt = mesh.dt();
    let k = spec.decay();

    let step = |n: usize, lambda: f64, q_lambda: f64| -> f64 {
        let base = backward_step(k, lambda, sources[n], dt);
        match classes.class(n) {
            NodeClass::Regular => base,
            NodeClass::Irregular { interface: i, .. } => {
                base + dt * adjoint_correction(&adj, i, q_lambda, q_state[i], mesh.node(n - 1), dt)
            }
        }
    };

    let mut values = vec![0.0; mesh.len()];
    let mut q_lambda = match adj.q() {
        JumpValues::Known(q) => q.clone(),
        JumpValues::Unknown => {
            check_closure_room(classes.owners(), mesh.steps(), 2, 1)?;
            vec![0.0; adj.len()]
        }
    };
    let augmented = matches!(adj.q(), JumpValues::Unknown);

    for n in (1..=mesh.steps()).rev() {
        let qn = match classes.class(n) {
            NodeClass::Regular => 0.0,
            NodeClass::Irregular { interface: i, alpha } => {
                if augmented {
                    let plus = extrapolate(values[n], values[n + 1], (mesh.node(n) - alpha) / dt);
                    let s_minus = (alpha - mesh.node(n - 1)) / dt;
                    let residual = |ql: f64| {
                        let a = step(n, values[n], ql);
                        let b = step(n - 1, a, 0.0);
                        ql - (extrapolate(a, b, s_minus) - plus)
                    };
                    let (r0, r1) = (residual(0.0), residual(1.0));
                    let slope = r1 - r0;
                    if slope.abs() < f64::EPSILON * (1.0 + r0.abs()) {
                        return Err(Error::Numerical(format!(
                            "augmented adjoint closure is singular at interface {} (alpha = {alpha})",
                            i + 1
                        )));
                    }
                    q_lambda[i] = -r0 / slope;
                }
                q_lambda[i]
            }
        };
        values[n - 1] = step(n, values[n], qn);
    }
    if values.iter().chain(&q_lambda).any(|x| !x.is_finite()) {
        return Err(Error::Numerical("adjoint solve produced non-finite values".into()));
    }
    Ok(TrajectorySolution::new(mesh.clone(), values, q_lambda, Direction::Backward))
}

/// Assembles the augmented adjoint system over `[lambda_0..lambda_{N_t}; q^lambda]`
/// (grid unknowns in node order). Row `N_t` fixes the terminal value, row
/// `n - 1` holds the backward step from node `n`, and each closure row
/// states `q^lambda_i = lambda^-(alpha_i) - lambda^+(alpha_i)` with two-node
/// linear extrapolation on each side.
pub fn assemble_adjoint_system(
    spec: &ProblemSpec,
    v: &[f64],
    mesh: &TimeMesh,
    state: &TrajectorySolution,
) -> Result<BlockSystem> {
    check_control_len(v, spec.partition())?;
    let adj = adjoint_jumps(spec, &InterfaceMode::Augmented)?;
    check_state(mesh, state, adj.len())?;
    let classes = classify_backward(mesh, spec.partition())?;
    check_closure_room(classes.owners(), mesh.steps(), 2, 1)?;
    let sources = node_sources(spec, mesh, state);
    let dt = mesh.dt();
    let k = spec.decay();
    let grid = mesh.len();
    let mut sys = BlockSystem::new(grid, adj.len());

    sys.add(mesh.steps(), mesh.steps(), 1.0);
    for n in (1..=mesh.steps()).rev() {
        let row = n - 1;
        sys.add(row, n - 1, 1.0);
        sys.add(row, n, -(1.0 - k * dt));
        let mut rhs = -dt * sources[n];
        if let NodeClass::Irregular { interface: i, alpha } = classes.class(n) {
            let lever = mesh.node(n - 1) - alpha;
            sys.add(row, grid + i, -(1.0 + k * lever));
            rhs += adj.backward_derivative_jump_with(i, 0.0, state.augmented()[i]) * lever;
        }
        sys.set_rhs(row, rhs);
    }
    for (i, &n) in classes.owners().iter().enumerate() {
        let row = grid + i;
        let alpha = adj.alpha(i);
        let s_minus = (alpha - mesh.node(n - 1)) / dt;
        let s_plus = (mesh.node(n) - alpha) / dt;
        sys.add(row, grid + i, 1.0);
        sys.add(row, n - 1, -(1.0 + s_minus));
        sys.add(row, n - 2, s_minus);
        sys.add(row, n, 1.0 + s_plus);
        sys.add(row, n + 1, -s_plus);
    }
    Ok(sys)
}
