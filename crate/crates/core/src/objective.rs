//! Trapezoid approximations of the tracking objective
//! `J = int_0^{t_final} 1/2 (T - T_hat)^2 dt` and of its gradient
//! `dJ/dv_i = -int_{Omega_i} C lambda dt`.

use crate::error::{Error, Result};
use crate::problem::{check_control_len, same_time, ProblemSpec};
use crate::state::{extrapolate, TrajectorySolution};

/// Objective value `J >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ObjectiveValue(f64);

impl ObjectiveValue {
    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<ObjectiveValue> for f64 {
    fn from(j: ObjectiveValue) -> f64 {
        j.0
    }
}

/// One gradient entry per control interval.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector(Vec<f64>);

impl GradientVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical("gradient has non-finite entries".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, g| m.max(g.abs()))
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }
}

/// Composite trapezoid rule on a uniform grid.
pub fn trapezoid(dt: f64, values: &[f64]) -> f64 {
    match values {
        [] | [_] => 0.0,
        [first, inner @ .., last] => dt * (0.5 * (first + last) + inner.iter().sum::<f64>()),
    }
}

/// Trapezoid sum of `1/2 (T^n - T_hat(t_n))^2` over the mesh nodes.
pub fn evaluate_objective(spec: &ProblemSpec, state: &TrajectorySolution) -> ObjectiveValue {
    let mesh = state.mesh();
    let partition = spec.partition();
    let integrand: Vec<f64> = mesh
        .nodes()
        .iter()
        .zip(state.values())
        .map(|(&t, &temp)| {
            let e = temp - spec.target().value(t, partition);
            0.5 * e * e
        })
        .collect();
    ObjectiveValue(trapezoid(mesh.dt(), &integrand))
}

/// Trapezoid quadrature of `-C lambda` over every control interval.
///
/// Each interval uses the nodes strictly inside it plus its two endpoints.
/// The endpoints `0` and `t_final` are mesh nodes; an interior endpoint takes
/// the one-sided value extrapolated linearly from the two nearest nodes
/// inside the interval.
pub fn evaluate_gradient(spec: &ProblemSpec, v: &[f64], adjoint: &TrajectorySolution) -> Result<GradientVector> {
    let partition = spec.partition();
    check_control_len(v, partition)?;
    let mesh = adjoint.mesh();
    if !same_time(mesh.t_final(), partition.t_final(), partition.t_final()) {
        return Err(Error::Usage("adjoint mesh does not span the control horizon".into()));
    }
    let dt = mesh.dt();
    let lambda = adjoint.values();
    let nodes = mesh.nodes();
    let scale = mesh.t_final();
    let last = mesh.steps();

    let mut grad = Vec::with_capacity(partition.interval_count());
    for i in 0..partition.interval_count() {
        let (a, b) = partition.interval(i);
        let lo = nodes.partition_point(|&t| t < a || same_time(t, a, scale));
        let hi = nodes.partition_point(|&t| t < b && !same_time(t, b, scale));
        if hi < lo + 2 {
            return Err(Error::config(format!(
                "mesh: interval {} holds fewer than two interior nodes; increase N_t",
                i + 1
            )));
        }
        let left = if i == 0 { lambda[0] } else { extrapolate(lambda[lo], lambda[lo + 1], (nodes[lo] - a) / dt) };
        let right = if i + 1 == partition.interval_count() {
            lambda[last]
        } else {
            extrapolate(lambda[hi - 1], lambda[hi - 2], (b - nodes[hi - 1]) / dt)
        };
        let inner = trapezoid(dt, &lambda[lo..hi]);
        let ends = 0.5 * (nodes[lo] - a) * (left + lambda[lo]) + 0.5 * (b - nodes[hi - 1]) * (lambda[hi - 1] + right);
        grad.push(-spec.gain() * (inner + ends));
    }
    GradientVector::new(grad)
}
