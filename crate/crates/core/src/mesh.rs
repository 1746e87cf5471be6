//! Uniform time mesh, regular/irregular node classification against the
//! interfaces, and the jump data consumed by the corrected schemes.

use crate::error::{Error, Result};
use crate::problem::{check_control_len, field_jump, same_time, ControlPartition, ProblemSpec};

/// Uniform mesh `t_n = n * dt`, `n = 0..=steps`, with the last node pinned to `t_final`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeMesh {
    steps: usize,
    dt: f64,
    nodes: Vec<f64>,
}

impl TimeMesh {
    pub fn new(t_final: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::config("mesh: N_t must be ≥ 1"));
        }
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::config("mesh: t_final must be > 0"));
        }
        let dt = t_final / steps as f64;
        let mut nodes: Vec<f64> = (0..steps).map(|n| n as f64 * dt).collect();
        nodes.push(t_final);
        Ok(Self { steps, dt, nodes })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, n: usize) -> f64 {
        self.nodes[n]
    }

    pub fn t_final(&self) -> f64 {
        self.nodes[self.steps]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

pub fn build_mesh(spec: &ProblemSpec, steps: usize) -> Result<TimeMesh> {
    TimeMesh::new(spec.t_final(), steps)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeClass {
    Regular,
    /// The marching cell of this node contains interface `interface`
    /// (zero-based) located at `alpha`.
    Irregular {
        interface: usize,
        alpha: f64,
    },
}

/// Per-node classification for one marching direction.
#[derive(Debug, Clone, PartialEq)]
pub struct PointClassification {
    classes: Vec<NodeClass>,
    /// Node index owning each interface.
    owners: Vec<usize>,
}

impl PointClassification {
    pub fn class(&self, n: usize) -> NodeClass {
        self.classes[n]
    }

    pub fn classes(&self) -> &[NodeClass] {
        &self.classes
    }

    /// Node that owns interface `i` (zero-based).
    pub fn owner(&self, i: usize) -> usize {
        self.owners[i]
    }

    pub fn owners(&self) -> &[usize] {
        &self.owners
    }

    pub fn irregular_count(&self) -> usize {
        self.classes.iter().filter(|c| matches!(c, NodeClass::Irregular { .. })).count()
    }
}

fn check_cell_size(mesh: &TimeMesh, partition: &ControlPartition) -> Result<()> {
    if partition.interface_count() == 0 {
        return Ok(());
    }
    let (i, len) = partition.min_interval_length();
    if mesh.dt() >= len {
        return Err(Error::config(format!(
            "mesh: dt = {} is not smaller than interval {} (length {}); increase N_t",
            mesh.dt(),
            i + 1,
            len
        )));
    }
    Ok(())
}

fn classify(mesh: &TimeMesh, partition: &ControlPartition, forward: bool) -> Result<PointClassification> {
    if (mesh.t_final() - partition.t_final()).abs() > 1e-12 * partition.t_final().max(1.0) {
        return Err(Error::Usage("mesh and partition horizons differ".into()));
    }
    check_cell_size(mesh, partition)?;
    let mut classes = vec![NodeClass::Regular; mesh.len()];
    let mut owners = Vec::with_capacity(partition.interface_count());
    for (i, &alpha) in partition.interfaces().iter().enumerate() {
        let s = alpha / mesh.dt();
        let nearest = s.round();
        let on_node = same_time(alpha, mesh.node(nearest as usize), mesh.t_final());
        let n = if on_node {
            nearest as usize
        } else if forward {
            s.floor() as usize
        } else {
            s.ceil() as usize
        };
        if matches!(classes[n], NodeClass::Irregular { .. }) {
            return Err(Error::config(format!("mesh: two interfaces share the cell of node {n}; increase N_t")));
        }
        classes[n] = NodeClass::Irregular { interface: i, alpha };
        owners.push(n);
    }
    Ok(PointClassification { classes, owners })
}

/// Node `n` is irregular when `t_n <= alpha_i <= t_{n+1}`. An interface
/// sitting on node `t_n` belongs to the cell starting at `t_n`.
pub fn classify_forward(mesh: &TimeMesh, partition: &ControlPartition) -> Result<PointClassification> {
    classify(mesh, partition, true)
}

/// Node `n` is irregular when `t_{n-1} <= alpha_i <= t_n`. An interface
/// sitting on node `t_n` makes node `n` irregular.
pub fn classify_backward(mesh: &TimeMesh, partition: &ControlPartition) -> Result<PointClassification> {
    classify(mesh, partition, false)
}

/// How the zero-order jumps at the interfaces are obtained.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum InterfaceMode {
    /// Zero jump in the solution (direct IIM).
    #[default]
    Continuous,
    /// Jumps supplied by the caller, one per interface.
    Prescribed(Vec<f64>),
    /// Jumps solved together with the grid values (augmented IIM).
    Augmented,
}

/// Zero-order jumps per interface; `Unknown` until an augmented solve fixes them.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpValues {
    Known(Vec<f64>),
    Unknown,
}

impl JumpValues {
    pub fn get(&self, i: usize) -> Option<f64> {
        match self {
            JumpValues::Known(q) => Some(q[i]),
            JumpValues::Unknown => None,
        }
    }
}

/// Jump data for the forward state equation.
#[derive(Debug, Clone, PartialEq)]
pub struct StateJumpData {
    decay: f64,
    gain: f64,
    alphas: Vec<f64>,
    control_jumps: Vec<f64>,
    forcing_jumps: Vec<f64>,
    q: JumpValues,
}

impl StateJumpData {
    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn alpha(&self, i: usize) -> f64 {
        self.alphas[i]
    }

    pub fn control_jump(&self, i: usize) -> f64 {
        self.control_jumps[i]
    }

    pub fn forcing_jump(&self, i: usize) -> f64 {
        self.forcing_jumps[i]
    }

    pub fn q(&self) -> &JumpValues {
        &self.q
    }

    /// `[dT/dt] = -K q + C [w] + [f]` for a given zero-order jump `q`.
    pub fn derivative_jump_with(&self, i: usize, q: f64) -> f64 {
        -self.decay * q + self.gain * self.control_jumps[i] + self.forcing_jumps[i]
    }

    /// Derivative jump using the stored `q`; `None` while `q` is unknown.
    pub fn derivative_jump(&self, i: usize) -> Option<f64> {
        self.q.get(i).map(|q| self.derivative_jump_with(i, q))
    }
}

pub fn state_jumps(spec: &ProblemSpec, v: &[f64], mode: &InterfaceMode) -> Result<StateJumpData> {
    let partition = spec.partition();
    check_control_len(v, partition)?;
    let m = partition.interface_count();
    let alphas = partition.interfaces().to_vec();
    let control_jumps = (0..m).map(|i| v[i + 1] - v[i]).collect();
    let forcing_jumps = alphas.iter().map(|&a| field_jump(spec.forcing(), a, partition)).collect();
    let q = match mode {
        InterfaceMode::Continuous => JumpValues::Known(vec![0.0; m]),
        InterfaceMode::Prescribed(q) => {
            if q.len() != m {
                return Err(Error::config(format!("prescribed jumps: expected {m} values, got {}", q.len())));
            }
            JumpValues::Known(q.clone())
        }
        InterfaceMode::Augmented => JumpValues::Unknown,
    };
    Ok(StateJumpData { decay: spec.decay(), gain: spec.gain(), alphas, control_jumps, forcing_jumps, q })
}

/// Jump data for the backward adjoint equation. Backward jumps are
/// `[.]^<- = -[.]`, so `q^lambda = lambda^- - lambda^+`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointJumpData {
    decay: f64,
    alphas: Vec<f64>,
    /// `[g]^<-` per interface.
    source_backward_jumps: Vec<f64>,
    q: JumpValues,
}

impl AdjointJumpData {
    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn alpha(&self, i: usize) -> f64 {
        self.alphas[i]
    }

    pub fn source_backward_jump(&self, i: usize) -> f64 {
        self.source_backward_jumps[i]
    }

    pub fn q(&self) -> &JumpValues {
        &self.q
    }

    /// `[dlambda/dt]^<- = K q^lambda - q - [g]^<-`.
    pub fn backward_derivative_jump_with(&self, i: usize, q_lambda: f64, q_state: f64) -> f64 {
        self.decay * q_lambda - q_state - self.source_backward_jumps[i]
    }
}

pub fn adjoint_jumps(spec: &ProblemSpec, mode: &InterfaceMode) -> Result<AdjointJumpData> {
    let partition = spec.partition();
    let m = partition.interface_count();
    let alphas = partition.interfaces().to_vec();
    let source_backward_jumps = alphas.iter().map(|&a| -field_jump(spec.adjoint_source(), a, partition)).collect();
    let q = match mode {
        InterfaceMode::Continuous => JumpValues::Known(vec![0.0; m]),
        InterfaceMode::Prescribed(q) => {
            if q.len() != m {
                return Err(Error::config(format!("prescribed adjoint jumps: expected {m} values, got {}", q.len())));
            }
            JumpValues::Known(q.clone())
        }
        InterfaceMode::Augmented => JumpValues::Unknown,
    };
    Ok(AdjointJumpData { decay: spec.decay(), alphas, source_backward_jumps, q })
}
