//! Bang-bang optimal control of a scalar linear ODE.
//!
//! The state `dT/dt = -K (T - T_s) + C w(t) + f(t)` is driven by a binary
//! control that is constant on each interval of a fixed partition. The
//! solvers march on a uniform mesh that need not align with the switching
//! times: the immersed interface method corrects the stencil at every
//! node whose cell contains a switch. An adjoint solve gives the gradient
//! of the tracking objective, and a trust-region method with an exact
//! knapsack subproblem searches over binary controls.
//!
//! ```
//! use bangbang_core::{build_mesh, solve_state_iim, BinaryControl, InterfaceMode, ProblemSpec};
//!
//! let spec = ProblemSpec::switching_benchmark();
//! let mesh = build_mesh(&spec, 256).unwrap();
//! let v = BinaryControl::alternating(10).values();
//! let state = solve_state_iim(&spec, &v, &mesh, &InterfaceMode::Continuous).unwrap();
//! assert_eq!(state.values().len(), 257);
//! ```

pub mod adjoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod mesh;
pub mod objective;
pub mod optimizer;
pub mod problem;
pub mod state;
pub mod system;
pub mod verification;

pub use adjoint::{assemble_adjoint_system, correction_term_adjoint, solve_adjoint_iim, solve_adjoint_plain};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use mesh::{
    adjoint_jumps, build_mesh, classify_backward, classify_forward, state_jumps, AdjointJumpData, InterfaceMode,
    JumpValues, NodeClass, PointClassification, StateJumpData, TimeMesh,
};
pub use objective::{evaluate_gradient, evaluate_objective, trapezoid, GradientVector, ObjectiveValue};
pub use optimizer::{
    knapsack_step, predicted_reduction, random_control, relaxation_solve, round_relaxation, trust_region_solve,
    update_radius, Evaluator, OdeEvaluator, OptimizerConfig, RadiusUpdate, RelaxationConfig, RelaxationResult, Scheme,
    TerminationReason, TrustRegionRecord, TrustRegionResult, TrustRegionTrace,
};
pub use problem::{
    control_jump, control_value, field_jump, BinaryControl, ControlPartition, PhysicalParams, ProblemSpec,
    RelaxedControl, ScalarField,
};
pub use state::{
    assemble_state_system, correction_term_state, solve_state_euler, solve_state_iim, Direction, SchemeCoefficients,
    TrajectorySolution,
};
pub use system::BlockSystem;
pub use verification::{
    convergence_study, finite_difference_gradient, max_node_error, mms_adjoint_error, mms_source, paper_exact_jumps,
    paper_exact_nodes, paper_exact_solution, reference_adjoint, reference_integrator, ConvergenceReport,
    ConvergenceRow, PiecewiseField,
};
