//! Run configuration: a sectioned TOML file (`problem`, `mesh`, `solver`,
//! `optimizer`, `output`) with `section.key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{build_mesh, InterfaceMode, TimeMesh};
use crate::optimizer::{OptimizerConfig, RelaxationConfig, Scheme};
use crate::problem::{BinaryControl, ControlPartition, PhysicalParams, ProblemSpec, ScalarField};

/// Control used by `simulate`, `adjoint`, `converge` and `gradcheck`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ControlSpec {
    /// `"zeros"`, `"ones"` or `"alternating"`.
    Named(String),
    Values(Vec<f64>),
}

impl Default for ControlSpec {
    fn default() -> Self {
        ControlSpec::Named("alternating".into())
    }
}

impl ControlSpec {
    pub fn resolve(&self, n: usize) -> Result<Vec<f64>> {
        let v = match self {
            ControlSpec::Named(name) => match name.as_str() {
                "zeros" => BinaryControl::zeros(n).values(),
                "ones" => BinaryControl::ones(n).values(),
                "alternating" => BinaryControl::alternating(n).values(),
                other => return Err(Error::config(format!("problem.control: unknown control '{other}'"))),
            },
            ControlSpec::Values(v) => v.clone(),
        };
        if v.len() != n {
            return Err(Error::config(format!("problem.control: expected {n} values, got {}", v.len())));
        }
        if v.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::config("problem.control: values must lie in [0, 1]"));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    pub decay: f64,
    pub gain: f64,
    pub ambient: f64,
    pub initial: f64,
    pub t_final: f64,
    /// Number of equal intervals, ignored when `breakpoints` is given.
    pub intervals: usize,
    pub breakpoints: Option<Vec<f64>>,
    pub forcing: ScalarField,
    pub target: ScalarField,
    pub adjoint_source: ScalarField,
    pub control: ControlSpec,
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self {
            decay: 1.0,
            gain: 3.0,
            ambient: 50.0,
            initial: 70.0,
            t_final: 10.0,
            intervals: 10,
            breakpoints: None,
            forcing: ScalarField::default(),
            target: ScalarField::default(),
            adjoint_source: ScalarField::default(),
            control: ControlSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSection {
    pub steps: usize,
    /// Refinement levels for `converge` and `gradcheck`.
    pub levels: Vec<usize>,
}

impl Default for MeshSection {
    fn default() -> Self {
        Self { steps: 2048, levels: (5..=11).map(|p| 1usize << p).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    #[default]
    Iim,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InterfaceKind {
    #[default]
    Continuous,
    Augmented,
    /// Jumps taken from `solver.jumps`.
    Prescribed,
    /// Jumps of the closed-form switching solution.
    PaperExact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    /// Closed-form solution with a jump at every switch.
    #[default]
    PaperExact,
    /// Continuity-matched RK4 integration.
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub scheme: SchemeKind,
    pub interface: InterfaceKind,
    pub jumps: Vec<f64>,
    pub reference: ReferenceKind,
    /// RK4 sub-steps per cell of the reference integrators.
    pub fine: usize,
    /// Forward-difference step for `gradcheck`.
    pub eps: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            scheme: SchemeKind::Iim,
            interface: InterfaceKind::Continuous,
            jumps: Vec::new(),
            reference: ReferenceKind::PaperExact,
            fine: 8,
            eps: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    #[default]
    RoundedRelaxation,
    Random,
    Given,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub initial_radius: Option<usize>,
    pub acceptance_ratio: f64,
    pub max_iterations: usize,
    pub rounding_threshold: f64,
    pub relaxation: RelaxationConfig,
    pub init: InitKind,
    pub seed: u64,
    /// JSON file with the starting control for `init = "given"`: either an
    /// array or an object with a `control` array. Falls back to
    /// `problem.control` when absent.
    pub control_path: Option<PathBuf>,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let d = OptimizerConfig::default();
        Self {
            initial_radius: d.initial_radius,
            acceptance_ratio: d.acceptance_ratio,
            max_iterations: d.max_iterations,
            rounding_threshold: d.rounding_threshold,
            relaxation: d.relaxation,
            init: InitKind::default(),
            seed: 0,
            control_path: None,
        }
    }
}

impl OptimizerSection {
    pub fn settings(&self) -> OptimizerConfig {
        OptimizerConfig {
            initial_radius: self.initial_radius,
            acceptance_ratio: self.acceptance_ratio,
            max_iterations: self.max_iterations,
            rounding_threshold: self.rounding_threshold,
            relaxation: self.relaxation.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { directory: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    pub mesh: MeshSection,
    pub solver: SolverSection,
    pub optimizer: OptimizerSection,
    pub output: OutputSection,
}

fn parse_literal(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("value = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("value"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies one `section.key=value` override. The value is read as a TOML
/// literal, falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override '{assignment}' is not of the form section.key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.len() < 2 || keys.iter().any(|k| k.is_empty()) {
        return Err(Error::config(format!("override key '{}' must look like section.key", path.trim())));
    }
    let mut node = table;
    for key in &keys[..keys.len() - 1] {
        let entry = node.entry(key.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| Error::config(format!("override: '{key}' is not a section")))?;
    }
    node.insert(keys[keys.len() - 1].to_string(), parse_literal(raw.trim()));
    Ok(())
}

impl RunConfig {
    /// Parses TOML text, applies overrides and validates the result.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::config(format!("config: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; `None` starts from the defaults.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::config(format!("config: cannot read {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.mesh.steps == 0 {
            return Err(Error::config("mesh: N_t must be ≥ 1"));
        }
        if self.mesh.levels.contains(&0) {
            return Err(Error::config("mesh: N_t must be ≥ 1"));
        }
        if self.solver.fine == 0 {
            return Err(Error::config("solver: fine must be at least 1"));
        }
        if self.solver.eps.is_nan() || self.solver.eps <= 0.0 {
            return Err(Error::config("solver: eps must be positive"));
        }
        self.optimizer.settings().validate()?;
        let spec = self.spec()?;
        self.control(&spec)?;
        Ok(())
    }

    pub fn spec(&self) -> Result<ProblemSpec> {
        let p = &self.problem;
        let partition = match &p.breakpoints {
            Some(b) => ControlPartition::new(b.clone())?,
            None => ControlPartition::equal(p.t_final, p.intervals)?,
        };
        let params = PhysicalParams { decay: p.decay, gain: p.gain, ambient: p.ambient, initial: p.initial };
        ProblemSpec::new(params, partition)?
            .with_forcing(p.forcing.clone())?
            .with_target(p.target.clone())?
            .with_adjoint_source(p.adjoint_source.clone())
    }

    pub fn control(&self, spec: &ProblemSpec) -> Result<Vec<f64>> {
        self.problem.control.resolve(spec.interval_count())
    }

    pub fn mesh(&self, spec: &ProblemSpec) -> Result<TimeMesh> {
        build_mesh(spec, self.mesh.steps)
    }

    /// Interface mode for the state solve with control `v`.
    pub fn interface_mode(&self, spec: &ProblemSpec, v: &[f64]) -> Result<InterfaceMode> {
        Ok(match self.solver.interface {
            InterfaceKind::Continuous => InterfaceMode::Continuous,
            InterfaceKind::Augmented => InterfaceMode::Augmented,
            InterfaceKind::Prescribed => InterfaceMode::Prescribed(self.solver.jumps.clone()),
            InterfaceKind::PaperExact => InterfaceMode::Prescribed(crate::verification::paper_exact_jumps(spec, v)?),
        })
    }

    /// Scheme for the optimizer, which needs jumps that do not depend on a
    /// fixed control.
    pub fn optimizer_scheme(&self) -> Result<Scheme> {
        match (self.solver.scheme, self.solver.interface) {
            (SchemeKind::Euler, _) => Ok(Scheme::Euler),
            (SchemeKind::Iim, InterfaceKind::Continuous) => Ok(Scheme::Iim(InterfaceMode::Continuous)),
            (SchemeKind::Iim, InterfaceKind::Augmented) => Ok(Scheme::Iim(InterfaceMode::Augmented)),
            (SchemeKind::Iim, kind) => Err(Error::config(format!(
                "solver.interface = {kind:?} cannot be used for optimization; use continuous or augmented"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_describe_the_switching_benchmark() {
        let cfg = RunConfig::from_toml_str("", &[]).unwrap();
        assert_eq!(cfg.spec().unwrap(), ProblemSpec::switching_benchmark());
        assert_eq!(cfg.mesh.levels, vec![32, 64, 128, 256, 512, 1024, 2048]);
    }

    #[test]
    fn overrides_parse_literals() {
        let cfg = RunConfig::from_toml_str(
            "[problem]\ndecay = 2.0\n",
            &[
                "mesh.steps=64".into(),
                "solver.scheme=euler".into(),
                "problem.control=[1, 0, 1, 0, 1, 0, 1, 0, 1, 0]".into(),
                "optimizer.relaxation.tolerance=1e-3".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.problem.decay, 2.0);
        assert_eq!(cfg.mesh.steps, 64);
        assert_eq!(cfg.solver.scheme, SchemeKind::Euler);
        assert_eq!(cfg.optimizer.relaxation.tolerance, 1e-3);
        let spec = cfg.spec().unwrap();
        assert_eq!(cfg.control(&spec).unwrap()[0], 1.0);
    }

    #[test]
    fn field_tables_deserialize() {
        let text = "[problem.target]\nkind = \"sinusoid\"\noffset = 5.0\namplitude = 0.5\nfrequency = 1.0\n";
        let cfg = RunConfig::from_toml_str(text, &[]).unwrap();
        assert_eq!(cfg.problem.target, ScalarField::sinusoid(5.0, 0.5, 1.0));
    }

    #[test]
    fn zero_steps_is_rejected() {
        let err = RunConfig::from_toml_str("", &["mesh.steps=0".into()]).unwrap_err();
        assert_eq!(err.to_string(), "mesh: N_t must be ≥ 1");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml_str("[mesh]\nstep = 3\n", &[]).is_err());
        assert!(RunConfig::from_toml_str("[extra]\n", &[]).is_err());
        assert!(RunConfig::from_toml_str("", &["mesh=3".into()]).is_err());
        assert!(RunConfig::from_toml_str("", &["problem.control=\"zigzag\"".into()]).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.problem.target = ScalarField::sinusoid(5.0, 0.5, 1.0);
        cfg.optimizer.initial_radius = Some(4);
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text, &[]).unwrap(), cfg);
    }
}
