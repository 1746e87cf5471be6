//! Problem instances: physical constants, the control partition of the
//! horizon, binary and relaxed controls, and the scalar fields used for
//! forcing, adjoint sources and targets.
//!
//! The state obeys `dT/dt = -K (T - T_s) + C w(t) + f(t)` with `T(0) = T_0`,
//! where `w` is piecewise constant on the partition intervals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used to decide that two times coincide.
pub(crate) const TIME_TOL: f64 = 1e-10;

pub(crate) fn same_time(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= TIME_TOL * scale.abs().max(1.0)
}

/// Ordered breakpoints `0 = tau_1 < ... < tau_{N+1} = t_final` splitting the
/// horizon into `N` control intervals. Interior breakpoints are the
/// interfaces (bang points) where the control may switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPartition {
    breakpoints: Vec<f64>,
}

impl ControlPartition {
    pub fn new(breakpoints: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::config("partition: need at least two breakpoints"));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::config("partition: first breakpoint must be 0"));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(Error::config("partition: breakpoints must be finite"));
        }
        if let Some(i) = breakpoints.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::config(format!(
                "partition: breakpoints must be strictly increasing (interval {} is [{}, {}])",
                i + 1,
                breakpoints[i],
                breakpoints[i + 1]
            )));
        }
        Ok(Self { breakpoints })
    }

    /// `n` intervals of length `t_final / n`.
    pub fn equal(t_final: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("partition: need at least one interval"));
        }
        if t_final.is_nan() || t_final <= 0.0 {
            return Err(Error::config("partition: t_final must be > 0"));
        }
        let mut bp: Vec<f64> = (0..n).map(|i| t_final * i as f64 / n as f64).collect();
        bp.push(t_final);
        Self::new(bp)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn interval_count(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn t_final(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    /// Interior breakpoints `alpha_i = tau_{i+1}`, `i = 1..N-1` (zero-based here).
    pub fn interfaces(&self) -> &[f64] {
        &self.breakpoints[1..self.breakpoints.len() - 1]
    }

    pub fn interface_count(&self) -> usize {
        self.interval_count() - 1
    }

    /// `[tau_i, tau_{i+1}]` for the zero-based interval index.
    pub fn interval(&self, i: usize) -> (f64, f64) {
        (self.breakpoints[i], self.breakpoints[i + 1])
    }

    pub fn min_interval_length(&self) -> (usize, f64) {
        self.breakpoints.windows(2).map(|w| w[1] - w[0]).enumerate().fold((0, f64::INFINITY), |acc, (i, l)| {
            if l < acc.1 {
                (i, l)
            } else {
                acc
            }
        })
    }

    /// Index of the interval containing `t`. Breakpoints belong to the
    /// interval on their left; `t = 0` belongs to the first interval.
    /// Times outside the horizon are clamped.
    pub fn interval_of(&self, t: f64) -> usize {
        let below = self.breakpoints.partition_point(|&b| b < t);
        below.saturating_sub(1).min(self.interval_count() - 1)
    }

    /// Index of the interface at `t`, if `t` coincides with one.
    pub fn interface_at(&self, t: f64) -> Option<usize> {
        let scale = self.t_final();
        self.interfaces().iter().position(|&a| same_time(a, t, scale))
    }
}

/// A control with entries exactly 0 or 1, one per partition interval.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryControl(Vec<bool>);

impl BinaryControl {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![false; n])
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![true; n])
    }

    /// `v_i = 1` on odd (one-based) intervals, `0` on even ones.
    pub fn alternating(n: usize) -> Self {
        Self((0..n).map(|i| i % 2 == 0).collect())
    }

    /// Accepts only exact 0.0 / 1.0 entries.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        values
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                if x == 0.0 {
                    Ok(false)
                } else if x == 1.0 {
                    Ok(true)
                } else {
                    Err(Error::config(format!("control: entry {} is {x}, expected 0 or 1", i + 1)))
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] = !self.0[i];
    }

    pub fn values(&self) -> Vec<f64> {
        self.0.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// Hamming distance.
    pub fn l1_distance(&self, other: &Self) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }
}

/// A control relaxed to the box `0 <= v_i <= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxedControl(Vec<f64>);

impl RelaxedControl {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::config(format!("control: relaxed entry {} is {}, outside [0, 1]", i + 1, values[i])));
        }
        Ok(Self(values))
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
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
}

impl From<&BinaryControl> for RelaxedControl {
    fn from(v: &BinaryControl) -> Self {
        Self(v.values())
    }
}

/// Value of `w(t) = sum_i v_i 1_{Omega_i}(t)`. At an interior breakpoint the
/// left interval's value is returned.
pub fn control_value(v: &[f64], partition: &ControlPartition, t: f64) -> Result<f64> {
    check_control_len(v, partition)?;
    let tf = partition.t_final();
    if !(t >= 0.0 && t <= tf) && !same_time(t, tf, tf) && !same_time(t, 0.0, tf) {
        return Err(Error::Domain(format!("t = {t} outside [0, {tf}]")));
    }
    Ok(v[partition.interval_of(t)])
}

/// `[w]` at interface `i` (one-based, `1..=N-1`): `v_{i+1} - v_i`.
pub fn control_jump(v: &[f64], partition: &ControlPartition, i: usize) -> Result<f64> {
    check_control_len(v, partition)?;
    if i == 0 || i > partition.interface_count() {
        return Err(Error::Domain(format!("interface index {i} outside 1..={}", partition.interface_count())));
    }
    Ok(v[i] - v[i - 1])
}

pub(crate) fn check_control_len(v: &[f64], partition: &ControlPartition) -> Result<()> {
    if v.len() != partition.interval_count() {
        return Err(Error::config(format!(
            "control: expected {} entries, got {}",
            partition.interval_count(),
            v.len()
        )));
    }
    Ok(())
}

/// Scalar functions of time used for forcing, adjoint sources and targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScalarField {
    Constant {
        value: f64,
    },
    /// `offset + amplitude * sin(frequency * t)`
    Sinusoid {
        offset: f64,
        amplitude: f64,
        frequency: f64,
    },
    /// One value per partition interval.
    PerInterval {
        values: Vec<f64>,
    },
    /// Linear interpolation between samples. A repeated time marks a jump:
    /// the first sample is the left limit, the second the right limit.
    Tabulated {
        times: Vec<f64>,
        values: Vec<f64>,
    },
}

impl Default for ScalarField {
    fn default() -> Self {
        ScalarField::Constant { value: 0.0 }
    }
}

impl ScalarField {
    pub fn constant(value: f64) -> Self {
        ScalarField::Constant { value }
    }

    pub fn sinusoid(offset: f64, amplitude: f64, frequency: f64) -> Self {
        ScalarField::Sinusoid { offset, amplitude, frequency }
    }

    pub fn per_interval(values: Vec<f64>) -> Self {
        ScalarField::PerInterval { values }
    }

    pub fn tabulated(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let field = ScalarField::Tabulated { times, values };
        field.validate_shape()?;
        Ok(field)
    }

    fn validate_shape(&self) -> Result<()> {
        if let ScalarField::Tabulated { times, values } = self {
            if times.is_empty() || times.len() != values.len() {
                return Err(Error::config("tabulated field: times and values must be non-empty and equal length"));
            }
            if times.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::config("tabulated field: times must be non-decreasing"));
            }
            if times.windows(3).any(|w| w[0] == w[1] && w[1] == w[2]) {
                return Err(Error::config("tabulated field: a time may repeat at most twice"));
            }
        }
        Ok(())
    }

    /// Checks the field against a partition (per-interval lengths etc.).
    pub fn validate(&self, partition: &ControlPartition) -> Result<()> {
        self.validate_shape()?;
        match self {
            ScalarField::PerInterval { values } if values.len() != partition.interval_count() => Err(Error::config(
                format!("per-interval field: expected {} values, got {}", partition.interval_count(), values.len()),
            )),
            ScalarField::Sinusoid { offset, amplitude, frequency }
                if !(offset.is_finite() && amplitude.is_finite() && frequency.is_finite()) =>
            {
                Err(Error::config("sinusoid field: parameters must be finite"))
            }
            _ => Ok(()),
        }
    }

    /// Value at `t`, taking the left limit at jumps.
    pub fn value(&self, t: f64, partition: &ControlPartition) -> f64 {
        match self {
            ScalarField::PerInterval { values } => values[partition.interval_of(t)],
            _ => self.value_on(t, partition.interval_of(t), partition),
        }
    }

    /// Value at `t` seen from inside interval `interval` (one-sided at its ends).
    pub fn value_on(&self, t: f64, interval: usize, partition: &ControlPartition) -> f64 {
        match self {
            ScalarField::Constant { value } => *value,
            ScalarField::Sinusoid { offset, amplitude, frequency } => offset + amplitude * (frequency * t).sin(),
            ScalarField::PerInterval { values } => values[interval],
            ScalarField::Tabulated { times, values } => {
                let (start, _) = partition.interval(interval);
                if same_time(t, start, partition.t_final()) {
                    tabulated_right(times, values, t)
                } else {
                    tabulated_left(times, values, t)
                }
            }
        }
    }

    pub fn left_limit(&self, t: f64, partition: &ControlPartition) -> f64 {
        self.value(t, partition)
    }

    pub fn right_limit(&self, t: f64, partition: &ControlPartition) -> f64 {
        match self {
            ScalarField::PerInterval { values } => {
                let i = partition.interval_of(t);
                match partition.interface_at(t) {
                    Some(k) => values[k + 1],
                    None => values[i],
                }
            }
            ScalarField::Tabulated { times, values } => tabulated_right(times, values, t),
            _ => self.value(t, partition),
        }
    }

    /// Time derivative at `t` (left-sided at kinks and jumps).
    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            ScalarField::Constant { .. } | ScalarField::PerInterval { .. } => 0.0,
            ScalarField::Sinusoid { amplitude, frequency, .. } => amplitude * frequency * (frequency * t).cos(),
            ScalarField::Tabulated { times, values } => {
                if times.len() < 2 {
                    return 0.0;
                }
                let k = times.partition_point(|&s| s < t).clamp(1, times.len() - 1);
                let dt = times[k] - times[k - 1];
                if dt > 0.0 {
                    (values[k] - values[k - 1]) / dt
                } else {
                    0.0
                }
            }
        }
    }
}

/// Right limit minus left limit of `s` at `t`. Zero for continuous fields.
pub fn field_jump(s: &ScalarField, t: f64, partition: &ControlPartition) -> f64 {
    match s {
        ScalarField::Constant { .. } | ScalarField::Sinusoid { .. } => 0.0,
        _ => s.right_limit(t, partition) - s.left_limit(t, partition),
    }
}

fn tabulated_left(times: &[f64], values: &[f64], t: f64) -> f64 {
    // first sample with time >= t
    let k = times.partition_point(|&s| s < t);
    interpolate(times, values, k, t)
}

fn tabulated_right(times: &[f64], values: &[f64], t: f64) -> f64 {
    // first sample with time > t, interpolated from its predecessor
    let k = times.partition_point(|&s| s <= t);
    if k > 0 && times[k - 1] == t {
        return values[k - 1];
    }
    interpolate(times, values, k, t)
}

fn interpolate(times: &[f64], values: &[f64], k: usize, t: f64) -> f64 {
    if k == 0 {
        return values[0];
    }
    if k >= times.len() {
        return *values.last().unwrap();
    }
    if times[k] == t {
        return values[k];
    }
    let (t0, t1) = (times[k - 1], times[k]);
    let s = (t - t0) / (t1 - t0);
    values[k - 1] + s * (values[k] - values[k - 1])
}

/// Physical constants of the scalar linear ODE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Decay rate `K > 0`.
    pub decay: f64,
    /// Control gain `C`.
    pub gain: f64,
    /// Ambient temperature `T_s`.
    pub ambient: f64,
    /// Initial temperature `T_0`.
    pub initial: f64,
}

/// A complete optimal-control problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    params: PhysicalParams,
    forcing: ScalarField,
    adjoint_source: ScalarField,
    target: ScalarField,
    partition: ControlPartition,
}

impl ProblemSpec {
    /// Zero forcing, zero adjoint source and zero target by default.
    pub fn new(params: PhysicalParams, partition: ControlPartition) -> Result<Self> {
        let spec = Self {
            params,
            forcing: ScalarField::default(),
            adjoint_source: ScalarField::default(),
            target: ScalarField::default(),
            partition,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let p = &self.params;
        if !(p.decay > 0.0 && p.decay.is_finite()) {
            return Err(Error::config("problem: K must be > 0"));
        }
        // C = 0 is admitted: it is the "control has no effect" limit used in tests.
        if !(p.gain >= 0.0 && p.gain.is_finite()) {
            return Err(Error::config("problem: C must be >= 0"));
        }
        if !p.ambient.is_finite() || !p.initial.is_finite() {
            return Err(Error::config("problem: T_s and T_0 must be finite"));
        }
        self.forcing.validate(&self.partition)?;
        self.adjoint_source.validate(&self.partition)?;
        self.target.validate(&self.partition)?;
        Ok(())
    }

    pub fn with_forcing(mut self, forcing: ScalarField) -> Result<Self> {
        forcing.validate(&self.partition)?;
        self.forcing = forcing;
        Ok(self)
    }

    pub fn with_adjoint_source(mut self, g: ScalarField) -> Result<Self> {
        g.validate(&self.partition)?;
        self.adjoint_source = g;
        Ok(self)
    }

    pub fn with_target(mut self, target: ScalarField) -> Result<Self> {
        target.validate(&self.partition)?;
        self.target = target;
        Ok(self)
    }

    /// The switching benchmark: `K = 1`, `C = 3`, `T_s = 50`, `T_0 = 70`,
    /// `t_final = 10`, ten unit intervals, no forcing.
    pub fn switching_benchmark() -> Self {
        let params = PhysicalParams { decay: 1.0, gain: 3.0, ambient: 50.0, initial: 70.0 };
        Self::new(params, ControlPartition::equal(10.0, 10).unwrap()).unwrap()
    }

    /// The tracking benchmark: `K = 0.1`, `C = 2`, `T_s = 0`, `T_0 = 10`,
    /// `t_final = 100`, target `5 + 0.5 sin t`, `n` equal intervals.
    pub fn sinusoid_tracking(n: usize) -> Result<Self> {
        let params = PhysicalParams { decay: 0.1, gain: 2.0, ambient: 0.0, initial: 10.0 };
        Self::new(params, ControlPartition::equal(100.0, n)?)?.with_target(ScalarField::sinusoid(5.0, 0.5, 1.0))
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    pub fn decay(&self) -> f64 {
        self.params.decay
    }

    pub fn gain(&self) -> f64 {
        self.params.gain
    }

    pub fn ambient(&self) -> f64 {
        self.params.ambient
    }

    pub fn initial(&self) -> f64 {
        self.params.initial
    }

    pub fn t_final(&self) -> f64 {
        self.partition.t_final()
    }

    pub fn forcing(&self) -> &ScalarField {
        &self.forcing
    }

    pub fn adjoint_source(&self) -> &ScalarField {
        &self.adjoint_source
    }

    pub fn target(&self) -> &ScalarField {
        &self.target
    }

    pub fn partition(&self) -> &ControlPartition {
        &self.partition
    }

    pub fn interval_count(&self) -> usize {
        self.partition.interval_count()
    }
}
