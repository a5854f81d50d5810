//! TOML run configuration.
//!
//! ```toml
//! task = "groundstate"          # optional if given on the command line
//! seed = 7
//!
//! [model]
//! kind = "Quasi2DI"
//! beta = 10.0
//! lambda = 2.0
//! epsilon = 0.5
//! axis = [0.0, 0.0, 1.0]
//!
//! [potential]
//! form = "harmonic"
//! gamma = [1.0]
//!
//! [grid]
//! half_extent = [8.0]           # one entry per axis, or one for all
//! points = [128]
//!
//! [groundstate]
//! tol = 1e-9
//! ```
//!
//! Every section is optional until a task needs it; unknown keys are errors.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::grid::{make_grid, Grid};
use crate::kernels::DipoleAxis;
use crate::models::{ModelKind, ModelParams, PotentialSpec};
use crate::reduction::{ReductionCase, ReductionSetup};

/// Axis norms within this of one are renormalized with a warning.
pub const AXIS_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Groundstate,
    Evolve,
    Regime,
    Reduce,
    KernelCheck,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Groundstate => "groundstate",
            Task::Evolve => "evolve",
            Task::Regime => "regime",
            Task::Reduce => "reduce",
            Task::KernelCheck => "kernel-check",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Task::Groundstate, Task::Evolve, Task::Regime, Task::Reduce, Task::KernelCheck]
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| ConfigError::Invalid { key: "task", reason: format!("unknown task '{s}'") })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub beta: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default = "default_axis")]
    pub axis: [f64; 3],
}

fn default_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub half_extent: Vec<f64>,
    pub points: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    /// `e^{−|x−c|²/(2w²)} e^{ik·x}`, normalized.
    Gaussian,
    /// Smooth random bump seeded by the run seed.
    Random,
    /// Field read from a snapshot file.
    Snapshot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialState {
    pub kind: InitialKind,
    pub center: Vec<f64>,
    pub momentum: Vec<f64>,
    pub width: f64,
    /// Quadratic phase `e^{−i·chirp·|x|²}`.
    pub chirp: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl Default for InitialState {
    fn default() -> Self {
        Self {
            kind: InitialKind::Gaussian,
            center: vec![0.0],
            momentum: vec![0.0],
            width: 1.0,
            chirp: 0.0,
            path: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundstateSection {
    /// Filled with `0.1·h_min²` when absent.
    pub tau: Option<f64>,
    pub tau_max: f64,
    pub tol: f64,
    pub max_iterations: usize,
    pub initial: InitialState,
}

impl Default for GroundstateSection {
    fn default() -> Self {
        Self { tau: None, tau_max: 1.0, tol: 1e-8, max_iterations: 200_000, initial: InitialState::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveSection {
    pub t_final: f64,
    pub dt: f64,
    pub record_every: usize,
    pub tail_alarm: f64,
    pub blowup_growth: f64,
    /// Times at which the field is saved. Each must fall on a record step.
    pub snapshot_times: Vec<f64>,
    pub initial: InitialState,
}

impl Default for EvolveSection {
    fn default() -> Self {
        Self {
            t_final: 1.0,
            dt: 1e-3,
            record_every: 10,
            tail_alarm: 1e-8,
            blowup_growth: 1e4,
            snapshot_times: Vec::new(),
            initial: InitialState::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegimeSection {
    /// Gagliardo–Nirenberg constant; estimated when absent.
    pub cb: Option<f64>,
    /// Random starting states for the confirming gradient flows; none skips them.
    pub flow_seeds: Vec<u64>,
    pub flow_tol: f64,
}

impl Default for RegimeSection {
    fn default() -> Self {
        Self { cb: None, flow_seeds: Vec::new(), flow_tol: 1e-9 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReduceSection {
    pub case: ReductionCase,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_axis")]
    pub axis: [f64; 3],
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    pub free_half_extent: Option<f64>,
    pub free_points: Option<usize>,
    pub confined_half_extent: Option<f64>,
    pub confined_points: Option<usize>,
    pub hermite_modes: Option<usize>,
    pub kernel_oversampling: Option<usize>,
}

fn default_beta() -> f64 {
    1.0
}
fn default_lambda() -> f64 {
    0.5
}
fn default_epsilons() -> Vec<f64> {
    vec![0.25, 0.125, 0.0625]
}
fn default_t_final() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelCheckSection {
    /// Points per axis of the `(|ξ|, ε)` log lattice.
    pub lattice: usize,
    pub min: f64,
    pub max: f64,
    pub tolerance: f64,
    /// Symbol tables for the bound check use this many points per axis on `[−L, L)`.
    pub table_points: usize,
    pub table_half_extent: f64,
}

impl Default for KernelCheckSection {
    fn default() -> Self {
        Self { lattice: 20, min: 1e-2, max: 1e2, tolerance: 1e-9, table_points: 64, table_half_extent: 8.0 }
    }
}

/// A parsed and validated run description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    #[serde(default = "PotentialSpec::harmonic")]
    pub potential: PotentialSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub groundstate: GroundstateSection,
    #[serde(default)]
    pub evolve: EvolveSection,
    #[serde(default)]
    pub regime: RegimeSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduce: Option<ReduceSection>,
    #[serde(default)]
    pub kernel_check: KernelCheckSection,
    /// Validation notes, not read back.
    #[serde(skip)]
    pub warnings: Vec<String>,
}

/// Unit axis from raw components, renormalizing small deviations.
pub fn checked_axis(n: [f64; 3], warnings: &mut Vec<String>) -> Result<DipoleAxis, ConfigError> {
    let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    if !norm.is_finite() || (norm - 1.0).abs() > AXIS_TOLERANCE {
        return Err(ConfigError::AxisNorm(norm));
    }
    if norm != 1.0 {
        warnings.push(format!("dipole axis renormalized from |n| = {norm}"));
    }
    let axis = DipoleAxis::normalized(n).map_err(|_| ConfigError::AxisNorm(norm))?;
    Ok(axis)
}

fn positive(key: &'static str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::Invalid { key, reason: format!("must be positive and finite, got {v}") })
    }
}

/// Parses and validates a TOML configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut config: RunConfig = toml::from_str(text)?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    /// Re-serializes the validated configuration; parsing it back gives the same value.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is representable in TOML")
    }

    fn validate(&mut self) -> Result<(), ConfigError> {
        let mut warnings = Vec::new();
        if let Some(m) = &mut self.model {
            let axis = checked_axis(m.axis, &mut warnings)?;
            m.axis = axis.components();
        }
        if let Some(params) = self.model_params_unchecked()? {
            warnings.extend(params.validate()?);
            if let Some(grid) = self.build_grid_for(params.kind.dim())? {
                if self.groundstate.tau.is_none() {
                    self.groundstate.tau = Some(0.1 * grid.min_spacing().powi(2));
                }
            }
        }
        let gs = &self.groundstate;
        positive("groundstate.tau", gs.tau.unwrap_or(1.0))?;
        positive("groundstate.tau_max", gs.tau_max)?;
        positive("groundstate.tol", gs.tol)?;
        let ev = &self.evolve;
        positive("evolve.dt", ev.dt)?;
        positive("evolve.t_final", ev.t_final)?;
        positive("evolve.tail_alarm", ev.tail_alarm)?;
        if ev.record_every == 0 {
            return Err(ConfigError::Invalid { key: "evolve.record_every", reason: "must be at least 1".into() });
        }
        for &t in &ev.snapshot_times {
            let steps = t / ev.dt;
            let on_record = (steps - steps.round()).abs() <= 1e-6 * steps.max(1.0)
                && (steps.round() as usize).is_multiple_of(ev.record_every);
            if !(t >= 0.0 && t <= ev.t_final * (1.0 + 1e-12)) || !on_record {
                return Err(ConfigError::Invalid {
                    key: "evolve.snapshot_times",
                    reason: format!("{t} is not a recorded time in [0, t_final] (every {} steps of dt)", ev.record_every),
                });
            }
        }
        for init in [&self.groundstate.initial, &self.evolve.initial] {
            positive("initial.width", init.width)?;
            if init.kind == InitialKind::Snapshot && init.path.is_none() {
                return Err(ConfigError::Invalid { key: "initial.path", reason: "snapshot start needs a path".into() });
            }
        }
        if let Some(cb) = self.regime.cb {
            positive("regime.cb", cb)?;
        }
        if let Some(r) = &mut self.reduce {
            let axis = checked_axis(r.axis, &mut warnings)?;
            r.axis = axis.components();
            positive("reduce.t_final", r.t_final)?;
            for &e in &r.epsilons {
                if !(e > 0.0 && e <= 1.0) {
                    return Err(ConfigError::Invalid {
                        key: "reduce.epsilons",
                        reason: format!("each value must lie in (0, 1], got {e}"),
                    });
                }
            }
        }
        let kc = &self.kernel_check;
        if kc.lattice < 2 || !(kc.min > 0.0 && kc.max > kc.min) {
            return Err(ConfigError::Invalid {
                key: "kernel_check",
                reason: "need lattice ≥ 2 and 0 < min < max".into(),
            });
        }
        self.warnings = warnings;
        Ok(())
    }

    fn model_params_unchecked(&self) -> Result<Option<ModelParams>, ConfigError> {
        let Some(m) = &self.model else { return Ok(None) };
        let axis = DipoleAxis::normalized(m.axis).map_err(|_| ConfigError::AxisNorm(f64::NAN))?;
        let mut p = ModelParams::new(m.kind, m.beta, m.lambda).with_axis(axis).with_potential(self.potential.clone());
        p.epsilon = m.epsilon;
        Ok(Some(p))
    }

    fn build_grid_for(&self, dim: usize) -> Result<Option<Arc<Grid<f64>>>, ConfigError> {
        match &self.grid {
            Some(g) => Ok(Some(Arc::new(make_grid(dim, &g.half_extent, &g.points)?))),
            None => Ok(None),
        }
    }

    /// Model parameters; required by the field tasks.
    pub fn model_params(&self) -> Result<ModelParams, ConfigError> {
        self.model_params_unchecked()?.ok_or(ConfigError::MissingSection("model"))
    }

    /// Grid matching the model dimension.
    pub fn grid(&self) -> Result<Arc<Grid<f64>>, ConfigError> {
        let dim = self.model_params()?.kind.dim();
        self.build_grid_for(dim)?.ok_or(ConfigError::MissingSection("grid"))
    }

    /// Reduction setup with desk defaults for anything not given.
    pub fn reduction_setup(&self) -> Result<(ReductionSetup, &ReduceSection), ConfigError> {
        let r = self.reduce.as_ref().ok_or(ConfigError::MissingSection("reduce"))?;
        let mut s = ReductionSetup::desk(r.case);
        s.beta = r.beta;
        s.lambda = r.lambda;
        s.axis = DipoleAxis::normalized(r.axis).map_err(|_| ConfigError::AxisNorm(f64::NAN))?;
        s.potential = self.potential.clone();
        s.free_half_extent = r.free_half_extent.unwrap_or(s.free_half_extent);
        s.free_points = r.free_points.unwrap_or(s.free_points);
        s.confined_half_extent = r.confined_half_extent.unwrap_or(s.confined_half_extent);
        s.confined_points = r.confined_points.unwrap_or(s.confined_points);
        s.hermite_modes = r.hermite_modes.unwrap_or(s.hermite_modes);
        s.kernel_oversampling = r.kernel_oversampling.unwrap_or(s.kernel_oversampling);
        Ok((s, r))
    }

    /// Settles the task from the command line and the file, then checks that
    /// the sections it needs are present.
    pub fn for_task(mut self, requested: Option<Task>) -> Result<Self, ConfigError> {
        let task = match (self.task, requested) {
            (Some(c), Some(r)) if c != r => {
                return Err(ConfigError::TaskConflict { config: c.to_string(), requested: r.to_string() })
            }
            (c, r) => r.or(c).ok_or(ConfigError::NoTask)?,
        };
        self.task = Some(task);
        match task {
            Task::Groundstate | Task::Evolve => {
                self.grid()?;
            }
            Task::Regime => {
                self.model_params()?;
                if !self.regime.flow_seeds.is_empty() {
                    self.grid()?;
                }
            }
            Task::Reduce => {
                self.reduction_setup()?;
            }
            Task::KernelCheck => {}
        }
        Ok(self)
    }
}
