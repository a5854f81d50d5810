use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid dimension must be 1, 2 or 3, got {0}")]
    Dimension(usize),
    #[error("{name}: expected 1 or {expected} entries, found {found}")]
    AxisCount {
        name: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("axis {axis}: half extent must be positive and finite, got {value}")]
    Extent { axis: usize, value: f64 },
    #[error("axis {axis}: point count must be even and at least 8, got {value}")]
    Points { axis: usize, value: usize },
    #[error("field has {found} values but the grid has {expected} nodes")]
    SizeMismatch { expected: usize, found: usize },
    #[error("grids must share dimension and extents to exchange spectra")]
    Incompatible,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("confinement parameter must be positive, got {0}")]
    Epsilon(f64),
    #[error("dipole axis must have unit length, |n| = {0}")]
    AxisNorm(f64),
    #[error("operator needs a {expected}D grid, got {found}D")]
    Dimension { expected: usize, found: usize },
    #[error("axis index {axis} out of range for a {dim}D grid")]
    AxisIndex { axis: usize, dim: usize },
    #[error("output is not real: imaginary residue {0:e}")]
    NonReal(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{kind} lives on a {expected}D grid, got {found}D")]
    Dimension {
        kind: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{0} requires a confinement parameter epsilon > 0")]
    MissingEpsilon(&'static str),
    #[error("potential must be non-negative on the grid, minimum {0}")]
    NegativePotential(f64),
    #[error("tabulated potential has {found} values, grid has {expected}")]
    TabulatedSize { expected: usize, found: usize },
    #[error("field contains NaN or infinite values")]
    NonFinite,
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroundStateError {
    #[error("initial state must have unit mass, got {0}")]
    InitialMass(f64),
    #[error("no convergence after {iterations} iterations (last change {residual:e})")]
    IterationCap { iterations: usize, residual: f64 },
    #[error("step size could not be stabilized after {0} halvings")]
    StepHalving(usize),
    #[error("estimator needs a 2D grid, got {0}D")]
    EstimatorGrid(usize),
    #[error("C_b estimators disagree: {first} vs {second}")]
    EstimatorMismatch { first: f64, second: f64 },
    #[error("scaling ladder must contain at least two positive values")]
    Ladder,
    #[error("profile under-resolved at scale {scale}: mass leakage {leakage:e}")]
    UnderResolved { scale: f64, leakage: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("time step must be positive and finite, got {0}")]
    TimeStep(f64),
    #[error("initial state must have unit mass, got {0}")]
    InitialMass(f64),
    #[error("record cadence must be at least one step")]
    Cadence,
    #[error("series too short or too coarse for second differences")]
    CadenceTooCoarse,
    #[error("variance of the initial state is not finite")]
    InfiniteVariance,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReductionError {
    #[error("time step {dt} exceeds the transverse limit eps^2/20 = {limit}")]
    TimeStep { dt: f64, limit: f64 },
    #[error("confinement parameter must lie in (0, 1], got {0}")]
    Epsilon(f64),
    #[error("{0} Hermite modes requested; need between 1 and the transverse point count")]
    HermiteModes(usize),
    #[error("trajectories have mismatched time stamps")]
    TimeMismatch,
    #[error("rate fit needs at least 3 positive samples spanning a factor of 4")]
    DegenerateFit,
    #[error("resolution alarm at t = {0}")]
    Resolution(f64),
    #[error("transverse grid must be uniform and even, got {0} points")]
    TransverseGrid(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse configuration: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("missing [{0}] section, required by this task")]
    MissingSection(&'static str),
    #[error("dipole axis must be a unit vector, |n| = {0} (off by more than 1e-6)")]
    AxisNorm(f64),
    #[error("configuration says task '{config}' but '{requested}' was requested")]
    TaskConflict { config: String, requested: String },
    #[error("no task given on the command line or in the configuration")]
    NoTask,
    #[error("{key}: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("grid: {0}")]
    Grid(#[from] GridError),
    #[error("reduce: {0}")]
    Reduction(#[from] ReductionError),
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("not a field snapshot (bad magic)")]
    Magic,
    #[error("unsupported snapshot version {0}")]
    Version(u32),
    #[error("unsupported dtype code {0}")]
    Dtype(u32),
    #[error("snapshot is not little-endian")]
    Endianness,
    #[error("snapshot truncated or malformed: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Failure of a command-line run. [`RunError::exit_code`] maps it to the
/// process status.
#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical alarm: {0}")]
    Alarm(String),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Serialize(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    GroundState(#[from] GroundStateError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

impl RunError {
    /// 2 for invalid input, 3 for numerical alarms, 4 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Model(_) => 2,
            RunError::Alarm(_) => 3,
            RunError::Reduction(ReductionError::Resolution(_)) => 3,
            RunError::Reduction(ReductionError::TimeStep { .. } | ReductionError::Epsilon(_)) => 2,
            _ => 4,
        }
    }
}
