use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("speed evaluated at t = {t:e}, below the floor t_min = {floor:e} (no constant prefix)")]
    BelowFloor { t: f64, floor: f64 },

    #[error("speed evaluated at t = {t:e}, outside [0, {horizon}]")]
    OutsideHorizon { t: f64, horizon: f64 },

    #[error("second derivative required but not available for speed `{0}`")]
    MissingSecondDerivative(String),

    #[error("horizons differ: {0} vs {1}")]
    HorizonMismatch(f64, f64),

    #[error("empty sample grid")]
    EmptyGrid,

    #[error("step size underflow at t = {t:e} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("step budget of {0} exhausted")]
    StepBudget(usize),

    #[error("degenerate trajectory: zero state at t = {0:e}")]
    DegenerateState(f64),

    #[error("time {0:e} is not an output time of the trajectory")]
    MissingTime(f64),

    #[error("quadrature did not converge on [{lo:e}, {hi:e}]: estimate {value:e}, error {error:e}")]
    Quadrature { lo: f64, hi: f64, value: f64, error: f64 },

    #[error("activator window infeasible: {0}")]
    InfeasibleWindow(String),

    #[error("prefix mismatch: {0}")]
    PrefixMismatch(String),

    #[error("closed form and integrator disagree at t = {t:e}: relative gap {gap:e}")]
    ClosedFormMismatch { t: f64, gap: f64 },

    #[error("frequency search exhausted at stage {stage} (lambda > 2^60)")]
    SearchExhausted { stage: usize },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
