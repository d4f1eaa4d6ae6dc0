use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("time step {dt} us does not resolve the fastest rate {rate} MHz (need dt*rate < {limit})")]
    StepTooLarge { dt: f64, rate: f64, limit: f64 },

    #[error("trace drift {drift:e} in one step exceeds {limit:e}")]
    TraceDrift { drift: f64, limit: f64 },

    #[error("CFL violated: max velocity {velocity} * dt {dt} > {limit} * grid spacing {dy}")]
    Cfl {
        velocity: f64,
        dt: f64,
        dy: f64,
        limit: f64,
    },

    #[error("non-finite value encountered at step {step}")]
    NonFinite { step: usize },

    #[error("steady state is not unique (degenerate null space)")]
    DegenerateSteadyState,

    #[error("steady state did not converge: residual {residual:e} after {time} us")]
    NotConverged { residual: f64, time: f64 },

    #[error("empty record")]
    EmptyRecord,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("statistic undefined: {0}")]
    Undefined(String),

    #[error("cutoff {fc} MHz is at or above the Nyquist frequency {nyquist} MHz")]
    AboveNyquist { fc: f64, nyquist: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
