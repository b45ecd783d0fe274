use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("spin vector has near-zero norm ({norm_sqr:e})")]
    ZeroSpinor { norm_sqr: f64 },

    #[error("invalid mixture weights: {0}")]
    InvalidWeights(String),

    #[error("density matrix invalid: {0}")]
    InvalidDensity(String),

    #[error("probability parameter {name} = {value} outside [0, 1]")]
    ProbabilityOutOfRange { name: &'static str, value: f64 },

    #[error("invalid SG configuration: {0}")]
    InvalidConfig(String),

    #[error("negative propagation time {0}")]
    NegativeTime(f64),

    #[error("E(t) did not saturate before horizon {horizon}: last E({time}) = {last_e}")]
    NotSaturated { horizon: f64, time: f64, last_e: f64 },

    #[error("quadrature did not converge: estimate {estimate}, residual {residual:e}")]
    QuadratureDiverged { estimate: f64, residual: f64 },

    #[error(
        "wave function reached the grid boundary (boundary mass {mass:e} at t = {time}); \
         increase the grid extent"
    )]
    BoundaryLeak { mass: f64, time: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("nothing post-selected (selection probability {0:e})")]
    EmptySelection(f64),

    #[error("phase undefined: coherence {coherence:e} below tolerance {tol:e}")]
    PhaseUndefined { coherence: f64, tol: f64 },

    #[error("phase unidentifiable: Es_hat = {0} leaves sqrt(Es(1-Es)) = 0")]
    PhaseUnidentifiable(f64),

    #[error("measurement record has axis {found} rad, expected {expected} rad")]
    WrongAxis { expected: f64, found: f64 },

    #[error("sample size must be positive")]
    EmptySample,
}
