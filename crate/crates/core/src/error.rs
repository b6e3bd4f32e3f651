use thiserror::Error;

/// Errors raised while evaluating dynamics, barriers, or running scenarios.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("gravity singularity: position coincides with the attracting center")]
    GravitySingularity,

    #[error("constraint singularity: distance to the keep-out center {distance:.3e} m is below the guard")]
    ConstraintSingularity { distance: f64 },

    #[error("integration produced a non-finite state at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no valid authority potential: {0}")]
    NoValidPotential(String),

    #[error("potential inverse undefined for argument {value:.6e}")]
    PotentialDomain { value: f64 },

    #[error("authority slope vanishes at H = {h:.6e}")]
    DegenerateSlope { h: f64 },

    #[error("evading maneuver singular: tangential speed {speed:.3e} m/s")]
    ManeuverSingularity { speed: f64 },

    #[error("no maximizer within horizon {horizon:.1} s: constraint still increasing")]
    NoMaximizerInHorizon { horizon: f64 },

    #[error("ambiguous maximizer: nonzero local maxima at {first:.3} s and {second:.3} s")]
    AmbiguousMaximizer { first: f64, second: f64 },

    #[error("predictive barrier requires zero unmatched disturbance, got w_x_max = {0}")]
    UnmatchedDisturbance(f64),

    #[error("no admissible constant authority: a_max0 = {0:.6e}")]
    NoAuthority(f64),

    #[error("empty sample set")]
    EmptySampleSet,

    #[error("mesh: {0}")]
    Mesh(String),

    #[error("config: {0}")]
    Config(String),

    #[error("step {step} (t = {t:.1} s), constraint {index}: {source}")]
    Step {
        step: usize,
        t: f64,
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("safety violated at step {step} (t = {t:.1} s): max h = {max_h:.6e} m")]
    SafetyViolation { step: usize, t: f64, max_h: f64 },

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
