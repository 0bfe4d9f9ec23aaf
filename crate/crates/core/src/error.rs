use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("length mismatch: expected {expected} samples, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("multiplier is not finite at xi = {xi}")]
    NonFiniteMultiplier { xi: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("weight overflow: sigma * xi_max = {exponent} exceeds the safety bound {bound}")]
    WeightOverflow { exponent: f64, bound: f64 },

    #[error("insufficient decay band: {used} modes above the noise floor, need at least {needed}")]
    InsufficientDecayBand { used: usize, needed: usize },

    #[error("numerical blow-up (non-finite state) at t = {time}")]
    NonFiniteState { time: f64 },

    #[error("edge amplitude {amplitude:e} exceeds floor {floor:e} at t = {time}")]
    EdgeFloorViolation { time: f64, amplitude: f64, floor: f64 },

    #[error("drift at noise floor for every sigma: horizon too short or sigma too small")]
    DriftAtNoiseFloor,

    #[error("nonintegrable direction: {0}")]
    NonintegrableDirection(String),

    #[error("fit needs at least {needed} points, got {got}")]
    InsufficientFitPoints { needed: usize, got: usize },

    #[error("grid lies entirely in the saturated branch sigma = sigma0")]
    SaturatedGrid,
}
