//! Error type shared by every module in the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("negative time {0} is outside the process domain")]
    NegativeTime(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("occupation entry at site {site} is {value}, expected 0 or 1")]
    InvalidOccupation { site: usize, value: u8 },

    #[error("occupation bits 0x{bits:x} do not fit a {m}-site subsystem")]
    OccupationOutOfRange { bits: u64, m: usize },

    #[error("subsystem has {m} sites, over the enumeration cap {cap}; use the sampled engine")]
    EnumerationCapExceeded { m: usize, cap: usize },

    #[error("site {site} has nonpositive adjusted Libor {value}; log-fugacity undefined")]
    NonpositiveLibor { site: usize, value: f64 },

    #[error("coefficient evaluation requires the zero-mean-reversion regime (gamma*t_n = {gamma_tn:e})")]
    GammaNotZero { gamma_tn: f64 },

    #[error("discount factors must satisfy 0 < P_n <= ... <= P_0 = 1; violated at index {index}")]
    CurveNotMonotone { index: usize },

    #[error("forward rate at index {index} is {value}; calibration requires positive forwards")]
    NonpositiveForward { index: usize, value: f64 },

    #[error("calibration aborted: N_{index}(1) is not finite")]
    NonfiniteN { index: usize },

    #[error("index {index} out of range for {what}")]
    IndexOutOfRange { index: usize, what: String },

    #[error("index {index} is below the calibrated range (lowest {lowest})")]
    NotCalibrated { index: usize, lowest: usize },

    #[error("calibration requires the exact engine; the sampled engine is restricted to post-calibration evaluation")]
    SampledCalibration,

    #[error("moment overflows the floating-point range (log value {log_value:.3e})")]
    MomentOverflow { log_value: f64 },

    #[error("no transition detected on grid")]
    NoTransition,

    #[error("chain estimates do not overlap (split R-hat {rhat:.3} at coupling node {node}); estimate flagged unreliable")]
    UnreliableChains { rhat: f64, node: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
