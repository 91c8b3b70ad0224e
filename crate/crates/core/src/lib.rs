// Validation guards are written `!(x > 0.0)` on purpose: the negation rejects
// NaN along with the out-of-range values, which `x <= 0.0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Exact and sampled solution of log-normal short-rate models on a tenor
//! grid, in the terminal measure.
//!
//! The model takes a mean-reverting Gaussian driver x(t) (Ornstein-Uhlenbeck
//! with volatility sigma and reversion speed gamma) and writes each period's
//! Libor as L_i = L~_i exp(x_i - G_i/2), with the deterministic scales L~_i
//! calibrated so the initial discount curve is priced back exactly. In the
//! terminal measure the convexity factor
//!
//! N_i(phi) = E[e^{phi x_i - phi^2 G_i/2} P^_{i,i+1}(x_i)]
//!
//! expands into the grand-canonical partition sum of a one-dimensional binary
//! gas: one site per future tenor date, fugacity L~_j tau per occupied site,
//! and attractive pair couplings X_{jk} = e^{-gamma|t_j - t_k|} G_min set by
//! the driver covariance. Everything downstream rests on that identity:
//!
//! - [`gas`] evaluates the partition sum exactly by Gray-code enumeration
//!   (up to a site cap) and exposes bond values and occupancies;
//! - [`bdt`] evaluates it without any site cap at gamma = 0, where the
//!   couplings collapse and a cluster-coefficient recursion applies;
//! - [`calibration`] bootstraps L~ backward through the curve, then derives
//!   moments, implied volatilities, and the critical-volatility scan on top;
//! - [`sampler`] replaces enumeration with Metropolis chains plus
//!   thermodynamic integration when subsystems grow too large;
//! - [`paths`] cross-checks everything by brute-force simulation of the
//!   driver, including the truncated-state-space artifact;
//! - [`validate`] bundles the runtime self-test battery behind the CLI.
//!
//! With the default `parallel` feature, enumeration chunks, sampler chains,
//! scan points, and path blocks fan out over a thread pool; results are
//! bit-identical to the sequential build because every reduction runs in a
//! fixed order.

pub mod bdt;
pub mod calibration;
pub mod curve;
pub mod error;
pub mod exec;
pub mod gas;
pub mod math;
pub mod paths;
pub mod process;
pub mod sampler;
pub mod validate;

pub use calibration::{
    atm_lognormal_vol, calibrate, calibrate_down_to, convexity_expectation_n,
    critical_volatility, detect_critical_volatility, libor_moment, linearized_n,
    CalibratedModel, CriticalVol, Engine,
};
pub use curve::YieldCurve;
pub use error::{Error, Result};
pub use gas::{
    bond_value_at_state, build_subsystem, enumerate_log_partition, occupancy_expectation,
    GasSubsystem, Method, Occupation, PartitionValue, DEFAULT_ENUMERATION_CAP,
};
pub use paths::{mc_bond_value, mc_convexity_n, simulate_paths, McEstimate, PathBatch};
pub use process::{
    covariance_x, decay_weight, gaussian_moment_identity, variance_g, ProcessSpec, TenorGrid,
};
pub use sampler::{
    estimate_lnz_thermodynamic, estimate_occupancy, metropolis_sweep, ChainConfig, CouplingPath,
};
pub use validate::{run_battery, BatteryConfig, CheckResult, Fault};
