//! Core representation of discrete time-delay systems.
//!
//! The state recursion is
//!
//! ```text
//! x(t+1) = A0 x(t) + sum_l A_l x(t - d_l) + B u(t),    y(t) = C x(t),
//! ```
//!
//! with prescribed history `x(j) = phi(j)` for `j in [-d_max, 0]`. This crate
//! holds the system and initial-data types, reduced-model containers,
//! simulation, the fundamental matrix, the delay-free lifted reformulation,
//! spectral-radius estimation, output error metrics, and the on-disk model
//! format (binary and JSON).

mod error;
pub mod io;
mod metrics;
mod sim;
mod spectral;
mod system;

pub use error::Error;
pub use metrics::{error_metrics, ErrorMetrics};
pub use sim::{fundamental_matrix, simulate};
pub use spectral::{spectral_radius, spectral_radius_with, SpectralOptions};
pub use system::{
    lift_to_linear, ChannelSignal, DelaySystem, InitialData, InputSignal, LiftedSystem, MethodTag,
    Projection, ReducedSystem, ReductionParams, Trajectory,
};
