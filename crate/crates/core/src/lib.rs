//! Simulator for a reacting, heat-conductive, self-gravitating compressible
//! viscous fluid on uniform rectilinear grids.
//!
//! The density is advanced by backward characteristics, the remaining fields
//! by implicit linearized parabolic steps with the transport velocity frozen;
//! an outer fixed-point iteration couples them back together. Run-time
//! monitors audit positivity, mass-fraction bounds and reaction monotonicity,
//! and watchdogs track the growth functionals used to detect breakdown.

pub mod config;
pub mod constitutive;
pub mod driver;
pub mod error;
pub mod gravity;
pub mod grid;
pub mod linsolve;
pub mod monitors;
pub mod norms;
pub mod ops;
pub mod oracle;
pub mod parabolic;
pub mod params;
pub mod picard;
pub mod presets;
pub mod snapshot;
pub mod transport;

pub use error::{Result, SimError};
pub use grid::{Field, Grid, PhiBc, ScalarBc, State, Trajectory, VectorField, VelocityPath};
pub use params::SimParams;
