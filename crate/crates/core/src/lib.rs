//! Tracking arbitrary reference curves with driftless control-affine systems
//! through high-frequency oscillating feedback evaluated on a sampling grid.
//!
//! The crate is generic over the scalar type ([`Real`], implemented for `f32`
//! and `f64`); the aliases below fix it for the common cases.

// `!(x > 0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod controller;
pub mod curves;
pub mod error;
pub mod integrator;
pub mod linalg;
pub mod metrics;
pub mod scalar;
pub mod scenarios;
pub mod systems;

pub use error::{Error, Result};
pub use scalar::Real;

pub type ControlSystem64 = systems::ControlSystem<f64>;
pub type ControlSystem32 = systems::ControlSystem<f32>;
pub type Controller64 = controller::Controller<f64>;
pub type Controller32 = controller::Controller<f32>;
pub type Trajectory64 = integrator::Trajectory<f64>;
pub type Trajectory32 = integrator::Trajectory<f32>;
pub type Scenario64 = scenarios::Scenario<f64>;
pub type Scenario32 = scenarios::Scenario<f32>;
pub type Certificate64 = certify::Certificate<f64>;
pub type Certificate32 = certify::Certificate<f32>;
pub type StabilityReport64 = metrics::StabilityReport<f64>;
