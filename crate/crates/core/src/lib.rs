//! Estimation toolkit for IMU-based state estimation with statistical motion
//! models: SO(3) utilities, LTI analysis, an error-state Kalman filter on
//! product manifolds, POS-IMU and inter-IMU system models, nonlinear
//! observability analysis, a trajectory/sensor simulator, metrics and log IO.

pub mod error;
pub mod eskf;
pub mod io;
pub mod linalg;
pub mod lti;
pub mod manifold;
pub mod metrics;
pub mod models;
pub mod motion_model;
pub mod observability;
pub mod sim;

pub use error::{Error, Result};
