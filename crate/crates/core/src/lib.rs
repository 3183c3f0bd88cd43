#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cio_filter;
pub mod contact_solver;
pub mod error;
pub mod params;
pub mod reactive_planner;
pub mod sim;
pub mod validation;
pub mod vehicle_model;
pub mod velocity_controller;
pub mod wrench_estimator;

pub use error::{CioError, Result};
pub use params::VehicleParams;
