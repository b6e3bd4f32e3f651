//! Robust control barrier functions for spacecraft keep-out constraints, with a
//! hysteresis-switched QP safety filter and a closed-loop mission simulator.

pub mod constraints;
pub mod dynamics;
pub mod error;
pub mod qpfilter;
pub mod rcbf;
pub mod sim;
pub mod switching;

pub use error::{Error, Result};
pub use nalgebra;
