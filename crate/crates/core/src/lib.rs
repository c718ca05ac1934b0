//! Gradient echo memory diffusion simulator and closed-form toolkit.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod config;
pub mod error;
pub mod model;
pub mod numerics;
pub mod pulses;
pub mod solver1d;
pub mod transverse;

pub use error::{GemError, Result};
