//! Holistic convex optimisation of a fuel-cell hybrid train in the space
//! domain: speed profile, power split and battery temperature solved together
//! as one second-order cone program.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod components;
pub mod dp;
pub mod error;
pub mod program;
pub mod solver;
pub mod validate;
pub mod surrogate;
pub mod track;

pub use error::{Error, Result};
