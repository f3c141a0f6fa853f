//! Importance-weighted Voronoi coverage control for heterogeneous teams.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod control;
pub mod error;
pub mod geometry;
pub mod importance;
pub mod integration;
pub mod metrics;
pub mod ode;
pub mod plot;
pub mod runner;
pub mod simulation;
pub mod twolayer;

pub use error::{Error, Result};
