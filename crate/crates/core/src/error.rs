use thiserror::Error;

use crate::geometry::Point;

/// Errors raised by the coverage engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid region: x [{x_min}, {x_max}], y [{y_min}, {y_max}]")]
    InvalidRegion {
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
    },

    #[error("non-finite point ({x}, {y})")]
    NonFinitePoint { x: f64, y: f64 },

    #[error("agent {index} at ({}, {}) is not strictly inside the region", .position.x, .position.y)]
    PositionOutsideRegion { index: usize, position: Point },

    #[error("agents {first} and {second} coincide within {tolerance} m")]
    DuplicateAgents {
        first: usize,
        second: usize,
        tolerance: f64,
    },

    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),

    #[error("adaptive quadrature did not converge within depth {max_depth} on [{a}, {b}]")]
    IntegrationFailure { max_depth: u32, a: f64, b: f64 },

    #[error("importance-weighted cell mass {mass:e} underflowed")]
    MassUnderflow { mass: f64 },

    #[error("step size {h:e} s fell below the minimum at t = {t} s")]
    StepFailure { t: f64, h: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
