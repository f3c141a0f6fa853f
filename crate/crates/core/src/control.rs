//! Velocity-limited, deadbanded centroid-seeking control and the coverage
//! dynamics right-hand side.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{bounded_voronoi, Point, Tessellation};
use crate::importance::ImportanceField;
use crate::integration::{cell_moments, cell_moments_and_loss, CellMoments, Quadrature};

pub const DEFAULT_GAIN: f64 = 1.0;
pub const DEFAULT_DEADBAND: f64 = 0.02;
pub const DEFAULT_CONVERGENCE_RADIUS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Ground,
    Aerial,
    Dropped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub layer: Layer,
    /// Proportional gain K, 1/s.
    pub gain: f64,
    /// Speed limit S, m/s.
    pub max_speed: f64,
}

impl AgentSpec {
    pub fn new(layer: Layer, max_speed: f64) -> Self {
        Self {
            layer,
            gain: DEFAULT_GAIN,
            max_speed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gain > 0.0) || !self.gain.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gain must be positive, got {}",
                self.gain
            )));
        }
        if !(self.max_speed > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "max speed must be positive, got {}",
                self.max_speed
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    /// Radius around the centroid with zero command, m.
    pub deadband: f64,
    /// Mean distance to centroid that triggers the airdrop, m.
    pub convergence_radius: f64,
}

impl Default for ControlParams {
    fn default() -> Self {
        Self {
            deadband: DEFAULT_DEADBAND,
            convergence_radius: DEFAULT_CONVERGENCE_RADIUS,
        }
    }
}

impl ControlParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.deadband >= 0.0) || !(self.convergence_radius > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "deadband {} must be non-negative and convergence radius {} positive",
                self.deadband, self.convergence_radius
            )));
        }
        Ok(())
    }
}

/// `min(K‖C−P‖, S)` along `C − P`, or zero inside the deadband.
#[inline]
pub fn command_velocity(
    position: Point,
    centroid: Point,
    spec: &AgentSpec,
    params: &ControlParams,
) -> Point {
    let error = centroid - position;
    let dist = error.norm();
    if dist <= params.deadband || dist == 0.0 {
        return Point::ORIGIN;
    }
    let speed = (spec.gain * dist).min(spec.max_speed);
    error * (speed / dist)
}

/// Tessellation and per-cell moments for one configuration.
#[derive(Debug, Clone)]
pub struct CoverageSnapshot {
    pub tessellation: Tessellation,
    pub moments: Vec<CellMoments>,
    /// Sensor loss per cell; empty when not requested.
    pub losses: Vec<f64>,
}

impl CoverageSnapshot {
    pub fn centroids(&self) -> impl Iterator<Item = Point> + '_ {
        self.moments.iter().map(|m| m.centroid)
    }

    pub fn total_loss(&self) -> f64 {
        self.losses.iter().sum()
    }
}

/// Tessellates and integrates every cell; with `loss_quad` the sensor loss
/// is integrated in the same pass.
pub fn coverage_snapshot(
    positions: &[Point],
    field: &ImportanceField,
    quad: &Quadrature,
    with_loss: bool,
) -> Result<CoverageSnapshot> {
    let tessellation = bounded_voronoi(positions, &field.region)?;
    let phi = |q: Point| field.eval(q);
    let per_cell: Vec<Result<(CellMoments, f64)>> = tessellation
        .cells
        .par_iter()
        .zip(positions.par_iter())
        .map(|(cell, &p)| {
            if with_loss {
                cell_moments_and_loss(cell, p, phi, quad)
            } else {
                cell_moments(cell, phi, quad).map(|m| (m, 0.0))
            }
        })
        .collect();
    let mut moments = Vec::with_capacity(positions.len());
    let mut losses = Vec::with_capacity(if with_loss { positions.len() } else { 0 });
    for r in per_cell {
        let (m, l) = r?;
        moments.push(m);
        if with_loss {
            losses.push(l);
        }
    }
    Ok(CoverageSnapshot {
        tessellation,
        moments,
        losses,
    })
}

/// Commanded velocity of every agent toward its importance-weighted centroid.
pub fn dynamics_rhs(
    positions: &[Point],
    specs: &[AgentSpec],
    field: &ImportanceField,
    params: &ControlParams,
    quad: &Quadrature,
) -> Result<Vec<Point>> {
    if positions.len() != specs.len() {
        return Err(Error::InvalidParameter(format!(
            "{} positions but {} agent specs",
            positions.len(),
            specs.len()
        )));
    }
    let snap = coverage_snapshot(positions, field, quad, false)?;
    Ok(positions
        .iter()
        .zip(specs)
        .zip(snap.centroids())
        .map(|((&p, s), c)| command_velocity(p, c, s, params))
        .collect())
}

/// Sum of per-cell sensor losses.
pub fn team_sensor_loss(
    positions: &[Point],
    field: &ImportanceField,
    quad: &Quadrature,
) -> Result<f64> {
    Ok(coverage_snapshot(positions, field, quad, true)?.total_loss())
}
