//! Two-layer aerial/ground deployment: decoupled aerial and ground
//! tessellations until the airdrop, then a single merged team.

use serde::{Deserialize, Serialize};

use crate::control::{coverage_snapshot, AgentSpec, ControlParams, Layer};
use crate::error::{Error, Result};
use crate::geometry::{Point, GEOMETRY_TOL};
use crate::importance::ImportanceField;
use crate::simulation::{
    integrate, leg_times, propagate, record, sample_grid, validate_team, SimulationConfig,
    SimulationOptions, Trajectory,
};

#[derive(Debug, Clone)]
pub struct LayeredConfig {
    pub aerial_positions: Vec<Point>,
    pub aerial_specs: Vec<AgentSpec>,
    pub ground_positions: Vec<Point>,
    pub ground_specs: Vec<AgentSpec>,
    /// Speed limit of a delivered sensor, m/s.
    pub dropped_speed: f64,
    pub field: ImportanceField,
    pub params: ControlParams,
    pub t_final: f64,
    pub output_samples: usize,
    pub options: SimulationOptions,
}

impl LayeredConfig {
    pub fn validate(&self) -> Result<()> {
        if self.aerial_specs.is_empty() || self.ground_specs.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "two-layer mode needs at least one aerial and one ground agent, got {} and {}",
                self.aerial_specs.len(),
                self.ground_specs.len()
            )));
        }
        if !(self.dropped_speed > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dropped speed must be positive, got {}",
                self.dropped_speed
            )));
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() || self.output_samples < 2 {
            return Err(Error::InvalidParameter(format!(
                "need t_final > 0 and at least 2 samples, got {} and {}",
                self.t_final, self.output_samples
            )));
        }
        validate_team(
            &self.aerial_positions,
            &self.aerial_specs,
            &self.field.region,
        )?;
        validate_team(
            &self.ground_positions,
            &self.ground_specs,
            &self.field.region,
        )?;
        self.params.validate()
    }

    /// The same team as one tessellation, ground agents first.
    pub fn single_layer(&self) -> SimulationConfig {
        SimulationConfig {
            t_final: self.t_final,
            output_samples: self.output_samples,
            positions: [self.ground_positions.as_slice(), &self.aerial_positions].concat(),
            specs: [self.ground_specs.as_slice(), &self.aerial_specs].concat(),
            field: self.field.clone(),
            params: self.params,
            options: self.options,
        }
    }

    /// The whole team re-typed as ground robots at the slowest ground speed.
    pub fn ground_only(&self) -> SimulationConfig {
        let speed = self
            .ground_specs
            .iter()
            .map(|s| s.max_speed)
            .fold(f64::INFINITY, f64::min);
        let mut cfg = self.single_layer();
        for s in &mut cfg.specs {
            s.layer = Layer::Ground;
            s.max_speed = speed;
        }
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropTrigger {
    Distance,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropEvent {
    pub t_drop: f64,
    pub aerial_final_positions: Vec<Point>,
    pub trigger: DropTrigger,
}

#[derive(Debug, Clone)]
pub struct TwoLayerResult {
    /// Phase 1, normalized by the aerial layer's own initial loss.
    pub aerial: Trajectory,
    /// Phase 2 on `[0, t_drop]`, normalized by the ground layer's initial loss.
    pub ground_pre: Trajectory,
    /// Phase 3 on `[t_drop, t_final]`; `None` when the drop timed out.
    pub merged: Option<Trajectory>,
    pub drop: DropEvent,
    /// Phase 2 followed by phase 3; `t_drop` appears twice.
    pub stitched_times: Vec<f64>,
    pub stitched_loss_norm: Vec<f64>,
}

impl TwoLayerResult {
    pub fn time_to_threshold(&self, threshold: f64) -> Option<f64> {
        crate::simulation::time_to_threshold(
            &self.stitched_times,
            &self.stitched_loss_norm,
            threshold,
        )
    }

    /// Stitched loss at `t_drop` before and after the merge.
    pub fn drop_jump(&self) -> Option<(f64, f64)> {
        let before = *self.ground_pre.loss_norm.last()?;
        let after = *self.merged.as_ref()?.loss_norm.first()?;
        Some((before, after))
    }
}

fn mean_centroid_distance(
    positions: &[Point],
    field: &ImportanceField,
    options: &SimulationOptions,
) -> Result<f64> {
    let snap = coverage_snapshot(positions, field, &options.dynamics_quadrature, false)?;
    let total: f64 = positions
        .iter()
        .zip(snap.centroids())
        .map(|(p, c)| p.distance(c))
        .sum();
    Ok(total / positions.len() as f64)
}

pub fn run_two_layer(config: &LayeredConfig) -> Result<TwoLayerResult> {
    config.validate()?;
    let LayeredConfig {
        field,
        params,
        options,
        ..
    } = config;
    let grid = sample_grid(config.t_final, config.output_samples);

    // Phase 1: aerial layer alone until it settles.
    let radius = params.convergence_radius;
    let settled_at_start =
        mean_centroid_distance(&config.aerial_positions, field, options)? <= radius;
    let aerial_leg = if settled_at_start {
        propagate(
            &config.aerial_positions,
            &config.aerial_specs,
            field,
            params,
            options,
            0.0,
            0.0,
            None,
        )?
    } else {
        let mut gap = |p: &[Point]| Ok(mean_centroid_distance(p, field, options)? - radius);
        propagate(
            &config.aerial_positions,
            &config.aerial_specs,
            field,
            params,
            options,
            0.0,
            config.t_final,
            Some(&mut gap),
        )?
    };
    let t_drop = aerial_leg.t_end;
    let trigger = if settled_at_start
        || t_drop < config.t_final
        || mean_centroid_distance(&aerial_leg.end, field, options)? <= radius
    {
        DropTrigger::Distance
    } else {
        DropTrigger::Timeout
    };
    let aerial = record(
        leg_times(&grid, 0.0, t_drop)
            .into_iter()
            .map(|t| (t, aerial_leg.positions_at(t)))
            .collect(),
        &config.aerial_specs,
        field,
        params,
        options,
        None,
        aerial_leg.stats,
    )?;
    log::info!("airdrop at t = {t_drop:.3} s ({trigger:?})");

    // Phase 2: ground layer alone over the same interval.
    let ground_leg = propagate(
        &config.ground_positions,
        &config.ground_specs,
        field,
        params,
        options,
        0.0,
        t_drop,
        None,
    )?;
    let ground_pre = record(
        leg_times(&grid, 0.0, t_drop)
            .into_iter()
            .map(|t| (t, ground_leg.positions_at(t)))
            .collect(),
        &config.ground_specs,
        field,
        params,
        options,
        None,
        ground_leg.stats,
    )?;
    let baseline = ground_pre.loss_baseline;

    // Phase 3: delivered sensors join the ground tessellation.
    let merged = if t_drop < config.t_final {
        let positions = [ground_leg.end.as_slice(), &aerial_leg.end].concat();
        let specs: Vec<AgentSpec> = config
            .ground_specs
            .iter()
            .copied()
            .chain(config.aerial_specs.iter().map(|s| AgentSpec {
                layer: Layer::Dropped,
                gain: s.gain,
                max_speed: config.dropped_speed,
            }))
            .collect();
        crate::geometry::check_distinct(&positions).inspect_err(|_| {
            log::error!("dropped sensor lands on a ground agent (tolerance {GEOMETRY_TOL})");
        })?;
        let leg = propagate(
            &positions,
            &specs,
            field,
            params,
            options,
            t_drop,
            config.t_final,
            None,
        )?;
        Some(record(
            leg_times(&grid, t_drop, config.t_final)
                .into_iter()
                .map(|t| (t, leg.positions_at(t)))
                .collect(),
            &specs,
            field,
            params,
            options,
            Some(baseline),
            leg.stats,
        )?)
    } else {
        None
    };

    let mut stitched_times = ground_pre.sample_times.clone();
    let mut stitched_loss_norm = ground_pre.loss_norm.clone();
    if let Some(m) = &merged {
        stitched_times.extend(&m.sample_times);
        stitched_loss_norm.extend(&m.loss_norm);
    }

    Ok(TwoLayerResult {
        drop: DropEvent {
            t_drop,
            aerial_final_positions: aerial_leg.end.clone(),
            trigger,
        },
        aerial,
        ground_pre,
        merged,
        stitched_times,
        stitched_loss_norm,
    })
}

/// All agents, mixed speeds, in one tessellation.
pub fn run_single_layer(config: &SimulationConfig) -> Result<Trajectory> {
    integrate(config)
}
