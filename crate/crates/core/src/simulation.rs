//! Time integration of the coverage dynamics and sampled metric recording.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::control::{command_velocity, coverage_snapshot, AgentSpec, ControlParams};
use crate::error::{Error, Result};
use crate::geometry::{check_distinct, Point, Region, GEOMETRY_TOL};
use crate::importance::ImportanceField;
use crate::integration::Quadrature;
use crate::ode::{self, DenseSegment, SolveStats, StepControl, StepperOptions};

/// Default number of output samples.
pub const DEFAULT_OUTPUT_SAMPLES: usize = 100;
/// Radius (m) of the ring on which co-located agents are placed.
pub const STAGING_SPREAD: f64 = 1.0;
/// Event times are located to this resolution (s).
pub const EVENT_TIME_TOL: f64 = 1e-3;

/// Numerical settings shared by every run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationOptions {
    pub stepper: StepperOptions,
    /// Quadrature used inside the dynamics.
    pub dynamics_quadrature: Quadrature,
    /// Quadrature used for recorded losses and coverage fractions.
    pub metric_quadrature: Quadrature,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            stepper: StepperOptions::default(),
            dynamics_quadrature: Quadrature::with_tol(1e-6),
            metric_quadrature: Quadrature::with_tol(1e-8),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub t_final: f64,
    pub output_samples: usize,
    pub positions: Vec<Point>,
    pub specs: Vec<AgentSpec>,
    pub field: ImportanceField,
    pub params: ControlParams,
    pub options: SimulationOptions,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "t_final must be positive, got {}",
                self.t_final
            )));
        }
        if self.output_samples < 2 {
            return Err(Error::InvalidParameter(format!(
                "output_samples must be at least 2, got {}",
                self.output_samples
            )));
        }
        validate_team(&self.positions, &self.specs, &self.field.region)?;
        self.params.validate()
    }
}

pub(crate) fn validate_team(
    positions: &[Point],
    specs: &[AgentSpec],
    region: &Region,
) -> Result<()> {
    if positions.is_empty() {
        return Err(Error::InvalidParameter("no agents".into()));
    }
    if positions.len() != specs.len() {
        return Err(Error::InvalidParameter(format!(
            "{} positions but {} agent specs",
            positions.len(),
            specs.len()
        )));
    }
    for s in specs {
        s.validate()?;
    }
    for (index, &p) in positions.iter().enumerate() {
        if !region.strictly_contains(p) {
            return Err(Error::PositionOutsideRegion { index, position: p });
        }
    }
    check_distinct(positions)
}

/// Sampled record of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub sample_times: Vec<f64>,
    pub positions: Vec<Vec<Point>>,
    /// Commanded velocities at the sampled positions.
    pub velocities: Vec<Vec<Point>>,
    pub centroids: Vec<Vec<Point>>,
    /// Cell mass under the normalized field, per agent.
    pub weighted_area: Vec<Vec<f64>>,
    /// Team sensor loss H(t).
    pub loss: Vec<f64>,
    /// H(t) divided by `loss_baseline`.
    pub loss_norm: Vec<f64>,
    pub loss_baseline: f64,
    pub specs: Vec<AgentSpec>,
    #[serde(skip)]
    pub stats: SolveStats,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.sample_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_times.is_empty()
    }

    pub fn speeds(&self, sample: usize) -> impl Iterator<Item = f64> + '_ {
        self.velocities[sample].iter().map(|v| v.norm())
    }

    pub fn centroid_distance(&self, sample: usize, agent: usize) -> f64 {
        self.positions[sample][agent].distance(self.centroids[sample][agent])
    }

    pub fn final_positions(&self) -> &[Point] {
        self.positions.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn time_to_threshold(&self, threshold: f64) -> Option<f64> {
        time_to_threshold(&self.sample_times, &self.loss_norm, threshold)
    }
}

/// `n` uniformly spaced times on `[0, t_final]`, exact at both ends.
pub fn sample_grid(t_final: f64, n: usize) -> Vec<f64> {
    let last = (n - 1) as f64;
    (0..n)
        .map(|k| {
            if k + 1 == n {
                t_final
            } else {
                t_final * k as f64 / last
            }
        })
        .collect()
}

/// First time the series falls to `threshold`, linearly interpolated between
/// the bracketing samples. `None` if it never does.
pub fn time_to_threshold(times: &[f64], values: &[f64], threshold: f64) -> Option<f64> {
    let k = values.iter().position(|&v| v <= threshold)?;
    if k == 0 {
        return Some(times[0]);
    }
    let (t0, t1) = (times[k - 1], times[k]);
    let (v0, v1) = (values[k - 1], values[k]);
    if t1 == t0 || v0 == v1 {
        return Some(t1);
    }
    Some(t0 + (v0 - threshold) / (v0 - v1) * (t1 - t0))
}

/// Places agents that share a position on a small ring around it, in index
/// order, starting along +x. The geometry layer rejects coincident agents.
pub fn separate_coincident(positions: &[Point], region: &Region, radius: f64) -> Vec<Point> {
    let mut out = positions.to_vec();
    let mut assigned = vec![false; positions.len()];
    for i in 0..positions.len() {
        if assigned[i] {
            continue;
        }
        let group: Vec<usize> = (i..positions.len())
            .filter(|&j| !assigned[j] && positions[j].distance(positions[i]) <= GEOMETRY_TOL)
            .collect();
        for &j in &group {
            assigned[j] = true;
        }
        if group.len() < 2 {
            continue;
        }
        let center = positions[i];
        let m = group.len() as f64;
        let mut r = radius;
        loop {
            let ring: Vec<Point> = (0..group.len())
                .map(|k| {
                    let a = TAU * k as f64 / m;
                    center + Point::new(a.cos(), a.sin()) * r
                })
                .collect();
            if ring.iter().all(|p| region.strictly_contains(*p)) || r < 1e-6 {
                for (&j, p) in group.iter().zip(ring) {
                    out[j] = p;
                }
                break;
            }
            r *= 0.5;
        }
    }
    out
}

fn flatten(points: &[Point]) -> Vec<f64> {
    points.iter().flat_map(|p| [p.x, p.y]).collect()
}

fn unflatten(y: &[f64]) -> Vec<Point> {
    y.chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect()
}

/// Dense solution of one integration leg.
pub(crate) struct Leg {
    segments: Vec<DenseSegment>,
    pub t_start: f64,
    pub start: Vec<Point>,
    pub t_end: f64,
    pub end: Vec<Point>,
    pub stats: SolveStats,
}

impl Leg {
    /// Positions at `t ∈ [t_start, t_end]`; end points are returned exactly.
    pub fn positions_at(&self, t: f64) -> Vec<Point> {
        if t == self.t_start {
            return self.start.clone();
        }
        if t == self.t_end {
            return self.end.clone();
        }
        let idx = self
            .segments
            .partition_point(|s| s.t1 < t)
            .min(self.segments.len().saturating_sub(1));
        unflatten(&self.segments[idx].eval(t))
    }
}

/// Stop condition evaluated on accepted states: the leg ends at the first
/// time the function becomes `<= 0`.
pub(crate) type EventFn<'a> = dyn FnMut(&[Point]) -> Result<f64> + 'a;

/// Integrates the coverage dynamics on `[t0, t_end]`, optionally stopping at
/// an event located by bisection on the dense output.
#[allow(clippy::too_many_arguments)]
pub(crate) fn propagate(
    start: &[Point],
    specs: &[AgentSpec],
    field: &ImportanceField,
    params: &ControlParams,
    options: &SimulationOptions,
    t0: f64,
    t_end: f64,
    mut event: Option<&mut EventFn<'_>>,
) -> Result<Leg> {
    let quad = options.dynamics_quadrature;
    let rhs = |_t: f64, y: &[f64]| -> Result<Vec<f64>> {
        let pos = unflatten(y);
        let snap = coverage_snapshot(&pos, field, &quad, false)?;
        let mut out = Vec::with_capacity(y.len());
        for ((p, s), c) in pos.iter().zip(specs).zip(snap.centroids()) {
            let u = command_velocity(*p, c, s, params);
            out.push(u.x);
            out.push(u.y);
        }
        Ok(out)
    };

    let mut segments: Vec<DenseSegment> = Vec::new();
    let mut stop: Option<(f64, Vec<f64>)> = None;
    let y0 = flatten(start);
    let (t_last, y_last, stats) = ode::solve(rhs, t0, &y0, t_end, &options.stepper, |seg| {
        let end = unflatten(&seg.eval(seg.t1));
        segments.push(seg.clone());
        if let Some(g) = event.as_deref_mut() {
            if g(&end)? <= 0.0 {
                let (mut lo, mut hi) = (seg.t0, seg.t1);
                while hi - lo > EVENT_TIME_TOL {
                    let mid = 0.5 * (lo + hi);
                    if g(&unflatten(&seg.eval(mid)))? <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                stop = Some((hi, seg.eval(hi)));
                return Ok(StepControl::Stop);
            }
        }
        Ok(StepControl::Continue)
    })?;

    let (t_stop, y_stop) = stop.unwrap_or((t_last, y_last));
    Ok(Leg {
        segments,
        t_start: t0,
        start: start.to_vec(),
        t_end: t_stop,
        end: unflatten(&y_stop),
        stats,
    })
}

/// Evaluates tessellation metrics at each `(time, positions)` pair.
pub(crate) fn record(
    samples: Vec<(f64, Vec<Point>)>,
    specs: &[AgentSpec],
    field: &ImportanceField,
    params: &ControlParams,
    options: &SimulationOptions,
    baseline: Option<f64>,
    stats: SolveStats,
) -> Result<Trajectory> {
    let mut traj = Trajectory {
        sample_times: Vec::with_capacity(samples.len()),
        positions: Vec::with_capacity(samples.len()),
        velocities: Vec::with_capacity(samples.len()),
        centroids: Vec::with_capacity(samples.len()),
        weighted_area: Vec::with_capacity(samples.len()),
        loss: Vec::with_capacity(samples.len()),
        loss_norm: Vec::with_capacity(samples.len()),
        loss_baseline: 0.0,
        specs: specs.to_vec(),
        stats,
    };
    for (t, pos) in samples {
        for (index, p) in pos.iter().enumerate() {
            if !field.region.strictly_contains(*p) {
                return Err(Error::PositionOutsideRegion {
                    index,
                    position: *p,
                });
            }
        }
        let snap = coverage_snapshot(&pos, field, &options.metric_quadrature, true)?;
        let centroids: Vec<Point> = snap.centroids().collect();
        traj.velocities.push(
            pos.iter()
                .zip(specs)
                .zip(&centroids)
                .map(|((p, s), c)| command_velocity(*p, *c, s, params))
                .collect(),
        );
        traj.weighted_area
            .push(snap.moments.iter().map(|m| m.mass).collect());
        traj.loss.push(snap.total_loss());
        traj.centroids.push(centroids);
        traj.positions.push(pos);
        traj.sample_times.push(t);
    }
    let h0 = baseline.unwrap_or_else(|| traj.loss.first().copied().unwrap_or(1.0));
    traj.loss_baseline = h0;
    traj.loss_norm = traj.loss.iter().map(|h| h / h0).collect();
    Ok(traj)
}

/// Samples of `grid` falling in `[t_start, t_end]`, plus both end points.
pub(crate) fn leg_times(grid: &[f64], t_start: f64, t_end: f64) -> Vec<f64> {
    let mut times = vec![t_start];
    times.extend(grid.iter().copied().filter(|&t| t > t_start && t < t_end));
    if t_end > t_start {
        times.push(t_end);
    }
    times
}

/// Integrates the configured team in a single tessellation.
pub fn integrate(config: &SimulationConfig) -> Result<Trajectory> {
    integrate_with_baseline(config, None)
}

/// As [`integrate`], normalizing losses by `baseline` instead of H(0).
pub fn integrate_with_baseline(
    config: &SimulationConfig,
    baseline: Option<f64>,
) -> Result<Trajectory> {
    config.validate()?;
    let grid = sample_grid(config.t_final, config.output_samples);
    let leg = propagate(
        &config.positions,
        &config.specs,
        &config.field,
        &config.params,
        &config.options,
        0.0,
        config.t_final,
        None,
    )?;
    let samples = grid.iter().map(|&t| (t, leg.positions_at(t))).collect();
    let traj = record(
        samples,
        &config.specs,
        &config.field,
        &config.params,
        &config.options,
        baseline,
        leg.stats,
    )?;
    log::debug!(
        "integrated {} agents to t = {}: {} steps ({} rejected), {} rhs evaluations",
        config.specs.len(),
        config.t_final,
        leg.stats.accepted,
        leg.stats.rejected,
        leg.stats.rhs_evals
    );
    Ok(traj)
}
