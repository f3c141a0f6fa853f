//! Coverage fractions, trapping detection and cross-method comparison tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::control::{coverage_snapshot, AgentSpec};
use crate::error::Result;
use crate::geometry::Point;
use crate::importance::ImportanceField;
use crate::integration::Quadrature;
use crate::simulation::{time_to_threshold, Trajectory};

/// Per-agent share of the total importance.
pub fn weighted_area_fractions(
    positions: &[Point],
    field: &ImportanceField,
    quad: &Quadrature,
) -> Result<Vec<f64>> {
    let snap = coverage_snapshot(positions, field, quad, false)?;
    Ok(snap.moments.iter().map(|m| m.mass).collect())
}

/// Constants of the trapping detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrappingThresholds {
    /// Agents with `S >= speed_ratio * median(S)` are watched.
    pub speed_ratio: f64,
    /// Speeds below `slow_fraction * S` count as slow.
    pub slow_fraction: f64,
    /// Minimum duration of a slow stretch, s.
    pub min_duration: f64,
    /// The agent must be farther than `far_factor * deadband` from its centroid.
    pub far_factor: f64,
}

impl Default for TrappingThresholds {
    fn default() -> Self {
        Self {
            speed_ratio: 2.0,
            slow_fraction: 0.5,
            min_duration: 10.0,
            far_factor: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrappingEvent {
    pub agent: usize,
    pub t_start: f64,
    pub t_end: f64,
}

/// Median speed limit of a team.
pub fn median_speed(team: &[AgentSpec]) -> f64 {
    let mut s: Vec<f64> = team.iter().map(|a| a.max_speed).collect();
    if s.is_empty() {
        return 0.0;
    }
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

/// Stretches where a fast agent moves slowly while still far from its goal.
///
/// `team` supplies the median speed; it is the full initial team of the run,
/// which matters when a trajectory covers one layer only.
pub fn detect_trapping(
    traj: &Trajectory,
    team: &[AgentSpec],
    deadband: f64,
    thresholds: &TrappingThresholds,
) -> Vec<TrappingEvent> {
    let median = median_speed(team);
    let far = thresholds.far_factor * deadband;
    let mut events = Vec::new();
    for (agent, spec) in traj.specs.iter().enumerate() {
        if spec.max_speed < thresholds.speed_ratio * median {
            continue;
        }
        let slow_limit = thresholds.slow_fraction * spec.max_speed;
        let mut run: Option<(f64, f64)> = None;
        let mut close = |run: &mut Option<(f64, f64)>| {
            if let Some((a, b)) = run.take() {
                if b - a >= thresholds.min_duration {
                    events.push(TrappingEvent {
                        agent,
                        t_start: a,
                        t_end: b,
                    });
                }
            }
        };
        for k in 0..traj.len() {
            let t = traj.sample_times[k];
            let trapped = traj.velocities[k][agent].norm() < slow_limit
                && traj.centroid_distance(k, agent) > far;
            if trapped {
                run = Some(run.map_or((t, t), |(a, _)| (a, t)));
            } else {
                close(&mut run);
            }
        }
        close(&mut run);
    }
    events
}

/// Loss levels reported by default, as fractions of the initial loss.
pub const DEFAULT_LOSS_THRESHOLDS: [f64; 2] = [0.5, 0.185];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTime {
    pub threshold: f64,
    /// `None` when the loss never falls to the threshold.
    pub time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub threshold_times: Vec<ThresholdTime>,
    pub final_loss_pct: f64,
    pub max_velocity_used: f64,
    pub trapping_events: usize,
}

impl MethodSummary {
    /// Summary of a normalized loss series and the velocity records behind it.
    pub fn from_series<'a>(
        method: impl Into<String>,
        times: &[f64],
        loss_norm: &[f64],
        thresholds: &[f64],
        trajectories: impl IntoIterator<Item = &'a Trajectory>,
        trapping_events: usize,
    ) -> Self {
        let max_velocity_used = trajectories
            .into_iter()
            .flat_map(|t| t.velocities.iter().flatten())
            .map(|v| v.norm())
            .fold(0.0, f64::max);
        Self {
            method: method.into(),
            threshold_times: thresholds
                .iter()
                .map(|&threshold| ThresholdTime {
                    threshold,
                    time: time_to_threshold(times, loss_norm, threshold),
                })
                .collect(),
            final_loss_pct: 100.0 * loss_norm.last().copied().unwrap_or(f64::NAN),
            max_velocity_used,
            trapping_events,
        }
    }

    /// Time to reach `threshold`, if it was requested and reached.
    pub fn time_to(&self, threshold: f64) -> Option<f64> {
        self.threshold_times
            .iter()
            .find(|t| t.threshold == threshold)
            .and_then(|t| t.time)
    }
}

/// Methods side by side, one column each.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub scenario: String,
    pub thresholds: TrappingThresholds,
    pub methods: Vec<MethodSummary>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "not reached".to_string(), |x| format!("{x:.2}"))
}

/// `0.185` becomes `18.5`.
fn percent_label(threshold: f64) -> String {
    format!("{}", (threshold * 1000.0).round() / 10.0)
}

impl ComparisonReport {
    /// Loss thresholds of all methods, in order of first appearance.
    fn loss_thresholds(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for t in self.methods.iter().flat_map(|m| &m.threshold_times) {
            if !out.contains(&t.threshold) {
                out.push(t.threshold);
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let t = &self.thresholds;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# scenario: {}; trapping: S >= {} x median S, |v| < {} S for >= {} s, |C-P| > {} x deadband",
            self.scenario, t.speed_ratio, t.slow_fraction, t.min_duration, t.far_factor
        );
        out.push_str("metric");
        for m in &self.methods {
            out.push(',');
            out.push_str(&m.method);
        }
        out.push('\n');
        let mut row = |label: String, f: &dyn Fn(&MethodSummary) -> String| {
            out.push_str(&label);
            for m in &self.methods {
                out.push(',');
                out.push_str(&f(m));
            }
            out.push('\n');
        };
        for th in self.loss_thresholds() {
            row(format!("time_to_{}pct_loss_s", percent_label(th)), &|m| {
                cell(m.time_to(th))
            });
        }
        row("final_sensor_loss_pct".into(), &|m| {
            format!("{:.2}", m.final_loss_pct)
        });
        row("max_velocity_used_m_per_s".into(), &|m| {
            format!("{:.2}", m.max_velocity_used)
        });
        row("agent_trapping_events".into(), &|m| {
            m.trapping_events.to_string()
        });
        out
    }

    /// Plain-text table for terminals.
    pub fn to_table(&self) -> String {
        let csv = self.to_csv();
        let rows: Vec<Vec<&str>> = csv
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| l.split(',').collect())
            .collect();
        let cols = rows.first().map_or(0, Vec::len);
        let widths: Vec<usize> = (0..cols)
            .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for r in &rows {
            for (c, v) in r.iter().enumerate() {
                let _ = write!(out, "{:<w$}  ", v, w = widths[c]);
            }
            out.truncate(out.trim_end().len());
            out.push('\n');
        }
        out
    }
}
