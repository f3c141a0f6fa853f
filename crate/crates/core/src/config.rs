//! JSON experiment files: schema, validation, canonical echo and resolution
//! into runnable scenarios.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{AgentSpec, ControlParams, Layer, DEFAULT_CONVERGENCE_RADIUS, DEFAULT_GAIN};
use crate::geometry::{Point, Region};
use crate::importance::{ImportanceField, PlumeSpec, WindSpec, DEFAULT_OFFSET};
use crate::metrics::{TrappingThresholds, DEFAULT_LOSS_THRESHOLDS};
use crate::simulation::{separate_coincident, SimulationConfig, SimulationOptions, STAGING_SPREAD};
use crate::twolayer::LayeredConfig;

/// Aerial speeds used by a sweep that does not list its own.
pub const DEFAULT_SWEEP_SPEEDS: [f64; 5] = [2.0, 5.0, 10.0, 15.0, 20.0];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error{}: {message}", experiment.as_ref().map(|e| format!(" in experiment '{e}'")).unwrap_or_default())]
    Schema {
        experiment: Option<String>,
        message: String,
    },
}

impl ConfigError {
    fn schema(experiment: &str, message: impl Into<String>) -> Self {
        ConfigError::Schema {
            experiment: Some(experiment.to_string()),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    GroundOnly,
    SingleLayer,
    /// Name used by the original tooling for the single-layer run.
    ImportancedVoronoiTimeplot,
    TwoLayer,
    SensitivitySweep,
}

impl Method {
    /// Canonical method name used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Method::GroundOnly => "ground_only",
            Method::SingleLayer | Method::ImportancedVoronoiTimeplot => "single_layer",
            Method::TwoLayer => "two_layer",
            Method::SensitivitySweep => "sensitivity_sweep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Ground,
    Drone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    AerialSpeed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub function_to_run: Method,
    pub t_final: f64,
    /// Number of output samples.
    pub timesteps: usize,
    /// `[x_min, x_max, y_min, y_max]`.
    pub boundaries: [f64; 4],
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub mu_x: f64,
    pub mu_y: f64,
    pub x_i: Vec<[f64; 2]>,
    pub agent_type: Vec<AgentKind>,
    pub vel_max: Vec<f64>,
    pub scenario_name: String,
    pub deadband_distance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wind: Option<WindSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropped_speed: Option<f64>,
    /// Normalized loss levels to report times for.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    /// Ring radius for agents that share a start position, m.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub staging_spread: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trapping: Option<TrappingThresholds>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub all_experiments: BTreeMap<String, Experiment>,
}

fn classify(e: serde_json::Error) -> ConfigError {
    use serde_json::error::Category;
    match e.classify() {
        Category::Syntax | Category::Eof | Category::Io => ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        },
        Category::Data => ConfigError::Schema {
            experiment: None,
            message: e.to_string(),
        },
    }
}

impl ExperimentFile {
    /// Parses and validates an experiment file.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let file: ExperimentFile = serde_json::from_str(text).map_err(classify)?;
        file.validate()?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, e) in &self.all_experiments {
            e.validate(name)?;
        }
        Ok(())
    }

    /// Canonical pretty-printed JSON. Parsing the echo and echoing again
    /// reproduces it byte for byte.
    pub fn echo(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// File holding only the named experiment.
    pub fn single(&self, name: &str) -> Option<ExperimentFile> {
        let e = self.all_experiments.get(name)?;
        Some(ExperimentFile {
            all_experiments: BTreeMap::from([(name.to_string(), e.clone())]),
        })
    }
}

fn finite_positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

impl Experiment {
    pub fn validate(&self, name: &str) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError::schema(name, m));
        let n = self.x_i.len();
        if self.agent_type.len() != n || self.vel_max.len() != n {
            return err(format!(
                "list lengths differ: x_i has {}, agent_type has {}, vel_max has {}",
                n,
                self.agent_type.len(),
                self.vel_max.len()
            ));
        }
        if n == 0 {
            return err("x_i is empty".into());
        }
        let [x_min, x_max, y_min, y_max] = self.boundaries;
        let region = match Region::new(x_min, x_max, y_min, y_max) {
            Ok(r) => r,
            Err(_) => {
                return err(format!(
                    "boundaries must be finite with x_min < x_max and y_min < y_max, got {:?}",
                    self.boundaries
                ))
            }
        };
        for (i, p) in self.x_i.iter().enumerate() {
            if !region.strictly_contains(Point::new(p[0], p[1])) {
                return err(format!(
                    "agent {i} at {p:?} is not strictly inside boundaries {:?}",
                    self.boundaries
                ));
            }
        }
        if let Some(i) = self.vel_max.iter().position(|v| !finite_positive(*v)) {
            return err(format!(
                "vel_max[{i}] = {} must be positive",
                self.vel_max[i]
            ));
        }
        if !finite_positive(self.t_final) {
            return err(format!("t_final = {} must be positive", self.t_final));
        }
        if self.timesteps < 2 {
            return err(format!("timesteps = {} must be at least 2", self.timesteps));
        }
        if !finite_positive(self.sigma_x) || !finite_positive(self.sigma_y) {
            return err(format!(
                "sigma_x = {} and sigma_y = {} must be positive",
                self.sigma_x, self.sigma_y
            ));
        }
        if !self.mu_x.is_finite() || !self.mu_y.is_finite() {
            return err("mu_x and mu_y must be finite".into());
        }
        if !(self.deadband_distance >= 0.0) || !self.deadband_distance.is_finite() {
            return err(format!(
                "deadband_distance = {} must be non-negative",
                self.deadband_distance
            ));
        }
        if let Some(w) = self.wind {
            if !finite_positive(w.k) || !w.y0.is_finite() {
                return err(format!("wind needs k > 0 and finite y0, got {w:?}"));
            }
        }
        for (key, v) in [
            ("offset", self.offset),
            ("dropped_speed", self.dropped_speed),
            ("staging_spread", self.staging_spread),
            ("gain", self.gain),
        ] {
            if let Some(v) = v {
                if !finite_positive(v) {
                    return err(format!("{key} = {v} must be positive"));
                }
            }
        }
        if let Some(ts) = &self.thresholds {
            if let Some(t) = ts.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
                return err(format!("loss threshold {t} must lie in (0, 1)"));
            }
        }
        let drones = self.count(AgentKind::Drone);
        let grounds = n - drones;
        match self.function_to_run {
            Method::TwoLayer | Method::SensitivitySweep if drones == 0 || grounds == 0 => {
                return err(format!(
                    "{} needs at least one drone and one ground agent, got {drones} and {grounds}",
                    self.function_to_run.label()
                ));
            }
            Method::GroundOnly if grounds == 0 && self.dropped_speed.is_none() => {
                return err(
                    "ground_only needs a ground agent or dropped_speed to set the speed".into(),
                );
            }
            _ => {}
        }
        match (&self.sweep, self.function_to_run) {
            (Some(_), m) if m != Method::SensitivitySweep => {
                return err(format!(
                    "sweep is only valid with sensitivity_sweep, not {}",
                    m.label()
                ));
            }
            (Some(s), _) => {
                if s.values.is_empty() {
                    return err("sweep.values is empty".into());
                }
                if let Some(v) = s.values.iter().find(|v| !finite_positive(**v)) {
                    return err(format!("sweep value {v} must be positive"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn count(&self, kind: AgentKind) -> usize {
        self.agent_type.iter().filter(|k| **k == kind).count()
    }

    pub fn region(&self) -> Region {
        let [a, b, c, d] = self.boundaries;
        Region::new(a, b, c, d).expect("validated boundaries")
    }

    pub fn loss_thresholds(&self) -> Vec<f64> {
        self.thresholds
            .clone()
            .unwrap_or_else(|| DEFAULT_LOSS_THRESHOLDS.to_vec())
    }

    pub fn sweep_values(&self) -> Vec<f64> {
        self.sweep
            .as_ref()
            .map_or_else(|| DEFAULT_SWEEP_SPEEDS.to_vec(), |s| s.values.clone())
    }

    pub fn trapping_thresholds(&self) -> TrappingThresholds {
        self.trapping.unwrap_or_default()
    }

    /// Speed of delivered sensors and of the ground-only team.
    pub fn resolved_dropped_speed(&self) -> f64 {
        self.dropped_speed.unwrap_or_else(|| {
            self.agent_type
                .iter()
                .zip(&self.vel_max)
                .filter(|(k, _)| **k == AgentKind::Ground)
                .map(|(_, v)| *v)
                .fold(f64::INFINITY, f64::min)
        })
    }

    /// Builds and normalizes the importance field.
    pub fn field(&self) -> crate::Result<ImportanceField> {
        let plume = PlumeSpec {
            mu_x: self.mu_x,
            mu_y: self.mu_y,
            sigma_x: self.sigma_x,
            sigma_y: self.sigma_y,
            wind: self.wind,
        };
        ImportanceField::composite(self.region(), plume, self.offset.unwrap_or(DEFAULT_OFFSET))?
            .normalize()
    }

    fn spec(&self, i: usize) -> AgentSpec {
        AgentSpec {
            layer: match self.agent_type[i] {
                AgentKind::Ground => Layer::Ground,
                AgentKind::Drone => Layer::Aerial,
            },
            gain: self.gain.unwrap_or(DEFAULT_GAIN),
            max_speed: self.vel_max[i],
        }
    }

    /// Agent specs in file order.
    pub fn team_specs(&self) -> Vec<AgentSpec> {
        (0..self.x_i.len()).map(|i| self.spec(i)).collect()
    }

    fn params(&self) -> ControlParams {
        ControlParams {
            deadband: self.deadband_distance,
            convergence_radius: DEFAULT_CONVERGENCE_RADIUS,
        }
    }

    fn points(&self, idx: &[usize]) -> Vec<Point> {
        let raw: Vec<Point> = idx
            .iter()
            .map(|&i| Point::new(self.x_i[i][0], self.x_i[i][1]))
            .collect();
        separate_coincident(
            &raw,
            &self.region(),
            self.staging_spread.unwrap_or(STAGING_SPREAD),
        )
    }

    /// Whole team in one tessellation, agents in file order.
    pub fn single_layer_config(&self, field: ImportanceField) -> SimulationConfig {
        let idx: Vec<usize> = (0..self.x_i.len()).collect();
        SimulationConfig {
            t_final: self.t_final,
            output_samples: self.timesteps,
            positions: self.points(&idx),
            specs: idx.iter().map(|&i| self.spec(i)).collect(),
            field,
            params: self.params(),
            options: SimulationOptions::default(),
        }
    }

    /// Whole team as ground robots at the ground speed.
    pub fn ground_only_config(&self, field: ImportanceField) -> SimulationConfig {
        let speed = self.resolved_dropped_speed();
        let mut cfg = self.single_layer_config(field);
        for s in &mut cfg.specs {
            s.layer = Layer::Ground;
            s.max_speed = speed;
        }
        cfg
    }

    /// Drones form the aerial layer, the rest the ground layer. Coincident
    /// starts are separated within each layer.
    pub fn layered_config(&self, field: ImportanceField) -> LayeredConfig {
        let (aerial, ground): (Vec<usize>, Vec<usize>) =
            (0..self.x_i.len()).partition(|&i| self.agent_type[i] == AgentKind::Drone);
        LayeredConfig {
            aerial_positions: self.points(&aerial),
            aerial_specs: aerial.iter().map(|&i| self.spec(i)).collect(),
            ground_positions: self.points(&ground),
            ground_specs: ground.iter().map(|&i| self.spec(i)).collect(),
            dropped_speed: self.resolved_dropped_speed(),
            field,
            params: self.params(),
            t_final: self.t_final,
            output_samples: self.timesteps,
            options: SimulationOptions::default(),
        }
    }
}
