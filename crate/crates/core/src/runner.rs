//! Executes experiments and writes their output files.
//!
//! Each experiment gets its own directory under the output root with
//! `config.echo.json`, `loss.csv`, `agents.csv`, `events.json`,
//! `layers.json`, `summary.json`, `loss.svg` and `velocity.svg`.
//! Sweeps additionally write `sweep.csv`. Scenarios run with several methods
//! get `reports/<scenario>/report.csv`, rebuilt from the summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{AgentKind, Experiment, ExperimentFile, Method};
use crate::control::{AgentSpec, Layer};
use crate::geometry::{bounded_voronoi, Point};
use crate::metrics::{
    detect_trapping, ComparisonReport, MethodSummary, ThresholdTime, TrappingEvent,
    TrappingThresholds,
};
use crate::ode::SolveStats;
use crate::plot::{line_chart, Series};
use crate::simulation::{integrate, Trajectory};
use crate::twolayer::{run_two_layer, DropEvent, TwoLayerResult};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Simulation(#[from] crate::Error),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("reading {path}: {message}")]
    Summary { path: PathBuf, message: String },
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), RunError> {
    fs::write(path, contents).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("output serializes");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub aerial_speed: f64,
    pub drop: DropEvent,
    pub threshold_times: Vec<ThresholdTime>,
    pub final_loss_pct: f64,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub experiment: String,
    pub scenario: String,
    pub method: String,
    pub trapping_thresholds: TrappingThresholds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<MethodSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<SweepPoint>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// One tessellation for the whole run.
    Single,
    Aerial,
    GroundPreDrop,
    Merged,
}

impl Phase {
    fn label(self) -> &'static str {
        match self {
            Phase::Single => "single",
            Phase::Aerial => "aerial",
            Phase::GroundPreDrop => "ground_pre_drop",
            Phase::Merged => "merged",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct PhaseEvent {
    phase: Phase,
    #[serde(flatten)]
    event: TrappingEvent,
}

#[derive(Debug, Serialize)]
struct TrappingRecord {
    thresholds: TrappingThresholds,
    median_speed: f64,
    count: usize,
    events: Vec<PhaseEvent>,
}

#[derive(Debug, Serialize)]
struct EventsFile<'a> {
    experiment: &'a str,
    method: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    drop: Option<&'a DropEvent>,
    trapping: TrappingRecord,
    loss_thresholds: &'a [ThresholdTime],
    solver: BTreeMap<&'static str, SolveStats>,
}

#[derive(Debug, Serialize)]
struct LayerSnapshot {
    label: String,
    t: f64,
    layer: &'static str,
    /// Agent indices into the experiment's `x_i` list.
    agents: Vec<usize>,
    positions: Vec<Point>,
    cells: Vec<Vec<Point>>,
}

/// One trajectory piece together with the `x_i` index of each of its agents.
struct Piece<'a> {
    phase: Phase,
    traj: &'a Trajectory,
    ids: Vec<usize>,
}

fn layer_name(l: Layer) -> &'static str {
    match l {
        Layer::Ground => "ground",
        Layer::Aerial => "aerial",
        Layer::Dropped => "dropped",
    }
}

fn loss_csv(times: &[f64], loss: &[f64]) -> String {
    let mut s = String::from("t,H_norm\n");
    for (t, h) in times.iter().zip(loss) {
        let _ = writeln!(s, "{t},{h}");
    }
    s
}

/// Long format, one row per sample and agent. Rows are ordered by phase
/// start time, then sample, then agent.
fn agents_csv(pieces: &[Piece]) -> String {
    let mut s = String::from("t,phase,agent,layer,x,y,speed,centroid_distance,weighted_area\n");
    let mut rows: Vec<(f64, usize, usize, String)> = Vec::new();
    for (order, p) in pieces.iter().enumerate() {
        for k in 0..p.traj.len() {
            for (j, &id) in p.ids.iter().enumerate() {
                let pos = p.traj.positions[k][j];
                let line = format!(
                    "{},{},{},{},{},{},{},{},{}",
                    p.traj.sample_times[k],
                    p.phase.label(),
                    id,
                    layer_name(p.traj.specs[j].layer),
                    pos.x,
                    pos.y,
                    p.traj.velocities[k][j].norm(),
                    p.traj.centroid_distance(k, j),
                    p.traj.weighted_area[k][j]
                );
                rows.push((p.traj.sample_times[k], order, id, line));
            }
        }
    }
    // stable sort keeps per-phase sample order for equal times
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for (_, _, _, line) in rows {
        s.push_str(&line);
        s.push('\n');
    }
    s
}

fn velocity_series(pieces: &[Piece]) -> Vec<Series> {
    let mut by_agent: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    let mut labels: BTreeMap<usize, &'static str> = BTreeMap::new();
    for p in pieces {
        for k in 0..p.traj.len() {
            for (j, &id) in p.ids.iter().enumerate() {
                by_agent
                    .entry(id)
                    .or_default()
                    .push((p.traj.sample_times[k], p.traj.velocities[k][j].norm()));
                labels
                    .entry(id)
                    .or_insert(layer_name(p.traj.specs[j].layer));
            }
        }
    }
    by_agent
        .into_iter()
        .map(|(id, mut pts)| {
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series {
                label: format!("agent {id} ({})", labels[&id]),
                points: pts,
            }
        })
        .collect()
}

fn snapshot(
    label: &str,
    t: f64,
    layer: &'static str,
    ids: &[usize],
    positions: &[Point],
    exp: &Experiment,
) -> Result<LayerSnapshot, RunError> {
    let tess = bounded_voronoi(positions, &exp.region())?;
    Ok(LayerSnapshot {
        label: label.to_string(),
        t,
        layer,
        agents: ids.to_vec(),
        positions: positions.to_vec(),
        cells: tess.cells.iter().map(|c| c.vertices().to_vec()).collect(),
    })
}

fn trapping_for(
    pieces: &[Piece],
    team: &[AgentSpec],
    deadband: f64,
    th: &TrappingThresholds,
) -> TrappingRecord {
    let mut events = Vec::new();
    for p in pieces {
        for mut e in detect_trapping(p.traj, team, deadband, th) {
            e.agent = p.ids[e.agent];
            events.push(PhaseEvent {
                phase: p.phase,
                event: e,
            });
        }
    }
    TrappingRecord {
        thresholds: *th,
        median_speed: crate::metrics::median_speed(team),
        count: events.len(),
        events,
    }
}

struct Ctx<'a> {
    name: &'a str,
    exp: &'a Experiment,
    dir: PathBuf,
}

impl Ctx<'_> {
    fn file(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn summary(
        &self,
        summary: Option<MethodSummary>,
        sweep: Option<Vec<SweepPoint>>,
    ) -> RunSummary {
        RunSummary {
            experiment: self.name.to_string(),
            scenario: self.exp.scenario_name.clone(),
            method: self.exp.function_to_run.label().to_string(),
            trapping_thresholds: self.exp.trapping_thresholds(),
            summary,
            sweep,
        }
    }
}

/// Runs one experiment and writes its directory under `out_dir`.
pub fn run_experiment(
    name: &str,
    exp: &Experiment,
    out_dir: &Path,
) -> Result<RunSummary, RunError> {
    let dir = out_dir.join(name);
    fs::create_dir_all(&dir).map_err(|source| RunError::Io {
        path: dir.clone(),
        source,
    })?;
    let echo = ExperimentFile {
        all_experiments: BTreeMap::from([(name.to_string(), exp.clone())]),
    }
    .echo();
    let ctx = Ctx { name, exp, dir };
    write(&ctx.file("config.echo.json"), echo)?;
    let field = exp.field()?;
    log::info!(
        "{name}: {} with {} agents, normalization constant {:.6e}",
        exp.function_to_run.label(),
        exp.x_i.len(),
        field.normalization_constant()
    );
    let summary = match exp.function_to_run {
        Method::GroundOnly => {
            let cfg = exp.ground_only_config(field);
            let traj = integrate(&cfg)?;
            single_outputs(&ctx, &traj, &cfg.specs)?
        }
        Method::SingleLayer | Method::ImportancedVoronoiTimeplot => {
            let cfg = exp.single_layer_config(field);
            let traj = integrate(&cfg)?;
            single_outputs(&ctx, &traj, &cfg.specs)?
        }
        Method::TwoLayer => {
            let cfg = exp.layered_config(field);
            let res = run_two_layer(&cfg)?;
            two_layer_outputs(&ctx, &res)?
        }
        Method::SensitivitySweep => sweep_outputs(&ctx, field)?,
    };
    write(&ctx.file("summary.json"), to_json(&summary))?;
    Ok(summary)
}

fn single_outputs(
    ctx: &Ctx,
    traj: &Trajectory,
    team: &[AgentSpec],
) -> Result<RunSummary, RunError> {
    let exp = ctx.exp;
    let ids: Vec<usize> = (0..traj.specs.len()).collect();
    let pieces = [Piece {
        phase: Phase::Single,
        traj,
        ids: ids.clone(),
    }];
    let thresholds = exp.loss_thresholds();
    let trapping = trapping_for(
        &pieces,
        team,
        exp.deadband_distance,
        &exp.trapping_thresholds(),
    );
    let summary = MethodSummary::from_series(
        exp.function_to_run.label(),
        &traj.sample_times,
        &traj.loss_norm,
        &thresholds,
        [traj],
        trapping.count,
    );
    write(
        &ctx.file("loss.csv"),
        loss_csv(&traj.sample_times, &traj.loss_norm),
    )?;
    write(&ctx.file("agents.csv"), agents_csv(&pieces))?;
    let events = EventsFile {
        experiment: ctx.name,
        method: exp.function_to_run.label(),
        drop: None,
        trapping,
        loss_thresholds: &summary.threshold_times,
        solver: BTreeMap::from([("single", traj.stats)]),
    };
    write(&ctx.file("events.json"), to_json(&events))?;
    let last = traj.len() - 1;
    let layers = vec![
        snapshot("initial", 0.0, "team", &ids, &traj.positions[0], exp)?,
        snapshot(
            "final",
            traj.sample_times[last],
            "team",
            &ids,
            &traj.positions[last],
            exp,
        )?,
    ];
    write(&ctx.file("layers.json"), to_json(&layers))?;
    charts(
        ctx,
        vec![Series {
            label: exp.function_to_run.label().into(),
            points: traj
                .sample_times
                .iter()
                .copied()
                .zip(traj.loss_norm.iter().copied())
                .collect(),
        }],
        velocity_series(&pieces),
    )?;
    Ok(ctx.summary(Some(summary), None))
}

fn charts(ctx: &Ctx, loss: Vec<Series>, velocity: Vec<Series>) -> Result<(), RunError> {
    let title = &ctx.exp.scenario_name;
    write(
        &ctx.file("loss.svg"),
        line_chart(
            &format!("{title}: normalized sensor loss"),
            "t (s)",
            "H / H(0)",
            &loss,
        ),
    )?;
    if !velocity.is_empty() {
        write(
            &ctx.file("velocity.svg"),
            line_chart(
                &format!("{title}: agent speed"),
                "t (s)",
                "speed (m/s)",
                &velocity,
            ),
        )?;
    }
    Ok(())
}

/// `x_i` indices of the ground and aerial layers, in layer order.
fn layer_ids(exp: &Experiment) -> (Vec<usize>, Vec<usize>) {
    let (aerial, ground): (Vec<usize>, Vec<usize>) =
        (0..exp.x_i.len()).partition(|&i| exp.agent_type[i] == AgentKind::Drone);
    (ground, aerial)
}

fn two_layer_pieces<'a>(exp: &Experiment, res: &'a TwoLayerResult) -> Vec<Piece<'a>> {
    let (ground, aerial) = layer_ids(exp);
    let mut pieces = vec![
        Piece {
            phase: Phase::Aerial,
            traj: &res.aerial,
            ids: aerial.clone(),
        },
        Piece {
            phase: Phase::GroundPreDrop,
            traj: &res.ground_pre,
            ids: ground.clone(),
        },
    ];
    if let Some(m) = &res.merged {
        pieces.push(Piece {
            phase: Phase::Merged,
            traj: m,
            ids: [ground, aerial].concat(),
        });
    }
    pieces
}

fn two_layer_outputs(ctx: &Ctx, res: &TwoLayerResult) -> Result<RunSummary, RunError> {
    let exp = ctx.exp;
    let pieces = two_layer_pieces(exp, res);
    let team = exp.team_specs();
    let trapping = trapping_for(
        &pieces,
        &team,
        exp.deadband_distance,
        &exp.trapping_thresholds(),
    );
    let thresholds = exp.loss_thresholds();
    let summary = MethodSummary::from_series(
        exp.function_to_run.label(),
        &res.stitched_times,
        &res.stitched_loss_norm,
        &thresholds,
        pieces.iter().map(|p| p.traj),
        trapping.count,
    );
    write(
        &ctx.file("loss.csv"),
        loss_csv(&res.stitched_times, &res.stitched_loss_norm),
    )?;
    write(&ctx.file("agents.csv"), agents_csv(&pieces))?;
    let mut solver = BTreeMap::from([
        ("aerial", res.aerial.stats),
        ("ground_pre_drop", res.ground_pre.stats),
    ]);
    if let Some(m) = &res.merged {
        solver.insert("merged", m.stats);
    }
    let events = EventsFile {
        experiment: ctx.name,
        method: exp.function_to_run.label(),
        drop: Some(&res.drop),
        trapping,
        loss_thresholds: &summary.threshold_times,
        solver,
    };
    write(&ctx.file("events.json"), to_json(&events))?;

    let t_drop = res.drop.t_drop;
    let mut layers = Vec::new();
    for p in &pieces[..2] {
        let layer = if p.phase == Phase::Aerial {
            "aerial"
        } else {
            "ground"
        };
        layers.push(snapshot(
            "initial",
            0.0,
            layer,
            &p.ids,
            &p.traj.positions[0],
            exp,
        )?);
        layers.push(snapshot(
            "pre_drop",
            t_drop,
            layer,
            &p.ids,
            p.traj.final_positions(),
            exp,
        )?);
    }
    if let Some(m) = &res.merged {
        let ids = &pieces[2].ids;
        layers.push(snapshot(
            "post_drop",
            t_drop,
            "ground",
            ids,
            &m.positions[0],
            exp,
        )?);
        layers.push(snapshot(
            "final",
            *m.sample_times.last().unwrap_or(&t_drop),
            "ground",
            ids,
            m.final_positions(),
            exp,
        )?);
    }
    write(&ctx.file("layers.json"), to_json(&layers))?;
    charts(
        ctx,
        vec![Series {
            label: "two_layer".into(),
            points: res
                .stitched_times
                .iter()
                .copied()
                .zip(res.stitched_loss_norm.iter().copied())
                .collect(),
        }],
        velocity_series(&pieces),
    )?;
    Ok(ctx.summary(Some(summary), None))
}

fn sweep_outputs(
    ctx: &Ctx,
    field: crate::importance::ImportanceField,
) -> Result<RunSummary, RunError> {
    let exp = ctx.exp;
    let base = exp.layered_config(field);
    let thresholds = exp.loss_thresholds();
    let results: Vec<(f64, TwoLayerResult)> = exp
        .sweep_values()
        .into_par_iter()
        .map(|v| {
            let mut cfg = base.clone();
            for s in &mut cfg.aerial_specs {
                s.max_speed = v;
            }
            run_two_layer(&cfg).map(|r| (v, r))
        })
        .collect::<crate::Result<_>>()?;

    let mut csv = String::from("aerial_speed,t_drop,trigger");
    for th in &thresholds {
        let _ = write!(csv, ",time_to_{th}");
    }
    csv.push_str(",final_loss_pct\n");
    let mut loss = String::from("aerial_speed,t,H_norm\n");
    let mut points = Vec::new();
    let mut series = Vec::new();
    for (v, r) in &results {
        let tt: Vec<ThresholdTime> = thresholds
            .iter()
            .map(|&threshold| ThresholdTime {
                threshold,
                time: r.time_to_threshold(threshold),
            })
            .collect();
        let final_loss_pct = 100.0 * r.stitched_loss_norm.last().copied().unwrap_or(f64::NAN);
        let _ = write!(csv, "{v},{},{:?}", r.drop.t_drop, r.drop.trigger);
        for t in &tt {
            match t.time {
                Some(x) => {
                    let _ = write!(csv, ",{x}");
                }
                None => csv.push(','),
            }
        }
        let _ = writeln!(csv, ",{final_loss_pct}");
        for (t, h) in r.stitched_times.iter().zip(&r.stitched_loss_norm) {
            let _ = writeln!(loss, "{v},{t},{h}");
        }
        series.push(Series {
            label: format!("S_aerial = {v} m/s"),
            points: r
                .stitched_times
                .iter()
                .copied()
                .zip(r.stitched_loss_norm.iter().copied())
                .collect(),
        });
        points.push(SweepPoint {
            aerial_speed: *v,
            drop: r.drop.clone(),
            threshold_times: tt,
            final_loss_pct,
        });
    }
    write(&ctx.file("sweep.csv"), csv)?;
    write(&ctx.file("loss.csv"), loss)?;
    write(&ctx.file("events.json"), to_json(&points))?;
    charts(ctx, series, Vec::new())?;
    Ok(ctx.summary(None, Some(points)))
}

/// Result of one experiment within a batch.
#[derive(Debug)]
pub struct Outcome {
    pub experiment: String,
    pub result: Result<RunSummary, RunError>,
}

/// Runs the selected experiments on up to `jobs` threads, then rebuilds the
/// comparison reports under `out_dir`.
pub fn run_all(
    file: &ExperimentFile,
    out_dir: &Path,
    jobs: usize,
    only: Option<&str>,
) -> Result<Vec<Outcome>, RunError> {
    fs::create_dir_all(out_dir).map_err(|source| RunError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let selected: Vec<(&String, &Experiment)> = file
        .all_experiments
        .iter()
        .filter(|(n, _)| only.is_none_or(|o| o == n.as_str()))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    let outcomes: Vec<Outcome> = pool.install(|| {
        selected
            .par_iter()
            .map(|(name, exp)| {
                let result = run_experiment(name, exp, out_dir);
                if let Err(e) = &result {
                    log::error!("{name}: {e}");
                    let _ = fs::write(
                        out_dir.join(name.as_str()).join("error.txt"),
                        format!("{e}\n"),
                    );
                }
                Outcome {
                    experiment: (*name).clone(),
                    result,
                }
            })
            .collect()
    });
    rebuild_reports(out_dir)?;
    Ok(outcomes)
}

/// File-system friendly scenario name.
pub fn slug(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    let t = out.trim_matches('_');
    if t.is_empty() {
        "scenario".into()
    } else {
        t.into()
    }
}

const METHOD_ORDER: [&str; 3] = ["ground_only", "single_layer", "two_layer"];

/// Reads every `*/summary.json` under `out_dir` and writes
/// `reports/<scenario>/report.csv` for each scenario with two or more method
/// runs. Returns the reports written.
pub fn rebuild_reports(out_dir: &Path) -> Result<Vec<ComparisonReport>, RunError> {
    let mut summaries: Vec<RunSummary> = Vec::new();
    let entries = fs::read_dir(out_dir).map_err(|source| RunError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path().join("summary.json"))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    for path in paths {
        let text = fs::read_to_string(&path).map_err(|source| RunError::Io {
            path: path.clone(),
            source,
        })?;
        let s: RunSummary = serde_json::from_str(&text).map_err(|e| RunError::Summary {
            path: path.clone(),
            message: e.to_string(),
        })?;
        summaries.push(s);
    }

    let mut groups: BTreeMap<String, Vec<RunSummary>> = BTreeMap::new();
    for s in summaries.into_iter().filter(|s| s.summary.is_some()) {
        groups.entry(s.scenario.clone()).or_default().push(s);
    }
    let mut reports = Vec::new();
    for (scenario, mut runs) in groups {
        if runs.len() < 2 {
            continue;
        }
        let rank = |m: &str| {
            METHOD_ORDER
                .iter()
                .position(|x| *x == m)
                .unwrap_or(METHOD_ORDER.len())
        };
        runs.sort_by(|a, b| {
            rank(&a.method)
                .cmp(&rank(&b.method))
                .then(a.experiment.cmp(&b.experiment))
        });
        let duplicated = |m: &str| runs.iter().filter(|r| r.method == m).count() > 1;
        let methods = runs
            .iter()
            .map(|r| {
                let mut s = r.summary.clone().expect("filtered");
                if duplicated(&r.method) {
                    s.method = r.experiment.clone();
                }
                s
            })
            .collect();
        let report = ComparisonReport {
            scenario: scenario.clone(),
            thresholds: runs[0].trapping_thresholds,
            methods,
        };
        let dir = out_dir.join("reports").join(slug(&scenario));
        fs::create_dir_all(&dir).map_err(|source| RunError::Io {
            path: dir.clone(),
            source,
        })?;
        write(&dir.join("report.csv"), report.to_csv())?;
        reports.push(report);
    }
    Ok(reports)
}
