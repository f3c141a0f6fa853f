use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use covsim_core::config::ExperimentFile;
use covsim_core::runner::{rebuild_reports, run_all};

/// Importance-weighted Voronoi coverage experiments.
#[derive(Parser)]
#[command(name = "covsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiments of a config file.
    Run {
        config: PathBuf,
        /// Output directory; one subdirectory per experiment.
        #[arg(long)]
        out: PathBuf,
        /// Experiments to run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Run only the named experiment.
        #[arg(long)]
        only: Option<String>,
    },
    /// Parse and validate a config file without running it.
    Validate { config: PathBuf },
    /// Rebuild comparison reports from a run directory.
    Report { dir: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("COVSIM_LOG", "info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { config } => {
            let file = ExperimentFile::load(&config)?;
            println!(
                "{}: {} experiment(s) valid",
                config.display(),
                file.all_experiments.len()
            );
            for (name, e) in &file.all_experiments {
                println!(
                    "  {name}: {} agents, {} ({})",
                    e.x_i.len(),
                    e.function_to_run.label(),
                    e.scenario_name
                );
            }
            Ok(())
        }
        Command::Run {
            config,
            out,
            jobs,
            only,
        } => {
            let file = ExperimentFile::load(&config)?;
            if let Some(name) = &only {
                if !file.all_experiments.contains_key(name) {
                    bail!("no experiment named '{name}' in {}", config.display());
                }
            }
            let outcomes = run_all(&file, &out, jobs, only.as_deref())?;
            let mut failed = 0;
            for o in &outcomes {
                match &o.result {
                    Ok(s) => {
                        if let Some(m) = &s.summary {
                            let times: Vec<String> = m
                                .threshold_times
                                .iter()
                                .map(|t| match t.time {
                                    Some(x) => format!("{}: {x:.1} s", t.threshold),
                                    None => format!("{}: not reached", t.threshold),
                                })
                                .collect();
                            println!(
                                "{}: ok ({}; final loss {:.2}%)",
                                o.experiment,
                                times.join(", "),
                                m.final_loss_pct
                            );
                        } else {
                            println!("{}: ok", o.experiment);
                        }
                    }
                    Err(e) => {
                        failed += 1;
                        println!("{}: FAILED: {e}", o.experiment);
                    }
                }
            }
            if failed > 0 {
                bail!("{failed} of {} experiment(s) failed", outcomes.len());
            }
            Ok(())
        }
        Command::Report { dir } => {
            let reports = rebuild_reports(&dir)
                .with_context(|| format!("rebuilding reports in {}", dir.display()))?;
            if reports.is_empty() {
                println!(
                    "no scenario in {} has more than one method run",
                    dir.display()
                );
            }
            for r in reports {
                println!("{}\n{}", r.scenario, r.to_table());
            }
            Ok(())
        }
    }
}
