//! Multi-trial benchmark runs, their configuration and their outputs.

mod config;
mod output;
pub mod tools;

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scenarios::{
    checkpoint_schedule, evaluate_checkpoints, run_method, MethodKind, MethodRun, Optimum, Scenario, TrialSeeds,
};
use crate::seed::derive_seed;

pub use config::{apply_override, parse_checkpoints, parse_override, RunConfig, ScenarioSpec};
pub use output::{
    read_records, read_trajectories, summarize, write_trajectories, MethodSummary, RunRecord, Stat, Summary,
    SummaryPoint, RECORDS_HEADER,
};

/// Fraction of failed trials above which a run is aborted.
pub const MAX_FAILURE_RATE: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub method: String,
    pub kind: String,
    pub message: String,
}

/// Reference quantities shared by every trial of a run.
#[derive(Clone, Debug, serde::Serialize)]
pub struct Reference {
    pub optimal_cost: f64,
    pub optimal_cost_se: f64,
    /// Reduced model-task Hessian at the true parameters.
    pub m_star: Vec<Vec<f64>>,
}

pub struct BenchReport {
    pub config: RunConfig,
    pub records: Vec<RunRecord>,
    pub failures: Vec<TrialFailure>,
    pub summary: Summary,
    pub reference: Reference,
    /// Live episodes consumed per `(trial, method)` cell that completed.
    pub live_episodes: Vec<(usize, MethodKind, usize)>,
}

struct Cell {
    trial: usize,
    method: MethodKind,
    outcome: Result<(Vec<RunRecord>, usize)>,
}

/// `π_*(A_*)` with its cost and `M_* = reduce(H(A_*))`.
pub fn reference_quantities(scenario: &Scenario, master: u64) -> Result<(Optimum, DMatrix<f64>)> {
    let optimum = scenario.optimum(derive_seed(master, &["optimum"]))?;
    let m_star = scenario.reduced_hessian_at(scenario.truth.a(), derive_seed(master, &["hessian-star"]))?;
    Ok((optimum, m_star))
}

/// Runs every `(trial, method)` cell and writes the outputs when `config.out` is set.
pub fn bench(config: &RunConfig) -> Result<BenchReport> {
    config.validate()?;
    let config = &config.resolved()?;
    let out = config.out.as_deref();
    let scenario = Scenario::new(config.scenario_config()?)?;
    let checkpoints = checkpoint_schedule(&config.checkpoints, scenario.config.warmup_episodes, config.episodes)?;
    let (optimum, m_star) = reference_quantities(&scenario, config.seed)?;
    log::info!(
        "{}: optimal cost {:.6} ± {:.2e}, checkpoints {:?}",
        scenario.name(),
        optimum.cost.mean,
        optimum.cost.se,
        checkpoints
    );

    let cells: Vec<(usize, MethodKind)> = (0..config.trials)
        .flat_map(|t| config.methods.iter().map(move |&m| (t, m)))
        .collect();
    let traj_dir = match (out, config.save_trajectories) {
        (Some(dir), true) => {
            let d = dir.join("trajectories");
            std::fs::create_dir_all(&d)?;
            Some(d)
        }
        _ => None,
    };
    let run_cell = |&(trial, method): &(usize, MethodKind)| -> Cell {
        let seeds = TrialSeeds::new(config.seed, trial);
        let outcome = (|| {
            let start = Instant::now();
            let run = run_method(&scenario, method, config.episodes, &seeds)?;
            check_budget(&run, config.episodes)?;
            if let Some(d) = &traj_dir {
                write_trajectories(&d.join(format!("trial-{trial:04}-{method}.ndjson")), run.live.log())?;
            }
            let run_ms = start.elapsed().as_secs_f64() * 1e3;
            let mut rows = Vec::with_capacity(checkpoints.len());
            for &t in &checkpoints {
                let t0 = Instant::now();
                let rec = evaluate_checkpoints(&scenario, &run, &[t], &m_star, &optimum, &seeds)?.remove(0);
                let wall = if config.timing { run_ms + t0.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
                rows.push(RunRecord {
                    trial,
                    method: method.name().to_string(),
                    episodes: rec.episodes,
                    excess_loss: rec.excess_loss,
                    excess_loss_se: rec.excess_loss_se,
                    frob_error: rec.frob_error,
                    design_score: rec.design_score,
                    wall_ms: wall.round() as u64,
                });
            }
            log::info!("trial {trial} {method} done in {:.1}s", start.elapsed().as_secs_f64());
            Ok((rows, run.live.used()))
        })();
        Cell { trial, method, outcome }
    };

    let results: Vec<Cell> = match config.jobs {
        Some(1) => cells.iter().map(run_cell).collect(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| crate::error::config_err(format!("cannot start {n} worker threads: {e}")))?
            .install(|| cells.par_iter().map(run_cell).collect()),
        None => cells.par_iter().map(run_cell).collect(),
    };

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut live_episodes = Vec::new();
    for cell in results {
        match cell.outcome {
            Ok((rows, used)) => {
                records.extend(rows);
                live_episodes.push((cell.trial, cell.method, used));
            }
            Err(e) => {
                log::warn!("trial {} {} failed: {e}", cell.trial, cell.method);
                failures.push(TrialFailure {
                    trial: cell.trial,
                    method: cell.method.name().to_string(),
                    kind: e.kind().to_string(),
                    message: e.to_string(),
                });
            }
        }
    }
    let mut failed_trials: Vec<usize> = failures.iter().map(|f| f.trial).collect();
    failed_trials.sort_unstable();
    failed_trials.dedup();

    let summary = summarize(&records);
    let reference = Reference {
        optimal_cost: optimum.cost.mean,
        optimal_cost_se: optimum.cost.se,
        m_star: m_star.row_iter().map(|r| r.iter().copied().collect()).collect(),
    };
    let report = BenchReport {
        config: config.clone(),
        records,
        failures,
        summary,
        reference,
        live_episodes,
    };
    if let Some(dir) = out {
        output::write_all(dir, &report)?;
    }
    if failed_trials.len() as f64 > MAX_FAILURE_RATE * config.trials as f64 {
        let first = &report.failures[0];
        return Err(Error::Trial {
            trial: first.trial,
            method: first.method.clone(),
            source: Box::new(Error::Config(format!(
                "{} of {} trials failed, first: {}",
                failed_trials.len(),
                config.trials,
                first.message
            ))),
        });
    }
    Ok(report)
}

fn check_budget(run: &MethodRun, granted: usize) -> Result<()> {
    if run.live.used() != granted {
        return Err(crate::error::config_err(format!(
            "method {} used {} live episodes of {granted}",
            run.method,
            run.live.used()
        )));
    }
    Ok(())
}
