use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::BenchReport;
use crate::dynamics::Trajectory;
use crate::error::{config_err, Result};

pub const RECORDS_HEADER: &str = "trial,method,episodes,excess_loss,excess_loss_se,frob_error,design_score,wall_ms";

/// One row of `records.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub trial: usize,
    pub method: String,
    pub episodes: usize,
    pub excess_loss: f64,
    pub excess_loss_se: f64,
    pub frob_error: f64,
    pub design_score: f64,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub median: f64,
    pub se: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Stat { mean: f64::NAN, median: f64::NAN, se: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
        let se = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Stat { mean, median, se }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryPoint {
    pub episodes: usize,
    pub n: usize,
    pub excess_loss: Stat,
    pub frob_error: Stat,
    pub design_score: Stat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub checkpoints: Vec<SummaryPoint>,
}

/// Per-method, per-checkpoint aggregates of the records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub methods: Vec<MethodSummary>,
}

impl Summary {
    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == name)
    }
}

impl MethodSummary {
    pub fn at(&self, episodes: usize) -> Option<&SummaryPoint> {
        self.checkpoints.iter().find(|p| p.episodes == episodes)
    }
}

/// Groups by method in first-seen order, then by episode count.
pub fn summarize(records: &[RunRecord]) -> Summary {
    let mut methods: Vec<String> = Vec::new();
    for r in records {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
    }
    let methods = methods
        .into_iter()
        .map(|method| {
            let mine: Vec<&RunRecord> = records.iter().filter(|r| r.method == method).collect();
            let mut eps: Vec<usize> = mine.iter().map(|r| r.episodes).collect();
            eps.sort_unstable();
            eps.dedup();
            let checkpoints = eps
                .into_iter()
                .map(|e| {
                    let at: Vec<&&RunRecord> = mine.iter().filter(|r| r.episodes == e).collect();
                    let col = |f: fn(&RunRecord) -> f64| at.iter().map(|r| f(r)).collect::<Vec<_>>();
                    SummaryPoint {
                        episodes: e,
                        n: at.len(),
                        excess_loss: Stat::of(&col(|r| r.excess_loss)),
                        frob_error: Stat::of(&col(|r| r.frob_error)),
                        design_score: Stat::of(&col(|r| r.design_score)),
                    }
                })
                .collect();
            MethodSummary { method, checkpoints }
        })
        .collect();
    Summary { methods }
}

pub(super) fn write_all(dir: &Path, report: &BenchReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("records.csv"))?;
    if report.records.is_empty() {
        w.write_record(RECORDS_HEADER.split(','))?;
    }
    for r in &report.records {
        w.serialize(r)?;
    }
    w.flush()?;
    write_json(&dir.join("summary.json"), &report.summary)?;
    write_json(&dir.join("resolved-config.json"), &report.config)?;
    write_json(&dir.join("reference.json"), &report.reference)?;
    write_json(&dir.join("failures.json"), &report.failures)?;
    Ok(())
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

#[derive(Serialize, Deserialize)]
struct EpisodeLine {
    episode: usize,
    states: Vec<Vec<f64>>,
    inputs: Vec<Vec<f64>>,
}

/// One JSON object per line with `states` and `inputs` as nested arrays.
pub fn write_trajectories(path: &Path, log: &[Trajectory<f64>]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    let rows = |v: &[DVector<f64>]| v.iter().map(|x| x.as_slice().to_vec()).collect::<Vec<_>>();
    for (i, t) in log.iter().enumerate() {
        let line = EpisodeLine { episode: i, states: rows(&t.states), inputs: rows(&t.inputs) };
        serde_json::to_writer(&mut f, &line)?;
        writeln!(f)?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory<f64>>> {
    let f = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ep: EpisodeLine = serde_json::from_str(&line)
            .map_err(|e| config_err(format!("{}:{}: {e}", path.display(), i + 1)))?;
        let t = Trajectory {
            states: ep.states.iter().map(|s| DVector::from_column_slice(s)).collect(),
            inputs: ep.inputs.iter().map(|u| DVector::from_column_slice(u)).collect(),
        };
        if !t.is_consistent() {
            return Err(config_err(format!("{}:{}: states must number inputs + 1", path.display(), i + 1)));
        }
        out.push(t);
    }
    Ok(out)
}
