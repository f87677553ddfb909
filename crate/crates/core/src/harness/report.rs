//! Trial log files, run summaries and the metrics report.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ::log::{info, warn};
use serde::{Deserialize, Serialize};

use super::scenario::Scenario;
use super::sim::{MapperSummary, SimulationRun};
use crate::error::{Error, Result};
use crate::metrics::{task_metrics, MetricsReport, TrialLog};

pub const RUN_SCHEMA: &str = "run.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub completed: bool,
    pub aborted: Option<String>,
    pub ticks: usize,
    pub phase_path: Vec<String>,
    pub wall_seconds: f64,
}

/// `run.json`: the scenario with every default filled in, the seed, the
/// force mapper fit and per-trial outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema: String,
    pub seed: u64,
    pub mapper: MapperSummary,
    pub trials: Vec<TrialSummary>,
    pub scenario: Scenario,
}

pub fn trial_csv_name(trial: usize) -> String {
    format!("trial_{trial:03}.csv")
}

pub fn transitions_csv_name(trial: usize) -> String {
    format!("trial_{trial:03}_transitions.csv")
}

/// Writes `<dir>/<task>/trial_NNN.csv`, the transition files and
/// `run.json`; returns the task directory.
pub fn write_run(run: &SimulationRun, dir: &Path) -> Result<PathBuf> {
    let task_dir = dir.join(&run.scenario.task);
    fs::create_dir_all(&task_dir)?;
    for t in &run.trials {
        let mut w = BufWriter::new(File::create(task_dir.join(trial_csv_name(t.log.trial)))?);
        t.log.write_csv(&mut w)?;
        w.flush()?;
        let mut w = BufWriter::new(File::create(task_dir.join(transitions_csv_name(t.log.trial)))?);
        t.log.write_transitions(&mut w)?;
        w.flush()?;
    }
    let summary = RunSummary {
        schema: RUN_SCHEMA.into(),
        seed: run.seed,
        mapper: run.mapper_report.clone(),
        trials: run
            .trials
            .iter()
            .map(|t| TrialSummary {
                trial: t.log.trial,
                completed: t.log.completed,
                aborted: t.aborted.clone(),
                ticks: t.log.records.len(),
                phase_path: t.log.phase_path().iter().map(|p| p.as_str().to_owned()).collect(),
                wall_seconds: t.wall_seconds,
            })
            .collect(),
        scenario: run.scenario.clone(),
    };
    fs::write(task_dir.join("run.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(task_dir)
}

/// Metrics over the completed trials of each task. Tasks with fewer than
/// two completed trials are skipped with a warning.
pub fn build_report(tasks: &[(String, Vec<TrialLog>, f64)]) -> Result<MetricsReport> {
    let mut out = Vec::new();
    let mut diagonal = 0.0f64;
    for (task, logs, diag) in tasks {
        let done: Vec<TrialLog> = logs.iter().filter(|l| l.completed).cloned().collect();
        if done.len() < logs.len() {
            warn!("{task}: {} of {} trials did not complete", logs.len() - done.len(), logs.len());
        }
        if done.len() < 2 {
            warn!("{task}: fewer than two completed trials, left out of the report");
            continue;
        }
        let mut m = task_metrics(task, &done, *diag)?;
        m.trials = logs.len();
        out.push(m);
        diagonal = diagonal.max(*diag);
    }
    if out.is_empty() {
        return Err(Error::EmptyReport);
    }
    MetricsReport::new(out, diagonal)
}

/// Writes all runs and `report.txt` / `report.json` under `dir`.
pub fn emit_report(runs: &[SimulationRun], dir: &Path) -> Result<MetricsReport> {
    let mut tasks = Vec::new();
    for run in runs {
        let task_dir = write_run(run, dir)?;
        info!("wrote {}", task_dir.display());
        tasks.push((run.scenario.task.clone(), run.logs(), run.scenario.workspace.diagonal()));
    }
    let report = build_report(&tasks)?;
    write_report(&report, dir)?;
    Ok(report)
}

pub fn write_report(report: &MetricsReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.txt"), report.to_table())?;
    fs::write(dir.join("report.json"), report.to_json()?)?;
    Ok(())
}

/// Reads every task directory under `dir` (those holding a `run.json`).
pub fn read_logs(dir: &Path) -> Result<Vec<(String, Vec<TrialLog>, f64)>> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("run.json").is_file())
        .collect();
    entries.sort();
    let mut out = Vec::new();
    for task_dir in entries {
        let summary: RunSummary = serde_json::from_reader(BufReader::new(File::open(task_dir.join("run.json"))?))?;
        if summary.schema != RUN_SCHEMA {
            return Err(Error::LogFormat(format!("{}: schema {}", task_dir.display(), summary.schema)));
        }
        let task = summary.scenario.task.clone();
        let mut logs = Vec::new();
        for t in &summary.trials {
            let path = task_dir.join(trial_csv_name(t.trial));
            let mut log = TrialLog::read_csv(BufReader::new(File::open(&path)?), &task, t.trial)
                .map_err(|e| Error::LogFormat(format!("{}: {e}", path.display())))?;
            log.transitions = TrialLog::read_transitions(BufReader::new(File::open(
                task_dir.join(transitions_csv_name(t.trial)),
            )?))?;
            log.completed = t.completed;
            logs.push(log);
        }
        out.push((task, logs, summary.scenario.workspace.diagonal()));
    }
    if out.is_empty() {
        return Err(Error::EmptyReport);
    }
    Ok(out)
}
