//! The five trial-level evaluation metrics and their report.

pub mod log;

use std::fmt::Write as _;

use ::log::warn;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsm::Phase;

pub use self::log::{jaw_token, validate_log, LogBounds, Record, TrialLog, CSV_HEADER, TRANSITION_HEADER};

pub const REPORT_SCHEMA: &str = "report.v1";
/// Follower speed (m/s) that counts as a response.
pub const ONSET_SPEED: f64 = 1e-3;
/// Samples per time-normalized trajectory.
pub const RESAMPLE_N: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(Self { mean, std })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproachAdaptation {
    pub dr: MeanStd,
    pub dtheta: MeanStd,
    pub trials: usize,
}

/// Distance from the base origin and azimuth about the base `z` axis.
pub fn polar(p: &Vector3<f64>) -> (f64, f64) {
    (p.norm(), p.y.atan2(p.x))
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let r = (a + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if r == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        r
    }
}

/// Last record of the first run of `phase`.
fn end_of_first(log: &TrialLog, phase: Phase) -> Option<&Record> {
    let start = log.records.iter().position(|r| r.phase == phase)?;
    let len = log.records[start..].iter().take_while(|r| r.phase == phase).count();
    Some(&log.records[start + len - 1])
}

/// Per trial `(|dr|, |dtheta|)` between the end of the first Homing and the
/// end of the first PreGrasp; `None` when a phase is missing.
pub fn approach_deltas(log: &TrialLog) -> Option<(f64, f64)> {
    let home = end_of_first(log, Phase::Homing)?;
    let pre = end_of_first(log, Phase::PreGrasp)?;
    let (r0, a0) = polar(&home.ee_position());
    let (r1, a1) = polar(&pre.ee_position());
    Some(((r1 - r0).abs(), wrap_angle(a1 - a0).abs()))
}

pub fn approach_adaptation(trials: &[TrialLog]) -> Result<ApproachAdaptation> {
    let mut dr = Vec::new();
    let mut dtheta = Vec::new();
    for log in trials {
        match approach_deltas(log) {
            Some((r, a)) => {
                dr.push(r);
                dtheta.push(a);
            }
            None => warn!("trial {} of {} has no homing/pre-grasp pair; excluded", log.trial, log.task),
        }
    }
    if dr.len() < 2 {
        return Err(Error::InvalidInput("approach adaptation needs two trials with homing and pre-grasp".into()));
    }
    Ok(ApproachAdaptation {
        dr: MeanStd::of(&dr).unwrap_or(MeanStd { mean: 0.0, std: 0.0 }),
        dtheta: MeanStd::of(&dtheta).unwrap_or(MeanStd { mean: 0.0, std: 0.0 }),
        trials: dr.len(),
    })
}

/// Largest of the end-effector speed and the jaw speeds entering record `i`.
fn follower_speed(records: &[Record], i: usize) -> f64 {
    if i == 0 {
        return 0.0;
    }
    let (a, b) = (&records[i - 1], &records[i]);
    let dt = b.t - a.t;
    if !(dt > 0.0) {
        return 0.0;
    }
    let ee = (b.ee_position() - a.ee_position()).norm();
    let jaw = (0..2)
        .map(|k| (b.jaws[k] - a.jaws[k]).abs())
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    ee.max(jaw) / dt
}

/// Sum over phase changes of the delay until the follower first moves
/// faster than [`ONSET_SPEED`]. A change with no response before the next
/// change contributes nothing.
pub fn coordination_latency(log: &TrialLog) -> f64 {
    let idx = log.transition_indices();
    let mut total = 0.0;
    for (k, &i) in idx.iter().enumerate() {
        let end = idx.get(k + 1).copied().unwrap_or(log.records.len());
        if let Some(j) = (i..end).find(|&j| follower_speed(&log.records, j) > ONSET_SPEED) {
            total += log.records[j].t - log.records[i].t;
        }
    }
    total
}

/// Cumulative jaw contact displacement (mm, both jaws) from the first
/// Manipulate record to the last one; `None` when Manipulate is never
/// reached.
pub fn grasp_correction(log: &TrialLog) -> Option<f64> {
    let first = log.records.iter().position(|r| r.phase == Phase::Manipulate)?;
    let last = log.records.iter().rposition(|r| r.phase == Phase::Manipulate)?;
    let mut sum = 0.0;
    for w in log.records[first..=last].windows(2) {
        for k in 0..2 {
            let d = (w[1].jaws[k] - w[0].jaws[k]).abs();
            if d.is_finite() {
                sum += d;
            }
        }
    }
    Some(sum * 1000.0)
}

/// Records from the start to the last Manipulate record, or the whole trial
/// when Manipulate is never reached.
fn metric_window(log: &TrialLog) -> &[Record] {
    match log.records.iter().rposition(|r| r.phase == Phase::Manipulate) {
        Some(last) => &log.records[..=last],
        None => &log.records,
    }
}

/// End-effector path resampled at `n` evenly spaced normalized times.
pub fn resample(records: &[Record], n: usize) -> Vec<Vector3<f64>> {
    if records.is_empty() || n == 0 {
        return Vec::new();
    }
    let t0 = records[0].t;
    let t1 = records[records.len() - 1].t;
    if records.len() == 1 || !(t1 > t0) || n == 1 {
        return vec![records[0].ee_position(); n];
    }
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for k in 0..n {
        let t = t0 + (t1 - t0) * k as f64 / (n - 1) as f64;
        while j + 2 < records.len() && records[j + 1].t < t {
            j += 1;
        }
        let (a, b) = (&records[j], &records[j + 1]);
        let s = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        out.push(a.ee_position() * (1.0 - s) + b.ee_position() * s);
    }
    out
}

pub fn path_length(path: &[Vector3<f64>]) -> f64 {
    path.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Mean over consecutive trial pairs of RMS pointwise deviation over the
/// mean path length, in percent. Depends on trial order.
pub fn cumulative_posture_deviation(trials: &[TrialLog]) -> Result<f64> {
    if trials.len() < 2 {
        return Err(Error::InvalidInput("posture deviation needs two trials".into()));
    }
    let paths: Vec<Vec<Vector3<f64>>> = trials.iter().map(|l| resample(metric_window(l), RESAMPLE_N)).collect();
    let mut ratios = Vec::new();
    for w in paths.windows(2) {
        let len = (path_length(&w[0]) + path_length(&w[1])) / 2.0;
        if !(len > 0.0) {
            warn!("zero-length trajectory pair excluded from posture deviation");
            continue;
        }
        let ms = w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).norm_squared()).sum::<f64>() / w[0].len() as f64;
        ratios.push(ms.sqrt() / len);
    }
    if ratios.is_empty() {
        return Err(Error::InvalidInput("all trajectory pairs have zero length".into()));
    }
    Ok(100.0 * ratios.iter().sum::<f64>() / ratios.len() as f64)
}

/// `1 - mean pairwise mean pointwise distance / workspace diagonal`,
/// clamped to `[0, 1]`.
pub fn task_repeatability(trials: &[TrialLog], workspace_diagonal: f64) -> Result<f64> {
    if trials.len() < 2 {
        return Err(Error::InvalidInput("repeatability needs two trials".into()));
    }
    if !(workspace_diagonal > 0.0) {
        return Err(Error::InvalidInput("workspace diagonal must be positive".into()));
    }
    let paths: Vec<Vec<Vector3<f64>>> = trials.iter().map(|l| resample(metric_window(l), RESAMPLE_N)).collect();
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..paths.len() {
        for j in i + 1..paths.len() {
            let d = paths[i].iter().zip(&paths[j]).map(|(a, b)| (a - b).norm()).sum::<f64>() / paths[i].len() as f64;
            sum += d;
            pairs += 1;
        }
    }
    Ok((1.0 - sum / pairs as f64 / workspace_diagonal).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub task: String,
    pub trials: usize,
    pub completed: usize,
    pub approach_adaptation: ApproachAdaptation,
    /// Mean over trials, seconds.
    pub coordination_latency_s: f64,
    /// Mean over trials that reached Manipulate, mm.
    pub grasp_correction_mm: Option<f64>,
    pub cumulative_posture_deviation_pct: f64,
    pub task_repeatability: f64,
}

pub fn task_metrics(task: &str, trials: &[TrialLog], workspace_diagonal: f64) -> Result<TaskMetrics> {
    if trials.is_empty() {
        return Err(Error::EmptyReport);
    }
    let latency = trials.iter().map(coordination_latency).sum::<f64>() / trials.len() as f64;
    let corrections: Vec<f64> = trials.iter().filter_map(grasp_correction).collect();
    Ok(TaskMetrics {
        task: task.to_owned(),
        trials: trials.len(),
        completed: trials.iter().filter(|t| t.completed).count(),
        approach_adaptation: approach_adaptation(trials)?,
        coordination_latency_s: latency,
        grasp_correction_mm: MeanStd::of(&corrections).map(|m| m.mean),
        cumulative_posture_deviation_pct: cumulative_posture_deviation(trials)?,
        task_repeatability: task_repeatability(trials, workspace_diagonal)?,
    })
}

pub const DEFINITIONS: [(&str, &str); 5] = [
    (
        "approach_adaptation",
        "|r| and azimuth of the end effector about the base origin, change between the end of homing and the end of pre-grasp; mean and sample std over trials",
    ),
    (
        "coordination_latency",
        "per trial, sum over phase changes of the delay until end-effector or jaw speed exceeds 1e-3 m/s; mean over trials",
    ),
    (
        "grasp_correction",
        "per trial, summed jaw displacement of both contacts from the first to the last manipulate record, mm; mean over trials that reached manipulate",
    ),
    (
        "cumulative_posture_deviation",
        "end-effector paths up to the end of manipulate, time-normalized to 200 samples; RMS deviation over mean path length for consecutive trials, mean x 100",
    ),
    (
        "task_repeatability",
        "1 - mean pairwise mean pointwise distance of the same paths over the workspace diagonal, clamped to [0, 1]",
    ),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema: String,
    pub workspace_diagonal: f64,
    pub definitions: std::collections::BTreeMap<String, String>,
    pub tasks: Vec<TaskMetrics>,
}

impl MetricsReport {
    pub fn new(tasks: Vec<TaskMetrics>, workspace_diagonal: f64) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::EmptyReport);
        }
        for t in &tasks {
            let a = &t.approach_adaptation;
            let vals = [
                a.dr.mean,
                a.dr.std,
                a.dtheta.mean,
                a.dtheta.std,
                t.coordination_latency_s,
                t.grasp_correction_mm.unwrap_or(0.0),
                t.cumulative_posture_deviation_pct,
                t.task_repeatability,
            ];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("non-finite metric for task {}", t.task)));
            }
        }
        Ok(Self {
            schema: REPORT_SCHEMA.to_owned(),
            workspace_diagonal,
            definitions: DEFINITIONS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            tasks,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        if r.schema != REPORT_SCHEMA {
            return Err(Error::InvalidInput(format!("expected schema {REPORT_SCHEMA}, got {}", r.schema)));
        }
        Ok(r)
    }

    /// Aligned table: one row per metric, one column per task.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, Vec<String>)> = vec![
            ("Approach adaptation (m & rad)".into(), Vec::new()),
            ("Task coordination latency (s)".into(), Vec::new()),
            ("Grasp correction (mm)".into(), Vec::new()),
            ("Cumulative posture deviation (%)".into(), Vec::new()),
            ("Task repeatability (C)".into(), Vec::new()),
        ];
        for t in &self.tasks {
            let a = &t.approach_adaptation;
            rows[0].1.push(format!(
                "dr: (mu={:.4}, sigma={:.4}) dtheta: (mu={:.4}, sigma={:.4})",
                a.dr.mean, a.dr.std, a.dtheta.mean, a.dtheta.std
            ));
            rows[1].1.push(format!("{:.4}", t.coordination_latency_s));
            rows[2].1.push(t.grasp_correction_mm.map_or("n/a".into(), |v| format!("{v:.4}")));
            rows[3].1.push(format!("{:.4}", t.cumulative_posture_deviation_pct));
            rows[4].1.push(format!("{:.4}", t.task_repeatability));
        }
        let header: Vec<String> = self
            .tasks
            .iter()
            .map(|t| format!("{} ({}/{} completed)", t.task, t.completed, t.trials))
            .collect();
        let w0 = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max("Evaluation metric".len());
        let widths: Vec<usize> = (0..self.tasks.len())
            .map(|c| rows.iter().map(|r| r.1[c].len()).max().unwrap_or(0).max(header[c].len()))
            .collect();
        let mut out = String::new();
        let line = |out: &mut String, first: &str, cells: &[String]| {
            let _ = write!(out, "| {first:<w0$} |");
            for (c, cell) in cells.iter().enumerate() {
                let _ = write!(out, " {cell:<w$} |", w = widths[c]);
            }
            out.push('\n');
        };
        let rule = {
            let mut s = format!("+{}+", "-".repeat(w0 + 2));
            for w in &widths {
                s.push_str(&"-".repeat(w + 2));
                s.push('+');
            }
            s
        };
        out.push_str(&rule);
        out.push('\n');
        line(&mut out, "Evaluation metric", &header);
        out.push_str(&rule);
        out.push('\n');
        for (name, cells) in &rows {
            line(&mut out, name, cells);
        }
        out.push_str(&rule);
        out.push('\n');
        for (k, v) in DEFINITIONS {
            let _ = writeln!(out, "{k}: {v}");
        }
        let _ = writeln!(out, "workspace diagonal: {} m", self.workspace_diagonal);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std() {
        let m = MeanStd::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.mean, 2.0);
        assert_eq!(m.std, 1.0);
        assert!(MeanStd::of(&[]).is_none());
    }

    #[test]
    fn wrap() {
        assert!((wrap_angle(3.0 * std::f64::consts::PI / 2.0) + std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert_eq!(wrap_angle(-std::f64::consts::PI), std::f64::consts::PI);
    }
}
