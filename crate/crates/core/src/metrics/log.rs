//! Per-tick trial records and their CSV form.

use std::io::{BufRead, Write};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsm::{validate_path, Phase, Transition, Trigger};

pub const CSV_HEADER: &str = "t,phase,q1,q2,q3,q4,q5,q6,q7,ee_x,ee_y,ee_z,ee_qw,ee_qx,ee_qy,ee_qz,\
wrist_x,wrist_y,wrist_z,fx,fy,fz,Dx,Dy,Dz,slip,event";
pub const TRANSITION_HEADER: &str = "t,from,to,trigger,wrist_z,setpoint_z";

const COLUMNS: usize = 27;

/// One control tick. `jaws` is not a CSV column; it travels as a
/// `jaw=g1:g2` event token emitted whenever it changes, and holds the last
/// emitted value in between.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t: f64,
    pub phase: Phase,
    pub q: [f64; 7],
    /// Position then `[w, x, y, z]`.
    pub ee: [f64; 7],
    /// Active wrist estimate; NaN before the first one.
    pub wrist: [f64; 3],
    pub force: [f64; 3],
    pub deformation: [f64; 3],
    pub slip: bool,
    pub jaws: [f64; 2],
    pub events: Vec<String>,
}

impl Record {
    pub fn ee_position(&self) -> Vector3<f64> {
        Vector3::new(self.ee[0], self.ee[1], self.ee[2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialLog {
    pub task: String,
    pub trial: usize,
    pub records: Vec<Record>,
    pub transitions: Vec<Transition>,
    /// Returned to Homing before the time limit without aborting.
    pub completed: bool,
}

impl TrialLog {
    /// Phase of every record with consecutive duplicates removed.
    pub fn phase_path(&self) -> Vec<Phase> {
        let mut out: Vec<Phase> = Vec::new();
        for r in &self.records {
            if out.last() != Some(&r.phase) {
                out.push(r.phase);
            }
        }
        out
    }

    /// Indices of records whose phase differs from the previous record.
    pub fn transition_indices(&self) -> Vec<usize> {
        (1..self.records.len())
            .filter(|&i| self.records[i].phase != self.records[i - 1].phase)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.records {
            let mut line = String::with_capacity(400);
            line.push_str(&r.t.to_string());
            line.push(',');
            line.push_str(r.phase.as_str());
            for v in r.q.iter().chain(&r.ee).chain(&r.wrist).chain(&r.force).chain(&r.deformation) {
                line.push(',');
                line.push_str(&v.to_string());
            }
            line.push(',');
            line.push(if r.slip { '1' } else { '0' });
            line.push(',');
            line.push_str(&r.events.join(";"));
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn write_transitions<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TRANSITION_HEADER}")?;
        for tr in &self.transitions {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                tr.t,
                tr.from,
                tr.to,
                tr.trigger.as_str(),
                tr.wrist_z,
                tr.setpoint_z
            )?;
        }
        Ok(())
    }

    /// Reads a trajectory CSV; transitions are left empty.
    pub fn read_csv<R: BufRead>(input: R, task: &str, trial: usize) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim_end() != CSV_HEADER {
            return Err(Error::LogFormat("unexpected trajectory header".into()));
        }
        let mut records = Vec::new();
        let mut jaws = [f64::NAN; 2];
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let row = n + 2;
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != COLUMNS {
                return Err(Error::LogFormat(format!("row {row}: {} columns, expected {COLUMNS}", cols.len())));
            }
            let num = |i: usize| -> Result<f64> {
                cols[i]
                    .parse::<f64>()
                    .map_err(|e| Error::LogFormat(format!("row {row}, column {}: {e}", i + 1)))
            };
            let arr = |from: usize, out: &mut [f64]| -> Result<()> {
                for (k, v) in out.iter_mut().enumerate() {
                    *v = num(from + k)?;
                }
                Ok(())
            };
            let phase: Phase = cols[1].parse().map_err(|_| Error::LogFormat(format!("row {row}: bad phase")))?;
            let mut q = [0.0; 7];
            let mut ee = [0.0; 7];
            let mut wrist = [0.0; 3];
            let mut force = [0.0; 3];
            let mut deformation = [0.0; 3];
            arr(2, &mut q)?;
            arr(9, &mut ee)?;
            arr(16, &mut wrist)?;
            arr(19, &mut force)?;
            arr(22, &mut deformation)?;
            let slip = match cols[25] {
                "0" => false,
                "1" => true,
                other => return Err(Error::LogFormat(format!("row {row}: slip flag {other:?}"))),
            };
            let events: Vec<String> = if cols[26].is_empty() {
                Vec::new()
            } else {
                cols[26].split(';').map(str::to_owned).collect()
            };
            for e in &events {
                if let Some(v) = e.strip_prefix("jaw=") {
                    jaws = parse_jaws(v).ok_or_else(|| Error::LogFormat(format!("row {row}: bad jaw token {e:?}")))?;
                }
            }
            records.push(Record {
                t: num(0)?,
                phase,
                q,
                ee,
                wrist,
                force,
                deformation,
                slip,
                jaws,
                events,
            });
        }
        let completed = records.last().is_some_and(|r| r.phase == Phase::Homing);
        Ok(Self {
            task: task.to_owned(),
            trial,
            records,
            transitions: Vec::new(),
            completed,
        })
    }

    pub fn read_transitions<R: BufRead>(input: R) -> Result<Vec<Transition>> {
        let mut lines = input.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim_end() != TRANSITION_HEADER {
            return Err(Error::LogFormat("unexpected transition header".into()));
        }
        let mut out = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let c: Vec<&str> = line.split(',').collect();
            let bad = || Error::LogFormat(format!("transition row {}", n + 2));
            if c.len() != 6 {
                return Err(bad());
            }
            let f = |s: &str| s.parse::<f64>().map_err(|_| bad());
            out.push(Transition {
                t: f(c[0])?,
                from: c[1].parse().map_err(|_| bad())?,
                to: c[2].parse().map_err(|_| bad())?,
                trigger: c[3].parse::<Trigger>().map_err(|_| bad())?,
                wrist_z: f(c[4])?,
                setpoint_z: f(c[5])?,
            });
        }
        Ok(out)
    }
}

pub fn jaw_token(jaws: [f64; 2]) -> String {
    format!("jaw={}:{}", jaws[0], jaws[1])
}

fn parse_jaws(v: &str) -> Option<[f64; 2]> {
    let (a, b) = v.split_once(':')?;
    Some([a.parse().ok()?, b.parse().ok()?])
}

/// Bounds used by [`validate_log`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogBounds {
    pub q_lower: Vec<f64>,
    pub q_upper: Vec<f64>,
    pub dt: f64,
}

/// Phase path, timestamp monotonicity and spacing, joint bounds, and the
/// force-primary ordering encoded in the `stack=` tokens.
pub fn validate_log(log: &TrialLog, bounds: &LogBounds) -> Result<()> {
    validate_path(&log.phase_path())?;
    if let Some(last) = log.records.last() {
        if log.completed && last.phase != Phase::Homing {
            return Err(Error::LogFormat("completed trial does not end in homing".into()));
        }
    }
    for w in log.records.windows(2) {
        let dt = w[1].t - w[0].t;
        if !(dt > 0.0) {
            return Err(Error::LogFormat(format!("time not increasing at t={}", w[1].t)));
        }
        if (dt - bounds.dt).abs() > 1e-9 {
            return Err(Error::LogFormat(format!("tick spacing {dt} at t={}", w[1].t)));
        }
    }
    for r in &log.records {
        for (k, v) in r.q.iter().enumerate() {
            if *v < bounds.q_lower[k] - 1e-12 || *v > bounds.q_upper[k] + 1e-12 {
                return Err(Error::LogFormat(format!("joint {} out of bounds at t={}", k + 1, r.t)));
            }
        }
        for e in &r.events {
            if let Some(kind) = e.strip_prefix("stack=") {
                let force = kind == "force";
                if force != r.phase.force_primary() {
                    return Err(Error::LogFormat(format!("{kind} primary during {} at t={}", r.phase, r.t)));
                }
            }
        }
    }
    let path = log.phase_path();
    if !log.transitions.is_empty() && log.transitions.len() + 1 != path.len() {
        return Err(Error::LogFormat(format!(
            "{} transition records for {} phase changes",
            log.transitions.len(),
            path.len() - 1
        )));
    }
    let mut expected = path.windows(2).map(|w| (w[0], w[1]));
    for tr in &log.transitions {
        if expected.next() != Some((tr.from, tr.to)) {
            return Err(Error::LogFormat(format!("transition record {} -> {} does not match the phase column", tr.from, tr.to)));
        }
    }
    Ok(())
}
