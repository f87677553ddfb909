mod common;

use std::io::BufReader;

use nalgebra::Vector3;

use common::{toy_segment, toy_trial};
use isot_core::fsm::{Phase, Transition, Trigger};
use isot_core::metrics::{validate_log, LogBounds, TrialLog, CSV_HEADER, TRANSITION_HEADER};

fn bounds() -> LogBounds {
    LogBounds {
        q_lower: vec![-1.0; 7],
        q_upper: vec![1.0; 7],
        dt: 0.1,
    }
}

fn toy() -> TrialLog {
    let (a, b) = toy_segment();
    toy_trial(0, a, b, Vector3::zeros(), 0.0005)
}

fn transitions(log: &TrialLog) -> Vec<Transition> {
    let trig = [
        Trigger::WristDetected,
        Trigger::ObjectDetected,
        Trigger::GraspStable,
        Trigger::OpenPalm,
        Trigger::LeaderHome,
    ];
    log.transition_indices()
        .iter()
        .zip(trig)
        .map(|(&i, trigger)| Transition {
            t: log.records[i].t,
            from: log.records[i - 1].phase,
            to: log.records[i].phase,
            trigger,
            wrist_z: 0.1,
            setpoint_z: 0.4,
        })
        .collect()
}

fn csv_bytes(log: &TrialLog) -> Vec<u8> {
    let mut out = Vec::new();
    log.write_csv(&mut out).unwrap();
    out
}

#[test]
fn toy_log_is_valid() {
    let mut log = toy();
    validate_log(&log, &bounds()).unwrap();
    log.transitions = transitions(&log);
    validate_log(&log, &bounds()).unwrap();
}

#[test]
fn csv_round_trip_is_byte_stable() {
    let mut log = toy();
    log.records[3].events.push("detections=2".into());
    let first = csv_bytes(&log);
    assert!(std::str::from_utf8(&first).unwrap().starts_with(CSV_HEADER));
    let back = TrialLog::read_csv(BufReader::new(first.as_slice()), "toy", 0).unwrap();
    assert_eq!(back.records.len(), log.records.len());
    assert_eq!(back.phase_path(), log.phase_path());
    assert_eq!(csv_bytes(&back), first);
}

#[test]
fn transition_round_trip() {
    let log = toy();
    let tr = transitions(&log);
    let with = TrialLog { transitions: tr.clone(), ..log };
    let mut out = Vec::new();
    with.write_transitions(&mut out).unwrap();
    assert!(std::str::from_utf8(&out).unwrap().starts_with(TRANSITION_HEADER));
    assert_eq!(TrialLog::read_transitions(BufReader::new(out.as_slice())).unwrap(), tr);
}

#[test]
fn reading_rejects_a_foreign_header() {
    let text = "t,phase,x\n0,homing,1\n";
    assert!(TrialLog::read_csv(BufReader::new(text.as_bytes()), "toy", 0).is_err());
}

#[test]
fn rejects_time_going_backwards() {
    let mut log = toy();
    log.records.swap(4, 5);
    assert!(validate_log(&log, &bounds()).is_err());
}

#[test]
fn rejects_uneven_tick_spacing() {
    let mut log = toy();
    for r in &mut log.records[6..] {
        r.t += 0.05;
    }
    let err = validate_log(&log, &bounds()).unwrap_err().to_string();
    assert!(err.contains("spacing"), "{err}");
}

#[test]
fn rejects_joint_outside_limits() {
    let mut log = toy();
    log.records[8].q[3] = 1.5;
    let err = validate_log(&log, &bounds()).unwrap_err().to_string();
    assert!(err.contains("joint 4"), "{err}");
}

#[test]
fn rejects_force_primary_outside_contact_phases() {
    let mut log = toy();
    log.records[3].events.push("stack=force".into());
    assert!(validate_log(&log, &bounds()).is_err());
    let mut ok = toy();
    ok.records[9].events.push("stack=force".into());
    validate_log(&ok, &bounds()).unwrap();
    let mut bad = toy();
    bad.records[9].events.push("stack=cartesian".into());
    assert!(validate_log(&bad, &bounds()).is_err());
}

#[test]
fn rejects_phase_jumps_off_the_graph() {
    let mut log = toy();
    for r in &mut log.records[2..7] {
        r.phase = Phase::Manipulate;
    }
    assert!(validate_log(&log, &bounds()).is_err());
    let mut late = toy();
    late.records[0].phase = Phase::PreGrasp;
    assert!(validate_log(&late, &bounds()).is_err());
}

#[test]
fn completed_trial_must_end_in_homing() {
    let mut log = toy();
    log.records.truncate(15);
    assert!(validate_log(&log, &bounds()).is_err());
    log.completed = false;
    validate_log(&log, &bounds()).unwrap();
}

#[test]
fn transition_records_must_match_the_phase_column() {
    let mut log = toy();
    let mut tr = transitions(&log);
    tr.pop();
    log.transitions = tr.clone();
    assert!(validate_log(&log, &bounds()).is_err());
    let mut swapped = transitions(&log);
    swapped[1].to = Phase::Homing;
    log.transitions = swapped;
    assert!(validate_log(&log, &bounds()).is_err());
}
