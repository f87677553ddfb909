use std::io::{BufRead, BufReader};
use std::net::TcpStream;
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

fn isot() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_isot"));
    c.env("ISOT_LOG_LEVEL", "warn");
    c
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn scratch_dir(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("isot-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

#[test]
fn validate_accepts_shipped_scenarios() {
    for name in [
        "assembly_task1.toml",
        "disassembly_task2.toml",
        "withdraw_no_object.toml",
        "slip_recovery.toml",
    ] {
        let out = isot().args(["validate", "--scenario"]).arg(scenario(name)).output().unwrap();
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stdout).contains("ok: "));
    }
}

#[test]
fn validate_rejects_missing_file() {
    let out = isot().args(["validate", "--scenario", "/nonexistent/x.toml"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn run_then_metrics_agree() {
    let dir = scratch_dir("run");
    let out = isot()
        .args(["run", "--trials", "2", "--seed", "4", "--report", "json", "--scenario"])
        .arg(scenario("assembly_task1.toml"))
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let printed: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(printed["schema"], "report.v1");
    assert_eq!(printed["tasks"][0]["task"], "task1");
    for f in ["task1/trial_000.csv", "task1/trial_001_transitions.csv", "task1/run.json", "report.txt", "report.json"] {
        assert!(dir.join(f).is_file(), "{f} missing");
    }
    let on_disk: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(printed, on_disk);

    let again = isot().args(["metrics", "--report", "json", "--logs"]).arg(&dir).output().unwrap();
    assert!(again.status.success(), "{}", String::from_utf8_lossy(&again.stderr));
    let recomputed: Value = serde_json::from_slice(&again.stdout).unwrap();
    assert_eq!(printed, recomputed);

    let table = isot().args(["metrics", "--logs"]).arg(&dir).output().unwrap();
    let text = String::from_utf8_lossy(&table.stdout);
    for row in [
        "Approach adaptation",
        "Task coordination latency",
        "Grasp correction",
        "Cumulative posture deviation",
        "Task repeatability",
    ] {
        assert!(text.contains(row), "{row} missing from table");
    }
    let _ = std::fs::remove_dir_all(&dir);
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn start_server() -> (Server, String) {
    let mut child = isot()
        .args(["serve", "--port", "0", "--scenario"])
        .arg(scenario("assembly_task1.toml"))
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("listening on ").expect("listening line").to_owned();
    (Server(child), url)
}

type Socket = WebSocket<MaybeTlsStream<TcpStream>>;

fn next_frame(ws: &mut Socket) -> Value {
    loop {
        if let Message::Text(t) = ws.read().unwrap() {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

/// Reads frames until one satisfies `want` or the deadline passes.
fn wait_for(ws: &mut Socket, secs: f64, want: impl Fn(&Value) -> bool) -> Option<Value> {
    let end = Instant::now() + Duration::from_secs_f64(secs);
    while Instant::now() < end {
        let f = next_frame(ws);
        if want(&f) {
            return Some(f);
        }
    }
    None
}

#[test]
fn serve_streams_state_and_applies_commands() {
    let (_server, url) = start_server();
    let (mut ws, _) = tungstenite::connect(url.as_str()).unwrap();

    let first = wait_for(&mut ws, 10.0, |f| f["type"] == "state").expect("state frame");
    assert_eq!(first["phase"], "homing");
    assert_eq!(first["q"].as_array().unwrap().len(), 7);
    assert_eq!(first["ee_pose"].as_array().unwrap().len(), 7);
    assert!(first["tactile"]["D"].is_array());
    let t0 = first["t"].as_f64().unwrap();

    ws.send(Message::text("{not json")).unwrap();
    let err = wait_for(&mut ws, 5.0, |f| f["type"] == "error").expect("malformed rejected");
    assert_eq!(err["code"], "malformed");

    ws.send(Message::text(r#"{"type":"gesture","name":"open_palm"}"#)).unwrap();
    let err = wait_for(&mut ws, 5.0, |f| f["type"] == "error").expect("gesture rejected");
    assert_eq!(err["code"], "incompatible_phase");

    ws.send(Message::text(r#"{"type":"wrist_pose","xyz":[0.5,0.5,-1.0]}"#)).unwrap();
    let err = wait_for(&mut ws, 5.0, |f| f["type"] == "error").expect("bad wrist rejected");
    assert_eq!(err["code"], "invalid_value");

    let later = wait_for(&mut ws, 5.0, |f| f["type"] == "state").unwrap();
    assert!(later["t"].as_f64().unwrap() > t0, "session survived bad input");

    ws.send(Message::text(r#"{"type":"wrist_pose","xyz":[0.32,0.24,0.10]}"#)).unwrap();
    let pre = wait_for(&mut ws, 30.0, |f| f["type"] == "state" && f["phase"] == "pre_grasp");
    assert!(pre.is_some(), "no pre_grasp transition");
    let wrist = pre.unwrap()["wrist"].clone();
    assert!(wrist.is_array());

    ws.send(Message::text(r#"{"type":"reset"}"#)).unwrap();
    let back = wait_for(&mut ws, 5.0, |f| f["type"] == "state" && f["phase"] == "homing");
    assert!(back.is_some());
    let _ = ws.close(None);
}
