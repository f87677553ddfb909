//! Scenarios, the deterministic multi-rate simulation, trial logs and
//! reports, and the interactive session behind `isot serve`.

pub mod report;
pub mod scenario;
pub mod session;
pub mod sim;

pub use report::{build_report, emit_report, read_logs, write_report, write_run, RunSummary, TrialSummary, RUN_SCHEMA};
pub use scenario::{
    ContactConfig, DetectionCamera, Fault, FaultKind, FilterConfig, Rates, Scenario, TactileConfig, TrackingCamera,
    Workspace, SCENARIO_SCHEMA,
};
pub use session::{ClientFrame, ErrorCode, GestureName, ServerFrame, Session, StateFrame, STATE_HZ};
pub use sim::{
    run_simulation, run_trial, train_mapper, LeaderSource, LiveLeader, MapperSummary, SimulationRun, Simulator,
    TactileState, TrialResult,
};

/// Loads a scenario from disk.
pub fn load_scenario(path: impl AsRef<std::path::Path>) -> crate::Result<Scenario> {
    Scenario::load(path)
}
