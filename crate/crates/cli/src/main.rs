use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::{error, info, warn};

use isot_core::harness::{build_report, emit_report, read_logs, run_simulation, Scenario, SimulationRun};
use isot_core::metrics::{validate_log, MetricsReport};

mod serve;

#[derive(Parser)]
#[command(name = "isot", version, about = "Stack-of-tasks co-manipulation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Table,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenarios in batch and write logs plus the metrics report.
    Run {
        /// Scenario file; repeat to put several tasks in one report.
        #[arg(long, required = true)]
        scenario: Vec<PathBuf>,
        /// Override the scenario's trial count.
        #[arg(long)]
        trials: Option<usize>,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "table")]
        report: ReportFormat,
    },
    /// Recompute the report from logs written by `run`.
    Metrics {
        #[arg(long)]
        logs: PathBuf,
        #[arg(long, value_enum, default_value = "table")]
        report: ReportFormat,
    },
    /// Serve an interactive session over a WebSocket.
    Serve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a scenario file and print its resolved settings.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

fn print_report(report: &MetricsReport, format: ReportFormat) -> isot_core::Result<()> {
    let text = match format {
        ReportFormat::Table => report.to_table(),
        ReportFormat::Json => report.to_json()? + "\n",
    };
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn check_logs(run: &SimulationRun) -> isot_core::Result<()> {
    let bounds = run.bounds()?;
    for t in &run.trials {
        if let Err(e) = validate_log(&t.log, &bounds) {
            error!("{} trial {}: {e}", run.scenario.name, t.log.trial);
            return Err(e);
        }
    }
    Ok(())
}

fn execute(cli: Cli) -> isot_core::Result<()> {
    match cli.command {
        Command::Run {
            scenario,
            trials,
            seed,
            out,
            report,
        } => {
            let mut runs = Vec::new();
            for path in &scenario {
                let mut s = Scenario::load(path)?;
                if let Some(k) = trials {
                    s.trials = k;
                }
                let seed = seed.unwrap_or(s.seed);
                info!("{}: {} trials, seed {seed}", s.name, s.trials);
                let run = run_simulation(&s, seed)?;
                check_logs(&run)?;
                let done = run.trials.iter().filter(|t| t.log.completed).count();
                if done < run.trials.len() {
                    warn!("{}: {done} of {} trials completed", s.name, run.trials.len());
                }
                runs.push(run);
            }
            let r = emit_report(&runs, &out)?;
            print_report(&r, report)
        }
        Command::Metrics { logs, report } => {
            let tasks = read_logs(&logs)?;
            let r = build_report(&tasks)?;
            print_report(&r, report)
        }
        Command::Serve { scenario, port, seed } => {
            let s = Scenario::load(&scenario)?;
            let seed = seed.unwrap_or(s.seed);
            serve::serve(&s, seed, port)
        }
        Command::Validate { scenario } => {
            let s = Scenario::load(&scenario)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
            println!(
                "ok: {} ({}), {} trials, {} objects, {} keyframes, chain {}",
                s.name,
                s.task,
                s.trials,
                s.objects.len(),
                s.leader.len(),
                s.chain_path().display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ISOT_LOG_LEVEL", "info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
