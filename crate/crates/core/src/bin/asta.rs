use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use asta::harness::{compute_metrics, export_plot_data, load_scenario, verify_trace};
use asta::runtime::run;
use asta::runtime::trace::TraceLog;

#[derive(Parser)]
#[command(name = "asta", version, about = "Asynchronous spatial-temporal allocation planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write its trace.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        t_max: Option<f64>,
        /// Constant message delay in milliseconds.
        #[arg(long)]
        delay_ms: Option<f64>,
        /// Output file (stdout when omitted).
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Solve independent agents on a worker pool.
        #[arg(long)]
        parallel: bool,
        /// Record wall-clock solve times (the trace is then not reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Check a trace for collisions, interval-bound and conformance violations.
    Verify {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Print run metrics as JSON.
    Metrics {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Export CSV plot data.
    Plot {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_trace(path: &PathBuf) -> Result<TraceLog, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    TraceLog::parse(&text).map_err(|e| e.to_string())
}

fn execute(cli: Cli) -> Result<bool, String> {
    match cli.command {
        Command::Run { scenario, seed, t_max, delay_ms, trace, parallel, timing } => {
            let mut sc = load_scenario(&scenario).map_err(|e| e.to_string())?;
            if let Some(d) = delay_ms {
                sc.settings.delay = d / 1e3;
            }
            sc.settings.parallel |= parallel;
            sc.settings.record_timing |= timing;
            let seed = seed.unwrap_or(sc.settings.seed);
            let t_max = t_max.unwrap_or(sc.settings.t_max);
            let result = run(&sc, seed, t_max).map_err(|e| e.to_string())?;
            let text = result.trace.to_text();
            match trace {
                Some(p) => std::fs::write(&p, text).map_err(|e| format!("cannot write {}: {e}", p.display()))?,
                None => print!("{text}"),
            }
            eprintln!("run ended at t = {:.3} s ({:?})", result.end_time, result.reason);
            Ok(true)
        }
        Command::Verify { trace, scenario } => {
            let sc = load_scenario(&scenario).map_err(|e| e.to_string())?;
            let report = verify_trace(&read_trace(&trace)?, &sc).map_err(|e| e.to_string())?;
            println!("{}", serde_json::to_string_pretty(&report).unwrap());
            println!("{}", if report.passed() { "PASS" } else { "FAIL" });
            Ok(report.passed())
        }
        Command::Metrics { trace } => {
            let m = compute_metrics(&read_trace(&trace)?).map_err(|e| e.to_string())?;
            println!("{}", serde_json::to_string_pretty(&m).unwrap());
            Ok(true)
        }
        Command::Plot { trace, out } => {
            let files = export_plot_data(&read_trace(&trace)?, &out).map_err(|e| e.to_string())?;
            for f in files {
                println!("{}", f.display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
