//! `ucc`: run bundled or custom scenarios, then check and audit their output.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use ucc_core::campaign::audit::{replay_audit, AuditError, TraceRow};
use ucc_core::ledger::dump::{decode_dump, verify_dump, ChainCheck};
use ucc_core::sim::config::ScenarioConfig;
use ucc_core::sim::metrics::MetricsReport;
use ucc_core::sim::report::{
    csv_bytes, read_csv, write_run, AuditRow, CPM_CSV, DUMP_FILE, LATENCY_CSV, REGISTRATIONS_CSV,
    SCRUB_SUCCESS_CSV, TRACE_CSV,
};
use ucc_core::sim::runner::run_scenario;
use ucc_core::sim::scenarios::{bundled, BUNDLED};
use ucc_core::Ledger;

const EXIT_CONFIG: u8 = 2;
const EXIT_INTEGRITY: u8 = 3;

#[derive(Parser)]
#[command(name = "ucc", version, about = "Consortium ledger scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write the dump, trace, audits and metrics.
    Run {
        /// Scenario file, or the name of a bundled scenario.
        #[arg(long)]
        scenario: String,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check the hash chain of a ledger dump.
    Verify {
        /// Dump file, or a run directory holding one.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Audit one complaint against a run's dump and delivery trace.
    Replay {
        complaint_id: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Recompute the metrics CSVs from a run's dump.
    Metrics {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Compare against the stored CSVs instead of writing them.
        #[arg(long)]
        check: bool,
    },
    /// List the bundled scenarios.
    Scenarios,
}

enum Failure {
    Config(anyhow::Error),
    Integrity(anyhow::Error),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
        } => run(&scenario, seed, &out),
        Command::Verify { out } => verify(&out),
        Command::Replay { complaint_id, out } => replay(&complaint_id, &out),
        Command::Metrics { out, check } => metrics(&out, check),
        Command::Scenarios => {
            for (name, _) in BUNDLED {
                println!("{name}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Integrity(e)) => {
            eprintln!("integrity failure: {e:#}");
            ExitCode::from(EXIT_INTEGRITY)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_scenario(arg: &str) -> Result<ScenarioConfig, Failure> {
    let path = Path::new(arg);
    let parsed = if path.is_file() {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(Failure::Config)?;
        ScenarioConfig::from_json(&text)
    } else {
        bundled(arg).ok_or_else(|| {
            Failure::Config(anyhow!("{arg} is neither a file nor a bundled scenario"))
        })?
    };
    parsed.map_err(|e| Failure::Config(anyhow!("{arg}: {e}")))
}

fn run(scenario: &str, seed: Option<u64>, out: &Path) -> Outcome {
    let mut cfg = load_scenario(scenario)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let output = run_scenario(&cfg).map_err(|e| Failure::Config(anyhow!("{e}")))?;
    write_run(&output, out).with_context(|| format!("writing {}", out.display()))?;
    let s = &output.stats;
    let violations = output.audits.iter().filter(|a| a.is_violation()).count();
    println!("scenario   {}", cfg.name);
    println!("seed       {}", cfg.seed);
    println!("height     {}", s.height);
    println!(
        "tip        {}",
        output
            .blocks
            .last()
            .map(|b| b.block_hash)
            .unwrap_or_default()
    );
    println!("converged  {}", s.converged);
    println!("campaigns  {}", s.campaigns_started);
    println!("complaints {}", output.audits.len());
    println!("violations {violations}");
    println!(
        "messages   {} sent, {} dropped",
        s.messages_sent, s.messages_dropped
    );
    println!("output     {}", out.display());
    Ok(())
}

fn dump_path(out: &Path) -> PathBuf {
    if out.is_dir() {
        out.join(DUMP_FILE)
    } else {
        out.to_path_buf()
    }
}

fn read_dump(out: &Path) -> Result<Vec<u8>, Failure> {
    let path = dump_path(out);
    fs::read(&path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Config)
}

/// Decode and replay a dump; either failing is an integrity failure.
fn load_ledger(out: &Path) -> Result<Ledger, Failure> {
    let blocks = decode_dump(&read_dump(out)?).map_err(|e| Failure::Integrity(anyhow!("{e}")))?;
    let ledger = Ledger::replay(&blocks)
        .map_err(|(h, e)| Failure::Integrity(anyhow!("block {h} does not replay: {e}")))?;
    Ok(ledger)
}

fn verify(out: &Path) -> Outcome {
    let bytes = read_dump(out)?;
    match verify_dump(&bytes).map_err(|e| Failure::Integrity(anyhow!("{e}")))? {
        ChainCheck::Ok { blocks } => {
            println!("ok: {blocks} blocks");
            Ok(())
        }
        ChainCheck::FirstBadHeight(h) => {
            println!("tampered at height {h}");
            Err(Failure::Integrity(anyhow!("chain breaks at height {h}")))
        }
    }
}

fn replay(complaint_id: &str, out: &Path) -> Outcome {
    let ledger = load_ledger(out)?;
    let trace_path = out.join(TRACE_CSV);
    let trace: Vec<TraceRow> = if trace_path.is_file() {
        read_csv(&trace_path).with_context(|| format!("reading {}", trace_path.display()))?
    } else {
        Vec::new()
    };
    let row = match replay_audit(&ledger, complaint_id, &trace) {
        Ok(r) => AuditRow::from_report(&r),
        Err(e @ AuditError::UnknownComplaint(_)) => return Err(Failure::Config(anyhow!("{e}"))),
        Err(e) => AuditRow::insufficient(complaint_id, &e.to_string()),
    };
    let json = serde_json::to_string_pretty(&row).context("encoding the verdict")?;
    println!("{json}");
    Ok(())
}

fn metrics(out: &Path, check: bool) -> Outcome {
    let ledger = load_ledger(out)?;
    let report = MetricsReport::from_ledger(&ledger);
    let dir = out.join("metrics");
    if !check {
        report
            .write(&dir)
            .with_context(|| format!("writing {}", dir.display()))?;
        println!("wrote {}", dir.display());
        return Ok(());
    }
    let fresh = [
        (SCRUB_SUCCESS_CSV, csv_bytes(&report.scrub_success)),
        (CPM_CSV, csv_bytes(&report.complaints_per_million)),
        (LATENCY_CSV, csv_bytes(&report.preference_latency)),
        (REGISTRATIONS_CSV, csv_bytes(&report.registrations)),
    ];
    let mut differing = Vec::new();
    for (name, bytes) in fresh {
        let bytes = bytes.context("encoding metrics")?;
        let path = dir.join(name);
        let stored = fs::read(&path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(Failure::Config)?;
        if stored == bytes {
            println!("match    {name}");
        } else {
            println!("differs  {name}");
            differing.push(name);
        }
    }
    if differing.is_empty() {
        Ok(())
    } else {
        Err(Failure::Integrity(anyhow!(
            "stored metrics disagree with the dump: {}",
            differing.join(", ")
        )))
    }
}
