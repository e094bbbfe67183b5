use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pmac_sim::metrics::{
    self, csv::write_sweep_csv, run_scenario, sweep_frequencies, sweep_nodes, write_csv, write_plot_data, MetricsError,
    MetricsRow, ScenarioConfig,
};
use pmac_sim::report::Protocol;
use pmac_sim::sweep::SweepMechanism;

#[derive(Parser)]
#[command(name = "pmac-sim", version, about = "Network establishment simulator for power-line MAC protocols")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and print its metrics row.
    Run {
        scenario: PathBuf,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the replayable JSONL trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for per-figure TSV files.
        #[arg(long)]
        plot_data: Option<PathBuf>,
    },
    /// Run the scenario across node counts and protocols.
    SweepNodes {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,64,128")]
        counts: Vec<usize>,
        /// Defaults to the scenario protocol and its counterpart.
        #[arg(long, value_delimiter = ',')]
        protocols: Vec<Protocol>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        plot_data: Option<PathBuf>,
    },
    /// Sweep the gateway's first link for 1..=freq_points frequencies.
    SweepFreq {
        scenario: PathBuf,
        #[arg(long)]
        mechanism: Option<SweepMechanism>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-run the scenario recorded in a trace and compare byte for byte.
    Replay { trace: PathBuf },
}

fn load(path: &PathBuf, seed: Option<u64>) -> Result<ScenarioConfig, MetricsError> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn output(out: Option<&PathBuf>, bytes: &[u8]) -> Result<(), MetricsError> {
    match out {
        Some(p) => std::fs::write(p, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn rows_out(rows: &[MetricsRow], out: Option<&PathBuf>, plot_data: Option<&PathBuf>) -> Result<(), MetricsError> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    output(out, &buf)?;
    if let Some(dir) = plot_data {
        write_plot_data(rows, dir)?;
    }
    Ok(())
}

fn execute(cmd: Command) -> Result<(), MetricsError> {
    match cmd {
        Command::Run { scenario, out, trace, seed, plot_data } => {
            let cfg = load(&scenario, seed)?;
            let run = run_scenario(&cfg)?;
            if let Some(path) = trace {
                std::fs::write(path, metrics::trace_file(&cfg, &run))?;
            }
            rows_out(&[run.row], out.as_ref(), plot_data.as_ref())
        }
        Command::SweepNodes { scenario, counts, protocols, out, seed, plot_data } => {
            let cfg = load(&scenario, seed)?;
            if counts.iter().any(|&c| c < 2) {
                return Err(MetricsError::Validation("node counts must be at least 2".into()));
            }
            let protocols = if protocols.is_empty() { vec![cfg.protocol, cfg.protocol.counterpart()] } else { protocols };
            let rows = sweep_nodes(&cfg, &protocols, &counts)?;
            rows_out(&rows, out.as_ref(), plot_data.as_ref())
        }
        Command::SweepFreq { scenario, mechanism, out, seed } => {
            let cfg = load(&scenario, seed)?;
            let rows = sweep_frequencies(&cfg, mechanism.unwrap_or(cfg.sweep_mechanism))?;
            let mut buf = Vec::new();
            write_sweep_csv(&rows, &mut buf)?;
            output(out.as_ref(), &buf)
        }
        Command::Replay { trace } => {
            let text = std::fs::read_to_string(&trace)?;
            let rep = metrics::replay(&text)?;
            println!("replay ok: {} records, seed {}", rep.records, rep.config.seed);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
