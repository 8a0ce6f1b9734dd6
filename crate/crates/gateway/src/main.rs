use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use evacsim_core::engine::Condition;
use evacsim_core::metrics::{MeasureKind, Selector};
use evacsim_gateway::commands;
use evacsim_gateway::live::DEFAULT_TICK_RATE;
use evacsim_gateway::{serve, serve_replay, Recording, ServeOptions};

#[derive(Parser)]
#[command(name = "evacsim", version, about = "Evacuation wayfinding simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve live runs over the wire protocol.
    Serve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Simulation ticks per second.
        #[arg(long, default_value_t = DEFAULT_TICK_RATE)]
        tick_rate: f64,
        /// Write every completed run into this directory.
        #[arg(long)]
        record_dir: Option<PathBuf>,
    },
    /// Run scripted participants under each condition.
    Batch {
        #[arg(long)]
        scenario: PathBuf,
        /// Comma-separated conditions.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        conditions: Vec<Condition>,
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        runs: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize the measures of a directory of runs.
    Metrics {
        #[arg(long = "in")]
        input: PathBuf,
        /// first or all
        #[arg(long, default_value = "all")]
        selector: Selector,
        #[arg(long)]
        out: PathBuf,
        /// time, distance, speed or correct_rate
        #[arg(long, default_value = "time")]
        measure: MeasureKind,
        /// Reference envelope set for the report.
        #[arg(long, default_value = "real")]
        reference: String,
        /// JSON report path; defaults to the output with a .json extension.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Replay a recorded run over the wire protocol.
    Replay {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Scenario of the run, for overlays and missing measures.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Compress a target path into a rectangular workspace.
    MocompDemo {
        #[arg(long)]
        target: PathBuf,
        /// WIDTHxHEIGHT in metres, e.g. 4x4
        #[arg(long, value_parser = commands::parse_workspace)]
        workspace: (f64, f64),
        /// Keep-out band along the workspace boundary, m.
        #[arg(long, default_value_t = 0.1)]
        margin: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn bind(host: &str, port: u16) -> anyhow::Result<TcpListener> {
    let listener = TcpListener::bind((host, port))?;
    println!("listening on {}", listener.local_addr()?);
    std::io::stdout().flush()?;
    Ok(listener)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Serve {
            scenario,
            port,
            host,
            tick_rate,
            record_dir,
        } => {
            let options = ServeOptions { tick_rate, record_dir };
            options.validate().map_err(anyhow::Error::msg)?;
            let scenario = Arc::new(commands::read_scenario(&scenario)?);
            serve(bind(&host, port)?, scenario, options)?;
        }
        Command::Batch {
            scenario,
            conditions,
            runs,
            seed,
            out,
        } => {
            let scenario = commands::read_scenario(&scenario)?;
            let measures = commands::batch(scenario, conditions, runs as usize, seed, &out)?;
            println!("{} runs written to {}", measures.len(), out.display());
        }
        Command::Metrics {
            input,
            selector,
            out,
            measure,
            reference,
            report,
        } => {
            let report = report.unwrap_or_else(|| out.with_extension("json"));
            anyhow::ensure!(report != out, "report and summary would overwrite each other");
            let full = commands::metrics(&input, selector, measure, &reference, &out, &report)?;
            println!("{} runs summarized into {} and {}", full.runs, out.display(), report.display());
        }
        Command::Replay {
            run,
            port,
            host,
            speed,
            scenario,
        } => {
            anyhow::ensure!(speed > 0.0 && speed.is_finite(), "speed must be positive");
            let scenario = scenario.as_deref().map(commands::read_scenario).transpose()?.map(Arc::new);
            let recording = Recording::load(Path::new(&run), scenario)?;
            serve_replay(bind(&host, port)?, Arc::new(recording), speed)?;
        }
        Command::MocompDemo {
            target,
            workspace: (width, height),
            margin,
            out,
        } => {
            let path = commands::read_target(&target)?;
            let (_, summary) = commands::mocomp_demo(&path, width, height, margin, &out)?;
            println!("{}", serde_json::to_string(&summary)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
