use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use mobman::bus::net::{bus_addr, serve_tcp};
use mobman::bus::ws::{serve_ws, DEFAULT_WS_ADDR};
use mobman::bus::Bus;
use mobman::harness::replay::replay;
use mobman::harness::selftest::run_selftest;
use mobman::harness::{resolve_scene, run_on, HarnessError, Params, ScenarioConfig, ScenarioId};

const WS_ADDR_ENV: &str = "YOR_WS_ADDR";

#[derive(Parser)]
#[command(name = "mobman", version, about = "Mobile manipulation scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and report its metrics.
    Run(RunArgs),
    /// Summarize a recorded message log.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
    /// Run the built-in invariant checks.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// tally, wholebody, obstacle or freeplay.
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// TOML parameter overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in scene name or scene TOML file.
    #[arg(long)]
    scene: Option<String>,
    /// Tally loop count.
    #[arg(long)]
    loops: Option<u32>,
    /// Run as fast as possible with no servers (default).
    #[arg(long, conflicts_with = "ui")]
    headless: bool,
    /// Serve the bus over TCP and WebSocket and pace the simulation in real time.
    #[arg(long)]
    ui: bool,
    /// Write the metrics report here.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Record all bus traffic here.
    #[arg(long)]
    log: Option<PathBuf>,
}

fn configure(args: &RunArgs) -> Result<ScenarioConfig, HarnessError> {
    let scenario: ScenarioId = args.scenario.parse()?;
    let mut params = match &args.config {
        Some(path) => Params::load(path)?,
        None => Params::default(),
    };
    if let Some(n) = args.loops {
        params.tally.loops = n;
    }
    let mut cfg = ScenarioConfig::new(scenario, args.seed).with_params(params);
    if let Some(scene) = &args.scene {
        cfg = cfg.with_scene(resolve_scene(scene)?);
    }
    cfg.realtime = args.ui;
    cfg.log = args.log.clone();
    Ok(cfg)
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let cfg = match configure(&args) {
        Ok(cfg) => cfg,
        Err(e @ HarnessError::UnknownScenario(_)) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(2));
        }
        Err(e) => return Err(e.into()),
    };
    let bus = Bus::new();
    let _servers = if args.ui {
        let tcp = serve_tcp(bus.clone(), bus_addr()).context("starting TCP bus server")?;
        let ws_addr = std::env::var(WS_ADDR_ENV).unwrap_or_else(|_| DEFAULT_WS_ADDR.to_string());
        let ws = serve_ws(bus.clone(), ws_addr).context("starting WebSocket bridge")?;
        log::info!("bus on {}, websocket on {}", tcp.local_addr(), ws.local_addr());
        Some((tcp, ws))
    } else {
        None
    };
    let report = run_on(&cfg, bus)?;
    if let Some(path) = &args.metrics {
        report.write(path)?;
    }
    println!("{}", report.to_json());
    Ok(if report.success {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Replay { log } => replay(&log).map_err(Into::into).map(|s| {
            print!("{s}");
            ExitCode::SUCCESS
        }),
        Command::Selftest { seed } => {
            let results = run_selftest(seed);
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            Ok(if results.iter().all(|r| r.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}
