//! `reminis`: runs simulated experiments and writes their artifacts.
//!
//! Exit codes: 0 success, 1 I/O or runtime failure, 2 configuration error,
//! 3 missing input file, 4 failed theory check.

mod commands;
mod config;
mod error;
mod output;
mod theory_check;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use reminis::{Ablation, TraceSchedule, DEFAULT_PACKET_SIZE};

use commands::SweepAxis;
use config::{BufferSetting, ControllerChoice, ExperimentConfig, FlowSection};
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "reminis", version, about = "Trace-driven Reminis congestion-control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a scenario once per seed; writes timeseries.csv and summary.json.
    Run(ScenarioArgs),
    /// Vary one parameter and collect one summary row per (value, seed).
    Sweep {
        #[arg(long, value_enum)]
        axis: SweepAxis,
        /// Comma-separated values: packets for buffer, ms for dtt and intrinsic-rtt.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Staggered flows sharing one bottleneck; reports Jain's index.
    Fairness {
        #[arg(long, default_value_t = 3)]
        flows: u32,
        /// Seconds between flow starts; also the width of the final fairness window.
        #[arg(long, default_value_t = 30.0)]
        gap: f64,
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Check the closed forms and bounds numerically.
    TheoryCheck {
        #[arg(long, default_value_t = 1_000_000)]
        draws: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0.01)]
        lemma_tol: f64,
        #[arg(long, default_value_t = 0.01)]
        nde_tol: f64,
    },
    /// Write a Mahimahi trace for a constant or stepped rate.
    TraceGen {
        /// RATE_MBPS:DURATION_S, repeatable.
        #[arg(long, value_parser = parse_segment, required = true)]
        segment: Vec<[f64; 2]>,
        #[arg(long, default_value_t = DEFAULT_PACKET_SIZE)]
        packet_size: u32,
        /// Destination file; standard output when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

/// Every configuration key, settable on the command line. Flags win over the
/// file.
#[derive(Args, Debug, Default)]
struct ScenarioArgs {
    /// TOML experiment file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Output root; overrides REMINIS_OUT and the file's output_dir.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Mahimahi trace file.
    #[arg(long, conflicts_with = "segment")]
    trace: Option<PathBuf>,
    /// Synthetic trace piece RATE_MBPS:DURATION_S, repeatable.
    #[arg(long, value_parser = parse_segment)]
    segment: Vec<[f64; 2]>,
    /// Packets, or "infinite".
    #[arg(long)]
    buffer: Option<BufferSetting>,
    #[arg(long)]
    owd_ms: Option<f64>,
    /// Seconds of simulated time.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    packet_size: Option<u32>,
    #[arg(long)]
    per_flow_queues: Option<bool>,
    #[arg(long)]
    cwnd_sample_ms: Option<f64>,
    #[arg(long, conflicts_with = "dtt_multiplier")]
    dtt_ms: Option<f64>,
    #[arg(long)]
    dtt_multiplier: Option<f64>,
    #[arg(long)]
    cwnd_floor: Option<f64>,
    #[arg(long)]
    guardian_seed: Option<u64>,
    /// Seconds excluded from the summary.
    #[arg(long)]
    warmup: Option<f64>,
    /// Time-series bin in seconds.
    #[arg(long)]
    bin: Option<f64>,
    /// Controller for every flow.
    #[arg(long, value_enum)]
    controller: Option<ControllerChoice>,
    /// Comma-separated ablations for every flow: nde_off, ps_off, cm_off,
    /// aimd_off, deterministic_exploration.
    #[arg(long, value_delimiter = ',', value_parser = parse_ablation)]
    ablate: Vec<Ablation>,
}

fn parse_segment(s: &str) -> Result<[f64; 2], String> {
    let (rate, dur) = s.split_once(':').ok_or_else(|| format!("expected RATE_MBPS:DURATION_S, got {s:?}"))?;
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
    Ok([num(rate)?, num(dur)?])
}

fn parse_ablation(s: &str) -> Result<Ablation, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown ablation {s:?}"))
}

impl ScenarioArgs {
    /// Loads the file (if any) and overlays the flags.
    fn merged(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => config::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.name {
            cfg.name = Some(v.clone());
        }
        if !self.seeds.is_empty() {
            cfg.seeds = Some(self.seeds.clone());
        }
        if let Some(v) = &self.trace {
            cfg.trace.file = Some(v.clone());
            cfg.trace.segments = None;
        }
        if !self.segment.is_empty() {
            cfg.trace.segments = Some(self.segment.clone());
            cfg.trace.file = None;
        }
        let sim = &mut cfg.sim;
        sim.buffer = self.buffer.or(sim.buffer);
        sim.one_way_delay_ms = self.owd_ms.or(sim.one_way_delay_ms);
        sim.duration_s = self.duration.or(sim.duration_s);
        sim.packet_size = self.packet_size.or(sim.packet_size);
        sim.per_flow_queues = self.per_flow_queues.or(sim.per_flow_queues);
        sim.cwnd_sample_interval_ms = self.cwnd_sample_ms.or(sim.cwnd_sample_interval_ms);
        let g = &mut cfg.guardian;
        if self.dtt_ms.is_some() {
            g.dtt_ms = self.dtt_ms;
            g.dtt_multiplier = None;
        }
        if self.dtt_multiplier.is_some() {
            g.dtt_multiplier = self.dtt_multiplier;
            g.dtt_ms = None;
        }
        g.cwnd_floor = self.cwnd_floor.or(g.cwnd_floor);
        g.rng_seed = self.guardian_seed.or(g.rng_seed);
        cfg.metrics.warmup_s = self.warmup.or(cfg.metrics.warmup_s);
        cfg.metrics.bin_s = self.bin.or(cfg.metrics.bin_s);
        if self.controller.is_some() || !self.ablate.is_empty() {
            if cfg.flows.is_empty() {
                cfg.flows.push(FlowSection::default());
            }
            for f in &mut cfg.flows {
                if let Some(c) = self.controller {
                    f.controller = c;
                }
                if !self.ablate.is_empty() {
                    f.ablations = self.ablate.clone();
                }
            }
        }
        Ok(cfg)
    }

    fn scenario(&self) -> Result<config::Scenario, CliError> {
        config::resolve(self.merged()?, self.out.clone())
    }
}

fn trace_gen(segments: &[[f64; 2]], packet_size: u32, output: Option<&PathBuf>) -> Result<(), CliError> {
    let pieces: Vec<(f64, f64)> = segments.iter().map(|s| (s[0], s[1])).collect();
    let trace = TraceSchedule::step(&pieces, packet_size).map_err(|e| CliError::config("segment", e))?;
    let text = trace.render();
    match output {
        Some(path) => {
            output::write_text(path, &text)?;
            eprintln!("{} opportunities over {} ms -> {}", trace.len(), trace.loop_length_ms(), path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => commands::run(&args.scenario()?, None),
        Command::Sweep { axis, values, scenario } => commands::sweep(&scenario.scenario()?, axis, &values).map(drop),
        Command::Fairness { flows, gap, scenario } => {
            let cfg = commands::fairness_config(scenario.merged()?, flows, gap)?;
            commands::run(&config::resolve(cfg, scenario.out.clone())?, Some(gap))
        }
        Command::TheoryCheck { draws, seed, lemma_tol, nde_tol } => {
            theory_check::run(draws, seed, theory_check::Tolerances { lemma: lemma_tol, nde_mean: nde_tol })
        }
        Command::TraceGen { segment, packet_size, output } => trace_gen(&segment, packet_size, output.as_ref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
