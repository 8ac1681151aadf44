use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use reminis::metrics::{flow_throughputs, jain_index, summarize, timeseries};
use reminis::netsim::{self, FlowInfo, PacketCounts};
use reminis::{MetricsSummary, SimConfig, SimTime, TimeseriesRow};

use crate::config::{BufferSetting, ExperimentConfig, FlowSection, Scenario};
use crate::error::CliError;
use crate::output::{write_csv, write_json, CsvRow};

/// Result of one simulated run, before anything is written.
pub struct RunResult {
    pub seed: u64,
    pub sim: SimConfig,
    pub dtt: f64,
    pub summary: MetricsSummary,
    pub flows: Vec<FlowInfo>,
    pub packets: PacketCounts,
    pub rows: Vec<TimeseriesRow>,
    pub fairness: Option<Fairness>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fairness {
    pub window_start_s: f64,
    pub window_end_s: f64,
    pub jain_index: f64,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    scenario: &'a str,
    seed: u64,
    dtt_s: f64,
    summary: &'a MetricsSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    fairness: Option<&'a Fairness>,
    packets: PacketCounts,
    flows: &'a [FlowInfo],
    sim: &'a SimConfig,
    config: &'a ExperimentConfig,
}

pub fn simulate(s: &Scenario, seed: u64, fairness_window: Option<f64>) -> Result<RunResult, CliError> {
    let sim = s.sim_for_seed(seed);
    let log = netsim::run(&sim, &s.flows, &s.trace)?;
    let packets = log.check_conservation().map_err(|(live, recount)| {
        CliError::io("packet accounting", std::io::Error::other(format!("live {live:?} != recount {recount:?}")))
    })?;
    let dtt = log.flows.iter().find_map(|f| f.dtt).unwrap_or_else(|| s.nominal_dtt());
    let summary = summarize(&log, &s.trace, dtt, s.warmup)?;
    let rows = timeseries(&log, s.bin)?;
    let fairness = match fairness_window {
        Some(w) => {
            let (t0, t1) = ((sim.duration - w).max(0.0), sim.duration);
            let th = flow_throughputs(&log, SimTime::from_secs_f64(t0), SimTime::from_secs_f64(t1));
            let v: Vec<f64> = log.flows.iter().map(|f| th.get(&f.flow_id).copied().unwrap_or(0.0)).collect();
            Some(Fairness { window_start_s: t0, window_end_s: t1, jain_index: jain_index(&v)? })
        }
        None => None,
    };
    Ok(RunResult { seed, dtt, summary, flows: log.flows, packets, rows, fairness, sim })
}

pub fn write_run(s: &Scenario, r: &RunResult) -> Result<PathBuf, CliError> {
    let dir = s.run_dir(r.seed);
    write_csv(&dir.join("timeseries.csv"), r.rows.iter().map(CsvRow::from))?;
    let mut echo = s.echo.clone();
    echo.seeds = Some(vec![r.seed]);
    echo.output_dir = Some(s.out_root.clone());
    let file = SummaryFile {
        scenario: &s.name,
        seed: r.seed,
        dtt_s: r.dtt,
        summary: &r.summary,
        fairness: r.fairness.as_ref(),
        packets: r.packets,
        flows: &r.flows,
        sim: &r.sim,
        config: &echo,
    };
    write_json(&dir.join("summary.json"), &file)?;
    Ok(dir)
}

fn report(r: &RunResult, dir: &std::path::Path) {
    let s = &r.summary;
    let mut line = format!(
        "seed {}: {:.1} Mbps, utilization {:.3}, avg RTT {:.1} ms, p95 RTT {:.1} ms",
        r.seed,
        s.avg_throughput_mbps,
        s.utilization,
        s.avg_delay * 1e3,
        s.p95_delay * 1e3
    );
    if let Some(f) = &r.fairness {
        line.push_str(&format!(", Jain {:.3}", f.jain_index));
    }
    println!("{line} -> {}", dir.display());
}

/// Runs every seed of a scenario and writes its artifacts.
pub fn run(s: &Scenario, fairness_window: Option<f64>) -> Result<(), CliError> {
    let dirs: Vec<(RunResult, PathBuf)> = s
        .seeds
        .par_iter()
        .map(|&seed| {
            let r = simulate(s, seed, fairness_window)?;
            let dir = write_run(s, &r)?;
            // Keep only what is reported; the time series can be large.
            Ok((RunResult { rows: Vec::new(), ..r }, dir))
        })
        .collect::<Result<_, CliError>>()?;
    for (r, dir) in &dirs {
        report(r, dir);
    }
    Ok(())
}

/// Three staggered Reminis flows by default.
pub fn fairness_config(mut cfg: ExperimentConfig, flows: u32, gap: f64) -> Result<ExperimentConfig, CliError> {
    if flows == 0 {
        return Err(CliError::config("flows", "fairness needs at least one flow"));
    }
    if !(gap > 0.0 && gap.is_finite()) {
        return Err(CliError::config("gap", format!("must be positive, got {gap}")));
    }
    let template = cfg.flows.first().cloned().unwrap_or_default();
    cfg.flows = (0..flows).map(|i| FlowSection { start_s: gap * f64::from(i), ..template.clone() }).collect();
    cfg.sim.duration_s.get_or_insert(gap * f64::from(flows + 1));
    cfg.name.get_or_insert_with(|| "fairness".to_string());
    Ok(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepAxis {
    Buffer,
    Dtt,
    IntrinsicRtt,
}

impl SweepAxis {
    fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Buffer => "buffer",
            SweepAxis::Dtt => "dtt",
            SweepAxis::IntrinsicRtt => "intrinsic_rtt",
        }
    }
}

#[derive(Debug, Serialize)]
struct SweepRow {
    axis: &'static str,
    value: f64,
    seed: u64,
    buffer_packets: u64,
    one_way_delay_ms: f64,
    dtt_ms: f64,
    window_start_s: f64,
    window_end_s: f64,
    delivered_packets: u64,
    avg_throughput_mbps: f64,
    utilization: f64,
    avg_delay_ms: f64,
    p95_delay_ms: f64,
    avg_queuing_delay_ms: f64,
    p95_queuing_delay_ms: f64,
    d3: f64,
}

/// Applies one sweep value. `rate_mbps` is the trace's mean rate, used for
/// the bandwidth-delay product of the intrinsic-RTT axis.
fn apply_axis(mut cfg: ExperimentConfig, axis: SweepAxis, value: f64, rate_mbps: f64, packet_size: u32) -> Result<ExperimentConfig, CliError> {
    let field = format!("values ({})", axis.as_str());
    if !(value > 0.0 && value.is_finite()) {
        return Err(CliError::config(field, format!("must be positive, got {value}")));
    }
    match axis {
        SweepAxis::Buffer => {
            if value.fract() != 0.0 {
                return Err(CliError::config(field, format!("buffer sizes are whole packets, got {value}")));
            }
            cfg.sim.buffer = Some(BufferSetting::Packets(value as u64));
        }
        SweepAxis::Dtt => {
            cfg.guardian.dtt_ms = Some(value);
            cfg.guardian.dtt_multiplier = None;
        }
        SweepAxis::IntrinsicRtt => {
            cfg.sim.one_way_delay_ms = Some(value / 2.0);
            cfg.guardian.dtt_ms = Some(1.5 * value);
            cfg.guardian.dtt_multiplier = None;
            let bdp = (rate_mbps * 1e6 * value / 1e3 / (8.0 * f64::from(packet_size))).ceil().max(1.0);
            cfg.sim.buffer = Some(BufferSetting::Packets(bdp as u64));
        }
    }
    Ok(cfg)
}

pub fn sweep(base: &Scenario, axis: SweepAxis, values: &[f64]) -> Result<PathBuf, CliError> {
    if values.is_empty() {
        return Err(CliError::config("values", "at least one sweep value is required"));
    }
    let rate = base.mean_rate_mbps();
    let scenarios: Vec<(f64, Scenario)> = values
        .iter()
        .map(|&v| {
            let cfg = apply_axis(base.echo.clone(), axis, v, rate, base.sim.packet_size)?;
            Ok((v, crate::config::resolve(cfg, Some(base.out_root.clone()))?))
        })
        .collect::<Result<_, CliError>>()?;
    let jobs: Vec<(f64, &Scenario, u64)> =
        scenarios.iter().flat_map(|(v, s)| s.seeds.iter().map(move |&seed| (*v, s, seed))).collect();
    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(value, s, seed)| {
            let r = simulate(s, seed, None)?;
            let m = &r.summary;
            Ok(SweepRow {
                axis: axis.as_str(),
                value,
                seed,
                buffer_packets: r.sim.buffer_capacity,
                one_way_delay_ms: r.sim.one_way_delay * 1e3,
                dtt_ms: r.dtt * 1e3,
                window_start_s: m.window_start_s,
                window_end_s: m.window_end_s,
                delivered_packets: m.delivered_packets,
                avg_throughput_mbps: m.avg_throughput_mbps,
                utilization: m.utilization,
                avg_delay_ms: m.avg_delay * 1e3,
                p95_delay_ms: m.p95_delay * 1e3,
                avg_queuing_delay_ms: m.avg_queuing_delay * 1e3,
                p95_queuing_delay_ms: m.p95_queuing_delay * 1e3,
                d3: m.d3,
            })
        })
        .collect::<Result<_, CliError>>()?;
    let path = base.out_root.join(&base.name).join(format!("sweep-{}.csv", axis.as_str()));
    for r in &rows {
        println!(
            "{} {}: seed {}: utilization {:.3}, avg RTT {:.1} ms, p95 RTT {:.1} ms",
            r.axis, r.value, r.seed, r.utilization, r.avg_delay_ms, r.p95_delay_ms
        );
    }
    write_csv(&path, &rows)?;
    println!("-> {}", path.display());
    Ok(path)
}
