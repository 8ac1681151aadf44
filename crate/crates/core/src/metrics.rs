//! Evaluation metrics over an [`ExperimentLog`].
//!
//! Delays are attributed to the instant a packet leaves the bottleneck. RTT
//! is the sender-observed round trip and queuing delay is RTT minus the
//! intrinsic RTT. Percentiles use the nearest-rank rule.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::MetricsError;
use crate::guardian::Zone;
use crate::netsim::{ExperimentLog, FlowId};
use crate::time::SimTime;
use crate::traces::{capacity_delivered, TraceSchedule};

/// Default warmup excluded from summaries, in seconds.
pub const DEFAULT_WARMUP: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub window_start_s: f64,
    pub window_end_s: f64,
    pub delivered_packets: u64,
    pub avg_throughput_mbps: f64,
    pub utilization: f64,
    /// Seconds.
    pub avg_delay: f64,
    pub p95_delay: f64,
    pub avg_queuing_delay: f64,
    pub p95_queuing_delay: f64,
    pub d3: f64,
    pub per_flow_throughput_mbps: BTreeMap<FlowId, f64>,
}

/// RTT statistics over a window, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayStats {
    pub count: u64,
    pub avg_rtt: f64,
    pub median_rtt: f64,
    pub p95_rtt: f64,
    pub max_rtt: f64,
    pub avg_queuing: f64,
    pub p95_queuing: f64,
}

/// Nearest-rank percentile of an ascending slice; `p` in (0, 100].
pub fn percentile_nearest_rank(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = (p * sorted.len() as f64 / 100.0).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

fn in_window(t: SimTime, t0: SimTime, t1: SimTime) -> bool {
    t >= t0 && t < t1
}

/// RTTs (seconds) of packets delivered in `[t0, t1)`, optionally one flow only.
pub fn rtts_in(log: &ExperimentLog, t0: SimTime, t1: SimTime, flow: Option<FlowId>) -> Vec<f64> {
    let owd = log.config.owd();
    log.packets
        .iter()
        .filter(|p| flow.is_none_or(|f| p.flow_id == f))
        .filter_map(|p| {
            let d = p.delivered_at()?;
            in_window(d, t0, t1).then(|| p.rtt(owd).expect("delivered").as_secs_f64())
        })
        .collect()
}

pub fn delay_stats(log: &ExperimentLog, t0: SimTime, t1: SimTime, flow: Option<FlowId>) -> Option<DelayStats> {
    let mut rtts = rtts_in(log, t0, t1, flow);
    if rtts.is_empty() {
        return None;
    }
    rtts.sort_by(f64::total_cmp);
    let intrinsic = log.config.owd().as_secs_f64() * 2.0;
    let n = rtts.len() as f64;
    let avg = rtts.iter().sum::<f64>() / n;
    let p95 = percentile_nearest_rank(&rtts, 95.0)?;
    Some(DelayStats {
        count: rtts.len() as u64,
        avg_rtt: avg,
        median_rtt: percentile_nearest_rank(&rtts, 50.0)?,
        p95_rtt: p95,
        max_rtt: *rtts.last()?,
        avg_queuing: avg - intrinsic,
        p95_queuing: p95 - intrinsic,
    })
}

/// Delivered throughput per flow over `[t0, t1)` in Mbps. Every flow in the
/// log appears, with zero if it delivered nothing.
pub fn flow_throughputs(log: &ExperimentLog, t0: SimTime, t1: SimTime) -> BTreeMap<FlowId, f64> {
    let span = t1.saturating_sub(t0).as_secs_f64();
    let bits = f64::from(log.config.packet_size) * 8.0;
    let mut out: BTreeMap<FlowId, f64> = log.flows.iter().map(|f| (f.flow_id, 0.0)).collect();
    for p in &log.packets {
        if p.delivered_at().is_some_and(|d| in_window(d, t0, t1)) {
            *out.entry(p.flow_id).or_default() += bits;
        }
    }
    if span > 0.0 {
        out.values_mut().for_each(|v| *v /= span * 1e6);
    }
    out
}

/// Summary over `[warmup, duration)`.
pub fn summarize(log: &ExperimentLog, trace: &TraceSchedule, dtt: f64, warmup: f64) -> Result<MetricsSummary, MetricsError> {
    let duration = log.config.duration;
    if !(warmup >= 0.0 && warmup < duration) {
        return Err(MetricsError::EmptyWindow { warmup_s: warmup, duration_s: duration });
    }
    let (t0, t1) = (SimTime::from_secs_f64(warmup), log.config.end());
    let stats = delay_stats(log, t0, t1, None).ok_or(MetricsError::NoDeliveries)?;
    let span = (t1 - t0).as_secs_f64();
    let size = log.config.packet_size;
    let delivered_bytes = stats.count * u64::from(size);
    let capacity = capacity_delivered(trace, t0, t1, size);
    Ok(MetricsSummary {
        window_start_s: t0.as_secs_f64(),
        window_end_s: t1.as_secs_f64(),
        delivered_packets: stats.count,
        avg_throughput_mbps: delivered_bytes as f64 * 8.0 / span / 1e6,
        utilization: if capacity > 0 { delivered_bytes as f64 / capacity as f64 } else { 0.0 },
        avg_delay: stats.avg_rtt,
        p95_delay: stats.p95_rtt,
        avg_queuing_delay: stats.avg_queuing,
        p95_queuing_delay: stats.p95_queuing,
        d3: stats.avg_rtt / dtt,
        per_flow_throughput_mbps: flow_throughputs(log, t0, t1),
    })
}

/// Jain's fairness index.
pub fn jain_index(throughputs: &[f64]) -> Result<f64, MetricsError> {
    let sum: f64 = throughputs.iter().sum();
    let sq: f64 = throughputs.iter().map(|x| x * x).sum();
    if throughputs.is_empty() || sq <= 0.0 {
        return Err(MetricsError::AllZero);
    }
    Ok(sum * sum / (throughputs.len() as f64 * sq))
}

/// One flow's aggregates over one bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeseriesRow {
    pub t_s: f64,
    pub flow_id: FlowId,
    pub throughput_mbps: f64,
    pub rtt_ms_avg: Option<f64>,
    pub queuing_delay_ms_avg: Option<f64>,
    /// Last cwnd sample in the bin.
    pub cwnd_pkts: Option<f64>,
    /// Last Guardian tick in the bin.
    pub zone: Option<Zone>,
    pub guardian_multiplier: Option<f64>,
    pub mu: Option<f64>,
}

#[derive(Default, Clone)]
struct BinAcc {
    bytes: u64,
    rtt_sum: f64,
    rtt_n: u64,
    cwnd: Option<f64>,
    tick: Option<(Zone, f64, f64)>,
}

/// Rows per (bin, flow) over `[0, duration)`. The last bin may be shorter;
/// its throughput uses its actual length.
pub fn timeseries(log: &ExperimentLog, bin: f64) -> Result<Vec<TimeseriesRow>, MetricsError> {
    if !(bin > 0.0 && bin.is_finite()) {
        return Err(MetricsError::Bin);
    }
    let bin_us = SimTime::from_secs_f64(bin).as_micros().max(1);
    let end = log.config.end().as_micros();
    let n_bins = end.div_ceil(bin_us) as usize;
    let flow_idx: BTreeMap<FlowId, usize> = log.flows.iter().enumerate().map(|(i, f)| (f.flow_id, i)).collect();
    let mut acc = vec![vec![BinAcc::default(); n_bins]; log.flows.len()];
    let slot = |t: SimTime| {
        let b = (t.as_micros() / bin_us) as usize;
        (b < n_bins).then_some(b)
    };

    let owd = log.config.owd();
    for p in &log.packets {
        let Some(d) = p.delivered_at() else { continue };
        let Some(b) = slot(d) else { continue };
        let a = &mut acc[flow_idx[&p.flow_id]][b];
        a.bytes += u64::from(log.config.packet_size);
        a.rtt_sum += p.rtt(owd).expect("delivered").as_secs_f64();
        a.rtt_n += 1;
    }
    for s in &log.cwnd_samples {
        if let Some(b) = slot(s.at) {
            acc[flow_idx[&s.flow_id]][b].cwnd = Some(s.cwnd);
        }
    }
    for t in &log.ticks {
        if let Some(b) = slot(t.at) {
            acc[flow_idx[&t.flow_id]][b].tick = Some((t.zone, t.multiplier, t.mu));
        }
    }

    let intrinsic = owd.as_secs_f64() * 2.0;
    let mut rows = Vec::with_capacity(n_bins * log.flows.len());
    for b in 0..n_bins {
        let start = b as u64 * bin_us;
        let span = ((start + bin_us).min(end) - start) as f64 / 1e6;
        for (f, bins) in log.flows.iter().zip(&acc) {
            let a = &bins[b];
            let rtt = (a.rtt_n > 0).then(|| a.rtt_sum / a.rtt_n as f64);
            rows.push(TimeseriesRow {
                t_s: start as f64 / 1e6,
                flow_id: f.flow_id,
                throughput_mbps: a.bytes as f64 * 8.0 / span / 1e6,
                rtt_ms_avg: rtt.map(|r| r * 1e3),
                queuing_delay_ms_avg: rtt.map(|r| (r - intrinsic) * 1e3),
                cwnd_pkts: a.cwnd,
                zone: a.tick.map(|t| t.0),
                guardian_multiplier: a.tick.map(|t| t.1),
                mu: a.tick.map(|t| t.2),
            });
        }
    }
    Ok(rows)
}

/// Aggregate link utilization per bin: delivered over offered capacity.
pub fn utilization_series(log: &ExperimentLog, trace: &TraceSchedule, bin: f64) -> Result<Vec<(f64, f64)>, MetricsError> {
    if !(bin > 0.0 && bin.is_finite()) {
        return Err(MetricsError::Bin);
    }
    let bin_us = SimTime::from_secs_f64(bin).as_micros().max(1);
    let end = log.config.end().as_micros();
    let n_bins = end.div_ceil(bin_us) as usize;
    let mut delivered = vec![0u64; n_bins];
    for p in &log.packets {
        if let Some(d) = p.delivered_at() {
            let b = (d.as_micros() / bin_us) as usize;
            if b < n_bins {
                delivered[b] += 1;
            }
        }
    }
    Ok((0..n_bins)
        .map(|b| {
            let t0 = b as u64 * bin_us;
            let t1 = (t0 + bin_us).min(end);
            let cap = trace.opportunities_in(SimTime(t0), SimTime(t1));
            let u = if cap > 0 { delivered[b] as f64 / cap as f64 } else { 0.0 };
            (t0 as f64 / 1e6, u)
        })
        .collect())
}
