//! Deterministic discrete-event simulator of a trace-driven bottleneck.
//!
//! Each data packet travels `one_way_delay` to a drop-tail queue, leaves the
//! queue at the next delivery opportunity of the trace and its ack travels
//! `one_way_delay` back over an uncongested, lossless return path. The
//! sender-side RTT sample is therefore `2 * one_way_delay + queueing wait`.
//!
//! Losses are inferred from sequence gaps in the (in-order) ack stream. The
//! packets in a gap are written off immediately, and the ack that reveals the
//! gap plus the following ones count as duplicate acks until the threshold
//! fires one loss event. Gaps below the recovery point (packets sent before
//! the last reduction) are written off without a second reduction. Nothing is
//! retransmitted and there is no retransmission timer.

mod events;

use std::collections::{HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::aimd::{Phase, DEFAULT_INITIAL_CWND};
use crate::controller::{ControllerKind, FlowController};
use crate::error::SimError;
use crate::guardian::{AdjustmentSource, Zone};
use crate::time::SimTime;
use crate::traces::{TraceCursor, TraceSchedule};
use crate::DEFAULT_PACKET_SIZE;
use events::{Event, EventQueue};

/// Buffer size standing in for an unbounded queue.
pub const INFINITE_BUFFER: u64 = 1 << 31;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Drop-tail capacity in packets.
    pub buffer_capacity: u64,
    /// Seconds, per direction.
    pub one_way_delay: f64,
    /// Seconds of simulated time.
    pub duration: f64,
    pub packet_size: u32,
    pub seed: u64,
    /// Give every flow its own queue over its own copy of the trace instead
    /// of one shared bottleneck.
    pub per_flow_queues: bool,
    /// Period of the cwnd samples in the log, in seconds.
    pub cwnd_sample_interval: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            buffer_capacity: 3200,
            one_way_delay: 0.010,
            duration: 30.0,
            packet_size: DEFAULT_PACKET_SIZE,
            seed: 0,
            per_flow_queues: false,
            cwnd_sample_interval: 0.010,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.buffer_capacity == 0 {
            return Err(SimError::BufferCapacity);
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(SimError::Duration);
        }
        if !(self.one_way_delay >= 0.0 && self.one_way_delay.is_finite()) {
            return Err(SimError::OneWayDelay(self.one_way_delay));
        }
        if self.packet_size == 0 {
            return Err(SimError::PacketSize);
        }
        if !(self.cwnd_sample_interval > 0.0 && self.cwnd_sample_interval.is_finite()) {
            return Err(SimError::SampleInterval(self.cwnd_sample_interval));
        }
        Ok(())
    }

    /// Intrinsic round-trip time in seconds.
    pub fn intrinsic_rtt(&self) -> f64 {
        2.0 * self.one_way_delay
    }

    pub fn owd(&self) -> SimTime {
        SimTime::from_secs_f64(self.one_way_delay)
    }

    pub fn end(&self) -> SimTime {
        SimTime::from_secs_f64(self.duration)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FlowId(pub u32);

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub flow_id: FlowId,
    /// Seconds.
    pub start_time: f64,
    pub controller: ControllerKind,
    pub initial_cwnd: f64,
    pub initial_phase: Phase,
}

impl FlowSpec {
    /// A flow that starts in slow start with the default initial window.
    pub fn new(flow_id: u32, start_time: f64, controller: ControllerKind) -> Self {
        FlowSpec {
            flow_id: FlowId(flow_id),
            start_time,
            controller,
            initial_cwnd: DEFAULT_INITIAL_CWND,
            initial_phase: Phase::SlowStart,
        }
    }

    pub fn with_initial_window(mut self, cwnd: f64, phase: Phase) -> Self {
        self.initial_cwnd = cwnd;
        self.initial_phase = phase;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacketFate {
    /// Left the queue at this instant.
    Delivered(SimTime),
    /// Rejected by a full queue at this instant.
    Dropped(SimTime),
    /// Still in the forward path or in the queue when the run ended.
    Pending,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub flow_id: FlowId,
    pub seq: u64,
    pub sent_at: SimTime,
    pub enqueued_at: Option<SimTime>,
    pub fate: PacketFate,
}

impl PacketRecord {
    pub fn delivered_at(&self) -> Option<SimTime> {
        match self.fate {
            PacketFate::Delivered(t) => Some(t),
            _ => None,
        }
    }

    pub fn dropped_at(&self) -> Option<SimTime> {
        match self.fate {
            PacketFate::Dropped(t) => Some(t),
            _ => None,
        }
    }

    /// Sender-observed RTT: delivery plus the ack's return trip.
    pub fn rtt(&self, one_way_delay: SimTime) -> Option<SimTime> {
        self.delivered_at().map(|d| d + one_way_delay - self.sent_at)
    }

    /// Time spent waiting in the queue.
    pub fn queue_wait(&self) -> Option<SimTime> {
        Some(self.delivered_at()? - self.enqueued_at?)
    }
}

/// Controller state after one Guardian tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickSnapshot {
    pub flow_id: FlowId,
    pub at: SimTime,
    pub zone: Zone,
    pub source: AdjustmentSource,
    pub multiplier: f64,
    pub mu: f64,
    pub d_now: f64,
    pub derivative: f64,
    pub dtt: f64,
    pub cwnd_before: f64,
    pub cwnd_after: f64,
    pub had_samples: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CwndSample {
    pub at: SimTime,
    pub flow_id: FlowId,
    pub cwnd: f64,
}

/// Per-flow facts collected over the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowInfo {
    pub flow_id: FlowId,
    pub start_time: SimTime,
    pub controller: ControllerKind,
    /// When AIMD left slow start, if it did.
    pub slow_start_exit: Option<SimTime>,
    pub guardian_start: Option<SimTime>,
    /// Final resolved DTT in seconds and whether a fixed target was raised.
    pub dtt: Option<f64>,
    pub dtt_raised: bool,
    pub loss_events: u64,
    pub final_cwnd: f64,
}

/// Packet counts by state, as tracked by the simulator at the end of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketCounts {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub in_queue: u64,
    pub in_flight: u64,
}

impl PacketCounts {
    pub fn balanced(&self) -> bool {
        self.sent == self.delivered + self.dropped + self.in_queue + self.in_flight
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentLog {
    pub config: SimConfig,
    pub flows: Vec<FlowInfo>,
    /// In send order.
    pub packets: Vec<PacketRecord>,
    pub ticks: Vec<TickSnapshot>,
    pub cwnd_samples: Vec<CwndSample>,
    pub counts: PacketCounts,
}

impl ExperimentLog {
    /// Recounts packet states from the records.
    pub fn recount(&self) -> PacketCounts {
        let mut c = PacketCounts { sent: self.packets.len() as u64, ..PacketCounts::default() };
        for p in &self.packets {
            match (p.fate, p.enqueued_at) {
                (PacketFate::Delivered(_), _) => c.delivered += 1,
                (PacketFate::Dropped(_), _) => c.dropped += 1,
                (PacketFate::Pending, Some(_)) => c.in_queue += 1,
                (PacketFate::Pending, None) => c.in_flight += 1,
            }
        }
        c
    }

    /// Every sent packet is accounted for exactly once, and the simulator's
    /// own counters agree with the records.
    pub fn check_conservation(&self) -> Result<PacketCounts, (PacketCounts, PacketCounts)> {
        let recounted = self.recount();
        if recounted == self.counts && recounted.balanced() {
            Ok(recounted)
        } else {
            Err((self.counts, recounted))
        }
    }

    pub fn flow(&self, id: FlowId) -> Option<&FlowInfo> {
        self.flows.iter().find(|f| f.flow_id == id)
    }

    pub fn packets_of(&self, id: FlowId) -> impl Iterator<Item = &PacketRecord> {
        self.packets.iter().filter(move |p| p.flow_id == id)
    }

    pub fn ticks_of(&self, id: FlowId) -> impl Iterator<Item = &TickSnapshot> {
        self.ticks.iter().filter(move |t| t.flow_id == id)
    }
}

/// Per-flow RNG seed from the run seed, the flow id and the controller seed.
pub fn flow_rng_seed(run_seed: u64, flow_id: FlowId, controller_seed: u64) -> u64 {
    let mut h = splitmix64(run_seed);
    h = splitmix64(h ^ u64::from(flow_id.0));
    splitmix64(h ^ controller_seed)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug)]
struct FlowRuntime {
    id: FlowId,
    link: usize,
    controller: FlowController,
    active: bool,
    next_seq: u64,
    acked: u64,
    written_off: u64,
    /// Next sequence number the sender expects an ack for.
    expected_ack: u64,
    hole_open: bool,
    /// Gaps below this sequence number do not trigger another reduction.
    recovery_seq: u64,
    info: FlowInfo,
}

impl FlowRuntime {
    fn inflight(&self) -> u64 {
        self.next_seq - self.acked - self.written_off
    }
}

#[derive(Debug)]
struct Link {
    queue: VecDeque<usize>,
    cursor: TraceCursor,
    service_pending: bool,
}

struct Simulator<'a> {
    config: &'a SimConfig,
    trace: &'a TraceSchedule,
    owd: SimTime,
    end: SimTime,
    sample_every: SimTime,
    events: EventQueue,
    flows: Vec<FlowRuntime>,
    links: Vec<Link>,
    packets: Vec<PacketRecord>,
    packet_flow: Vec<u32>,
    ticks: Vec<TickSnapshot>,
    cwnd_samples: Vec<CwndSample>,
    counts: PacketCounts,
}

/// Runs one experiment to completion.
pub fn run(config: &SimConfig, flows: &[FlowSpec], trace: &TraceSchedule) -> Result<ExperimentLog, SimError> {
    config.validate()?;
    let mut seen = HashSet::new();
    for f in flows {
        if !seen.insert(f.flow_id) {
            return Err(SimError::DuplicateFlow(f.flow_id.0));
        }
        if !(f.start_time >= 0.0 && f.start_time < config.duration) {
            return Err(SimError::FlowStart { flow: f.flow_id.0, start_s: f.start_time, duration_s: config.duration });
        }
    }

    let link_count = if config.per_flow_queues { flows.len().max(1) } else { 1 };
    let links = (0..link_count)
        .map(|_| Link { queue: VecDeque::new(), cursor: trace.cursor(), service_pending: false })
        .collect();

    let mut runtimes = Vec::with_capacity(flows.len());
    for (i, f) in flows.iter().enumerate() {
        let controller_seed = match &f.controller {
            ControllerKind::Reminis { guardian, .. } => guardian.rng_seed,
            ControllerKind::AimdOnly { .. } => 0,
        };
        let controller = FlowController::new(
            f.controller,
            f.initial_cwnd,
            f.initial_phase,
            flow_rng_seed(config.seed, f.flow_id, controller_seed),
        )
        .map_err(|source| SimError::Controller { flow: f.flow_id.0, source })?;
        let start = SimTime::from_secs_f64(f.start_time);
        runtimes.push(FlowRuntime {
            id: f.flow_id,
            link: if config.per_flow_queues { i } else { 0 },
            controller,
            active: false,
            next_seq: 0,
            acked: 0,
            written_off: 0,
            expected_ack: 0,
            hole_open: false,
            recovery_seq: 0,
            info: FlowInfo {
                flow_id: f.flow_id,
                start_time: start,
                controller: f.controller,
                slow_start_exit: None,
                guardian_start: None,
                dtt: None,
                dtt_raised: false,
                loss_events: 0,
                final_cwnd: f.initial_cwnd,
            },
        });
    }

    let mut sim = Simulator {
        config,
        trace,
        owd: config.owd(),
        end: config.end(),
        sample_every: SimTime::from_secs_f64(config.cwnd_sample_interval).max(SimTime(1)),
        events: EventQueue::default(),
        flows: runtimes,
        links,
        packets: Vec::new(),
        packet_flow: Vec::new(),
        ticks: Vec::new(),
        cwnd_samples: Vec::new(),
        counts: PacketCounts::default(),
    };
    for (i, f) in sim.flows.iter().enumerate() {
        sim.events.push(f.info.start_time, Event::FlowStart { flow: i });
    }
    if !sim.flows.is_empty() {
        sim.events.push(SimTime::ZERO, Event::CwndSample);
    }
    sim.run_loop();
    Ok(sim.finish())
}

impl Simulator<'_> {
    fn run_loop(&mut self) {
        while let Some(at) = self.events.peek_time() {
            if at >= self.end {
                break;
            }
            let (now, event) = self.events.pop().expect("peeked");
            match event {
                Event::FlowStart { flow } => {
                    self.flows[flow].active = true;
                    self.try_send(flow, now);
                }
                Event::QueueArrival { packet } => self.on_queue_arrival(packet, now),
                Event::LinkService { link } => self.on_link_service(link, now),
                Event::AckArrival { packet } => self.on_ack(packet, now),
                Event::GuardianTick { flow } => self.on_tick(flow, now),
                Event::CwndSample => {
                    for f in self.flows.iter().filter(|f| f.active) {
                        self.cwnd_samples.push(CwndSample { at: now, flow_id: f.id, cwnd: f.controller.cwnd() });
                    }
                    self.events.push(now + self.sample_every, Event::CwndSample);
                }
            }
            debug_assert!(self.counts.balanced());
        }
    }

    fn try_send(&mut self, flow: usize, now: SimTime) {
        let f = &mut self.flows[flow];
        let limit = f.controller.cwnd().floor() as u64;
        while f.inflight() < limit {
            let idx = self.packets.len();
            self.packets.push(PacketRecord {
                flow_id: f.id,
                seq: f.next_seq,
                sent_at: now,
                enqueued_at: None,
                fate: PacketFate::Pending,
            });
            self.packet_flow.push(flow as u32);
            f.next_seq += 1;
            self.counts.sent += 1;
            self.counts.in_flight += 1;
            self.events.push(now + self.owd, Event::QueueArrival { packet: idx });
        }
    }

    fn on_queue_arrival(&mut self, packet: usize, now: SimTime) {
        let link_idx = self.flows[self.packet_flow[packet] as usize].link;
        let link = &mut self.links[link_idx];
        self.counts.in_flight -= 1;
        if link.queue.len() as u64 >= self.config.buffer_capacity {
            self.packets[packet].fate = PacketFate::Dropped(now);
            self.counts.dropped += 1;
            return;
        }
        self.packets[packet].enqueued_at = Some(now);
        link.queue.push_back(packet);
        self.counts.in_queue += 1;
        if !link.service_pending {
            let at = self.next_opportunity(link_idx, now);
            self.links[link_idx].service_pending = true;
            self.events.push(at, Event::LinkService { link: link_idx });
        }
    }

    fn next_opportunity(&mut self, link_idx: usize, now: SimTime) -> SimTime {
        self.links[link_idx].cursor.seek(self.trace, now)
    }

    fn on_link_service(&mut self, link_idx: usize, now: SimTime) {
        let link = &mut self.links[link_idx];
        let packet = link.queue.pop_front().expect("service scheduled for an empty queue");
        link.cursor.advance(self.trace);
        self.packets[packet].fate = PacketFate::Delivered(now);
        self.counts.in_queue -= 1;
        self.counts.delivered += 1;
        self.events.push(now + self.owd, Event::AckArrival { packet });
        if self.links[link_idx].queue.is_empty() {
            self.links[link_idx].service_pending = false;
        } else {
            let at = self.next_opportunity(link_idx, now);
            self.events.push(at, Event::LinkService { link: link_idx });
        }
    }

    fn on_ack(&mut self, packet: usize, now: SimTime) {
        let flow = self.packet_flow[packet] as usize;
        let rec = self.packets[packet];
        let f = &mut self.flows[flow];
        let now_s = now.as_secs_f64();
        let was_slow_start = f.controller.cwnd_state().phase() == Phase::SlowStart;

        f.controller.on_rtt_sample((now - rec.sent_at).as_secs_f64());

        if rec.seq > f.expected_ack {
            f.written_off += rec.seq - f.expected_ack;
            // The newest missing packet decides whether this is a new episode.
            if rec.seq > f.recovery_seq && !f.hole_open {
                f.hole_open = true;
                f.controller.begin_loss_episode();
            }
        }
        f.expected_ack = rec.seq + 1;
        f.acked += 1;

        if f.hole_open {
            if f.controller.on_dupack().is_some() {
                f.hole_open = false;
                f.recovery_seq = f.next_seq;
                f.info.loss_events += 1;
            }
        } else {
            f.controller.on_ack();
        }

        if was_slow_start && f.controller.cwnd_state().phase() == Phase::CongestionAvoidance {
            f.info.slow_start_exit = Some(now);
        }
        if let Some(first) = f.controller.poll_activation(now_s) {
            f.info.guardian_start = Some(now);
            let at = SimTime::from_secs_f64(first).max(now + SimTime(1));
            self.events.push(at, Event::GuardianTick { flow });
        }
        self.try_send(flow, now);
    }

    fn on_tick(&mut self, flow: usize, now: SimTime) {
        let f = &mut self.flows[flow];
        let Some(report) = f.controller.on_tick(now.as_secs_f64()) else {
            return;
        };
        self.ticks.push(TickSnapshot {
            flow_id: f.id,
            at: now,
            zone: report.zone,
            source: report.adjustment.source,
            multiplier: report.adjustment.multiplier,
            mu: report.mu,
            d_now: report.d_now,
            derivative: report.derivative,
            dtt: report.dtt,
            cwnd_before: report.cwnd_before,
            cwnd_after: report.cwnd_after,
            had_samples: report.had_samples,
        });
        let next = SimTime::from_secs_f64(report.next_tick).max(now + SimTime(1));
        self.events.push(next, Event::GuardianTick { flow });
        self.try_send(flow, now);
    }

    fn finish(self) -> ExperimentLog {
        debug_assert_eq!(self.counts.in_queue, self.links.iter().map(|l| l.queue.len() as u64).sum::<u64>());
        let flows = self
            .flows
            .into_iter()
            .map(|f| {
                let mut info = f.info;
                if let Some((dtt, raised)) = f.controller.dtt() {
                    info.dtt = Some(dtt);
                    info.dtt_raised = raised;
                }
                info.final_cwnd = f.controller.cwnd();
                info
            })
            .collect();
        ExperimentLog {
            config: self.config.clone(),
            flows,
            packets: self.packets,
            ticks: self.ticks,
            cwnd_samples: self.cwnd_samples,
            counts: self.counts,
        }
    }
}
