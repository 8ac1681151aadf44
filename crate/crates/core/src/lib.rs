//! Reminis: a delay-targeting congestion controller for highly variable
//! cellular links, together with the machinery needed to evaluate it.
//!
//! The crate is organised bottom-up:
//!
//! - [`aimd`]: the ack-clocked AIMD window that runs underneath everything.
//! - [`guardian`]: the periodic Guardian (zone inference plus the NDE, PS and
//!   CM window multipliers).
//! - [`controller`]: glues AIMD and the Guardian into a per-flow controller,
//!   including the ablated variants.
//! - [`traces`]: Mahimahi-style delivery-opportunity traces.
//! - [`netsim`]: a deterministic discrete-event bottleneck simulator.
//! - [`metrics`]: throughput, utilization, delay percentiles, D3 and fairness.
//! - [`theory`]: closed forms and Monte-Carlo oracles for the analytical
//!   results (expected sigmoid, steady-state delay bound, ramp-up bound).

pub mod aimd;
pub mod controller;
pub mod error;
pub mod guardian;
pub mod metrics;
pub mod netsim;
pub mod theory;
pub mod time;
pub mod traces;

pub use aimd::{CwndState, LossEvent, Phase};
pub use controller::{Ablation, ControllerKind, FlowController, Modules};
pub use error::{ConfigError, MetricsError, SimError, TraceError};
pub use guardian::{
    AdjustmentSource, CwndAdjustment, DttPolicy, Exploration, Guardian, GuardianConfig,
    GuardianState, RttTracker, Zone,
};
pub use metrics::{DelayStats, MetricsSummary, TimeseriesRow};
pub use netsim::{ExperimentLog, FlowId, FlowSpec, PacketFate, PacketRecord, SimConfig, INFINITE_BUFFER};
pub use time::SimTime;
pub use traces::TraceSchedule;

/// Mahimahi MTU convention: every delivery opportunity carries one packet of
/// this many bytes.
pub const DEFAULT_PACKET_SIZE: u32 = 1500;
