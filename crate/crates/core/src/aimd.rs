//! Classic ack-clocked AIMD window: slow start, additive increase in
//! congestion avoidance and a halving on loss.
//!
//! Loss is signalled by three duplicate acks. There is no retransmission
//! timer; the simulator does not retransmit, so losses only feed the window.

use serde::{Deserialize, Serialize};

/// Duplicate acks needed to declare a loss.
pub const DUPACK_THRESHOLD: u32 = 3;

/// Initial window used when a flow does not request one.
pub const DEFAULT_INITIAL_CWND: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    SlowStart,
    CongestionAvoidance,
}

/// Emitted once per loss episode when the duplicate-ack threshold is hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossEvent;

/// Congestion window in (fractional) packets.
#[derive(Debug, Clone, PartialEq)]
pub struct CwndState {
    cwnd: f64,
    ssthresh: f64,
    phase: Phase,
    dupack_count: u32,
    floor: f64,
}

impl CwndState {
    /// A window in slow start with an unbounded slow-start threshold.
    pub fn new(initial_cwnd: f64, floor: f64) -> Self {
        debug_assert!(floor >= 1.0);
        CwndState {
            cwnd: initial_cwnd.max(floor),
            ssthresh: f64::INFINITY,
            phase: Phase::SlowStart,
            dupack_count: 0,
            floor,
        }
    }

    /// A window that starts directly in congestion avoidance.
    pub fn congestion_avoidance(initial_cwnd: f64, floor: f64) -> Self {
        let cwnd = initial_cwnd.max(floor);
        CwndState {
            cwnd,
            ssthresh: cwnd,
            phase: Phase::CongestionAvoidance,
            dupack_count: 0,
            floor,
        }
    }

    pub fn cwnd(&self) -> f64 {
        self.cwnd
    }

    pub fn ssthresh(&self) -> f64 {
        self.ssthresh
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn dupack_count(&self) -> u32 {
        self.dupack_count
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// A new cumulative ack for a previously unacked packet.
    pub fn on_ack(&mut self) {
        self.dupack_count = 0;
        match self.phase {
            Phase::SlowStart => {
                self.cwnd += 1.0;
                if self.cwnd >= self.ssthresh {
                    self.phase = Phase::CongestionAvoidance;
                }
            }
            Phase::CongestionAvoidance => self.cwnd += 1.0 / self.cwnd,
        }
    }

    /// Counts a duplicate ack. Returns a loss event exactly when the count
    /// reaches the threshold; further duplicates in the same episode are
    /// absorbed until a new ack resets the counter.
    pub fn on_dupack(&mut self) -> Option<LossEvent> {
        self.dupack_count += 1;
        (self.dupack_count == DUPACK_THRESHOLD).then_some(LossEvent)
    }

    /// Starts counting a fresh loss episode.
    pub fn reset_dupacks(&mut self) {
        self.dupack_count = 0;
    }

    /// Multiplicative decrease. Also ends slow start.
    pub fn on_loss(&mut self, _event: LossEvent) {
        self.ssthresh = (self.cwnd / 2.0).max(self.floor);
        self.cwnd = self.ssthresh;
        self.phase = Phase::CongestionAvoidance;
    }

    /// Leaves slow start without a window reduction (delay-triggered exit).
    pub fn exit_slow_start(&mut self) {
        if self.phase == Phase::SlowStart {
            self.ssthresh = self.cwnd.max(self.floor);
            self.phase = Phase::CongestionAvoidance;
        }
    }

    /// Multiplies the window and clamps it to the floor.
    pub fn scale(&mut self, multiplier: f64) {
        let scaled = self.cwnd * multiplier;
        self.cwnd = if scaled.is_finite() { scaled.max(self.floor) } else { self.floor.max(self.cwnd) };
    }
}
