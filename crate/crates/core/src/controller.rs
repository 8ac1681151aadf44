//! Per-flow congestion controller: the AIMD window with the Guardian layered
//! on top, plus the ablated variants used to study each block.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aimd::{CwndState, LossEvent, Phase};
use crate::error::ConfigError;
use crate::guardian::{resolve_dtt, Exploration, Guardian, GuardianConfig, GuardianModules, RttTracker, TickReport};

/// A single block switched off (or swapped) relative to full Reminis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    NdeOff,
    PsOff,
    CmOff,
    AimdOff,
    DeterministicExploration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Modules {
    pub guardian: GuardianModules,
    /// Ack-clocked AIMD underneath the Guardian.
    pub aimd: bool,
}

impl Default for Modules {
    fn default() -> Self {
        Modules { guardian: GuardianModules::default(), aimd: true }
    }
}

impl Modules {
    pub fn with_ablations(ablations: &[Ablation]) -> Self {
        let mut m = Modules::default();
        for a in ablations {
            match a {
                Ablation::NdeOff => m.guardian.nde = false,
                Ablation::PsOff => m.guardian.ps = false,
                Ablation::CmOff => m.guardian.cm = false,
                Ablation::AimdOff => m.aimd = false,
                Ablation::DeterministicExploration => m.guardian.exploration = Exploration::Deterministic,
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    AimdOnly { cwnd_floor: f64 },
    Reminis { guardian: GuardianConfig, modules: Modules },
}

impl ControllerKind {
    pub fn aimd_only() -> Self {
        ControllerKind::AimdOnly { cwnd_floor: GuardianConfig::default().cwnd_floor }
    }

    pub fn reminis(guardian: GuardianConfig) -> Self {
        ControllerKind::Reminis { guardian, modules: Modules::default() }
    }

    pub fn ablated(guardian: GuardianConfig, ablations: &[Ablation]) -> Self {
        ControllerKind::Reminis { guardian, modules: Modules::with_ablations(ablations) }
    }

    pub fn cwnd_floor(&self) -> f64 {
        match self {
            ControllerKind::AimdOnly { cwnd_floor } => *cwnd_floor,
            ControllerKind::Reminis { guardian, .. } => guardian.cwnd_floor,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self {
            ControllerKind::AimdOnly { cwnd_floor } => {
                if *cwnd_floor >= 1.0 && cwnd_floor.is_finite() {
                    Ok(())
                } else {
                    Err(ConfigError::CwndFloor(*cwnd_floor))
                }
            }
            ControllerKind::Reminis { guardian, .. } => guardian.validate(),
        }
    }

    fn aimd_enabled(&self) -> bool {
        match self {
            ControllerKind::AimdOnly { .. } => true,
            ControllerKind::Reminis { modules, .. } => modules.aimd,
        }
    }
}

/// Everything a flow's sender needs to decide how much it may send.
#[derive(Debug, Clone)]
pub struct FlowController {
    kind: ControllerKind,
    cwnd: CwndState,
    rtt: RttTracker,
    guardian: Option<Guardian>,
    rng: ChaCha8Rng,
}

impl FlowController {
    pub fn new(kind: ControllerKind, initial_cwnd: f64, initial_phase: Phase, rng_seed: u64) -> Result<Self, ConfigError> {
        kind.validate()?;
        let floor = kind.cwnd_floor();
        if !(initial_cwnd.is_finite() && initial_cwnd >= floor) {
            return Err(ConfigError::InitialCwnd { cwnd: initial_cwnd, floor });
        }
        // Without AIMD there is no slow start to leave.
        let phase = if kind.aimd_enabled() { initial_phase } else { Phase::CongestionAvoidance };
        let cwnd = match phase {
            Phase::SlowStart => CwndState::new(initial_cwnd, floor),
            Phase::CongestionAvoidance => CwndState::congestion_avoidance(initial_cwnd, floor),
        };
        Ok(FlowController {
            kind,
            cwnd,
            rtt: RttTracker::new(),
            guardian: None,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
        })
    }

    pub fn kind(&self) -> &ControllerKind {
        &self.kind
    }

    pub fn cwnd(&self) -> f64 {
        self.cwnd.cwnd()
    }

    pub fn cwnd_state(&self) -> &CwndState {
        &self.cwnd
    }

    pub fn rtt(&self) -> &RttTracker {
        &self.rtt
    }

    pub fn guardian(&self) -> Option<&Guardian> {
        self.guardian.as_ref()
    }

    /// Current DTT and whether a fixed target had to be raised, once mRTT is known.
    pub fn dtt(&self) -> Option<(f64, bool)> {
        match (&self.kind, self.rtt.mrtt()) {
            (ControllerKind::Reminis { guardian, .. }, Some(mrtt)) => {
                let r = resolve_dtt(guardian, mrtt);
                Some((r.dtt, r.raised))
            }
            _ => None,
        }
    }

    /// Feeds one RTT sample (seconds). A Reminis flow in slow start leaves it
    /// as soon as a sample exceeds the delay target.
    pub fn on_rtt_sample(&mut self, rtt: f64) {
        self.rtt.record(rtt);
        if let ControllerKind::Reminis { guardian, modules } = &self.kind {
            if modules.aimd && self.cwnd.phase() == Phase::SlowStart {
                let mrtt = self.rtt.mrtt().expect("sample just recorded");
                if rtt > resolve_dtt(guardian, mrtt).dtt {
                    self.cwnd.exit_slow_start();
                }
            }
        }
    }

    /// A new in-order ack.
    pub fn on_ack(&mut self) {
        if self.kind.aimd_enabled() {
            self.cwnd.on_ack();
        }
    }

    /// A duplicate ack; returns the loss event when the threshold is crossed.
    /// The window only reacts when AIMD is enabled.
    pub fn on_dupack(&mut self) -> Option<LossEvent> {
        let loss = self.cwnd.on_dupack()?;
        if self.kind.aimd_enabled() {
            self.cwnd.on_loss(loss);
        }
        Some(loss)
    }

    /// A new sequence gap was observed; duplicate acks count from zero again.
    pub fn begin_loss_episode(&mut self) {
        self.cwnd.reset_dupacks();
    }

    /// Starts the Guardian once the flow is out of slow start and mRTT is
    /// known. Returns the time of the first tick when it starts.
    pub fn poll_activation(&mut self, now: f64) -> Option<f64> {
        let ControllerKind::Reminis { guardian, modules } = &self.kind else {
            return None;
        };
        if self.guardian.is_some() || self.cwnd.phase() != Phase::CongestionAvoidance {
            return None;
        }
        let g = Guardian::activate(*guardian, modules.guardian, &mut self.rtt, now)?;
        let first = g.next_tick();
        self.guardian = Some(g);
        Some(first)
    }

    /// Runs the Guardian for the interval ending at `now`.
    pub fn on_tick(&mut self, now: f64) -> Option<TickReport> {
        let g = self.guardian.as_mut()?;
        Some(g.tick(&mut self.rtt, &mut self.cwnd, now, &mut self.rng))
    }
}
