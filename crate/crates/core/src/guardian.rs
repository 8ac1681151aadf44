//! The Guardian: once per sampling interval (SI) it infers the network
//! condition from the mean RTT and its derivative, then applies one of three
//! window multipliers.
//!
//! - Zone 1 (delay at or below DTT and falling): non-deterministic
//!   exploration (NDE), `cwnd *= 2^S(x)` with `x ~ N(mu, |mu|/4)`.
//! - Zone 2 (delay at or below DTT and rising): proactive slowdown (PS),
//!   driven by a first-order prediction of next-interval delay.
//! - Zone 3 (delay above DTT): catastrophe mitigation (CM), at least halving.
//!
//! All delays are in seconds; the derivative is dimensionless
//! (seconds of delay per second of wall time).

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::aimd::CwndState;
use crate::error::ConfigError;

/// Lower bound on the exploration variance, which would otherwise vanish or
/// go negative once the mean reaches zero.
pub const MIN_EXPLORATION_VARIANCE: f64 = 1e-6;

/// Fixed DTT values below this multiple of mRTT are raised to it.
pub const FIXED_DTT_MRTT_FLOOR: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DttPolicy {
    /// Absolute delay target in seconds.
    Fixed(f64),
    /// Delay target as a multiple of the observed minimum RTT.
    MrttMultiple(f64),
}

impl Default for DttPolicy {
    fn default() -> Self {
        DttPolicy::MrttMultiple(1.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuardianConfig {
    pub dtt_policy: DttPolicy,
    /// Minimum congestion window in packets.
    pub cwnd_floor: f64,
    pub rng_seed: u64,
}

impl Default for GuardianConfig {
    fn default() -> Self {
        GuardianConfig { dtt_policy: DttPolicy::default(), cwnd_floor: 2.0, rng_seed: 0 }
    }
}

impl GuardianConfig {
    pub fn with_fixed_dtt(dtt_s: f64) -> Self {
        GuardianConfig { dtt_policy: DttPolicy::Fixed(dtt_s), ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self.dtt_policy {
            DttPolicy::MrttMultiple(m) if !(m > 1.0 && m.is_finite()) => {
                return Err(ConfigError::DttMultiplier(m))
            }
            DttPolicy::Fixed(d) if !(d > 0.0 && d.is_finite()) => return Err(ConfigError::FixedDtt(d)),
            _ => {}
        }
        if !(self.cwnd_floor >= 1.0 && self.cwnd_floor.is_finite()) {
            return Err(ConfigError::CwndFloor(self.cwnd_floor));
        }
        Ok(())
    }
}

/// DTT resolved against the current mRTT.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedDtt {
    pub dtt: f64,
    /// The requested fixed DTT did not exceed mRTT and was raised.
    pub raised: bool,
}

/// Resolves the delay target. A fixed target must stay above mRTT, so it is
/// raised to `1.1 * mrtt` when it does not.
pub fn resolve_dtt(config: &GuardianConfig, mrtt: f64) -> ResolvedDtt {
    debug_assert!(mrtt > 0.0);
    match config.dtt_policy {
        DttPolicy::MrttMultiple(m) => ResolvedDtt { dtt: mrtt * m, raised: false },
        DttPolicy::Fixed(d) => {
            let min = FIXED_DTT_MRTT_FLOOR * mrtt;
            if d < min {
                ResolvedDtt { dtt: min, raised: true }
            } else {
                ResolvedDtt { dtt: d, raised: false }
            }
        }
    }
}

/// Affine delay score: 1 at mRTT, 0 at DTT, negative beyond DTT. Not clamped.
pub fn safe_zone(d: f64, mrtt: f64, dtt: f64) -> f64 {
    1.0 - (d - mrtt) / (dtt - mrtt)
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Zone {
    Zone1,
    Zone2,
    Zone3,
    /// Delay at or below DTT with an exactly zero derivative: nothing fires.
    Neutral,
}

impl Zone {
    pub fn as_str(self) -> &'static str {
        match self {
            Zone::Zone1 => "zone1",
            Zone::Zone2 => "zone2",
            Zone::Zone3 => "zone3",
            Zone::Neutral => "neutral",
        }
    }
}

/// Zone 3 dominates; otherwise the sign of the derivative decides, with
/// strict inequalities on both sides.
pub fn classify_zone(d: f64, derivative: f64, _mrtt: f64, dtt: f64) -> Zone {
    if d > dtt {
        Zone::Zone3
    } else if derivative > 0.0 {
        Zone::Zone2
    } else if derivative < 0.0 {
        Zone::Zone1
    } else {
        Zone::Neutral
    }
}

pub fn exploration_variance(mu: f64) -> f64 {
    (mu.abs() / 4.0).max(MIN_EXPLORATION_VARIANCE)
}

/// Stochastic exploration multiplier `2^S(x)`, `x ~ N(mu, max(|mu|/4, 1e-6))`.
pub fn nde_multiplier<R: Rng + ?Sized>(mu: f64, rng: &mut R) -> f64 {
    let normal = Normal::new(mu, exploration_variance(mu).sqrt())
        .expect("exploration standard deviation is positive and finite");
    let x: f64 = normal.sample(rng);
    2f64.powf(sigmoid(x))
}

/// Exploration multiplier that uses the mean instead of a sample.
pub fn deterministic_nde_multiplier(mu: f64) -> f64 {
    2f64.powf(sigmoid(mu))
}

/// Proactive slowdown: predicts `d_next = d_now + derivative * si` and returns
/// `2^min(0, SafeZone(d_next))`.
pub fn ps_multiplier(d_now: f64, derivative: f64, si: f64, mrtt: f64, dtt: f64) -> f64 {
    let d_next = d_now + derivative * si;
    2f64.powf(safe_zone(d_next, mrtt, dtt).min(0.0))
}

/// Catastrophe mitigation: `2^sz_now * 0.5`.
pub fn cm_multiplier(sz_now: f64) -> f64 {
    2f64.powf(sz_now) * 0.5
}

/// Minimum-RTT tracker plus the running mean of the current SI's samples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RttTracker {
    mrtt: Option<f64>,
    si_sum: f64,
    si_count: u64,
}

impl RttTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, rtt: f64) {
        self.mrtt = Some(self.mrtt.map_or(rtt, |m| m.min(rtt)));
        self.si_sum += rtt;
        self.si_count += 1;
    }

    pub fn mrtt(&self) -> Option<f64> {
        self.mrtt
    }

    pub fn si_count(&self) -> u64 {
        self.si_count
    }

    pub fn si_mean(&self) -> Option<f64> {
        (self.si_count > 0).then(|| self.si_sum / self.si_count as f64)
    }

    pub fn clear_si(&mut self) {
        self.si_sum = 0.0;
        self.si_count = 0;
    }
}

/// How Zone 1 turns the Gaussian mean into a multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exploration {
    #[default]
    Stochastic,
    Deterministic,
}

/// Which Guardian modules are allowed to act.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardianModules {
    pub nde: bool,
    pub ps: bool,
    pub cm: bool,
    pub exploration: Exploration,
}

impl Default for GuardianModules {
    fn default() -> Self {
        GuardianModules { nde: true, ps: true, cm: true, exploration: Exploration::Stochastic }
    }
}

/// Per-SI memory of the Guardian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuardianState {
    pub d_prev: f64,
    /// Mean of the exploration Gaussian. Starts at 1 and accumulates
    /// `-derivative` every tick, without clamping.
    pub mu: f64,
    pub last_tick: f64,
    pub si_length: f64,
}

impl GuardianState {
    pub fn new(d_prev: f64, now: f64, mrtt: f64) -> Self {
        GuardianState { d_prev, mu: 1.0, last_tick: now, si_length: mrtt }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AdjustmentSource {
    Nde,
    Ps,
    Cm,
    None,
}

impl AdjustmentSource {
    pub fn as_str(self) -> &'static str {
        match self {
            AdjustmentSource::Nde => "nde",
            AdjustmentSource::Ps => "ps",
            AdjustmentSource::Cm => "cm",
            AdjustmentSource::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CwndAdjustment {
    pub multiplier: f64,
    pub source: AdjustmentSource,
}

impl CwndAdjustment {
    pub const NONE: CwndAdjustment = CwndAdjustment { multiplier: 1.0, source: AdjustmentSource::None };
}

/// Everything a tick decided, for logging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickReport {
    pub adjustment: CwndAdjustment,
    pub zone: Zone,
    pub d_now: f64,
    pub derivative: f64,
    pub mu: f64,
    pub dtt: f64,
    pub cwnd_before: f64,
    pub cwnd_after: f64,
    /// Whether the SI carried any RTT samples.
    pub had_samples: bool,
    /// When the next tick is due (now + current mRTT).
    pub next_tick: f64,
}

/// A Guardian bound to one flow.
#[derive(Debug, Clone, PartialEq)]
pub struct Guardian {
    config: GuardianConfig,
    modules: GuardianModules,
    state: GuardianState,
}

impl Guardian {
    /// Starts the Guardian at `now`. The current SI samples seed `d_prev`
    /// (falling back to mRTT) and are cleared. Returns `None` until at least
    /// one RTT sample has been seen.
    pub fn activate(
        config: GuardianConfig,
        modules: GuardianModules,
        rtt: &mut RttTracker,
        now: f64,
    ) -> Option<Guardian> {
        let mrtt = rtt.mrtt()?;
        let d_prev = rtt.si_mean().unwrap_or(mrtt);
        rtt.clear_si();
        Some(Guardian { config, modules, state: GuardianState::new(d_prev, now, mrtt) })
    }

    pub fn from_state(config: GuardianConfig, modules: GuardianModules, state: GuardianState) -> Self {
        Guardian { config, modules, state }
    }

    pub fn state(&self) -> &GuardianState {
        &self.state
    }

    pub fn config(&self) -> &GuardianConfig {
        &self.config
    }

    pub fn modules(&self) -> &GuardianModules {
        &self.modules
    }

    pub fn next_tick(&self) -> f64 {
        self.state.last_tick + self.state.si_length
    }

    pub fn tick<R: Rng + ?Sized>(
        &mut self,
        rtt: &mut RttTracker,
        cwnd: &mut CwndState,
        now: f64,
        rng: &mut R,
    ) -> TickReport {
        guardian_tick(&mut self.state, &self.config, &self.modules, rtt, cwnd, now, rng)
    }
}

/// One Guardian iteration.
///
/// An SI without samples reuses `d_prev`, leaves `mu` alone and takes no
/// action. Otherwise `mu -= derivative`, the zone is classified and the
/// corresponding multiplier is applied (if that module is enabled), with the
/// window clamped to the configured floor.
pub fn guardian_tick<R: Rng + ?Sized>(
    state: &mut GuardianState,
    config: &GuardianConfig,
    modules: &GuardianModules,
    rtt: &mut RttTracker,
    cwnd: &mut CwndState,
    now: f64,
    rng: &mut R,
) -> TickReport {
    let mrtt = rtt.mrtt().unwrap_or(state.si_length);
    let dtt = resolve_dtt(config, mrtt).dtt;
    let cwnd_before = cwnd.cwnd();
    let interval = now - state.last_tick;

    let (d_now, derivative, zone, adjustment, had_samples) = match rtt.si_mean() {
        None => (state.d_prev, 0.0, Zone::Neutral, CwndAdjustment::NONE, false),
        Some(d_now) => {
            let derivative = if interval > 0.0 { (d_now - state.d_prev) / interval } else { 0.0 };
            state.mu -= derivative;
            let zone = classify_zone(d_now, derivative, mrtt, dtt);
            let adjustment = match zone {
                Zone::Zone3 if modules.cm => CwndAdjustment {
                    multiplier: cm_multiplier(safe_zone(d_now, mrtt, dtt)),
                    source: AdjustmentSource::Cm,
                },
                Zone::Zone2 if modules.ps => CwndAdjustment {
                    multiplier: ps_multiplier(d_now, derivative, interval, mrtt, dtt),
                    source: AdjustmentSource::Ps,
                },
                Zone::Zone1 if modules.nde => {
                    let multiplier = match modules.exploration {
                        Exploration::Stochastic => nde_multiplier(state.mu, rng),
                        Exploration::Deterministic => deterministic_nde_multiplier(state.mu),
                    };
                    CwndAdjustment { multiplier, source: AdjustmentSource::Nde }
                }
                _ => CwndAdjustment::NONE,
            };
            (d_now, derivative, zone, adjustment, true)
        }
    };

    if adjustment.source != AdjustmentSource::None {
        cwnd.scale(adjustment.multiplier);
    }

    state.d_prev = d_now;
    state.last_tick = now;
    state.si_length = mrtt;
    rtt.clear_si();

    TickReport {
        adjustment,
        zone,
        d_now,
        derivative,
        mu: state.mu,
        dtt,
        cwnd_before,
        cwnd_after: cwnd.cwnd(),
        had_samples,
        next_tick: now + mrtt,
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    const MS: f64 = 1e-3;

    fn tracker_with(samples: &[f64], mrtt: f64) -> RttTracker {
        let mut t = RttTracker::new();
        t.record(mrtt);
        t.clear_si();
        for &s in samples {
            t.record(s);
        }
        t
    }

    #[test]
    fn safe_zone_endpoints() {
        assert_eq!(safe_zone(20.0 * MS, 20.0 * MS, 30.0 * MS), 1.0);
        assert_abs_diff_eq!(safe_zone(30.0 * MS, 20.0 * MS, 30.0 * MS), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(safe_zone(40.0 * MS, 20.0 * MS, 30.0 * MS), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((1.0 - sigmoid(50.0)).abs() <= 1e-15);
        // Reference: 1 / (1 + e^-1) from a 40-term series for e^-1.
        let mut e_inv = 0.0;
        let mut term = 1.0;
        for k in 0..40 {
            if k > 0 {
                term *= -1.0 / k as f64;
            }
            e_inv += term;
        }
        assert_abs_diff_eq!(sigmoid(1.0), 1.0 / (1.0 + e_inv), epsilon = 1e-15);
        assert_abs_diff_eq!(sigmoid(1.0), 0.7310585786, epsilon = 1e-10);
    }

    #[test]
    fn zones() {
        let (m, dtt) = (20.0 * MS, 30.0 * MS);
        assert_eq!(classify_zone(25.0 * MS, -0.1, m, dtt), Zone::Zone1);
        assert_eq!(classify_zone(25.0 * MS, 0.1, m, dtt), Zone::Zone2);
        assert_eq!(classify_zone(35.0 * MS, -0.5, m, dtt), Zone::Zone3);
        assert_eq!(classify_zone(25.0 * MS, 0.0, m, dtt), Zone::Neutral);
        assert_eq!(classify_zone(30.0 * MS, 0.3, m, dtt), Zone::Zone2);
    }

    #[test]
    fn nde_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let m = nde_multiplier(0.0, &mut rng);
            assert!(m > 1.0 && m < 2.0);
        }
        for _ in 0..1000 {
            assert!((2.0 - nde_multiplier(100.0, &mut rng)).abs() < 1e-6);
        }
    }

    #[test]
    fn nde_mean_at_unit_mu_matches_quadrature() {
        // E[2^S(x)], x ~ N(1, 1/4), by composite Simpson over +-10 sigma.
        let (mu, sd) = (1.0f64, 0.5f64);
        let n = 20_000;
        let (a, b) = (mu - 10.0 * sd, mu + 10.0 * sd);
        let h = (b - a) / n as f64;
        let f = |x: f64| {
            2f64.powf(sigmoid(x)) * (-(x - mu).powi(2) / (2.0 * sd * sd)).exp()
                / (sd * (2.0 * std::f64::consts::PI).sqrt())
        };
        let mut acc = f(a) + f(b);
        for i in 1..n {
            acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let quad = acc * h / 3.0;
        assert_abs_diff_eq!(quad, 1.651524598, epsilon = 1e-8);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 1_000_000;
        let mean = (0..draws).map(|_| nde_multiplier(1.0, &mut rng)).sum::<f64>() / draws as f64;
        assert_abs_diff_eq!(mean, quad, epsilon = 0.01);
    }

    #[test]
    fn ps_examples() {
        let (m, dtt, si) = (20.0 * MS, 30.0 * MS, 20.0 * MS);
        assert_eq!(ps_multiplier(22.0 * MS, 0.1, si, m, dtt), 1.0);
        assert_abs_diff_eq!(ps_multiplier(28.0 * MS, 0.2, si, m, dtt), 0.870550563, epsilon = 1e-9);
        assert_abs_diff_eq!(ps_multiplier(30.0 * MS, 0.5, si, m, dtt), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn cm_examples() {
        assert_eq!(cm_multiplier(-1.0), 0.25);
        assert_abs_diff_eq!(cm_multiplier(-0.001), 0.499653546, epsilon = 1e-9);
        assert_eq!(cm_multiplier(-3.0), 0.0625);
    }

    #[test]
    fn resolve_dtt_examples() {
        let cfg = GuardianConfig::default();
        assert_abs_diff_eq!(resolve_dtt(&cfg, 0.020).dtt, 0.030, epsilon = 1e-15);

        let r = resolve_dtt(&GuardianConfig::with_fixed_dtt(0.040), 0.020);
        assert_eq!(r, ResolvedDtt { dtt: 0.040, raised: false });

        let r = resolve_dtt(&GuardianConfig::with_fixed_dtt(0.010), 0.020);
        assert_abs_diff_eq!(r.dtt, 0.022, epsilon = 1e-15);
        assert!(r.raised);
    }

    #[test]
    fn config_validation() {
        assert!(GuardianConfig::default().validate().is_ok());
        let bad = GuardianConfig { dtt_policy: DttPolicy::MrttMultiple(1.0), ..Default::default() };
        assert_eq!(bad.validate(), Err(ConfigError::DttMultiplier(1.0)));
        let bad = GuardianConfig { cwnd_floor: 0.5, ..Default::default() };
        assert_eq!(bad.validate(), Err(ConfigError::CwndFloor(0.5)));
        let bad = GuardianConfig::with_fixed_dtt(-1.0);
        assert!(bad.validate().is_err());
    }

    fn state(d_prev: f64, mu: f64, last_tick: f64) -> GuardianState {
        GuardianState { d_prev, mu, last_tick, si_length: 20.0 * MS }
    }

    #[test]
    fn tick_zero_derivative_does_nothing() {
        let cfg = GuardianConfig::default();
        let mut st = state(20.0 * MS, 1.0, 0.0);
        let mut rtt = tracker_with(&[19.0 * MS, 21.0 * MS], 19.0 * MS);
        let mut cwnd = CwndState::congestion_avoidance(100.0, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = guardian_tick(&mut st, &cfg, &Default::default(), &mut rtt, &mut cwnd, 0.020, &mut rng);
        assert_eq!(r.derivative, 0.0);
        assert_eq!(r.zone, Zone::Neutral);
        assert_eq!(r.adjustment, CwndAdjustment::NONE);
        assert_eq!(cwnd.cwnd(), 100.0);
        assert_eq!(st.mu, 1.0);
        assert_eq!(rtt.si_count(), 0);
        assert_eq!(r.next_tick, 0.020 + 19.0 * MS);
    }

    #[test]
    fn tick_above_dtt_mitigates() {
        let cfg = GuardianConfig::default();
        let mut st = state(20.0 * MS, 1.0, 0.0);
        let mut rtt = tracker_with(&[36.0 * MS], 20.0 * MS);
        let mut cwnd = CwndState::congestion_avoidance(100.0, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = guardian_tick(&mut st, &cfg, &Default::default(), &mut rtt, &mut cwnd, 0.020, &mut rng);
        assert_eq!(r.zone, Zone::Zone3);
        assert_eq!(r.adjustment.source, AdjustmentSource::Cm);
        assert_abs_diff_eq!(r.adjustment.multiplier, 0.329876978, epsilon = 1e-9);
        assert_abs_diff_eq!(cwnd.cwnd(), 32.9876978, epsilon = 1e-6);
        assert_eq!(st.d_prev, 36.0 * MS);
    }

    #[test]
    fn tick_falling_delay_explores_with_updated_mean() {
        let cfg = GuardianConfig::default();
        let mut st = state(24.0 * MS, 0.9, 1.0);
        let mut rtt = tracker_with(&[21.0 * MS, 23.0 * MS], 20.0 * MS);
        let mut cwnd = CwndState::congestion_avoidance(100.0, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let r = guardian_tick(&mut st, &cfg, &Default::default(), &mut rtt, &mut cwnd, 1.020, &mut rng);
        assert_abs_diff_eq!(r.derivative, -0.1, epsilon = 1e-9);
        assert_abs_diff_eq!(st.mu, 1.0, epsilon = 1e-9);
        assert_eq!(r.zone, Zone::Zone1);
        assert_eq!(r.adjustment.source, AdjustmentSource::Nde);

        // Same draw as Normal(mu, 0.25) from an identically seeded generator.
        let mut replay = ChaCha8Rng::seed_from_u64(42);
        let x: f64 = Normal::new(st.mu, 0.5).unwrap().sample(&mut replay);
        assert_abs_diff_eq!(r.adjustment.multiplier, 2f64.powf(sigmoid(x)), epsilon = 1e-12);
    }

    #[test]
    fn tick_empty_interval_is_neutral() {
        let cfg = GuardianConfig::default();
        let mut st = state(25.0 * MS, 0.7, 0.0);
        let mut rtt = tracker_with(&[], 20.0 * MS);
        let mut cwnd = CwndState::congestion_avoidance(50.0, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = guardian_tick(&mut st, &cfg, &Default::default(), &mut rtt, &mut cwnd, 0.02, &mut rng);
        assert!(!r.had_samples);
        assert_eq!(r.zone, Zone::Neutral);
        assert_eq!(st.mu, 0.7);
        assert_eq!(st.d_prev, 25.0 * MS);
        assert_eq!(st.last_tick, 0.02);
        assert_eq!(cwnd.cwnd(), 50.0);
    }

    #[test]
    fn disabled_module_takes_no_action() {
        let cfg = GuardianConfig::default();
        let modules = GuardianModules { cm: false, ..Default::default() };
        let mut st = state(20.0 * MS, 1.0, 0.0);
        let mut rtt = tracker_with(&[36.0 * MS], 20.0 * MS);
        let mut cwnd = CwndState::congestion_avoidance(100.0, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = guardian_tick(&mut st, &cfg, &modules, &mut rtt, &mut cwnd, 0.02, &mut rng);
        assert_eq!(r.zone, Zone::Zone3);
        assert_eq!(r.adjustment, CwndAdjustment::NONE);
        assert_eq!(cwnd.cwnd(), 100.0);
    }

    #[test]
    fn deterministic_exploration_uses_mean() {
        let cfg = GuardianConfig::default();
        let modules = GuardianModules { exploration: Exploration::Deterministic, ..Default::default() };
        let mut st = state(24.0 * MS, 0.9, 0.0);
        let mut rtt = tracker_with(&[22.0 * MS], 20.0 * MS);
        let mut cwnd = CwndState::congestion_avoidance(100.0, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = guardian_tick(&mut st, &cfg, &modules, &mut rtt, &mut cwnd, 0.02, &mut rng);
        assert_abs_diff_eq!(r.adjustment.multiplier, 2f64.powf(sigmoid(1.0)), epsilon = 1e-9);
    }

    #[test]
    fn activation_needs_a_sample() {
        let mut rtt = RttTracker::new();
        assert!(Guardian::activate(GuardianConfig::default(), Default::default(), &mut rtt, 0.0).is_none());
        rtt.record(0.021);
        rtt.record(0.023);
        let g = Guardian::activate(GuardianConfig::default(), Default::default(), &mut rtt, 0.5).unwrap();
        assert_abs_diff_eq!(g.state().d_prev, 0.022, epsilon = 1e-15);
        assert_eq!(g.state().mu, 1.0);
        assert_eq!(g.next_tick(), 0.5 + 0.021);
        assert_eq!(rtt.si_count(), 0);
    }

    #[test]
    fn rtt_tracker_keeps_minimum() {
        let mut t = RttTracker::new();
        for s in [0.03, 0.02, 0.025, 0.021] {
            t.record(s);
        }
        assert_eq!(t.mrtt(), Some(0.02));
        assert_eq!(t.si_count(), 4);
        assert_abs_diff_eq!(t.si_mean().unwrap(), 0.024, epsilon = 1e-15);
    }

    #[test]
    fn mu_telescopes_over_ticks() {
        let cfg = GuardianConfig::default();
        let mut st = state(20.0 * MS, 1.0, 0.0);
        let mut rtt = tracker_with(&[], 20.0 * MS);
        let mut cwnd = CwndState::congestion_avoidance(100.0, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let delays = [22.0, 25.0, 24.0, 21.0, 28.0, 33.0, 26.0, 20.0];
        let mut sum = 0.0;
        let mut now = 0.0;
        for d in delays {
            now += 0.020;
            rtt.record(d * MS);
            let r = guardian_tick(&mut st, &cfg, &Default::default(), &mut rtt, &mut cwnd, now, &mut rng);
            sum += r.derivative;
        }
        assert_abs_diff_eq!(st.mu, 1.0 - sum, epsilon = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2_000))]

        #[test]
        fn zone_classification_is_total(d in 0.0f64..1.0, der in -10.0f64..10.0, dtt in 0.001f64..0.5) {
            let z = classify_zone(d, der, 0.0, dtt);
            let expected = if d > dtt { Zone::Zone3 } else if der > 0.0 { Zone::Zone2 } else if der < 0.0 { Zone::Zone1 } else { Zone::Neutral };
            prop_assert_eq!(z, expected);
        }

        #[test]
        fn identical_seeds_replay_identically(seed in any::<u64>(), delays in prop::collection::vec(15.0f64..60.0, 1..60)) {
            let run = || {
                let cfg = GuardianConfig::default();
                let mut st = state(20.0 * MS, 1.0, 0.0);
                let mut rtt = tracker_with(&[], 15.0 * MS);
                let mut cwnd = CwndState::congestion_avoidance(100.0, 2.0);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut now = 0.0;
                let mut out = Vec::new();
                for d in &delays {
                    now += 0.015;
                    rtt.record(d * MS);
                    let r = guardian_tick(&mut st, &cfg, &Default::default(), &mut rtt, &mut cwnd, now, &mut rng);
                    out.push((r.adjustment.multiplier.to_bits(), r.adjustment.source, r.cwnd_after.to_bits()));
                }
                out
            };
            prop_assert_eq!(run(), run());
        }
    }
}
