//! Closed forms and Monte-Carlo oracles for the analytical results: the
//! expected-sigmoid approximation, the expected NDE multiplier, the
//! steady-state queuing-delay bound and the logarithmic ramp-up bound.

use std::f64::consts::{LN_2, PI};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::guardian::sigmoid;

/// Idealised fixed-rate link used by the bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkModel {
    /// Packets per second.
    pub bw: f64,
    /// Seconds.
    pub mrtt: f64,
    /// Bandwidth-delay product in packets.
    pub w1: f64,
    /// Window that fills the link and a queue of one mRTT.
    pub w2: f64,
    /// Queuing threshold in seconds (DTT - mRTT with DTT = 2 mRTT).
    pub q_th: f64,
}

impl LinkModel {
    pub fn new(bw_pps: f64, mrtt: f64) -> Self {
        let w1 = bw_pps * mrtt;
        LinkModel { bw: bw_pps, mrtt, w1, w2: 2.0 * w1, q_th: mrtt }
    }

    pub fn from_rate(rate_mbps: f64, mrtt: f64, packet_size: u32) -> Self {
        Self::new(rate_mbps * 1e6 / (f64::from(packet_size) * 8.0), mrtt)
    }
}

/// Probit-style approximation of E[S(x)] for x ~ N(mu, sigma2).
pub fn expected_sigmoid(mu: f64, sigma2: f64) -> f64 {
    sigmoid(mu / (1.0 + PI * sigma2 / 8.0).sqrt())
}

fn normal(mu: f64, sigma2: f64) -> Normal<f64> {
    Normal::new(mu, sigma2.max(0.0).sqrt()).expect("finite mean and non-negative variance")
}

/// Monte-Carlo mean of S(x), x ~ N(mu, sigma2).
pub fn mc_expected_sigmoid(mu: f64, sigma2: f64, n_draws: u64, seed: u64) -> f64 {
    mc_mean(mu, sigma2, n_draws, seed, sigmoid)
}

/// Monte-Carlo mean of the NDE multiplier 2^S(x), x ~ N(mu, sigma2).
pub fn mc_expected_nde_multiplier(mu: f64, sigma2: f64, n_draws: u64, seed: u64) -> f64 {
    mc_mean(mu, sigma2, n_draws, seed, |x| sigmoid(x).exp2())
}

fn mc_mean(mu: f64, sigma2: f64, n_draws: u64, seed: u64, f: impl Fn(f64) -> f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = normal(mu, sigma2);
    // Kahan summation keeps 1e6-draw means reproducible to the last bits.
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for _ in 0..n_draws {
        let y = f(dist.sample(&mut rng)) - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum / n_draws as f64
}

/// E[f(x)] for x ~ N(mu, sigma2) by composite Simpson over +-12 sigma.
pub fn gaussian_expectation(mu: f64, sigma2: f64, f: impl Fn(f64) -> f64) -> f64 {
    if sigma2 <= 0.0 {
        return f(mu);
    }
    let sd = sigma2.sqrt();
    let n = 4000usize;
    let (a, b) = (-12.0, 12.0);
    let h = (b - a) / n as f64;
    let g = |z: f64| f(mu + sd * z) * (-0.5 * z * z).exp();
    let mut acc = g(a) + g(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * g(a + i as f64 * h);
    }
    acc * h / 3.0 / (2.0 * PI).sqrt()
}

/// E[2^S(x)] by quadrature.
pub fn expected_nde_multiplier(mu: f64, sigma2: f64) -> f64 {
    gaussian_expectation(mu, sigma2, |x| sigmoid(x).exp2())
}

/// First-order estimate 1 + ln2 * E[S(x)], from 2^s ~ 1 + s ln 2.
pub fn first_order_nde_multiplier(mu: f64, sigma2: f64) -> f64 {
    1.0 + LN_2 * expected_sigmoid(mu, sigma2)
}

/// Upper bound on the steady-state queuing delay, in seconds.
pub fn steady_state_delay_bound(model: &LinkModel) -> f64 {
    (1.0 + sigmoid((4f64.ln() - 1.0) / (2.0 * model.w1)) * LN_2) * model.q_th
}

/// Sampling intervals needed to ramp up from the floor to `w1`.
pub fn rampup_bound(w1: f64) -> f64 {
    4.0 * (3.0 * w1).ln()
}

/// Iterates cwnd_n = ratio * (cwnd_{n-1} + 1) from cwnd_1 = 0 and returns the
/// first n with cwnd_n >= w1.
pub fn rampup_recurrence_sis(w1: f64, ratio: f64) -> u32 {
    assert!(ratio > 1.0, "ratio must exceed 1");
    let mut cwnd = 0.0;
    let mut n = 1;
    while cwnd < w1 {
        cwnd = ratio * (cwnd + 1.0);
        n += 1;
    }
    n
}
