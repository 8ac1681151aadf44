//! Numerical checks of the analytical results, printed as PASS/FAIL lines.

use reminis::guardian::sigmoid;
use reminis::theory::{
    expected_nde_multiplier, expected_sigmoid, first_order_nde_multiplier, gaussian_expectation,
    mc_expected_nde_multiplier, mc_expected_sigmoid, rampup_bound, rampup_recurrence_sis,
    steady_state_delay_bound, LinkModel,
};
use reminis::DEFAULT_PACKET_SIZE;

use crate::error::CliError;

pub const MIN_DRAWS: u64 = 10_000;

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    /// Closed-form expected sigmoid against Monte Carlo.
    pub lemma: f64,
    /// Mean exploration multiplier against 1.5.
    pub nde_mean: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { lemma: 0.01, nde_mean: 0.01 }
    }
}

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn checks(draws: u64, seed: u64, tol: Tolerances) -> Vec<Check> {
    let mut out = Vec::new();
    let mut push = |name, pass, detail| out.push(Check { name, pass, detail });

    let mut worst: f64 = 0.0;
    let mut k = 0;
    for mu in [-2.0, -1.0, 0.0, 1.0, 2.0] {
        for s2 in [0.05, 0.25, 1.0] {
            k += 1;
            let mc = mc_expected_sigmoid(mu, s2, draws, seed.wrapping_add(k));
            worst = worst.max((expected_sigmoid(mu, s2) - mc).abs());
        }
    }
    push("expected-sigmoid lemma", worst <= tol.lemma, format!("max |closed - MC| = {worst:.5} over mu in -2..2, var in {{0.05, 0.25, 1}} (tol {})", tol.lemma));

    let first = first_order_nde_multiplier(1.0, 0.25);
    push(
        "mean NDE multiplier, first order",
        (first - 1.5).abs() <= tol.nde_mean,
        format!("1 + ln2 E[S(x)] = {first:.5} vs 1.5 (tol {})", tol.nde_mean),
    );

    let mc = mc_expected_nde_multiplier(1.0, 0.25, draws, seed);
    push(
        "mean NDE multiplier, Monte Carlo",
        (mc - 1.5).abs() <= tol.nde_mean,
        format!("E[2^S(x)] = {mc:.5} vs 1.5 (tol {}); quadrature gives {:.5}", tol.nde_mean, expected_nde_multiplier(1.0, 0.25)),
    );

    // Five standard errors of a mean of values in [1, 2].
    let se = 5.0 * 0.5 / (draws as f64).sqrt();
    let quad = expected_nde_multiplier(1.0, 0.25);
    push("Monte Carlo agrees with quadrature", (mc - quad).abs() <= se, format!("|{mc:.5} - {quad:.5}| <= {se:.5}"));

    let grid_draws = (draws / 100).max(MIN_DRAWS);
    let means: Vec<f64> = (-8..=8).map(|i| mc_expected_nde_multiplier(f64::from(i) * 0.5, 0.25, grid_draws, seed)).collect();
    push(
        "mean multiplier nondecreasing in mu",
        means.windows(2).all(|w| w[0] <= w[1]),
        format!("{} values of mu in [-4, 4], {grid_draws} draws each at a shared seed", means.len()),
    );

    let lo = mc_expected_nde_multiplier(-50.0, 12.5, MIN_DRAWS, seed);
    let hi = mc_expected_nde_multiplier(50.0, 12.5, MIN_DRAWS, seed);
    push(
        "multiplier saturation",
        (lo - 1.0).abs() <= 1e-4 && (hi - 2.0).abs() <= 1e-4,
        format!("mu = -50 gives {lo:.6}, mu = 50 gives {hi:.6}"),
    );

    let exact_worst = [-2.0, 0.0, 2.0]
        .iter()
        .flat_map(|&mu| [0.05, 1.0].map(|s2| (gaussian_expectation(mu, s2, sigmoid) - expected_sigmoid(mu, s2)).abs()))
        .fold(0.0, f64::max);
    push("lemma against quadrature", exact_worst <= tol.lemma, format!("max |closed - exact| = {exact_worst:.5}"));

    let model = LinkModel::from_rate(300.0, 0.020, DEFAULT_PACKET_SIZE);
    let bound = steady_state_delay_bound(&model);
    push(
        "steady-state delay bound",
        (bound * 1e3 - 26.93).abs() <= 0.01,
        format!("w1 = {:.0} pkts, q_th = 20 ms -> {:.3} ms", model.w1, bound * 1e3),
    );
    let shrinking = [1.0, 10.0, 100.0, 1e3, 1e4]
        .windows(2)
        .all(|w| steady_state_delay_bound(&LinkModel { w1: w[1], ..model }) <= steady_state_delay_bound(&LinkModel { w1: w[0], ..model }));
    let linear = (steady_state_delay_bound(&LinkModel { q_th: 0.03, ..model }) - 1.5 * bound).abs() <= 1e-12;
    push("bound shape", shrinking && linear, "nonincreasing in BDP, linear in q_th".to_string());

    let rb = rampup_bound(500.0);
    let sis = rampup_recurrence_sis(500.0, 1.5);
    push(
        "ramp-up bound",
        (rb - 29.25).abs() <= 0.01 && f64::from(sis) <= rb,
        format!("4 ln(3 w1) = {rb:.3} at w1 = 500; the 1.5x recurrence needs {sis} SIs"),
    );
    let all_under = [1.0, 10.0, 1e3, 1e6].iter().all(|&w| [1.3, 1.5].iter().all(|&r| f64::from(rampup_recurrence_sis(w, r)) <= rampup_bound(w)));
    push("recurrence under the ramp-up bound", all_under, "w1 in {1, 10, 1e3, 1e6}, ratio in {1.3, 1.5}".to_string());

    out
}

pub fn run(draws: u64, seed: u64, tol: Tolerances) -> Result<(), CliError> {
    if draws < MIN_DRAWS {
        return Err(CliError::config("draws", format!("at least {MIN_DRAWS} draws are required, got {draws}")));
    }
    if !(tol.lemma >= 0.0 && tol.nde_mean >= 0.0) {
        return Err(CliError::config("tolerance", "tolerances must be non-negative"));
    }
    let results = checks(draws, seed, tol);
    let failed = results.iter().filter(|c| !c.pass).count();
    for c in &results {
        println!("[{}] {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Theory { failed })
    }
}
