//! Experiment configuration: a TOML file with sections, overlaid by
//! command-line flags, resolved into simulator inputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use reminis::guardian::{resolve_dtt, DttPolicy};
use reminis::metrics::DEFAULT_WARMUP;
use reminis::{
    Ablation, ConfigError, ControllerKind, FlowSpec, GuardianConfig, Phase, SimConfig, SimError,
    TraceError, TraceSchedule, DEFAULT_PACKET_SIZE, INFINITE_BUFFER,
};

use crate::error::CliError;

/// Environment variable that overrides the output root.
pub const OUT_ENV: &str = "REMINIS_OUT";
pub const DEFAULT_OUT: &str = "reminis-out";
pub const DEFAULT_BIN: f64 = 0.1;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: Option<String>,
    pub seeds: Option<Vec<u64>>,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub trace: TraceSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub guardian: GuardianSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flows: Vec<FlowSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSection {
    /// Mahimahi trace file, relative paths resolved against the config file.
    pub file: Option<PathBuf>,
    /// `[rate_mbps, duration_s]` pieces of a synthetic step trace.
    pub segments: Option<Vec<[f64; 2]>>,
}

/// A packet count or the string `"infinite"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BufferSetting {
    Packets(u64),
    Named(Unbounded),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unbounded {
    Infinite,
}

impl BufferSetting {
    pub fn packets(self) -> u64 {
        match self {
            BufferSetting::Packets(n) => n,
            BufferSetting::Named(Unbounded::Infinite) => INFINITE_BUFFER,
        }
    }
}

impl std::str::FromStr for BufferSetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("infinite") {
            return Ok(BufferSetting::Named(Unbounded::Infinite));
        }
        s.parse().map(BufferSetting::Packets).map_err(|_| format!("expected a packet count or \"infinite\", got {s:?}"))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub buffer: Option<BufferSetting>,
    pub one_way_delay_ms: Option<f64>,
    pub duration_s: Option<f64>,
    pub packet_size: Option<u32>,
    pub per_flow_queues: Option<bool>,
    pub cwnd_sample_interval_ms: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuardianSection {
    /// Fixed delay target. Mutually exclusive with `dtt_multiplier`.
    pub dtt_ms: Option<f64>,
    pub dtt_multiplier: Option<f64>,
    pub cwnd_floor: Option<f64>,
    pub rng_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    pub warmup_s: Option<f64>,
    pub bin_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ControllerChoice {
    #[default]
    Reminis,
    Aimd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseChoice {
    SlowStart,
    CongestionAvoidance,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    #[serde(default)]
    pub start_s: f64,
    #[serde(default)]
    pub controller: ControllerChoice,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ablations: Vec<Ablation>,
    pub initial_cwnd: Option<f64>,
    pub phase: Option<PhaseChoice>,
}

/// Everything needed to execute one scenario, minus the per-run seed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub seeds: Vec<u64>,
    pub out_root: PathBuf,
    pub sim: SimConfig,
    pub guardian: GuardianConfig,
    pub flows: Vec<FlowSpec>,
    pub trace: TraceSchedule,
    pub warmup: f64,
    pub bin: f64,
    /// The merged configuration, echoed into every summary.
    pub echo: ExperimentConfig,
}

impl Scenario {
    pub fn run_dir(&self, seed: u64) -> PathBuf {
        self.out_root.join(&self.name).join(format!("seed-{seed}"))
    }

    pub fn sim_for_seed(&self, seed: u64) -> SimConfig {
        SimConfig { seed, ..self.sim.clone() }
    }

    /// DTT used for D3 when no Reminis flow reports one: the policy resolved
    /// against the intrinsic RTT.
    pub fn nominal_dtt(&self) -> f64 {
        resolve_dtt(&self.guardian, self.sim.intrinsic_rtt().max(f64::MIN_POSITIVE)).dtt
    }

    /// Mean rate of the trace over one loop, in Mbps.
    pub fn mean_rate_mbps(&self) -> f64 {
        let loop_len = self.trace.loop_length();
        self.trace.rate_mbps(reminis::SimTime::ZERO, loop_len, self.sim.packet_size)
    }
}

pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::MissingInput { what: "config file", path: path.to_path_buf() },
        _ => CliError::io(format!("reading {}", path.display()), e),
    })?;
    let mut cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| CliError::config(path.display().to_string(), e.message()))?;
    // Trace paths are relative to the file that names them.
    if let (Some(file), Some(dir)) = (&cfg.trace.file, path.parent()) {
        if file.is_relative() {
            cfg.trace.file = Some(dir.join(file));
        }
    }
    Ok(cfg)
}

fn sim_field(err: &SimError) -> &'static str {
    match err {
        SimError::BufferCapacity => "sim.buffer",
        SimError::Duration => "sim.duration_s",
        SimError::PacketSize => "sim.packet_size",
        SimError::OneWayDelay(_) => "sim.one_way_delay_ms",
        SimError::SampleInterval(_) => "sim.cwnd_sample_interval_ms",
        SimError::DuplicateFlow(_) | SimError::FlowStart { .. } | SimError::Controller { .. } => "flows",
        SimError::Trace(_) => "trace",
    }
}

fn guardian_field(err: &ConfigError) -> &'static str {
    match err {
        ConfigError::DttMultiplier(_) => "guardian.dtt_multiplier",
        ConfigError::FixedDtt(_) => "guardian.dtt_ms",
        ConfigError::CwndFloor(_) => "guardian.cwnd_floor",
        ConfigError::InitialCwnd { .. } => "flows.initial_cwnd",
    }
}

fn positive(field: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::config(field, format!("must be positive and finite, got {v}")))
    }
}

fn load_trace(cfg: &ExperimentConfig, packet_size: u32) -> Result<(TraceSchedule, Option<f64>), CliError> {
    match (&cfg.trace.file, &cfg.trace.segments) {
        (Some(_), Some(_)) => Err(CliError::config("trace", "set either file or segments, not both")),
        (None, None) => Err(CliError::config("trace", "no trace given (set trace.file or trace.segments)")),
        (Some(path), None) => {
            let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => CliError::MissingInput { what: "trace file", path: path.clone() },
                _ => CliError::io(format!("reading {}", path.display()), e),
            })?;
            let trace = TraceSchedule::parse(&text).map_err(|e| CliError::config("trace.file", format!("{}: {e}", path.display())))?;
            Ok((trace, None))
        }
        (None, Some(segments)) => {
            let pieces: Vec<(f64, f64)> = segments.iter().map(|s| (s[0], s[1])).collect();
            let total = pieces.iter().map(|p| p.1).sum();
            let trace = TraceSchedule::step(&pieces, packet_size).map_err(|e: TraceError| CliError::config("trace.segments", e))?;
            Ok((trace, Some(total)))
        }
    }
}

/// Resolves a merged configuration into a runnable scenario.
pub fn resolve(cfg: ExperimentConfig, out_flag: Option<PathBuf>) -> Result<Scenario, CliError> {
    let name = cfg.name.clone().unwrap_or_else(|| "scenario".to_string());
    if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
        return Err(CliError::config("name", format!("{name:?} is not a usable directory name")));
    }
    let seeds = cfg.seeds.clone().unwrap_or_else(|| vec![DEFAULT_SEED]);
    if seeds.is_empty() {
        return Err(CliError::config("seeds", "at least one seed is required"));
    }
    // Flag, then environment, then file.
    let out_root = out_flag
        .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));

    let packet_size = cfg.sim.packet_size.unwrap_or(DEFAULT_PACKET_SIZE);
    if packet_size == 0 {
        return Err(CliError::config("sim.packet_size", "must be positive"));
    }
    let (trace, trace_len) = load_trace(&cfg, packet_size)?;
    let defaults = SimConfig::default();
    let sim = SimConfig {
        buffer_capacity: cfg.sim.buffer.map_or(defaults.buffer_capacity, BufferSetting::packets),
        one_way_delay: cfg.sim.one_way_delay_ms.map_or(defaults.one_way_delay, |ms| ms / 1e3),
        duration: cfg.sim.duration_s.or(trace_len).unwrap_or(defaults.duration),
        packet_size,
        seed: seeds[0],
        per_flow_queues: cfg.sim.per_flow_queues.unwrap_or(false),
        cwnd_sample_interval: cfg.sim.cwnd_sample_interval_ms.map_or(defaults.cwnd_sample_interval, |ms| ms / 1e3),
    };
    sim.validate().map_err(|e| CliError::config(sim_field(&e), e))?;

    let dtt_policy = match (cfg.guardian.dtt_ms, cfg.guardian.dtt_multiplier) {
        (Some(_), Some(_)) => return Err(CliError::config("guardian.dtt_ms", "conflicts with guardian.dtt_multiplier")),
        (Some(ms), None) => DttPolicy::Fixed(ms / 1e3),
        (None, Some(m)) => DttPolicy::MrttMultiple(m),
        (None, None) => DttPolicy::default(),
    };
    let guardian = GuardianConfig {
        dtt_policy,
        cwnd_floor: cfg.guardian.cwnd_floor.unwrap_or(GuardianConfig::default().cwnd_floor),
        rng_seed: cfg.guardian.rng_seed.unwrap_or(0),
    };
    guardian.validate().map_err(|e| CliError::config(guardian_field(&e), e))?;

    let sections = if cfg.flows.is_empty() { vec![FlowSection::default()] } else { cfg.flows.clone() };
    let mut flows = Vec::with_capacity(sections.len());
    for (i, f) in sections.iter().enumerate() {
        let field = |k: &str| format!("flows[{i}].{k}");
        if !(f.start_s >= 0.0 && f.start_s < sim.duration) {
            return Err(CliError::config(field("start_s"), format!("{} s is outside [0, {}) s", f.start_s, sim.duration)));
        }
        let controller = match f.controller {
            ControllerChoice::Reminis => ControllerKind::ablated(guardian, &f.ablations),
            ControllerChoice::Aimd if !f.ablations.is_empty() => {
                return Err(CliError::config(field("ablations"), "only apply to reminis flows"))
            }
            ControllerChoice::Aimd => ControllerKind::AimdOnly { cwnd_floor: guardian.cwnd_floor },
        };
        let spec = FlowSpec::new(i as u32 + 1, f.start_s, controller);
        let phase = match f.phase {
            Some(PhaseChoice::SlowStart) | None => Phase::SlowStart,
            Some(PhaseChoice::CongestionAvoidance) => Phase::CongestionAvoidance,
        };
        let cwnd = f.initial_cwnd.unwrap_or(spec.initial_cwnd);
        let spec = spec.with_initial_window(cwnd, phase);
        let floor = spec.controller.cwnd_floor();
        if !(spec.initial_cwnd >= floor && spec.initial_cwnd.is_finite()) {
            return Err(CliError::config(field("initial_cwnd"), format!("must be finite and at least the floor {floor}")));
        }
        flows.push(spec);
    }

    // The default warmup is dropped for runs too short to have one.
    let warmup = cfg.metrics.warmup_s.unwrap_or(if DEFAULT_WARMUP < sim.duration { DEFAULT_WARMUP } else { 0.0 });
    if !(warmup >= 0.0 && warmup < sim.duration) {
        return Err(CliError::config("metrics.warmup_s", format!("{warmup} s must lie in [0, {}) s", sim.duration)));
    }
    let bin = positive("metrics.bin_s", cfg.metrics.bin_s.unwrap_or(DEFAULT_BIN))?;

    Ok(Scenario { name, seeds, out_root, sim, guardian, flows, trace, warmup, bin, echo: cfg })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> ExperimentConfig {
        toml::from_str(text).unwrap()
    }

    #[test]
    fn parses_all_sections() {
        let cfg = parse(
            r#"
            name = "step"
            seeds = [1, 2]
            [trace]
            segments = [[300.0, 2.0], [600.0, 2.0]]
            [sim]
            buffer = "infinite"
            one_way_delay_ms = 5.0
            [guardian]
            dtt_ms = 40.0
            [[flows]]
            controller = "aimd"
            [[flows]]
            start_s = 1.0
            ablations = ["ps_off", "cm_off"]
            phase = "congestion_avoidance"
            initial_cwnd = 2.0
            "#,
        );
        let s = resolve(cfg, None).unwrap();
        assert_eq!(s.sim.buffer_capacity, INFINITE_BUFFER);
        assert_eq!(s.sim.duration, 4.0);
        assert_eq!(s.sim.one_way_delay, 0.005);
        assert_eq!(s.guardian.dtt_policy, DttPolicy::Fixed(0.040));
        assert_eq!(s.flows.len(), 2);
        assert!(matches!(s.flows[0].controller, ControllerKind::AimdOnly { .. }));
        assert_eq!(s.flows[1].initial_phase, Phase::CongestionAvoidance);
        assert_eq!(s.seeds, vec![1, 2]);
    }

    #[test]
    fn errors_name_the_field() {
        let base = "[trace]\nsegments = [[12.0, 1.0]]\n";
        let cases = [
            ("[sim]\nbuffer = 0\n", "sim.buffer"),
            ("[sim]\none_way_delay_ms = -1.0\n", "sim.one_way_delay_ms"),
            ("[guardian]\ndtt_multiplier = 0.5\n", "guardian.dtt_multiplier"),
            ("[guardian]\ndtt_ms = 30.0\ndtt_multiplier = 2.0\n", "guardian.dtt_ms"),
            ("[[flows]]\nstart_s = 5.0\n", "flows[0].start_s"),
            ("[metrics]\nbin_s = 0.0\n", "metrics.bin_s"),
        ];
        for (extra, field) in cases {
            let err = resolve(parse(&format!("{base}{extra}")), None).unwrap_err();
            assert!(matches!(&err, CliError::Config { field: f, .. } if f == field), "{extra}: {err}");
        }
        let err = resolve(parse("[trace]\nsegments = [[-1.0, 1.0]]\n"), None).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(toml::from_str::<ExperimentConfig>("[sim]\nbufer = 3\n").is_err());
    }

    #[test]
    fn missing_trace_file_is_distinct() {
        let mut cfg = ExperimentConfig::default();
        cfg.trace.file = Some(PathBuf::from("/nonexistent/trace.up"));
        assert_eq!(resolve(cfg, None).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn buffer_setting_parses() {
        assert_eq!("800".parse::<BufferSetting>().unwrap().packets(), 800);
        assert_eq!("infinite".parse::<BufferSetting>().unwrap().packets(), INFINITE_BUFFER);
        assert!("lots".parse::<BufferSetting>().is_err());
    }
}
