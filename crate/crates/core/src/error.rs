use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("DTT multiplier must be greater than 1.0, got {0}")]
    DttMultiplier(f64),
    #[error("fixed DTT must be positive and finite, got {0} s")]
    FixedDtt(f64),
    #[error("cwnd floor must be at least 1 packet, got {0}")]
    CwndFloor(f64),
    #[error("initial cwnd must be finite and at least the floor ({floor}), got {cwnd}")]
    InitialCwnd { cwnd: f64, floor: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("trace is empty")]
    Empty,
    #[error("line {line}: expected an integer millisecond timestamp, got {text:?}")]
    Parse { line: usize, text: String },
    #[error("line {line}: timestamp {value} is smaller than the previous one ({previous})")]
    Order { line: usize, value: u64, previous: u64 },
    #[error("trace loop length must be positive")]
    ZeroLoop,
    #[error("loop length {loop_length} ms is shorter than the last timestamp {last} ms")]
    LoopTooShort { loop_length: u64, last: u64 },
    #[error("rate {rate_mbps} Mbps over {duration_s} s yields no delivery opportunities")]
    NoOpportunities { rate_mbps: f64, duration_s: f64 },
    #[error("invalid segment: rate {rate_mbps} Mbps, duration {duration_s} s")]
    Segment { rate_mbps: f64, duration_s: f64 },
    #[error("a step trace needs at least one segment")]
    NoSegments,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("buffer capacity must be at least one packet")]
    BufferCapacity,
    #[error("simulation duration must be positive")]
    Duration,
    #[error("packet size must be positive")]
    PacketSize,
    #[error("one-way delay must be finite and non-negative, got {0} s")]
    OneWayDelay(f64),
    #[error("cwnd sample interval must be positive, got {0} s")]
    SampleInterval(f64),
    #[error("duplicate flow id {0}")]
    DuplicateFlow(u32),
    #[error("flow {flow} starts at {start_s} s, outside [0, {duration_s}) s")]
    FlowStart { flow: u32, start_s: f64, duration_s: f64 },
    #[error("flow {flow}: {source}")]
    Controller { flow: u32, source: ConfigError },
    #[error("trace: {0}")]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("no packets were delivered inside the measurement window")]
    NoDeliveries,
    #[error("measurement window is empty (warmup {warmup_s} s, duration {duration_s} s)")]
    EmptyWindow { warmup_s: f64, duration_s: f64 },
    #[error("fairness index needs at least one positive throughput")]
    AllZero,
    #[error("bin width must be positive")]
    Bin,
}
