//! Delivery-opportunity traces in the Mahimahi convention: one integer
//! millisecond per line, each line one MTU-sized delivery opportunity.
//! Repeated timestamps are multiple opportunities inside that millisecond and
//! are spread uniformly across it. Traces replay cyclically with a period of
//! `loop_length_ms`.

use std::fmt::Write as _;

use crate::error::TraceError;
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceSchedule {
    timestamps_ms: Vec<u64>,
    loop_length_ms: u64,
    /// Opportunity instants of the first pass, in microseconds.
    offsets_us: Vec<u64>,
    /// Offsets folded into `[0, period)`, ascending. `late` marks instants
    /// that fall at or past the loop boundary on the first pass, so they
    /// have no occurrence in cycle 0.
    residues: Vec<Residue>,
    late_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Residue {
    at: u64,
    late: bool,
}

impl TraceSchedule {
    pub fn new(timestamps_ms: Vec<u64>, loop_length_ms: u64) -> Result<Self, TraceError> {
        let last = *timestamps_ms.last().ok_or(TraceError::Empty)?;
        for (i, w) in timestamps_ms.windows(2).enumerate() {
            if w[1] < w[0] {
                return Err(TraceError::Order { line: i + 2, value: w[1], previous: w[0] });
            }
        }
        if loop_length_ms == 0 {
            return Err(TraceError::ZeroLoop);
        }
        if loop_length_ms < last {
            return Err(TraceError::LoopTooShort { loop_length: loop_length_ms, last });
        }
        let offsets_us = spread_offsets(&timestamps_ms);
        let period = loop_length_ms * 1_000;
        let mut residues: Vec<Residue> =
            offsets_us.iter().map(|&o| Residue { at: o % period, late: o >= period }).collect();
        residues.sort_by_key(|r| r.at);
        let late_count = residues.iter().filter(|r| r.late).count() as u64;
        Ok(TraceSchedule { timestamps_ms, loop_length_ms, offsets_us, residues, late_count })
    }

    /// Parses newline-separated millisecond timestamps. Blank lines are
    /// ignored and the loop length is the last timestamp.
    pub fn parse(text: &str) -> Result<Self, TraceError> {
        let mut ts = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let value: u64 = line
                .parse()
                .map_err(|_| TraceError::Parse { line: idx + 1, text: line.to_string() })?;
            if let Some(&previous) = ts.last() {
                if value < previous {
                    return Err(TraceError::Order { line: idx + 1, value, previous });
                }
            }
            ts.push(value);
        }
        let last = *ts.last().ok_or(TraceError::Empty)?;
        Self::new(ts, last)
    }

    pub fn render(&self) -> String {
        let mut out = String::with_capacity(self.timestamps_ms.len() * 6);
        for t in &self.timestamps_ms {
            writeln!(out, "{t}").expect("writing to a String cannot fail");
        }
        out
    }

    /// Evenly spaced opportunities for a constant rate.
    pub fn constant(rate_mbps: f64, duration_s: f64, packet_size: u32) -> Result<Self, TraceError> {
        Self::step(&[(rate_mbps, duration_s)], packet_size)
    }

    /// Piecewise-constant rates laid end to end on one timeline.
    pub fn step(segments: &[(f64, f64)], packet_size: u32) -> Result<Self, TraceError> {
        if segments.is_empty() {
            return Err(TraceError::NoSegments);
        }
        let mut ts = Vec::new();
        let mut base_ms = 0u64;
        for &(rate_mbps, duration_s) in segments {
            if !(rate_mbps > 0.0 && rate_mbps.is_finite() && duration_s > 0.0 && duration_s.is_finite()) {
                return Err(TraceError::Segment { rate_mbps, duration_s });
            }
            let duration_ms = (duration_s * 1e3).round() as u64;
            // Opportunities per millisecond.
            let per_ms = rate_mbps * 1e6 / (f64::from(packet_size) * 8.0) / 1e3;
            let total = (per_ms * duration_ms as f64).round() as u64;
            if duration_ms == 0 || total == 0 {
                return Err(TraceError::NoOpportunities { rate_mbps, duration_s });
            }
            let mut emitted = 0u64;
            for m in 1..=duration_ms {
                let cumulative = (per_ms * m as f64).round() as u64;
                for _ in emitted..cumulative {
                    ts.push(base_ms + m);
                }
                emitted = emitted.max(cumulative);
            }
            base_ms += duration_ms;
        }
        Self::new(ts, base_ms)
    }

    pub fn len(&self) -> usize {
        self.timestamps_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps_ms.is_empty()
    }

    pub fn timestamps_ms(&self) -> &[u64] {
        &self.timestamps_ms
    }

    pub fn loop_length_ms(&self) -> u64 {
        self.loop_length_ms
    }

    pub fn loop_length(&self) -> SimTime {
        SimTime::from_millis(self.loop_length_ms)
    }

    pub fn offsets_us(&self) -> &[u64] {
        &self.offsets_us
    }

    /// Opportunities in the half-open window `[t0, t1)`, replaying the trace
    /// cyclically.
    pub fn opportunities_in(&self, t0: SimTime, t1: SimTime) -> u64 {
        if t1 <= t0 {
            return 0;
        }
        self.opportunities_before(t1.as_micros()) - self.opportunities_before(t0.as_micros())
    }

    /// Number of opportunities strictly before `t` microseconds.
    fn opportunities_before(&self, t: u64) -> u64 {
        let period = self.loop_length_ms * 1_000;
        let full = t / period;
        let rem = t % period;
        let head = self.residues.partition_point(|r| r.at < rem);
        let missing = if full >= 1 {
            self.late_count
        } else {
            self.residues[..head].iter().filter(|r| r.late).count() as u64
        };
        full * self.residues.len() as u64 + head as u64 - missing
    }

    /// Realized rate in Mbps over `[t0, t1)`.
    pub fn rate_mbps(&self, t0: SimTime, t1: SimTime, packet_size: u32) -> f64 {
        let span = (t1.saturating_sub(t0)).as_secs_f64();
        if span <= 0.0 {
            return 0.0;
        }
        capacity_delivered(self, t0, t1, packet_size) as f64 * 8.0 / span / 1e6
    }

    pub fn cursor(&self) -> TraceCursor {
        let mut c = TraceCursor { index: 0, cycle: 0 };
        c.skip_missing(self);
        c
    }

    fn instant(&self, cursor: TraceCursor) -> u64 {
        cursor.cycle * self.loop_length_ms * 1_000 + self.residues[cursor.index].at
    }
}

/// Bytes the link could have carried over `[t0, t1)`.
pub fn capacity_delivered(trace: &TraceSchedule, t0: SimTime, t1: SimTime, packet_size: u32) -> u64 {
    trace.opportunities_in(t0, t1) * u64::from(packet_size)
}

fn spread_offsets(ts: &[u64]) -> Vec<u64> {
    let mut out = Vec::with_capacity(ts.len());
    let mut i = 0;
    while i < ts.len() {
        let ms = ts[i];
        let run = ts[i..].iter().take_while(|&&t| t == ms).count() as u64;
        for k in 0..run {
            out.push(ms * 1_000 + k * 1_000 / run);
        }
        i += run as usize;
    }
    out
}

/// Position in the cyclic opportunity sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceCursor {
    index: usize,
    cycle: u64,
}

impl TraceCursor {
    /// Skips opportunities before `now` and returns the first one at or after it.
    pub fn seek(&mut self, trace: &TraceSchedule, now: SimTime) -> SimTime {
        let now = now.as_micros();
        if trace.instant(*self) < now {
            let period = trace.loop_length_ms * 1_000;
            let mut candidate = TraceCursor {
                index: trace.residues.partition_point(|r| r.at < now % period),
                cycle: now / period,
            };
            if candidate.index == trace.residues.len() {
                candidate.index = 0;
                candidate.cycle += 1;
            }
            candidate.skip_missing(trace);
            // Never move backwards.
            if trace.instant(candidate) >= trace.instant(*self) {
                *self = candidate;
            }
        }
        SimTime(trace.instant(*self).max(now))
    }

    /// Consumes the current opportunity.
    pub fn advance(&mut self, trace: &TraceSchedule) {
        self.step(trace);
        self.skip_missing(trace);
    }

    fn step(&mut self, trace: &TraceSchedule) {
        self.index += 1;
        if self.index == trace.residues.len() {
            self.index = 0;
            self.cycle += 1;
        }
    }

    fn skip_missing(&mut self, trace: &TraceSchedule) {
        while self.cycle == 0 && trace.residues[self.index].late {
            self.step(trace);
        }
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn parse_basic() {
        let t = TraceSchedule::parse("1\n2\n3").unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.loop_length_ms(), 3);
        // 3 packets of 1500 B per 3 ms loop is 12 Mbps.
        let mbps = t.rate_mbps(SimTime::from_millis(1), SimTime::from_millis(4), 1500);
        assert!((mbps - 12.0).abs() < 1e-9);
    }

    #[test]
    fn parse_burst() {
        let t = TraceSchedule::parse("5\n5\n5\n").unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.offsets_us(), &[5_000, 5_333, 5_666]);
        assert_eq!(t.opportunities_in(SimTime::from_millis(5), SimTime::from_millis(6)), 3);
        assert_eq!(t.opportunities_in(SimTime::ZERO, SimTime::from_millis(5)), 0);
    }

    #[test]
    fn parse_errors() {
        assert_eq!(
            TraceSchedule::parse("2\n1"),
            Err(TraceError::Order { line: 2, value: 1, previous: 2 })
        );
        assert_eq!(
            TraceSchedule::parse("1\n\nx2"),
            Err(TraceError::Parse { line: 3, text: "x2".into() })
        );
        assert_eq!(TraceSchedule::parse("\n\n"), Err(TraceError::Empty));
        assert_eq!(TraceSchedule::parse("0\n0"), Err(TraceError::ZeroLoop));
    }

    #[test]
    fn blank_lines_ignored() {
        let t = TraceSchedule::parse("\n1\n\n4\n").unwrap();
        assert_eq!(t.timestamps_ms(), &[1, 4]);
    }

    #[test]
    fn capacity_windows() {
        let t = TraceSchedule::parse("1\n2\n3").unwrap();
        assert_eq!(capacity_delivered(&t, SimTime::ZERO, SimTime::from_millis(3), 1500), 2 * 1500);
        // Replays at 4, 5, 6 ms; 6 ms itself is outside [0, 6 ms).
        assert_eq!(capacity_delivered(&t, SimTime::ZERO, SimTime::from_millis(6), 1500), 5 * 1500);
        for start in [1000u64, 2999, 3000, 12_345] {
            let a = SimTime(start);
            let one = capacity_delivered(&t, a, a + SimTime::from_millis(3), 1500);
            let two = capacity_delivered(&t, a, a + SimTime::from_millis(6), 1500);
            assert_eq!(one, 3 * 1500);
            assert_eq!(two, 2 * one);
        }
        assert_eq!(capacity_delivered(&t, SimTime::from_millis(3), SimTime::from_millis(3), 1500), 0);
    }

    #[test]
    fn synth_constant_counts() {
        assert_eq!(TraceSchedule::constant(12.0, 1.0, 1500).unwrap().len(), 1000);
        assert_eq!(TraceSchedule::constant(720.0, 1.0, 1500).unwrap().len(), 60_000);
        assert_eq!(TraceSchedule::constant(0.012, 1.0, 1500).unwrap().len(), 1);
        assert!(matches!(
            TraceSchedule::constant(0.001, 1.0, 1500),
            Err(TraceError::NoOpportunities { .. })
        ));
        let t = TraceSchedule::constant(12.0, 1.0, 1500).unwrap();
        assert_eq!(t.timestamps_ms()[0], 1);
        assert_eq!(t.loop_length_ms(), 1000);
    }

    #[test]
    fn synth_step_segments() {
        let t = TraceSchedule::step(&[(300.0, 20.0), (600.0, 20.0)], 1500).unwrap();
        assert_eq!(t.loop_length_ms(), 40_000);
        // Millisecond m carries the opportunities of [m-1, m) of the segment,
        // so segments are exact on windows shifted by 1 ms.
        let ms = SimTime::from_millis(1);
        let first = t.rate_mbps(ms, SimTime::from_secs(20) + ms, 1500);
        let second = t.rate_mbps(SimTime::from_secs(20) + ms, SimTime::from_secs(40) + ms, 1500);
        assert!((first - 300.0).abs() < 1e-6, "{first}");
        assert!((second - 600.0).abs() < 1e-6, "{second}");
        let unshifted = t.rate_mbps(SimTime::ZERO, SimTime::from_secs(20), 1500);
        assert!((unshifted - 300.0).abs() / 300.0 < 0.005);

        let single = TraceSchedule::step(&[(100.0, 1.0)], 1500).unwrap();
        assert_eq!(single, TraceSchedule::constant(100.0, 1.0, 1500).unwrap());

        assert_eq!(TraceSchedule::step(&[], 1500), Err(TraceError::NoSegments));
        assert!(matches!(TraceSchedule::step(&[(0.0, 1.0)], 1500), Err(TraceError::Segment { .. })));
    }

    #[test]
    fn cursor_walks_and_loops() {
        let t = TraceSchedule::parse("1\n2\n3").unwrap();
        let mut c = t.cursor();
        assert_eq!(c.seek(&t, SimTime::ZERO), SimTime::from_millis(1));
        c.advance(&t);
        assert_eq!(c.seek(&t, SimTime::ZERO), SimTime::from_millis(2));
        // Skipping ahead over wasted opportunities, across a loop boundary.
        assert_eq!(c.seek(&t, SimTime::from_micros(3_500)), SimTime::from_millis(4));
        c.advance(&t);
        assert_eq!(c.seek(&t, SimTime::from_micros(3_500)), SimTime::from_millis(5));
        // An opportunity exactly at `now` is usable.
        assert_eq!(c.seek(&t, SimTime::from_millis(5)), SimTime::from_millis(5));
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(mut ts in prop::collection::vec(0u64..100_000, 1..300)) {
            ts.sort_unstable();
            prop_assume!(*ts.last().unwrap() > 0);
            let last = *ts.last().unwrap();
            let t = TraceSchedule::new(ts, last).unwrap();
            prop_assert_eq!(TraceSchedule::parse(&t.render()).unwrap(), t);
        }

        #[test]
        fn step_rates_within_half_percent(
            segs in prop::collection::vec((2.0f64..2000.0, 1u32..20), 1..4)
        ) {
            let segments: Vec<(f64, f64)> = segs.iter().map(|&(r, d)| (r, f64::from(d))).collect();
            let t = TraceSchedule::step(&segments, 1500).unwrap();
            // Segment k covers [base + 1 ms, base + duration + 1 ms).
            let mut start = SimTime::from_millis(1);
            for (rate, dur) in segments {
                let end = start + SimTime::from_secs(dur as u64);
                let realized = t.rate_mbps(start, end, 1500);
                prop_assert!((realized - rate).abs() / rate <= 0.005, "{} vs {}", realized, rate);
                start = end;
            }
        }

        #[test]
        fn window_counts_match_brute_force(
            mut ts in prop::collection::vec(1u64..50, 1..40),
            a in 0u64..200_000,
            len in 0u64..200_000,
        ) {
            ts.sort_unstable();
            let last = *ts.last().unwrap();
            let t = TraceSchedule::new(ts, last).unwrap();
            let (t0, t1) = (a, a + len);
            let period = last * 1000;
            let mut brute = 0u64;
            for cycle in 0..=(t1 / period + 1) {
                for &o in t.offsets_us() {
                    let at = cycle * period + o;
                    if at >= t0 && at < t1 {
                        brute += 1;
                    }
                }
            }
            prop_assert_eq!(t.opportunities_in(SimTime(t0), SimTime(t1)), brute);
        }
    }
}
