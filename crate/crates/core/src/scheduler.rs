//! Compiles gate sequences into timed pulse programs.
//!
//! Pauli x/y gates are two pi/2 pulses, `+-I` and `+-Z` are idle intervals of
//! the same span, and z rotations are realized by advancing the drive frame
//! by pi for every later pulse. Every pulse is followed by the inter-pulse
//! delay, so all computational gates occupy the same wall-clock span.
//!
//! Times are held in integer picoseconds. Drive starts sit on the phase
//! update grid and drive durations on the pulse-length grid; idle events
//! fill the gaps, so the timeline is contiguous. Starts are rounded from the
//! ideal (unquantized) schedule, which keeps the quantization error below
//! one grid step everywhere instead of letting it accumulate.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateset::{Axis, CliffordLabel, Gate, GateSequence, PauliLabel};

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("gate {0:?} is not driven by a microwave pulse")]
    NotDriven(Gate),
    #[error("timing field `{0}` must be finite and non-negative")]
    InvalidTiming(&'static str),
    #[error("malformed program line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingConfig {
    pub pi2_duration_us: f64,
    pub interpulse_delay_us: f64,
    pub phase_update_grid_ns: f64,
    pub duration_grid_ps: f64,
    pub detection_window_us: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            pi2_duration_us: 21.0,
            interpulse_delay_us: 0.72,
            phase_update_grid_ns: 16.0,
            duration_grid_ps: 5.0,
            detection_window_us: 400.0,
        }
    }
}

impl TimingConfig {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        let fields = [
            ("pi2_duration_us", self.pi2_duration_us),
            ("interpulse_delay_us", self.interpulse_delay_us),
            ("phase_update_grid_ns", self.phase_update_grid_ns),
            ("duration_grid_ps", self.duration_grid_ps),
            ("detection_window_us", self.detection_window_us),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(ScheduleError::InvalidTiming(name));
            }
        }
        Ok(())
    }

    pub fn pi2_duration(&self) -> f64 {
        self.pi2_duration_us * 1e-6
    }

    pub fn detection_window(&self) -> f64 {
        self.detection_window_us * 1e-6
    }

    /// Unquantized span of one computational gate (seconds).
    pub fn gate_span(&self) -> f64 {
        3.0 * (self.pi2_duration_us + self.interpulse_delay_us) * 1e-6
    }

    fn ps(us: f64) -> i64 {
        (us * 1e6).round() as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Drive,
    Idle,
}

impl EventKind {
    fn token(self) -> &'static str {
        match self {
            EventKind::Drive => "drive",
            EventKind::Idle => "idle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseEvent {
    pub start_ps: i64,
    pub duration_ps: i64,
    /// Radians in `[0, 2 pi)`, frame offset included. Zero for idle events.
    pub phase: f64,
    pub kind: EventKind,
    /// Gate slot this event belongs to; slots `0..length` are the
    /// computational gates, `length` is the closing pair.
    pub gate_index: usize,
}

impl PulseEvent {
    pub fn start(&self) -> f64 {
        self.start_ps as f64 * 1e-12
    }

    pub fn duration(&self) -> f64 {
        self.duration_ps as f64 * 1e-12
    }

    pub fn end_ps(&self) -> i64 {
        self.start_ps + self.duration_ps
    }
}

/// Accumulated frame offset from virtual z gates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrameState {
    phase_offset: f64,
}

impl FrameState {
    pub fn new(phase_offset: f64) -> Self {
        FrameState {
            phase_offset: wrap_phase(phase_offset),
        }
    }

    pub fn phase_offset(&self) -> f64 {
        self.phase_offset
    }

    pub fn advance(&mut self, by: f64) {
        self.phase_offset = wrap_phase(self.phase_offset + by);
    }
}

pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Phase of each constituent pi/2 pulse of a driven gate.
pub fn drive_phase(gate: Gate, frame: &FrameState) -> Result<f64, ScheduleError> {
    let (axis, sign) = match gate {
        Gate::Pauli(p) => match p.axis() {
            Some(a @ (Axis::X | Axis::Y)) => (a, p.sign()),
            _ => return Err(ScheduleError::NotDriven(gate)),
        },
        Gate::Clifford(c) => (c.axis(), c.sign()),
    };
    let base = match (axis, sign > 0.0) {
        (Axis::X, true) => 0.0,
        (Axis::X, false) => PI,
        (Axis::Y, true) => PI / 2.0,
        (Axis::Y, false) => 3.0 * PI / 2.0,
        (Axis::Z, _) => unreachable!(),
    };
    Ok(wrap_phase(base + frame.phase_offset))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PulseProgram {
    pub events: Vec<PulseEvent>,
    pub total_duration_ps: i64,
    /// Start of the closing pair; equals `total_duration_ps` when there is none.
    pub closing_start_ps: i64,
    pub sequence_seed: Option<u64>,
}

impl PulseProgram {
    pub fn total_duration(&self) -> f64 {
        self.total_duration_ps as f64 * 1e-12
    }

    /// Duration of the computational gates alone.
    pub fn computational_duration(&self) -> f64 {
        self.closing_start_ps as f64 * 1e-12
    }

    pub fn drive_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::Drive)
            .count()
    }

    /// Append `other` after the end of `self`.
    pub fn concat(&self, other: &PulseProgram) -> PulseProgram {
        let shift = self.total_duration_ps;
        let gate_shift = self.events.last().map_or(0, |e| e.gate_index + 1);
        let mut events = self.events.clone();
        events.extend(other.events.iter().map(|e| PulseEvent {
            start_ps: e.start_ps + shift,
            gate_index: e.gate_index + gate_shift,
            ..*e
        }));
        PulseProgram {
            events,
            total_duration_ps: shift + other.total_duration_ps,
            closing_start_ps: shift + other.closing_start_ps,
            sequence_seed: None,
        }
    }

    /// Spans of consecutive gate slots, computed from the events.
    pub fn gate_spans_ps(&self) -> Vec<i64> {
        let mut spans: Vec<(i64, i64)> = Vec::new();
        for e in &self.events {
            match spans.get_mut(e.gate_index) {
                Some(s) => s.1 = e.end_ps(),
                None => spans.push((e.start_ps, e.end_ps())),
            }
        }
        spans.into_iter().map(|(a, b)| b - a).collect()
    }

    /// Line-delimited dump: `start_ns,duration_ps,phase_microrad,kind`.
    pub fn dump(&self) -> String {
        let mut out = String::with_capacity(self.events.len() * 32);
        for e in &self.events {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                round_div(e.start_ps, 1000),
                e.duration_ps,
                (e.phase * 1e6).round() as i64,
                e.kind.token()
            );
        }
        out
    }
}

/// Parse a program dump back into `(start_ns, duration_ps, phase_microrad, kind)` rows.
pub fn parse_dump(text: &str) -> Result<Vec<(i64, i64, i64, EventKind)>, ScheduleError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            let bad = |reason: &str| ScheduleError::Malformed {
                line: n + 1,
                reason: reason.into(),
            };
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 4 {
                return Err(bad("expected 4 fields"));
            }
            let num = |s: &str| s.trim().parse::<i64>().map_err(|_| bad("bad integer"));
            let kind = match f[3].trim() {
                "drive" => EventKind::Drive,
                "idle" => EventKind::Idle,
                _ => return Err(bad("unknown kind")),
            };
            Ok((num(f[0])?, num(f[1])?, num(f[2])?, kind))
        })
        .collect()
}

fn round_div(a: i64, b: i64) -> i64 {
    (a as f64 / b as f64).round() as i64
}

fn quantize(value_ps: i64, grid_ps: i64) -> i64 {
    if grid_ps <= 1 {
        return value_ps;
    }
    ((value_ps as f64 / grid_ps as f64).round() as i64) * grid_ps
}

fn ceil_to(value_ps: i64, grid_ps: i64) -> i64 {
    if grid_ps <= 1 {
        return value_ps;
    }
    value_ps.div_euclid(grid_ps) * grid_ps
        + if value_ps.rem_euclid(grid_ps) == 0 {
            0
        } else {
            grid_ps
        }
}

struct Builder {
    events: Vec<PulseEvent>,
    /// End of the last emitted event.
    cursor_ps: i64,
    /// Ideal (unquantized) time.
    ideal_ps: i64,
    start_grid_ps: i64,
    duration_grid_ps: i64,
    pi2_ps: i64,
    delay_ps: i64,
    frame: FrameState,
}

impl Builder {
    fn idle_until(&mut self, until_ps: i64, gate_index: usize) {
        if until_ps > self.cursor_ps {
            self.events.push(PulseEvent {
                start_ps: self.cursor_ps,
                duration_ps: until_ps - self.cursor_ps,
                phase: 0.0,
                kind: EventKind::Idle,
                gate_index,
            });
            self.cursor_ps = until_ps;
        }
    }

    fn idle(&mut self, nominal_ps: i64, gate_index: usize) {
        self.ideal_ps += nominal_ps;
        self.idle_until(self.ideal_ps, gate_index);
    }

    fn drive(&mut self, phase: f64, gate_index: usize) {
        let start = quantize(self.ideal_ps, self.start_grid_ps)
            .max(ceil_to(self.cursor_ps, self.start_grid_ps));
        self.idle_until(start, gate_index);
        let duration = quantize(self.pi2_ps, self.duration_grid_ps);
        self.events.push(PulseEvent {
            start_ps: start,
            duration_ps: duration,
            phase,
            kind: EventKind::Drive,
            gate_index,
        });
        self.cursor_ps = start + duration;
        self.ideal_ps += self.pi2_ps;
    }

    fn pauli(&mut self, p: PauliLabel, gate_index: usize) {
        if p.is_driven() {
            let phase = drive_phase(Gate::Pauli(p), &self.frame).expect("driven Pauli");
            self.drive(phase, gate_index);
            self.idle(self.delay_ps, gate_index);
            self.drive(phase, gate_index);
            self.idle(self.delay_ps, gate_index);
        } else {
            self.idle(2 * self.pi2_ps + self.delay_ps, gate_index);
            self.idle(self.delay_ps, gate_index);
            if p.axis() == Some(Axis::Z) {
                self.frame.advance(PI);
            }
        }
    }

    fn clifford(&mut self, c: Option<CliffordLabel>, gate_index: usize) {
        match c {
            Some(c) => {
                let phase = drive_phase(Gate::Clifford(c), &self.frame).expect("driven Clifford");
                self.drive(phase, gate_index);
            }
            None => self.idle(self.pi2_ps, gate_index),
        }
        self.idle(self.delay_ps, gate_index);
    }
}

pub fn compile(seq: &GateSequence, timing: &TimingConfig) -> PulseProgram {
    let mut b = Builder {
        events: Vec::with_capacity(seq.length * 6 + 6),
        cursor_ps: 0,
        ideal_ps: 0,
        start_grid_ps: (timing.phase_update_grid_ns * 1e3).round() as i64,
        duration_grid_ps: timing.duration_grid_ps.round() as i64,
        pi2_ps: TimingConfig::ps(timing.pi2_duration_us),
        delay_ps: TimingConfig::ps(timing.interpulse_delay_us),
        frame: FrameState::default(),
    };
    for (i, g) in seq.gates.iter().enumerate() {
        b.pauli(g.pauli, i);
        b.clifford(Some(g.clifford), i);
    }
    let closing_start_ps = b.cursor_ps;
    b.pauli(seq.closing_pauli, seq.length);
    b.clifford(seq.closing_clifford, seq.length);
    PulseProgram {
        total_duration_ps: b.cursor_ps,
        events: b.events,
        closing_start_ps,
        sequence_seed: Some(seq.seed),
    }
}

pub fn program_duration(p: &PulseProgram) -> f64 {
    p.total_duration()
}
