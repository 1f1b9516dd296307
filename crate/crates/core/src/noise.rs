//! Stochastic imperfections and the auxiliary calibration experiments.
//!
//! Noise is layered by how often it is redrawn:
//!
//! * campaign clock ([`NoiseClock`]): detuning random-walk drift, the
//!   residuals left by periodic recalibration, amplitude warm-up;
//! * sequence ([`SequenceNoise`]): quasi-static detuning, frozen for all
//!   repetitions of one sequence;
//! * shot ([`ShotNoise`]): quasi-static dephasing frequency;
//! * event ([`RealizedPulseNoise`]): markovian phase kicks, pulse-to-pulse
//!   amplitude jitter, leakage and idle decay jumps.
//!
//! Every draw comes from an RNG addressed by explicit indices, so a
//! realization is a pure function of its inputs.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateset::{PauliLabel, Pole};
use crate::qsim::{apply, free_propagator, pulse_propagator, PulseParams, QubitState, Unitary2};
use crate::rng::{self, stream, SimRng};
use crate::scheduler::{EventKind, PulseEvent, PulseProgram, TimingConfig};

/// Upper bound on the idle decay rate consistent with a null result of
/// 2e-7 per microsecond.
pub const IDLE_DECAY_BOUND_PER_S: f64 = 0.2;

#[derive(Debug, Error, PartialEq)]
pub enum NoiseError {
    #[error("noise field `{0}` must be finite and non-negative")]
    Negative(&'static str),
    #[error("noise field `{0}` must be a probability in [0, 1]")]
    NotProbability(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftModel {
    #[default]
    None,
    /// Detuning random walk, reset to a residual draw at each frequency
    /// recalibration.
    RandomWalk {
        rate_hz_per_sqrt_s: f64,
        residual_rms_hz: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum AmplitudeModel {
    /// Rabi rate scaled by `1 + fractional_error`.
    Constant { fractional_error: f64 },
    /// Mean scale `1 + initial_fraction exp(-t / time_constant_s)` on the
    /// campaign clock, plus Gaussian pulse-to-pulse jitter.
    WarmUp {
        initial_fraction: f64,
        time_constant_s: f64,
        pulse_rms_fraction: f64,
    },
}

impl Default for AmplitudeModel {
    fn default() -> Self {
        AmplitudeModel::Constant {
            fractional_error: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum DephasingModel {
    #[default]
    None,
    /// White frequency noise: Gaussian z kicks of variance `2 rate dt`.
    Markovian { rate_per_s: f64 },
    /// Gaussian frequency offset frozen for one shot.
    Quasistatic { rms_hz: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub static_detuning_hz: f64,
    /// Fresh Gaussian detuning per sequence.
    pub quasistatic_detuning_rms_hz: f64,
    pub drift: DriftModel,
    /// Constant pi/2 duration miscalibration.
    pub pi2_time_error_ns: f64,
    /// Residual pi/2 miscalibration redrawn at every pi/2 recalibration.
    pub pi2_time_residual_rms_ns: f64,
    pub amplitude: AmplitudeModel,
    pub dephasing: DephasingModel,
    pub leak_prob_per_pulse: f64,
    /// Probability per second of an idle reset to a random pole.
    pub idle_decay_rate_per_s: f64,
    /// Injected depolarizing error per gate slot, expressed as its error per
    /// gate.
    pub depolarizing_epg: f64,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), NoiseError> {
        let nonneg = |name, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(NoiseError::Negative(name))
            }
        };
        let finite = |name, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(NoiseError::Negative(name))
            }
        };
        finite("static_detuning_hz", self.static_detuning_hz)?;
        finite("pi2_time_error_ns", self.pi2_time_error_ns)?;
        nonneg(
            "quasistatic_detuning_rms_hz",
            self.quasistatic_detuning_rms_hz,
        )?;
        nonneg("pi2_time_residual_rms_ns", self.pi2_time_residual_rms_ns)?;
        nonneg("idle_decay_rate_per_s", self.idle_decay_rate_per_s)?;
        if let DriftModel::RandomWalk {
            rate_hz_per_sqrt_s,
            residual_rms_hz,
        } = self.drift
        {
            nonneg("drift.rate_hz_per_sqrt_s", rate_hz_per_sqrt_s)?;
            nonneg("drift.residual_rms_hz", residual_rms_hz)?;
        }
        match self.amplitude {
            AmplitudeModel::Constant { fractional_error } => {
                finite("amplitude.fractional_error", fractional_error)?
            }
            AmplitudeModel::WarmUp {
                initial_fraction,
                time_constant_s,
                pulse_rms_fraction,
            } => {
                finite("amplitude.initial_fraction", initial_fraction)?;
                nonneg("amplitude.time_constant_s", time_constant_s)?;
                nonneg("amplitude.pulse_rms_fraction", pulse_rms_fraction)?;
            }
        }
        match self.dephasing {
            DephasingModel::None => {}
            DephasingModel::Markovian { rate_per_s } => nonneg("dephasing.rate_per_s", rate_per_s)?,
            DephasingModel::Quasistatic { rms_hz } => nonneg("dephasing.rms_hz", rms_hz)?,
        }
        for (name, p) in [
            ("leak_prob_per_pulse", self.leak_prob_per_pulse),
            ("depolarizing_epg", self.depolarizing_epg),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(NoiseError::NotProbability(name));
            }
        }
        if self.depolarizing_epg > 2.0 / 3.0 {
            return Err(NoiseError::NotProbability("depolarizing_epg"));
        }
        Ok(())
    }

    /// True when some channel must be redrawn for every shot, which rules
    /// out sampling all repetitions from one propagated state.
    pub fn needs_trajectories(&self) -> bool {
        let jitter = matches!(self.amplitude, AmplitudeModel::WarmUp { pulse_rms_fraction, .. } if pulse_rms_fraction > 0.0);
        let dephasing = match self.dephasing {
            DephasingModel::None => false,
            DephasingModel::Markovian { rate_per_s } => rate_per_s > 0.0,
            DephasingModel::Quasistatic { rms_hz } => rms_hz > 0.0,
        };
        jitter
            || dephasing
            || self.leak_prob_per_pulse > 0.0
            || self.idle_decay_rate_per_s > 0.0
            || self.depolarizing_epg > 0.0
    }

    fn pulse_jitter(&self) -> f64 {
        match self.amplitude {
            AmplitudeModel::WarmUp {
                pulse_rms_fraction, ..
            } => pulse_rms_fraction,
            AmplitudeModel::Constant { .. } => 0.0,
        }
    }

    /// Mean Rabi-rate scale at campaign time `clock_s`.
    pub fn amplitude_scale(&self, clock_s: f64) -> f64 {
        match self.amplitude {
            AmplitudeModel::Constant { fractional_error } => 1.0 + fractional_error,
            AmplitudeModel::WarmUp {
                initial_fraction,
                time_constant_s,
                ..
            } => {
                if time_constant_s > 0.0 {
                    1.0 + initial_fraction * (-clock_s / time_constant_s).exp()
                } else {
                    1.0
                }
            }
        }
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    sigma * z
}

/// State of the slow channels at one point of the campaign clock.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClockSnapshot {
    pub clock_s: f64,
    pub drift_detuning_hz: f64,
    pub pi2_residual_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecalibrationEntry {
    pub time_s: f64,
    pub frequency: bool,
    pub pi2: bool,
    /// Detuning left right after this epoch.
    pub detuning_residual_hz: f64,
    pub pi2_residual_ns: f64,
}

/// Single-threaded owner of the simulated wall clock and the slow drifts.
#[derive(Debug, Clone)]
pub struct NoiseClock {
    config: NoiseConfig,
    frequency_interval_s: f64,
    pi2_interval_s: f64,
    rng: SimRng,
    now_s: f64,
    drift_hz: f64,
    pi2_residual_s: f64,
    last_frequency_s: f64,
    last_pi2_s: f64,
    log: Vec<RecalibrationEntry>,
}

impl NoiseClock {
    pub fn new(
        config: NoiseConfig,
        frequency_interval_s: f64,
        pi2_interval_s: f64,
        master_seed: u64,
    ) -> Self {
        let mut clock = NoiseClock {
            config,
            frequency_interval_s,
            pi2_interval_s,
            rng: rng::rng_for(&[master_seed, stream::CLOCK]),
            now_s: 0.0,
            drift_hz: 0.0,
            pi2_residual_s: 0.0,
            last_frequency_s: 0.0,
            last_pi2_s: 0.0,
            log: Vec::new(),
        };
        // The campaign starts from a fresh calibration.
        clock.recalibrate(true, true);
        clock
    }

    fn residual_rms_hz(&self) -> f64 {
        match self.config.drift {
            DriftModel::RandomWalk {
                residual_rms_hz, ..
            } => residual_rms_hz,
            DriftModel::None => 0.0,
        }
    }

    fn recalibrate(&mut self, frequency: bool, pi2: bool) {
        if frequency {
            let rms = self.residual_rms_hz();
            self.drift_hz = gaussian(&mut self.rng, rms);
            self.last_frequency_s = self.now_s;
        }
        if pi2 {
            self.pi2_residual_s =
                gaussian(&mut self.rng, self.config.pi2_time_residual_rms_ns * 1e-9);
            self.last_pi2_s = self.now_s;
        }
        self.log.push(RecalibrationEntry {
            time_s: self.now_s,
            frequency,
            pi2,
            detuning_residual_hz: self.drift_hz,
            pi2_residual_ns: self.pi2_residual_s * 1e9,
        });
    }

    pub fn snapshot(&self) -> ClockSnapshot {
        ClockSnapshot {
            clock_s: self.now_s,
            drift_detuning_hz: self.drift_hz,
            pi2_residual_s: self.pi2_residual_s,
        }
    }

    pub fn now(&self) -> f64 {
        self.now_s
    }

    /// Advance by `dt` seconds, then run any recalibration that has come due.
    pub fn advance(&mut self, dt: f64) {
        self.now_s += dt;
        if let DriftModel::RandomWalk {
            rate_hz_per_sqrt_s, ..
        } = self.config.drift
        {
            self.drift_hz += gaussian(&mut self.rng, rate_hz_per_sqrt_s * dt.sqrt());
        }
        let freq_due = self.frequency_interval_s > 0.0
            && self.now_s - self.last_frequency_s >= self.frequency_interval_s;
        let pi2_due =
            self.pi2_interval_s > 0.0 && self.now_s - self.last_pi2_s >= self.pi2_interval_s;
        if freq_due || pi2_due {
            self.recalibrate(freq_due, pi2_due);
        }
    }

    pub fn log(&self) -> &[RecalibrationEntry] {
        &self.log
    }

    pub fn into_log(self) -> Vec<RecalibrationEntry> {
        self.log
    }
}

/// Noise parameters frozen for one sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceNoise {
    pub clock_s: f64,
    pub detuning_hz: f64,
    pub duration_offset_s: f64,
    pub amplitude_scale: f64,
}

impl SequenceNoise {
    pub fn ideal() -> Self {
        SequenceNoise {
            clock_s: 0.0,
            detuning_hz: 0.0,
            duration_offset_s: 0.0,
            amplitude_scale: 1.0,
        }
    }

    pub fn draw(config: &NoiseConfig, snapshot: &ClockSnapshot, sequence_seed: u64) -> Self {
        let mut rng = rng::rng_for(&[sequence_seed, stream::QUASISTATIC]);
        let quasi = gaussian(&mut rng, config.quasistatic_detuning_rms_hz);
        SequenceNoise {
            clock_s: snapshot.clock_s,
            detuning_hz: config.static_detuning_hz + snapshot.drift_detuning_hz + quasi,
            duration_offset_s: config.pi2_time_error_ns * 1e-9 + snapshot.pi2_residual_s,
            amplitude_scale: config.amplitude_scale(snapshot.clock_s),
        }
    }
}

/// Per-shot frozen noise.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ShotNoise {
    pub detuning_offset_hz: f64,
}

impl ShotNoise {
    pub fn draw<R: Rng + ?Sized>(config: &NoiseConfig, rng: &mut R) -> Self {
        let offset = match config.dephasing {
            DephasingModel::Quasistatic { rms_hz } => gaussian(rng, rms_hz),
            _ => 0.0,
        };
        ShotNoise {
            detuning_offset_hz: offset,
        }
    }
}

/// Noise seen by one pulse or idle event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealizedPulseNoise {
    pub detuning: f64,
    pub rabi_scale: f64,
    pub duration_offset: f64,
    /// z rotation applied after the event.
    pub dephasing_kick: f64,
    pub leak_event: bool,
    /// Idle decay jump: the state is reset to this pole.
    pub decay_to: Option<Pole>,
}

impl RealizedPulseNoise {
    pub fn identity() -> Self {
        RealizedPulseNoise {
            detuning: 0.0,
            rabi_scale: 1.0,
            duration_offset: 0.0,
            dephasing_kick: 0.0,
            leak_event: false,
            decay_to: None,
        }
    }
}

/// Realize every enabled channel for one event of nominal length
/// `duration_s`. Draws are taken in a fixed order and only for enabled
/// channels.
pub fn realize<R: Rng + ?Sized>(
    config: &NoiseConfig,
    seq: &SequenceNoise,
    shot: &ShotNoise,
    kind: EventKind,
    duration_s: f64,
    rng: &mut R,
) -> RealizedPulseNoise {
    let drive = kind == EventKind::Drive;
    let duration_offset = if drive { seq.duration_offset_s } else { 0.0 };
    let span = (duration_s + duration_offset).max(0.0);
    let mut rabi_scale = seq.amplitude_scale;
    if drive {
        let jitter = config.pulse_jitter();
        if jitter > 0.0 {
            rabi_scale *= 1.0 + gaussian(rng, jitter);
        }
    }
    let dephasing_kick = match config.dephasing {
        DephasingModel::Markovian { rate_per_s } if rate_per_s > 0.0 => {
            gaussian(rng, (2.0 * rate_per_s * span).sqrt())
        }
        _ => 0.0,
    };
    let leak_event = drive
        && config.leak_prob_per_pulse > 0.0
        && rng.random::<f64>() < config.leak_prob_per_pulse;
    let decay_to = if !drive
        && config.idle_decay_rate_per_s > 0.0
        && rng.random::<f64>() < config.idle_decay_rate_per_s * span
    {
        Some(if rng.random::<bool>() {
            Pole::Down
        } else {
            Pole::Up
        })
    } else {
        None
    };
    RealizedPulseNoise {
        detuning: seq.detuning_hz + shot.detuning_offset_hz,
        rabi_scale,
        duration_offset,
        dephasing_kick,
        leak_event,
        decay_to,
    }
}

/// Propagator of one event under realized noise.
pub fn event_propagator(e: &PulseEvent, n: &RealizedPulseNoise, pi2_duration: f64) -> Unitary2 {
    let duration = (e.duration() + n.duration_offset).max(0.0);
    match e.kind {
        EventKind::Drive => pulse_propagator(&PulseParams {
            rabi_rate: n.rabi_scale * PI / (2.0 * pi2_duration),
            phase: e.phase,
            detuning: n.detuning,
            duration,
        }),
        EventKind::Idle => free_propagator(duration, n.detuning),
    }
}

/// Net propagator of a program whose noise is fixed for the whole sequence.
/// Only valid when [`NoiseConfig::needs_trajectories`] is false.
pub fn program_unitary(
    program: &PulseProgram,
    config: &NoiseConfig,
    seq: &SequenceNoise,
    timing: &TimingConfig,
) -> Unitary2 {
    let pi2 = timing.pi2_duration();
    let shot = ShotNoise::default();
    let mut none = NoRng;
    program.events.iter().fold(Unitary2::IDENTITY, |acc, e| {
        let n = realize(config, seq, &shot, e.kind, e.duration(), &mut none);
        event_propagator(e, &n, pi2) * acc
    })
}

/// Run one shot of `program` from `|down>`. Depolarizing errors are applied
/// at the end of every gate slot.
pub fn run_trajectory<R: Rng + ?Sized>(
    program: &PulseProgram,
    config: &NoiseConfig,
    seq: &SequenceNoise,
    timing: &TimingConfig,
    rng: &mut R,
) -> QubitState {
    let pi2 = timing.pi2_duration();
    let shot = ShotNoise::draw(config, rng);
    let depol_prob = 1.5 * config.depolarizing_epg;
    let mut state = QubitState::down();
    let events = &program.events;
    for (k, e) in events.iter().enumerate() {
        let n = realize(config, seq, &shot, e.kind, e.duration(), rng);
        if !state.leaked {
            state = apply(&event_propagator(e, &n, pi2), state);
            if n.dephasing_kick != 0.0 {
                state = apply(&Unitary2::z_rotation(n.dephasing_kick), state);
            }
            if let Some(pole) = n.decay_to {
                state = match pole {
                    Pole::Down => QubitState::down(),
                    Pole::Up => QubitState::up(),
                };
            }
            if n.leak_event {
                state = QubitState::leaked();
            }
        }
        let gate_ends = events
            .get(k + 1)
            .is_none_or(|next| next.gate_index != e.gate_index);
        if gate_ends && depol_prob > 0.0 && rng.random::<f64>() < depol_prob {
            let p =
                [PauliLabel::PlusX, PauliLabel::PlusY, PauliLabel::PlusZ][rng.random_range(0..3)];
            state = apply(&p.unitary(), state);
        }
    }
    state.renormalize();
    state
}

/// A program collapsed to one propagator per gate slot. Valid when every
/// per-event channel other than leakage and depolarizing is off, so shots
/// differ only by those discrete jumps at slot boundaries.
#[derive(Debug, Clone)]
pub struct SlotProgram {
    /// `(propagator, drive pulses)` per gate slot, in order.
    pub slots: Vec<(Unitary2, usize)>,
}

impl SlotProgram {
    pub fn build(
        program: &PulseProgram,
        config: &NoiseConfig,
        seq: &SequenceNoise,
        timing: &TimingConfig,
    ) -> Option<Self> {
        let per_event = NoiseConfig {
            leak_prob_per_pulse: 0.0,
            depolarizing_epg: 0.0,
            ..*config
        };
        if per_event.needs_trajectories() {
            return None;
        }
        let pi2 = timing.pi2_duration();
        let shot = ShotNoise::default();
        let mut none = NoRng;
        let mut slots: Vec<(Unitary2, usize)> = Vec::new();
        let mut current: Option<usize> = None;
        for e in &program.events {
            let n = realize(&per_event, seq, &shot, e.kind, e.duration(), &mut none);
            let u = event_propagator(e, &n, pi2);
            let drive = usize::from(e.kind == EventKind::Drive);
            if current == Some(e.gate_index) {
                let last = slots.last_mut().expect("slot open");
                last.0 = u * last.0;
                last.1 += drive;
            } else {
                slots.push((u, drive));
                current = Some(e.gate_index);
            }
        }
        Some(SlotProgram { slots })
    }

    pub fn unitary(&self) -> Unitary2 {
        self.slots
            .iter()
            .fold(Unitary2::IDENTITY, |acc, (u, _)| *u * acc)
    }

    /// One shot from `|down>` with leakage drawn per drive pulse and
    /// depolarizing errors at the end of each slot.
    pub fn run<R: Rng + ?Sized>(&self, config: &NoiseConfig, rng: &mut R) -> QubitState {
        let depol_prob = 1.5 * config.depolarizing_epg;
        let q = config.leak_prob_per_pulse;
        let mut state = QubitState::down();
        for (u, drives) in &self.slots {
            if state.leaked {
                break;
            }
            state = apply(u, state);
            if q > 0.0 && (0..*drives).any(|_| rng.random::<f64>() < q) {
                state = QubitState::leaked();
                break;
            }
            if depol_prob > 0.0 && rng.random::<f64>() < depol_prob {
                let p = [PauliLabel::PlusX, PauliLabel::PlusY, PauliLabel::PlusZ]
                    [rng.random_range(0..3)];
                state = apply(&p.unitary(), state);
            }
        }
        state.renormalize();
        state
    }
}

/// A generator that is never consulted; used where all channels are
/// deterministic.
struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("deterministic noise path drew a random number")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("deterministic noise path drew a random number")
    }
    fn fill_bytes(&mut self, _: &mut [u8]) {
        unreachable!("deterministic noise path drew a random number")
    }
}

/// Probability of finding `|down>` at the end of `program`, averaged over
/// `reps` trajectories when needed or exact otherwise.
fn survival<R: Rng + ?Sized>(
    program: &PulseProgram,
    config: &NoiseConfig,
    seq: &SequenceNoise,
    timing: &TimingConfig,
    reps: usize,
    rng: &mut R,
) -> f64 {
    if !config.needs_trajectories() {
        let p = apply(
            &program_unitary(program, config, seq, timing),
            QubitState::down(),
        )
        .prob_down();
        // Sample the shots so the estimate carries projection noise.
        let hits = (0..reps).filter(|_| rng.random::<f64>() < p).count();
        return hits as f64 / reps.max(1) as f64;
    }
    let hits = (0..reps)
        .filter(|_| {
            let s = run_trajectory(program, config, seq, timing, rng);
            crate::qsim::project_measure(&s, rng) == crate::qsim::Outcome::Down
        })
        .count();
    hits as f64 / reps.max(1) as f64
}

/// Contiguous program from `(kind, duration_s, phase)` segments.
pub fn program_from_segments(segments: &[(EventKind, f64, f64)]) -> PulseProgram {
    let mut t = 0i64;
    let events = segments
        .iter()
        .enumerate()
        .map(|(i, &(kind, d, phase))| {
            let dur = (d * 1e12).round() as i64;
            let e = PulseEvent {
                start_ps: t,
                duration_ps: dur,
                phase,
                kind,
                gate_index: i,
            };
            t += dur;
            e
        })
        .collect();
    PulseProgram {
        events,
        total_duration_ps: t,
        closing_start_ps: t,
        sequence_seed: None,
    }
}

fn echo_program(tau: f64, timing: &TimingConfig) -> PulseProgram {
    let t = timing.pi2_duration();
    program_from_segments(&[
        (EventKind::Drive, t, 0.0),
        (EventKind::Idle, tau / 2.0, 0.0),
        (EventKind::Drive, 2.0 * t, 0.0),
        (EventKind::Idle, tau / 2.0, 0.0),
        (EventKind::Drive, t, 0.0),
    ])
}

fn ramsey_program(tau: f64, timing: &TimingConfig) -> PulseProgram {
    let t = timing.pi2_duration();
    program_from_segments(&[
        (EventKind::Drive, t, 0.0),
        (EventKind::Idle, tau, 0.0),
        (EventKind::Drive, t, PI),
    ])
}

/// pi/2 - tau/2 - pi - tau/2 - pi/2; returns the `|down>` recovery
/// probability for each `tau`.
pub fn echo_experiment<R: Rng + ?Sized>(
    config: &NoiseConfig,
    timing: &TimingConfig,
    tau_list: &[f64],
    reps: usize,
    rng: &mut R,
) -> Vec<f64> {
    let seq = SequenceNoise::draw(config, &ClockSnapshot::default(), rng.random());
    tau_list
        .iter()
        .map(|&tau| {
            survival(
                &echo_program(tau.max(0.0), timing),
                config,
                &seq,
                timing,
                reps,
                rng,
            )
        })
        .collect()
}

/// pi/2 - tau - (-pi/2), which returns to `|down>` without noise.
pub fn ramsey_experiment<R: Rng + ?Sized>(
    config: &NoiseConfig,
    timing: &TimingConfig,
    tau_list: &[f64],
    reps: usize,
    rng: &mut R,
) -> Vec<f64> {
    let seq = SequenceNoise::draw(config, &ClockSnapshot::default(), rng.random());
    tau_list
        .iter()
        .map(|&tau| {
            survival(
                &ramsey_program(tau.max(0.0), timing),
                config,
                &seq,
                timing,
                reps,
                rng,
            )
        })
        .collect()
}

/// Settings of the pi/2 duration calibration scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationScan {
    pub pulses: usize,
    pub half_range_s: f64,
    pub points: usize,
    pub reps: usize,
}

impl Default for CalibrationScan {
    fn default() -> Self {
        CalibrationScan {
            pulses: 256,
            half_range_s: 120e-9,
            points: 25,
            reps: 200,
        }
    }
}

/// Scan the programmed pi/2 duration around nominal with a train of
/// in-phase pulses and return the duration that best restores `|down>`.
///
/// The configured duration error shifts every pulse, so the returned value
/// is `nominal - error` up to estimator noise.
pub fn pi2_calibration_experiment<R: Rng + ?Sized>(
    config: &NoiseConfig,
    timing: &TimingConfig,
    scan: &CalibrationScan,
    rng: &mut R,
) -> f64 {
    let nominal = timing.pi2_duration();
    let seq = SequenceNoise::draw(config, &ClockSnapshot::default(), rng.random());
    let points = scan.points.max(3);
    let offsets: Vec<f64> = (0..points)
        .map(|i| -scan.half_range_s + 2.0 * scan.half_range_s * i as f64 / (points - 1) as f64)
        .collect();
    let train = |offset: f64| {
        let segs: Vec<_> = (0..scan.pulses)
            .flat_map(|_| {
                [
                    (EventKind::Drive, nominal + offset, 0.0),
                    (EventKind::Idle, timing.interpulse_delay_us * 1e-6, 0.0),
                ]
            })
            .collect();
        program_from_segments(&segs)
    };
    let measured: Vec<f64> = offsets
        .iter()
        .map(|&o| survival(&train(o), config, &seq, timing, scan.reps, rng))
        .collect();
    // Without other errors the return probability is cos^2(k (x - x0) / 2)
    // with k fixed by the pulse count and Rabi rate; fit x0 to the scan.
    let k = scan.pulses as f64 * PI / (2.0 * nominal);
    let sse = |x0: f64| -> f64 {
        offsets
            .iter()
            .zip(&measured)
            .map(|(&x, &y)| {
                let m = (k * (x - x0) / 2.0).cos().powi(2);
                (y - m).powi(2)
            })
            .sum()
    };
    let best = offsets
        .iter()
        .copied()
        .min_by(|a, b| sse(*a).total_cmp(&sse(*b)))
        .unwrap_or(0.0);
    let step = 2.0 * scan.half_range_s / (points - 1) as f64;
    let x0 = golden_section_min(sse, best - step, best + step, 1e-12);
    nominal + x0
}

fn golden_section_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}
