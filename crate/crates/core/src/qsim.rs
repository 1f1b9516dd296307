//! Closed-form two-level propagators for rectangular microwave pulses and
//! free precession, plus pure-state trajectories with an absorbing leakage
//! flag.
//!
//! Conventions used throughout the crate:
//!
//! * basis ordering is `(|down>, |up>)`, so the Bloch `+z` pole is `|down>`
//!   (the bright state after detection);
//! * a drive with phase `phi = 0` rotates about `+x`, `phi = pi/2` about `+y`;
//! * detuning is drive minus qubit frequency in ordinary Hz and enters the
//!   Hamiltonian as `+2 pi detuning * sigma_z / 2`.
//!
//! Error-per-gate figures are even in both the detuning sign and the phase
//! orientation, so nothing downstream depends on these choices.

use std::f64::consts::PI;
use std::ops::Mul;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A 2x2 complex matrix, stored row-major. Every constructor in this module
/// yields a unitary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unitary2(pub [Complex64; 4]);

impl Unitary2 {
    pub const IDENTITY: Unitary2 = Unitary2([ONE, ZERO, ZERO, ONE]);

    pub fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Self {
        Unitary2([a, b, c, d])
    }

    /// `cos(theta/2) I - i sin(theta/2) (n . sigma)` for a unit axis `n`.
    pub fn rotation(axis: [f64; 3], angle: f64) -> Self {
        let (s, c) = (angle / 2.0).sin_cos();
        let [nx, ny, nz] = axis;
        Unitary2([
            Complex64::new(c, -s * nz),
            Complex64::new(-s * ny, -s * nx),
            Complex64::new(s * ny, -s * nx),
            Complex64::new(c, s * nz),
        ])
    }

    /// Rotation by `angle` about the equatorial axis at azimuth `phase`.
    pub fn equatorial_rotation(phase: f64, angle: f64) -> Self {
        let (sp, cp) = phase.sin_cos();
        Self::rotation([cp, sp, 0.0], angle)
    }

    /// `exp(-i angle sigma_z / 2)`.
    pub fn z_rotation(angle: f64) -> Self {
        let (s, c) = (angle / 2.0).sin_cos();
        Unitary2([Complex64::new(c, -s), ZERO, ZERO, Complex64::new(c, s)])
    }

    pub fn dagger(&self) -> Self {
        let [a, b, c, d] = self.0;
        Unitary2([a.conj(), c.conj(), b.conj(), d.conj()])
    }

    pub fn det(&self) -> Complex64 {
        let [a, b, c, d] = self.0;
        a * d - b * c
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.0[row * 2 + col]
    }

    /// Largest entrywise modulus of `U^dagger U - I`.
    pub fn unitarity_defect(&self) -> f64 {
        max_abs_diff(&(self.dagger() * *self), &Unitary2::IDENTITY)
    }

    /// Largest entrywise modulus of the difference after removing the best
    /// global phase, i.e. the distance between the two rotations.
    pub fn distance_up_to_phase(&self, other: &Unitary2) -> f64 {
        // tr(A^dagger B) = 2 e^{i theta} cos(...) for SU(2)-like pairs; align on it.
        let overlap = (self.dagger() * *other).trace();
        let phase = if overlap.norm() > 1e-300 {
            overlap / overlap.norm()
        } else {
            ONE
        };
        let aligned = Unitary2(self.0.map(|z| z * phase));
        max_abs_diff(&aligned, other)
    }

    pub fn trace(&self) -> Complex64 {
        self.0[0] + self.0[3]
    }
}

impl Mul for Unitary2 {
    type Output = Unitary2;

    fn mul(self, rhs: Unitary2) -> Unitary2 {
        let [a, b, c, d] = self.0;
        let [e, f, g, h] = rhs.0;
        Unitary2([a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h])
    }
}

pub fn max_abs_diff(a: &Unitary2, b: &Unitary2) -> f64 {
    a.0.iter()
        .zip(b.0.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Parameters of one rectangular pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseParams {
    /// Angular Rabi rate (rad/s).
    pub rabi_rate: f64,
    /// Drive phase (rad).
    pub phase: f64,
    /// Drive minus qubit frequency (Hz).
    pub detuning: f64,
    /// Seconds.
    pub duration: f64,
}

impl PulseParams {
    /// A resonant pulse of the given duration whose Rabi rate makes a pulse
    /// of `pi2_duration` a pi/2 rotation.
    pub fn for_pi2(pi2_duration: f64, phase: f64, duration: f64) -> Self {
        PulseParams {
            rabi_rate: PI / (2.0 * pi2_duration),
            phase,
            detuning: 0.0,
            duration,
        }
    }
}

/// `exp(-i t/2 [Omega (cos phi sx + sin phi sy) + 2 pi Delta sz])`, evaluated
/// through the generalized Rabi frequency.
pub fn pulse_propagator(p: &PulseParams) -> Unitary2 {
    let delta = 2.0 * PI * p.detuning;
    let (sp, cp) = p.phase.sin_cos();
    let hx = p.rabi_rate * cp;
    let hy = p.rabi_rate * sp;
    let w = (p.rabi_rate * p.rabi_rate + delta * delta).sqrt();
    if w == 0.0 {
        return Unitary2::IDENTITY;
    }
    Unitary2::rotation([hx / w, hy / w, delta / w], w * p.duration)
}

/// Free precession: a relative phase of `2 pi detuning duration` between the
/// two levels, split symmetrically.
pub fn free_propagator(duration: f64, detuning: f64) -> Unitary2 {
    Unitary2::z_rotation(2.0 * PI * detuning * duration)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Down,
    Up,
    Leaked,
}

/// Pure state of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitState {
    pub amp_down: Complex64,
    pub amp_up: Complex64,
    pub leaked: bool,
}

impl QubitState {
    pub fn down() -> Self {
        QubitState {
            amp_down: ONE,
            amp_up: ZERO,
            leaked: false,
        }
    }

    pub fn up() -> Self {
        QubitState {
            amp_down: ZERO,
            amp_up: ONE,
            leaked: false,
        }
    }

    pub fn leaked() -> Self {
        QubitState {
            amp_down: ZERO,
            amp_up: ZERO,
            leaked: true,
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp_down.norm_sqr() + self.amp_up.norm_sqr()
    }

    pub fn prob_down(&self) -> f64 {
        if self.leaked {
            0.0
        } else {
            self.amp_down.norm_sqr()
        }
    }

    /// Rescale to unit norm; used only to bound round-off on very long
    /// trajectories.
    pub fn renormalize(&mut self) {
        let n = self.norm_sqr().sqrt();
        if n > 0.0 {
            self.amp_down /= n;
            self.amp_up /= n;
        }
    }

    /// Bloch vector `(<sx>, <sy>, <sz>)`.
    pub fn bloch(&self) -> [f64; 3] {
        let c = self.amp_down.conj() * self.amp_up;
        [
            2.0 * c.re,
            2.0 * c.im,
            self.amp_down.norm_sqr() - self.amp_up.norm_sqr(),
        ]
    }
}

pub fn apply(u: &Unitary2, s: QubitState) -> QubitState {
    if s.leaked {
        return s;
    }
    let [a, b, c, d] = u.0;
    QubitState {
        amp_down: a * s.amp_down + b * s.amp_up,
        amp_up: c * s.amp_down + d * s.amp_up,
        leaked: false,
    }
}

/// Born-rule sample of a projective z measurement.
pub fn project_measure<R: Rng + ?Sized>(s: &QubitState, rng: &mut R) -> Outcome {
    if s.leaked {
        return Outcome::Leaked;
    }
    let p_down = s.amp_down.norm_sqr() / s.norm_sqr();
    if rng.random::<f64>() < p_down {
        Outcome::Down
    } else {
        Outcome::Up
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn resonant_pi_pulse_is_minus_i_sigma_x() {
        let u = pulse_propagator(&PulseParams {
            rabi_rate: 1.0,
            phase: 0.0,
            detuning: 0.0,
            duration: PI,
        });
        let expected = Unitary2::new(ZERO, c(0.0, -1.0), c(0.0, -1.0), ZERO);
        assert!(max_abs_diff(&u, &expected) < 1e-15);
    }

    #[test]
    fn y_half_pulse_makes_equal_superposition() {
        let u = pulse_propagator(&PulseParams {
            rabi_rate: 2.0,
            phase: PI / 2.0,
            detuning: 0.0,
            duration: PI / 4.0,
        });
        let s = apply(&u, QubitState::down());
        assert!((s.amp_down.norm_sqr() - 0.5).abs() < 1e-15);
        // R_y(pi/2) carries +z to +x.
        let b = s.bloch();
        assert!((b[0] - 1.0).abs() < 1e-14 && b[1].abs() < 1e-14 && b[2].abs() < 1e-14);
    }

    #[test]
    fn free_propagator_edge_cases() {
        assert_eq!(free_propagator(0.0, 25.0), Unitary2::IDENTITY);
        assert_eq!(free_propagator(1.0, 0.0), Unitary2::IDENTITY);
        let u = free_propagator(65.16e-6, 25.0);
        let rel = (u.entry(1, 1) / u.entry(0, 0)).arg();
        assert!((rel - 2.0 * PI * 25.0 * 65.16e-6).abs() < 1e-15);
        assert!((rel - 1.0235e-2).abs() < 1e-6);
        let same = pulse_propagator(&PulseParams {
            rabi_rate: 0.0,
            phase: 0.3,
            detuning: 25.0,
            duration: 65.16e-6,
        });
        assert!(max_abs_diff(&u, &same) < 1e-15);
    }

    #[test]
    fn pi_pulse_flips_down_to_up() {
        let u = pulse_propagator(&PulseParams::for_pi2(21e-6, 0.0, 42e-6));
        let s = apply(&u, QubitState::down());
        assert!(s.amp_down.norm_sqr() < 1e-24);
        assert!((s.amp_up.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_leaves_state_alone() {
        let s = QubitState {
            amp_down: c(0.6, 0.0),
            amp_up: c(0.0, 0.8),
            leaked: false,
        };
        assert_eq!(apply(&Unitary2::IDENTITY, s), s);
    }

    #[test]
    fn leaked_state_passes_through() {
        let u = pulse_propagator(&PulseParams::for_pi2(21e-6, 0.0, 21e-6));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = apply(&u, QubitState::leaked());
        assert!(s.leaked);
        for _ in 0..100 {
            assert_eq!(project_measure(&s, &mut rng), Outcome::Leaked);
        }
    }

    #[test]
    fn measuring_down_is_certain() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            assert_eq!(
                project_measure(&QubitState::down(), &mut rng),
                Outcome::Down
            );
        }
    }

    #[test]
    fn superposition_measures_half_down() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = QubitState {
            amp_down: c(h, 0.0),
            amp_up: c(h, 0.0),
            leaked: false,
        };
        let n = 100_000;
        let downs = (0..n)
            .filter(|_| project_measure(&s, &mut rng) == Outcome::Down)
            .count();
        let frac = downs as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.005, "{frac}");
    }

    #[test]
    fn long_product_keeps_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = QubitState::down();
        for _ in 0..1_000_000 {
            let phase = rng.random::<f64>() * 2.0 * PI;
            s = apply(&Unitary2::equatorial_rotation(phase, PI / 2.0), s);
        }
        assert!((s.norm_sqr() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn composition_in_time() {
        let p1 = PulseParams {
            rabi_rate: 7.3e4,
            phase: 0.4,
            detuning: 3.1e3,
            duration: 13e-6,
        };
        let p2 = PulseParams {
            duration: 29e-6,
            ..p1
        };
        let whole = PulseParams {
            duration: 42e-6,
            ..p1
        };
        let composed = pulse_propagator(&p2) * pulse_propagator(&p1);
        assert!(max_abs_diff(&composed, &pulse_propagator(&whole)) < 1e-10);
    }

    #[test]
    fn distance_up_to_phase_ignores_global_phase() {
        let u = Unitary2::equatorial_rotation(0.3, 1.1);
        let v = Unitary2(u.0.map(|z| z * Complex64::from_polar(1.0, 0.77)));
        assert!(u.distance_up_to_phase(&v) < 1e-15);
        assert!(u.distance_up_to_phase(&Unitary2::IDENTITY) > 0.1);
    }
}
