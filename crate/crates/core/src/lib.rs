//! Simulation of single-qubit randomized benchmarking with a trapped-ion
//! style pulse scheduler, layered noise, photon-count detection and
//! decay-curve fitting.

pub mod analysis;
pub mod campaign;
pub mod detector;
pub mod gateset;
pub mod noise;
pub mod qsim;
pub mod rng;
pub mod scheduler;

pub use analysis::{FidelityRecord, FitError, FitResult};
pub use campaign::{run_campaign, CampaignConfig, CampaignResult};
pub use detector::{Classification, CountHistogram, PhotonModel};
pub use gateset::{CliffordLabel, Gate, GateSequence, PauliLabel, Pole};
pub use noise::NoiseConfig;
pub use qsim::{Outcome, QubitState, Unitary2};
pub use scheduler::{PulseProgram, TimingConfig};
