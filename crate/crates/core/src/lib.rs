//! Dipolar NV-ensemble twisting dynamics and asymmetric-echo amplification.

pub mod dimer;
pub mod engine;
pub mod ensemble;
pub mod error;
pub mod floquet;
pub mod nvham;
pub mod protocols;
pub mod scalar;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Real;

pub type FrameFractions = floquet::FrameFractions<f64>;
pub type PulseSequence = floquet::PulseSequence<f64>;
pub type EngineeredHamiltonian = floquet::EngineeredHamiltonian<f64>;
pub type DimerSpectrum = dimer::DimerSpectrum<f64>;
