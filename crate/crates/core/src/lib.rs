//! Photon-pair generation by spontaneous four-wave mixing in a silicon
//! microring resonator.
//!
//! The crate covers the whole chain from device parameters to what a
//! stimulated-emission measurement would record:
//!
//! - [`resonator`]: resonance comb, Lorentzian lineshapes, dwell time and
//!   all-pass transmission.
//! - [`pump`]: pump and seed spectral envelopes and band-pass prefilters.
//! - [`jsa`]: the discretized joint spectral amplitude, its density and
//!   marginals.
//! - [`schmidt`]: Schmidt decomposition, the banded-quadrature purity used
//!   for cw pumping, and the phase-blind bound `K_bound`.
//! - [`instrument`]: seed scan, Fabry-Pérot filtering and CCD noise.
//! - [`specfit`]: transmission-spectrum and power-scaling fits.
//! - [`config`] and [`commands`]: the device configuration document and the
//!   command implementations behind the `ringjsa` binary.

pub mod commands;
pub mod config;
pub mod instrument;
pub mod io;
pub mod jsa;
pub mod pump;
pub mod resonator;
pub mod schmidt;
pub mod specfit;
pub mod units;

pub use num_complex::Complex64;
